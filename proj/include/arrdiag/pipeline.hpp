#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <vector>

#include "arrdiag/residual_engine.hpp"
#include "arrdiag/snapshot.hpp"
#include "arrdiag/system_config.hpp"

namespace arrdiag {

struct RunOptions {
    double duration_s = 900.0;
    std::uint64_t seed = 1;
    std::vector<FaultScenario> scenario;
    double time_scale = 0.0;  // simulated seconds per wall second; 0 runs unthrottled
    std::optional<std::filesystem::path> log_path;
    std::function<void(const Snapshot&)> on_snapshot;
    const std::atomic<bool>* stop = nullptr;
};

struct RunResult {
    CalibrationRecord calibration;
    std::vector<Snapshot> snapshots;
};

/// Checks the run can produce at least one detection decision and that no
/// fault starts inside the calibration window. Throws ConfigError.
void validate_run(const SystemConfig& config, const RunOptions& options);

/// Calibrates on a fault-free window that ends at the monitoring origin, then
/// simulates, batches, detects and diagnoses, emitting one Snapshot per batch.
RunResult run_pipeline(const SystemConfig& config, const RunOptions& options);

}  // namespace arrdiag
