#pragma once

#include <atomic>
#include <cstddef>
#include <deque>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "arrdiag/diagnoser.hpp"
#include "arrdiag/explanation_agent.hpp"
#include "arrdiag/plant_simulator.hpp"
#include "arrdiag/residual_engine.hpp"
#include "arrdiag/sensor_analytics.hpp"

namespace arrdiag {

inline constexpr int snapshot_schema_version = 1;

struct SensorSnapshot {
    std::string id;
    SensorKind kind = SensorKind::physical;
    std::optional<double> value;          // batch mean (physical) or virtual sensor value
    std::optional<BatchMetrics> latest;   // physical sensors only
};

struct ResidualSnapshot {
    std::string id;
    std::string name;
    double value = 0.0;
    double z_score = 0.0;
    bool active = false;
    std::optional<double> activation_time;
    std::vector<std::string> direct_sensors;
};

struct Snapshot {
    int schema_version = snapshot_schema_version;
    double timestamp_s = 0.0;
    int batch_index = 0;
    std::vector<SensorSnapshot> sensors;
    std::vector<ResidualSnapshot> residuals;
    DiagnosisReport diagnosis;
    std::vector<FaultScenario> scenario;  // scenarios whose onset has passed
};

nlohmann::json to_json(const BatchMetrics& m);
BatchMetrics metrics_from_json(const nlohmann::json& j);
nlohmann::json to_json(const DiagnosisReport& r);
DiagnosisReport diagnosis_from_json(const nlohmann::json& j);
nlohmann::json to_json(const Snapshot& s);  // carries "type": "snapshot"
Snapshot snapshot_from_json(const nlohmann::json& j);

/// One compact JSON line per snapshot.
std::string serialize_line(const Snapshot& s);

/// Agent view built from the most recent snapshots: residuals and diagnosis
/// from the newest one, per-sensor metrics from the last `capacity` snapshots.
AgentState agent_state_from_history(const std::deque<Snapshot>& history, std::size_t capacity);

using RunLogEntry = std::variant<Snapshot, AnswerRecord>;

/// Append-only JSON-lines writer, flushed per record.
class RunLogWriter {
public:
    explicit RunLogWriter(const std::filesystem::path& path);
    void write(const Snapshot& s);
    void write(const AnswerRecord& a);

private:
    std::ofstream out_;
};

/// Parses a run log. Throws CorruptLog naming the first bad line, including
/// a truncated final line and non-increasing snapshot timestamps.
std::vector<RunLogEntry> read_run_log(const std::filesystem::path& path);

/// Re-emits the log's snapshots. speed <= 0 emits immediately; otherwise the
/// original cadence is divided by `speed`.
void replay(const std::filesystem::path& path, double speed, const std::function<void(const Snapshot&)>& emit,
            const std::atomic<bool>* stop = nullptr);

}  // namespace arrdiag
