#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "arrdiag/knowledge_graph.hpp"
#include "arrdiag/system_config.hpp"

namespace arrdiag {

using ValueMap = std::map<std::string, double>;

/// Samples of every physical sensor over one window [t_start, t_end).
struct Batch {
    int index = 0;
    double t_start = 0.0;
    double t_end = 0.0;
    std::map<std::string, Eigen::VectorXd> samples;

    double mean(const std::string& sensor_id) const;
};

ValueMap batch_means(const Batch& batch);

/// Graph parameters with `overrides` applied on top.
ValueMap effective_parameters(const DependencyGraph& graph, const ValueMap& overrides = {});

/// Virtual sensors from point values of the physical sensors.
ValueMap virtual_values(const ValueMap& physical, const DependencyGraph& graph, const ValueMap& parameters);

/// Each virtual sensor's expression applied to the batch means of its inputs.
ValueMap compute_virtual_sensors(const Batch& batch, const DependencyGraph& graph);

struct ResidualValue {
    std::string residual_id;
    double value = 0.0;  // NaN when the relation cannot be evaluated
};

struct ResidualStats {
    double mu = 0.0;
    double sigma = 1.0;
};

struct CalibrationRecord {
    std::map<std::string, ResidualStats> stats;
    ValueMap fitted;  // e.g. {"ua": 541.7}
    double t_start = 0.0;
    double t_end = 0.0;
    std::size_t batch_count = 0;
};

inline constexpr std::size_t min_training_batches = 10;
inline constexpr double sigma_floor = 1e-12;

/// Residuals in residual-id order, from physical point values.
std::vector<ResidualValue> evaluate_residuals_at(const ValueMap& physical, const DependencyGraph& graph,
                                                 const ValueMap& parameters);

std::vector<ResidualValue> evaluate_residuals(const Batch& batch, const DependencyGraph& graph,
                                              const CalibrationRecord& calibration);

/// Fits the calibration parameter by least squares on its residual, then
/// records per-residual mean and sample standard deviation.
CalibrationRecord calibrate(const std::vector<Batch>& training, const DependencyGraph& graph);

struct ResidualState {
    std::string residual_id;
    double value = 0.0;
    double z_score = 0.0;
    bool active = false;
    std::optional<double> activation_time;
    int run_length = 0;  // consecutive batches currently above threshold
};

/// Batch-mean z-test that latches after `consecutive` exceedances in a row.
class Detector {
public:
    Detector(DetectorConfig config, CalibrationRecord calibration);

    const std::vector<ResidualState>& update(double batch_end, const std::vector<ResidualValue>& values);
    const std::vector<ResidualState>& states() const noexcept { return states_; }
    void reset();

private:
    DetectorConfig config_;
    CalibrationRecord calibration_;
    std::vector<ResidualState> states_;
};

}  // namespace arrdiag
