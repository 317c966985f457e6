#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "arrdiag/knowledge_graph.hpp"

namespace arrdiag {

/// Economizer port a physical sensor observes.
enum class PlantNode { hot_flow, cold_flow, hot_inlet, hot_outlet, cold_inlet, cold_outlet };

std::string to_string(PlantNode node);
PlantNode parse_plant_node(const std::string& text);

struct Boundary {
    double hot_inlet_temp = 200.0;   // degC
    double cold_inlet_temp = 120.0;  // degC, cold-trap outlet
    double hot_flow = 0.25;          // kg/s
    double cold_flow = 0.25;         // kg/s
};

struct PlantParams {
    double cp = 1300.0;  // J/(kg degC)
    double ua = 541.6666666666666;
    double sample_period = 1.0;
    double lag_tau = 10.0;
    std::map<std::string, double> noise_std;  // sensor id -> std in sensor units
};

struct PlantSetup {
    Boundary boundary;
    PlantParams params;
    std::map<std::string, PlantNode> sensor_map;  // physical sensor id -> observed node
};

struct LoopState {
    double time = 0.0;
    std::map<std::string, double> flows;         // hot_flow, cold_flow
    std::map<std::string, double> temperatures;  // hot_inlet, hot_outlet, cold_inlet, cold_outlet
    Boundary boundary;
    PlantParams params;
    // lagged fault multipliers currently applied to the physics
    double ua_factor = 1.0;
    double cold_flow_factor = 1.0;

    double node_value(PlantNode node) const;
    double hot_duty() const;
    double cold_duty() const;
};

struct FaultScenario {
    std::string fault_id;
    double onset_s = 0.0;
    double magnitude = 0.0;

    friend bool operator==(const FaultScenario&, const FaultScenario&) = default;
};

struct SensorSample {
    std::string sensor_id;
    double time = 0.0;
    double value = 0.0;
};

/// Counterflow economizer at steady state for the given boundary.
LoopState steady_state(const Boundary& boundary, const PlantParams& params);

/// Balance-equation solutions evaluated on truth values (vf_102, vt_101..vt_104).
std::map<std::string, double> virtual_truth(const LoopState& state);

class PlantSimulator {
public:
    PlantSimulator(PlantSetup setup, std::shared_ptr<const DependencyGraph> graph, std::uint64_t seed,
                   double start_time = 0.0);

    const LoopState& state() const noexcept { return state_; }
    const PlantSetup& setup() const noexcept { return setup_; }

    /// Advances the clock by dt and returns one sample per physical sensor,
    /// stamped at the new time, in sensor-id order.
    std::vector<SensorSample> step(double dt, const std::vector<FaultScenario>& scenarios);

    /// Runs until `end_time` (exclusive of anything beyond it), sampling at the
    /// configured period.
    std::vector<SensorSample> run_until(double end_time, const std::vector<FaultScenario>& scenarios);

private:
    PlantSetup setup_;
    std::shared_ptr<const DependencyGraph> graph_;
    std::mt19937_64 rng_;
    std::normal_distribution<double> unit_normal_{0.0, 1.0};
    LoopState state_;
};

/// CSV with header `time_s,sensor_id,value`.
void write_samples_csv(std::ostream& out, const std::vector<SensorSample>& samples);

}  // namespace arrdiag
