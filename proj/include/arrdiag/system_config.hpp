#pragma once

#include <cstddef>
#include <filesystem>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "arrdiag/knowledge_graph.hpp"
#include "arrdiag/plant_simulator.hpp"

namespace arrdiag {

struct DetectorConfig {
    double batch_seconds = 30.0;
    double z_threshold = 3.0;
    int consecutive = 2;
};

struct TimelineConfig {
    double monitor_origin_s = 170.0;  // first monitored batch starts here
    int training_batches = 240;       // fault-free batches simulated before the origin
};

struct AnalyticsConfig {
    std::size_t buffer_capacity = 20;
    double sensor_change_sigma = 3.0;
};

struct AgentConfig {
    std::size_t token_budget = 8192;
};

/// Everything the pipeline needs, parsed from one system-config document.
struct SystemConfig {
    std::shared_ptr<const DependencyGraph> graph;
    DetectorConfig detector;
    TimelineConfig timeline;
    AnalyticsConfig analytics;
    AgentConfig agent;
    PlantSetup plant;
    nlohmann::json document;  // the document as loaded, for GET /graph
};

SystemConfig parse_system_config(std::string_view document);
SystemConfig load_system_config_file(const std::filesystem::path& path);

/// Scenario document: a list of {fault_id, onset_s, magnitude}.
std::vector<FaultScenario> parse_scenarios(std::string_view document);
std::vector<FaultScenario> load_scenario_file(const std::filesystem::path& path);

std::string read_text_file(const std::filesystem::path& path);

}  // namespace arrdiag
