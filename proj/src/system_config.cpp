#include "arrdiag/system_config.hpp"

#include <fstream>
#include <sstream>

#include "arrdiag/errors.hpp"
#include "yaml_util.hpp"

namespace arrdiag {

using detail::as;
using detail::get;
using detail::get_or;

namespace {

nlohmann::json to_json(const YAML::Node& node) {
    switch (node.Type()) {
        case YAML::NodeType::Null:
        case YAML::NodeType::Undefined: return nullptr;
        case YAML::NodeType::Sequence: {
            auto arr = nlohmann::json::array();
            for (const auto& item : node) arr.push_back(to_json(item));
            return arr;
        }
        case YAML::NodeType::Map: {
            auto obj = nlohmann::json::object();
            for (const auto& kv : node) obj[kv.first.as<std::string>()] = to_json(kv.second);
            return obj;
        }
        case YAML::NodeType::Scalar: break;
    }
    const std::string text = node.Scalar();
    if (node.Tag() == "!") return text;  // quoted scalar
    long long i = 0;
    if (YAML::convert<long long>::decode(node, i)) return i;
    double d = 0;
    if (YAML::convert<double>::decode(node, d)) return d;
    bool b = false;
    if (YAML::convert<bool>::decode(node, b)) return b;
    return text;
}

PlantSetup parse_plant(const YAML::Node& node, const DependencyGraph& graph) {
    PlantSetup p;
    if (!node) throw ConfigError("system config has no plant section");
    const std::string w = "plant";
    p.params.cp = get_or(node, "cp", p.params.cp, w);
    p.params.ua = get_or(node, "ua", p.params.ua, w);
    p.params.sample_period = get_or(node, "sample_period", p.params.sample_period, w);
    p.params.lag_tau = get_or(node, "lag_tau", p.params.lag_tau, w);
    p.boundary.hot_inlet_temp = get_or(node, "hot_inlet_temp", p.boundary.hot_inlet_temp, w);
    p.boundary.cold_inlet_temp = get_or(node, "cold_inlet_temp", p.boundary.cold_inlet_temp, w);
    p.boundary.hot_flow = get_or(node, "hot_flow", p.boundary.hot_flow, w);
    p.boundary.cold_flow = get_or(node, "cold_flow", p.boundary.cold_flow, w);
    if (!(p.params.cp > 0) || !(p.params.ua > 0) || !(p.params.sample_period > 0) || p.params.lag_tau < 0) {
        throw ConfigError("plant: cp, ua and sample_period must be positive, lag_tau non-negative");
    }
    if (!(p.boundary.hot_inlet_temp > p.boundary.cold_inlet_temp)) {
        throw ConfigError("plant: hot inlet must be hotter than cold inlet");
    }
    if (!(p.boundary.hot_flow > 0) || !(p.boundary.cold_flow > 0)) throw ConfigError("plant: flows must be positive");

    double temp_std = 0.15;
    double flow_frac = 0.005;
    if (const auto noise = node["noise"]) {
        temp_std = get_or(noise, "temperature_std", temp_std, w + ".noise");
        flow_frac = get_or(noise, "flow_std_fraction", flow_frac, w + ".noise");
    }
    if (temp_std < 0 || flow_frac < 0) throw ConfigError("plant: noise must be non-negative");

    const auto map = node["sensor_map"];
    if (!map || !map.IsMap()) throw ConfigError("plant: sensor_map missing");
    for (const auto& kv : map) {
        const auto id = as<std::string>(kv.first, w + ".sensor_map");
        if (!graph.is_physical(id)) throw ValidationError("sensor_map entry is not a physical sensor", id);
        const auto n = parse_plant_node(as<std::string>(kv.second, w + ".sensor_map." + id));
        p.sensor_map[id] = n;
        switch (n) {
            case PlantNode::hot_flow: p.params.noise_std[id] = flow_frac * p.boundary.hot_flow; break;
            case PlantNode::cold_flow: p.params.noise_std[id] = flow_frac * p.boundary.cold_flow; break;
            default: p.params.noise_std[id] = temp_std; break;
        }
    }
    for (const auto& id : graph.physical_sensor_ids()) {
        if (!p.sensor_map.count(id)) throw ValidationError("physical sensor has no plant mapping", id);
    }
    return p;
}

}  // namespace

SystemConfig parse_system_config(std::string_view document) {
    SystemConfig cfg;
    cfg.graph = std::make_shared<const DependencyGraph>(load_system_config(document));
    const YAML::Node root = detail::parse_yaml(document);
    cfg.document = to_json(root);

    if (const auto d = root["detector"]) {
        cfg.detector.batch_seconds = get_or(d, "batch_seconds", cfg.detector.batch_seconds, "detector");
        cfg.detector.z_threshold = get_or(d, "z_threshold", cfg.detector.z_threshold, "detector");
        cfg.detector.consecutive = get_or(d, "consecutive", cfg.detector.consecutive, "detector");
    }
    if (!(cfg.detector.batch_seconds > 0) || !(cfg.detector.z_threshold > 0) || cfg.detector.consecutive < 1) {
        throw ConfigError("detector: batch_seconds and z_threshold must be positive, consecutive >= 1");
    }
    if (const auto t = root["timeline"]) {
        cfg.timeline.monitor_origin_s = get_or(t, "monitor_origin_s", cfg.timeline.monitor_origin_s, "timeline");
        cfg.timeline.training_batches = get_or(t, "training_batches", cfg.timeline.training_batches, "timeline");
    }
    if (cfg.timeline.monitor_origin_s < 0) throw ConfigError("timeline: monitor_origin_s must be >= 0");
    if (const auto a = root["analytics"]) {
        cfg.analytics.buffer_capacity = get_or(a, "buffer_capacity", cfg.analytics.buffer_capacity, "analytics");
        cfg.analytics.sensor_change_sigma =
            get_or(a, "sensor_change_sigma", cfg.analytics.sensor_change_sigma, "analytics");
    }
    if (cfg.analytics.buffer_capacity < 2) throw ConfigError("analytics: buffer_capacity must be >= 2");
    if (const auto a = root["agent"]) {
        cfg.agent.token_budget = get_or(a, "token_budget", cfg.agent.token_budget, "agent");
    }
    cfg.plant = parse_plant(root["plant"], *cfg.graph);
    return cfg;
}

std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

SystemConfig load_system_config_file(const std::filesystem::path& path) {
    return parse_system_config(read_text_file(path));
}

std::vector<FaultScenario> parse_scenarios(std::string_view document) {
    const YAML::Node root = detail::parse_yaml(document);
    std::vector<FaultScenario> out;
    if (!root || root.IsNull()) return out;
    if (!root.IsSequence()) throw ParseError("scenario document must be a list");
    for (const auto& item : root) {
        FaultScenario s;
        s.fault_id = get<std::string>(item, "fault_id", "scenario");
        s.onset_s = get<double>(item, "onset_s", "scenario");
        s.magnitude = get<double>(item, "magnitude", "scenario");
        if (s.onset_s < 0) throw ValidationError("onset must be >= 0", s.fault_id);
        out.push_back(std::move(s));
    }
    return out;
}

std::vector<FaultScenario> load_scenario_file(const std::filesystem::path& path) {
    return parse_scenarios(read_text_file(path));
}

}  // namespace arrdiag
