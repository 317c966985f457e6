#include "arrdiag/plant_simulator.hpp"

#include <cmath>
#include <iomanip>
#include <ostream>
#include <stdexcept>

#include "arrdiag/errors.hpp"
#include "arrdiag/thermal.hpp"

namespace arrdiag {

std::string to_string(PlantNode node) {
    switch (node) {
        case PlantNode::hot_flow: return "hot_flow";
        case PlantNode::cold_flow: return "cold_flow";
        case PlantNode::hot_inlet: return "hot_inlet";
        case PlantNode::hot_outlet: return "hot_outlet";
        case PlantNode::cold_inlet: return "cold_inlet";
        case PlantNode::cold_outlet: return "cold_outlet";
    }
    return "?";
}

PlantNode parse_plant_node(const std::string& text) {
    for (auto n : {PlantNode::hot_flow, PlantNode::cold_flow, PlantNode::hot_inlet, PlantNode::hot_outlet,
                   PlantNode::cold_inlet, PlantNode::cold_outlet}) {
        if (to_string(n) == text) return n;
    }
    throw ConfigError("unknown plant node '" + text + "'");
}

double LoopState::node_value(PlantNode node) const {
    switch (node) {
        case PlantNode::hot_flow: return flows.at("hot_flow");
        case PlantNode::cold_flow: return flows.at("cold_flow");
        case PlantNode::hot_inlet: return temperatures.at("hot_inlet");
        case PlantNode::hot_outlet: return temperatures.at("hot_outlet");
        case PlantNode::cold_inlet: return temperatures.at("cold_inlet");
        case PlantNode::cold_outlet: return temperatures.at("cold_outlet");
    }
    throw std::logic_error("bad plant node");
}

double LoopState::hot_duty() const {
    return flows.at("hot_flow") * params.cp * (temperatures.at("hot_inlet") - temperatures.at("hot_outlet"));
}

double LoopState::cold_duty() const {
    return flows.at("cold_flow") * params.cp * (temperatures.at("cold_outlet") - temperatures.at("cold_inlet"));
}

namespace {

LoopState solve(const Boundary& b, const PlantParams& p, double ua_factor, double cold_flow_factor) {
    const thermal::ExchangerInlets<double> in{b.hot_inlet_temp, b.cold_inlet_temp, b.hot_flow,
                                              b.cold_flow * cold_flow_factor};
    const auto sol = thermal::solve_counterflow(in, p.cp, p.ua * ua_factor);
    LoopState s;
    s.boundary = b;
    s.params = p;
    s.ua_factor = ua_factor;
    s.cold_flow_factor = cold_flow_factor;
    s.flows = {{"hot_flow", in.hot_flow}, {"cold_flow", in.cold_flow}};
    s.temperatures = {{"hot_inlet", b.hot_inlet_temp},
                      {"hot_outlet", sol.hot_out},
                      {"cold_inlet", b.cold_inlet_temp},
                      {"cold_outlet", sol.cold_out}};
    return s;
}

}  // namespace

LoopState steady_state(const Boundary& boundary, const PlantParams& params) {
    if (!(params.cp > 0) || !(params.ua > 0) || !(params.sample_period > 0)) {
        throw std::invalid_argument("plant parameters must be positive");
    }
    return solve(boundary, params, 1.0, 1.0);
}

std::map<std::string, double> virtual_truth(const LoopState& state) {
    const double m_hot = state.flows.at("hot_flow");
    const double m_cold = state.flows.at("cold_flow");
    if (m_hot == 0.0 || m_cold == 0.0) throw DivisionByZeroFlow("virtual sensor solution needs non-zero flows");
    const double t114 = state.temperatures.at("hot_inlet");
    const double t117 = state.temperatures.at("hot_outlet");
    const double t116 = state.temperatures.at("cold_inlet");
    const double t119 = state.temperatures.at("cold_outlet");
    return {
        {"vf_102", m_cold},
        {"vt_101", t117 + (m_cold / m_hot) * (t119 - t116)},
        {"vt_102", t114 - (m_cold / m_hot) * (t119 - t116)},
        {"vt_103", t116 + (m_hot / m_cold) * (t114 - t117)},
        {"vt_104", t119 - (m_hot / m_cold) * (t114 - t117)},
    };
}

PlantSimulator::PlantSimulator(PlantSetup setup, std::shared_ptr<const DependencyGraph> graph, std::uint64_t seed,
                               double start_time)
    : setup_(std::move(setup)), graph_(std::move(graph)), rng_(seed) {
    state_ = steady_state(setup_.boundary, setup_.params);
    state_.time = start_time;
}

std::vector<SensorSample> PlantSimulator::step(double dt, const std::vector<FaultScenario>& scenarios) {
    if (!(dt > 0)) throw std::invalid_argument("dt must be positive");
    const double t = state_.time + dt;

    double ua_target = 1.0;
    double flow_target = 1.0;
    std::map<std::string, double> sensor_offset;
    for (const auto& sc : scenarios) {
        const auto& fault = graph_->fault(sc.fault_id);
        if (t < sc.onset_s) continue;
        switch (fault.kind) {
            case FaultKind::sensor_bias: sensor_offset[fault.target] += sc.magnitude; break;
            case FaultKind::sensor_drift: sensor_offset[fault.target] += sc.magnitude * (t - sc.onset_s); break;
            case FaultKind::component_degradation:
                if (fault.effect == DegradationEffect::heat_transfer) ua_target *= sc.magnitude;
                if (fault.effect == DegradationEffect::loop_flow) flow_target *= sc.magnitude;
                break;
        }
    }

    const double alpha = setup_.params.lag_tau > 0 ? 1.0 - std::exp(-dt / setup_.params.lag_tau) : 1.0;
    double ua_factor = state_.ua_factor + (ua_target - state_.ua_factor) * alpha;
    double flow_factor = state_.cold_flow_factor + (flow_target - state_.cold_flow_factor) * alpha;
    // snap once the transient is numerically over so nominal truth stays bit-exact
    if (std::abs(ua_factor - ua_target) < 1e-15) ua_factor = ua_target;
    if (std::abs(flow_factor - flow_target) < 1e-15) flow_factor = flow_target;

    if (ua_factor != state_.ua_factor || flow_factor != state_.cold_flow_factor) {
        state_ = solve(setup_.boundary, setup_.params, ua_factor, flow_factor);
    }
    state_.time = t;

    std::vector<SensorSample> out;
    out.reserve(setup_.sensor_map.size());
    for (const auto& [id, node] : setup_.sensor_map) {
        const double z = unit_normal_(rng_);  // drawn unconditionally to keep streams aligned
        auto sd = setup_.params.noise_std.find(id);
        const double noise = sd == setup_.params.noise_std.end() ? 0.0 : sd->second * z;
        auto off = sensor_offset.find(id);
        const double offset = off == sensor_offset.end() ? 0.0 : off->second;
        out.push_back({id, t, state_.node_value(node) + noise + offset});
    }
    return out;
}

std::vector<SensorSample> PlantSimulator::run_until(double end_time, const std::vector<FaultScenario>& scenarios) {
    std::vector<SensorSample> all;
    const double dt = setup_.params.sample_period;
    while (state_.time + dt <= end_time + 1e-9) {
        auto batch = step(dt, scenarios);
        all.insert(all.end(), batch.begin(), batch.end());
    }
    return all;
}

void write_samples_csv(std::ostream& out, const std::vector<SensorSample>& samples) {
    out << "time_s,sensor_id,value\n";
    out << std::setprecision(17);
    for (const auto& s : samples) out << s.time << ',' << s.sensor_id << ',' << s.value << '\n';
}

}  // namespace arrdiag
