#include "arrdiag/knowledge_graph.hpp"

#include <algorithm>

#include "arrdiag/errors.hpp"
#include "yaml_util.hpp"

namespace arrdiag {

using detail::as;
using detail::get;
using detail::get_or;
using detail::require;
using detail::string_list;

std::string to_string(SensorKind kind) { return kind == SensorKind::physical ? "physical" : "virtual"; }

std::string to_string(Quantity q) {
    switch (q) {
        case Quantity::temperature: return "temperature";
        case Quantity::flow: return "flow";
        case Quantity::pressure: return "pressure";
    }
    return "?";
}

std::string to_string(FaultKind kind) {
    switch (kind) {
        case FaultKind::sensor_bias: return "sensor_bias";
        case FaultKind::sensor_drift: return "sensor_drift";
        case FaultKind::component_degradation: return "component_degradation";
    }
    return "?";
}

std::string to_string(DegradationEffect effect) {
    switch (effect) {
        case DegradationEffect::none: return "none";
        case DegradationEffect::heat_transfer: return "heat_transfer";
        case DegradationEffect::loop_flow: return "loop_flow";
    }
    return "?";
}

std::string to_string(GraphDiagnostic::Kind kind) {
    switch (kind) {
        case GraphDiagnostic::Kind::empty_signature: return "EmptySignatureWarning";
        case GraphDiagnostic::Kind::ambiguous_signature: return "AmbiguityWarning";
        case GraphDiagnostic::Kind::unreachable_sensor: return "UnreachableSensorWarning";
    }
    return "?";
}

const SensorSpec& DependencyGraph::sensor(const std::string& id) const {
    auto it = sensors.find(id);
    if (it == sensors.end()) throw UnknownSensor(id);
    return it->second;
}

const ResidualSpec& DependencyGraph::residual(const std::string& id) const {
    auto it = residuals.find(id);
    if (it == residuals.end()) throw UnknownResidual(id);
    return it->second;
}

const FaultSpec& DependencyGraph::fault(const std::string& id) const {
    auto it = faults.find(id);
    if (it == faults.end()) throw UnknownFault(id);
    return it->second;
}

const Expression& DependencyGraph::expression(const std::string& id) const {
    auto it = expressions.find(id);
    if (it == expressions.end()) throw ValidationError("no such expression", id);
    return it->second;
}

bool DependencyGraph::is_physical(const std::string& sensor_id) const {
    auto it = sensors.find(sensor_id);
    return it != sensors.end() && it->second.kind == SensorKind::physical;
}

std::vector<std::string> DependencyGraph::physical_sensor_ids() const {
    std::vector<std::string> out;
    for (const auto& [id, s] : sensors) {
        if (s.kind == SensorKind::physical) out.push_back(id);
    }
    return out;
}

std::vector<std::string> DependencyGraph::virtual_sensor_ids() const {
    std::vector<std::string> out;
    for (const auto& [id, s] : sensors) {
        if (s.kind == SensorKind::virtual_sensor) out.push_back(id);
    }
    return out;
}

std::vector<std::string> DependencyGraph::residual_ids() const {
    std::vector<std::string> out;
    for (const auto& [id, r] : residuals) out.push_back(id);
    return out;
}

std::vector<std::string> DependencyGraph::fault_ids() const {
    std::vector<std::string> out;
    for (const auto& [id, f] : faults) out.push_back(id);
    return out;
}

std::set<std::string> DependencyGraph::vocabulary() const {
    std::set<std::string> v;
    for (const auto& [id, s] : sensors) v.insert(id);
    for (const auto& [id, c] : components) v.insert(id);
    for (const auto& [id, r] : residuals) {
        v.insert(id);
        v.insert(r.name);
    }
    for (const auto& [id, f] : faults) {
        v.insert(id);
        v.insert(f.name);
    }
    for (const auto& [id, e] : expressions) v.insert(id);
    for (const auto& [id, p] : parameters) v.insert(id);
    return v;
}

namespace {

SensorKind parse_kind(const std::string& s, const std::string& id) {
    if (s == "physical") return SensorKind::physical;
    if (s == "virtual") return SensorKind::virtual_sensor;
    throw ValidationError("unknown sensor kind '" + s + "'", id);
}

Quantity parse_quantity(const std::string& s, const std::string& id) {
    if (s == "temperature") return Quantity::temperature;
    if (s == "flow") return Quantity::flow;
    if (s == "pressure") return Quantity::pressure;
    throw ValidationError("unknown quantity '" + s + "'", id);
}

FaultKind parse_fault_kind(const std::string& s, const std::string& id) {
    if (s == "sensor_bias") return FaultKind::sensor_bias;
    if (s == "sensor_drift") return FaultKind::sensor_drift;
    if (s == "component_degradation") return FaultKind::component_degradation;
    throw ValidationError("unknown fault kind '" + s + "'", id);
}

DegradationEffect parse_effect(const std::string& s, const std::string& id) {
    if (s == "none") return DegradationEffect::none;
    if (s == "heat_transfer") return DegradationEffect::heat_transfer;
    if (s == "loop_flow") return DegradationEffect::loop_flow;
    throw ValidationError("unknown degradation effect '" + s + "'", id);
}

class IdRegistry {
public:
    void claim(const std::string& id) {
        if (id.empty()) throw ValidationError("empty identifier", id);
        if (!seen_.insert(id).second) throw ValidationError("duplicate identifier", id);
    }

private:
    std::set<std::string> seen_;
};

void check_expression_vars(const DependencyGraph& g, const Expression& expr, const std::set<std::string>& allowed,
                           const std::string& owner) {
    for (const auto& var : expr.variables()) {
        if (allowed.count(var) || g.parameters.count(var)) continue;
        if (g.sensors.count(var) && g.sensors.at(var).kind == SensorKind::virtual_sensor &&
            g.virtuals.count(owner)) {
            throw ValidationError("virtual sensor derivation references virtual sensor '" + var + "'", owner);
        }
        throw ValidationError("expression references undeclared '" + var + "'", var);
    }
}

}  // namespace

DependencyGraph load_system_config(std::string_view document) {
    const YAML::Node root = detail::parse_yaml(document);
    if (!root.IsMap()) throw ParseError("system config must be a mapping");

    DependencyGraph g;
    g.schema_version = get<int>(root, "schema_version", "config");
    if (g.schema_version != 1) {
        throw ValidationError("unsupported schema_version " + std::to_string(g.schema_version), "schema_version");
    }
    g.system = get_or<std::string>(root, "system", "", "config");

    if (const auto params = root["parameters"]) {
        if (!params.IsMap()) throw ParseError("parameters: expected a mapping");
        for (const auto& kv : params) {
            const auto name = as<std::string>(kv.first, "parameters");
            g.parameters[name] = as<double>(kv.second, "parameters." + name);
        }
    }

    IdRegistry ids;

    if (const auto comps = root["components"]) {
        if (!comps.IsSequence()) throw ParseError("components: expected a list");
        for (const auto& c : comps) {
            ComponentSpec spec{get<std::string>(c, "id", "components"),
                               get_or<std::string>(c, "description", "", "components")};
            ids.claim(spec.id);
            g.components.emplace(spec.id, spec);
        }
    }

    if (const auto exprs = root["expressions"]) {
        if (!exprs.IsMap()) throw ParseError("expressions: expected a mapping");
        for (const auto& kv : exprs) {
            const auto id = as<std::string>(kv.first, "expressions");
            g.expressions.emplace(id, Expression::parse(as<std::string>(kv.second, "expressions." + id)));
        }
    }

    const auto sensors = root["sensors"];
    if (!sensors || !sensors.IsSequence() || sensors.size() == 0) {
        throw ValidationError("sensor list is empty", "sensors");
    }
    // Two passes: every sensor must be known before derivations are checked.
    for (const auto& s : sensors) {
        SensorSpec spec;
        spec.id = get<std::string>(s, "id", "sensors");
        ids.claim(spec.id);
        spec.kind = parse_kind(get<std::string>(s, "kind", "sensors." + spec.id), spec.id);
        spec.quantity = parse_quantity(get<std::string>(s, "quantity", "sensors." + spec.id), spec.id);
        spec.component_id = get_or<std::string>(s, "component", "", "sensors." + spec.id);
        spec.description = get_or<std::string>(s, "description", "", "sensors." + spec.id);
        if (!spec.component_id.empty() && !g.components.count(spec.component_id)) {
            throw ValidationError("sensor references unknown component", spec.component_id);
        }
        g.sensors.emplace(spec.id, spec);
    }
    for (const auto& s : sensors) {
        const auto id = get<std::string>(s, "id", "sensors");
        const auto& spec = g.sensors.at(id);
        const auto derivation = s["derivation"];
        if (spec.kind == SensorKind::physical) {
            if (derivation) throw ValidationError("physical sensor carries a derivation", id);
            continue;
        }
        if (!derivation) throw ValidationError("virtual sensor has no derivation", id);
        VirtualSensorSpec v;
        v.sensor_id = id;
        const std::string where = "sensors." + id + ".derivation";
        for (const auto& in : string_list(derivation["inputs"], where + ".inputs")) {
            auto it = g.sensors.find(in);
            if (it == g.sensors.end()) throw ValidationError("unknown derivation input", in);
            if (it->second.kind != SensorKind::physical) {
                throw ValidationError("virtual sensor derivation references virtual sensor '" + in + "'", id);
            }
            v.solution_inputs.insert(in);
        }
        for (const auto& c : string_list(derivation["components"], where + ".components")) {
            if (!g.components.count(c)) throw ValidationError("unknown derivation component", c);
            v.solution_components.insert(c);
        }
        v.expression_id = get<std::string>(derivation, "expression", where);
        check_expression_vars(g, g.expression(v.expression_id), v.solution_inputs, id);
        g.virtuals.emplace(id, std::move(v));
    }

    const auto residuals = root["residuals"];
    if (!residuals || !residuals.IsSequence() || residuals.size() == 0) {
        throw ValidationError("residual list is empty", "residuals");
    }
    for (const auto& r : residuals) {
        ResidualSpec spec;
        spec.id = get<std::string>(r, "id", "residuals");
        ids.claim(spec.id);
        const std::string where = "residuals." + spec.id;
        spec.name = get<std::string>(r, "name", where);
        spec.direct_sensors = string_list(require(r, "sensors", where), where + ".sensors");
        if (spec.direct_sensors.empty()) throw ValidationError("residual has no sensors", spec.id);
        for (const auto& s : spec.direct_sensors) {
            if (!g.sensors.count(s)) throw ValidationError("residual references unknown sensor", s);
        }
        for (const auto& c : string_list(r["components"], where + ".components")) {
            if (!g.components.count(c)) throw ValidationError("residual references unknown component", c);
            spec.component_ids.insert(c);
        }
        spec.expression_id = get<std::string>(r, "expression", where);
        const std::set<std::string> allowed(spec.direct_sensors.begin(), spec.direct_sensors.end());
        check_expression_vars(g, g.expression(spec.expression_id), allowed, spec.id);
        g.residuals.emplace(spec.id, std::move(spec));
    }

    std::set<std::string> fault_names;
    if (const auto faults = root["faults"]) {
        if (!faults.IsSequence()) throw ParseError("faults: expected a list");
        for (const auto& f : faults) {
            FaultSpec spec;
            spec.id = get<std::string>(f, "id", "faults");
            ids.claim(spec.id);
            const std::string where = "faults." + spec.id;
            spec.name = get<std::string>(f, "name", where);
            if (!fault_names.insert(spec.name).second) throw ValidationError("duplicate fault name", spec.name);
            spec.target = get<std::string>(f, "target", where);
            spec.kind = parse_fault_kind(get<std::string>(f, "kind", where), spec.id);
            spec.effect = parse_effect(get_or<std::string>(f, "effect", "none", where), spec.id);
            spec.canonical_magnitude = get_or<double>(f, "canonical_magnitude", 0.0, where);
            const bool sensor_fault = spec.kind != FaultKind::component_degradation;
            if (sensor_fault) {
                if (!g.is_physical(spec.target)) {
                    throw ValidationError("sensor fault target is not a physical sensor", spec.target);
                }
            } else {
                if (!g.components.count(spec.target)) {
                    throw ValidationError("component fault target is not a component", spec.target);
                }
                if (spec.effect == DegradationEffect::none) {
                    throw ValidationError("component fault needs an effect", spec.id);
                }
            }
            g.faults.emplace(spec.id, std::move(spec));
        }
    }

    if (const auto cal = root["calibration"]) {
        g.calibration.fit_residual = get<std::string>(cal, "fit_residual", "calibration");
        g.calibration.fit_parameter = get<std::string>(cal, "fit_parameter", "calibration");
        if (!g.residuals.count(g.calibration.fit_residual)) {
            throw ValidationError("calibration residual not declared", g.calibration.fit_residual);
        }
        if (!g.parameters.count(g.calibration.fit_parameter)) {
            throw ValidationError("calibration parameter not declared", g.calibration.fit_parameter);
        }
    }
    return g;
}

DependencyClosure dependency_closure(const DependencyGraph& graph, const std::string& residual_id) {
    const auto& r = graph.residual(residual_id);
    DependencyClosure out;
    out.components = r.component_ids;
    for (const auto& s : r.direct_sensors) {
        if (graph.is_physical(s)) {
            out.physical_sensors.insert(s);
            continue;
        }
        const auto& v = graph.virtuals.at(s);
        out.physical_sensors.insert(v.solution_inputs.begin(), v.solution_inputs.end());
        out.components.insert(v.solution_components.begin(), v.solution_components.end());
    }
    return out;
}

const std::set<std::string>& FaultSignatureMatrix::signature(const std::string& fault_id) const {
    auto it = rows_.find(fault_id);
    if (it == rows_.end()) throw UnknownFault(fault_id);
    return it->second;
}

FaultSignatureMatrix build_signature_matrix(const DependencyGraph& graph) {
    std::vector<std::string> columns = graph.residual_ids();
    std::sort(columns.begin(), columns.end());
    std::map<std::string, DependencyClosure> closures;
    for (const auto& r : columns) closures.emplace(r, dependency_closure(graph, r));

    std::map<std::string, std::set<std::string>> rows;
    for (const auto& [fid, fault] : graph.faults) {
        auto& row = rows[fid];
        for (const auto& r : columns) {
            const auto& c = closures.at(r);
            const bool hit = fault.kind == FaultKind::component_degradation ? c.components.count(fault.target) != 0
                                                                             : c.physical_sensors.count(fault.target) != 0;
            if (hit) row.insert(r);
        }
    }
    return {std::move(columns), std::move(rows)};
}

std::vector<GraphDiagnostic> validate_graph(const DependencyGraph& graph) {
    std::vector<GraphDiagnostic> out;
    const auto matrix = build_signature_matrix(graph);

    for (const auto& [fid, sig] : matrix.rows()) {
        if (sig.empty()) {
            out.push_back({GraphDiagnostic::Kind::empty_signature, {fid},
                           "fault " + fid + " implicates no residual and cannot be detected"});
        }
    }

    std::map<std::set<std::string>, std::vector<std::string>> by_signature;
    for (const auto& [fid, sig] : matrix.rows()) {
        if (!sig.empty()) by_signature[sig].push_back(fid);
    }
    for (const auto& [sig, fids] : by_signature) {
        if (fids.size() < 2) continue;
        std::string msg = "faults";
        for (const auto& f : fids) msg += " " + f;
        msg += " share one signature and cannot be isolated from each other";
        out.push_back({GraphDiagnostic::Kind::ambiguous_signature, fids, msg});
    }

    std::set<std::string> reachable;
    for (const auto& [rid, r] : graph.residuals) {
        for (const auto& s : r.direct_sensors) reachable.insert(s);
        const auto c = dependency_closure(graph, rid);
        reachable.insert(c.physical_sensors.begin(), c.physical_sensors.end());
    }
    for (const auto& [sid, s] : graph.sensors) {
        if (!reachable.count(sid)) {
            out.push_back({GraphDiagnostic::Kind::unreachable_sensor, {sid},
                           "sensor " + sid + " is not used by any residual"});
        }
    }
    return out;
}

}  // namespace arrdiag
