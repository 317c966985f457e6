#include "arrdiag/diagnoser.hpp"

#include <algorithm>

#include "arrdiag/errors.hpp"

namespace arrdiag {

namespace {

bool is_subset(const std::set<std::string>& a, const std::set<std::string>& b) {
    return std::includes(b.begin(), b.end(), a.begin(), a.end());
}

}  // namespace

DiagnosisReport diagnose(const std::set<std::string>& active, const DependencyGraph& graph,
                         const FaultSignatureMatrix& matrix, double timestamp) {
    DiagnosisReport rep;
    rep.observed_active = active;
    rep.timestamp = timestamp;
    for (const auto& r : active) graph.residual(r);  // throws UnknownResidual

    std::set<std::string> matched;
    for (const auto& [fid, sig] : matrix.rows()) {
        if (sig == active) matched.insert(fid);
    }
    if (matched.empty() && !active.empty()) {
        std::vector<std::string> cands;
        for (const auto& [fid, sig] : matrix.rows()) {
            if (is_subset(active, sig)) cands.push_back(fid);
        }
        for (const auto& f : cands) {
            const auto& sf = matrix.signature(f);
            const bool minimal = std::none_of(cands.begin(), cands.end(), [&](const std::string& g) {
                const auto& sg = matrix.signature(g);
                return sg.size() < sf.size() && is_subset(sg, sf);
            });
            if (minimal) matched.insert(f);
        }
        rep.partial = !matched.empty();
    }
    rep.matched_faults.assign(matched.begin(), matched.end());
    for (const auto& [fid, sig] : matrix.rows()) {
        if (!matched.count(fid)) rep.exonerated_faults.push_back(fid);
    }

    std::set<std::string> covered;
    for (const auto& f : matched) {
        const auto& s = matrix.signature(f);
        covered.insert(s.begin(), s.end());
    }
    std::set<std::string> unique;
    for (const auto& r : active) {
        if (!covered.count(r)) rep.unexplained_residuals.insert(r);
        const auto& spec = graph.residual(r);
        rep.per_residual_sensors[r] = spec.direct_sensors;
        for (const auto& s : spec.direct_sensors) {
            if (graph.is_physical(s)) unique.insert(s);
        }
    }
    rep.unique_sensor_set.assign(unique.begin(), unique.end());
    return rep;
}

ForwardCheck forward_check(const std::string& fault_id, const FaultSignatureMatrix& matrix,
                           const std::set<std::string>& active) {
    const auto& sig = matrix.signature(fault_id);
    ForwardCheck fc;
    fc.fault_id = fault_id;
    std::set_difference(sig.begin(), sig.end(), active.begin(), active.end(), std::back_inserter(fc.missing));
    std::set_difference(active.begin(), active.end(), sig.begin(), sig.end(), std::back_inserter(fc.extra));
    fc.consistent = fc.missing.empty() && fc.extra.empty();
    return fc;
}

ExplanationRecord explanation_record(const DiagnosisReport& report, const DependencyGraph& graph,
                                     const FaultSignatureMatrix& matrix) {
    ExplanationRecord rec;
    rec.healthy = report.observed_active.empty();
    rec.partial = report.partial;
    rec.timestamp = report.timestamp;
    for (const auto& f : report.matched_faults) rec.matched.push_back({f, graph.fault(f).name});
    for (const auto& r : report.observed_active) {
        rec.residuals.push_back({r, graph.residual(r).name, report.per_residual_sensors.at(r)});
    }
    rec.unique_sensor_set = report.unique_sensor_set;
    for (const auto& f : report.exonerated_faults) {
        const auto fc = forward_check(f, matrix, report.observed_active);
        const auto& sig = matrix.signature(f);
        rec.exonerated.push_back({f, graph.fault(f).name, {sig.begin(), sig.end()}, fc.missing, fc.extra});
    }
    rec.unexplained.assign(report.unexplained_residuals.begin(), report.unexplained_residuals.end());
    return rec;
}

}  // namespace arrdiag
