#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include "arrdiag/knowledge_graph.hpp"

namespace arrdiag {

struct DiagnosisReport {
    std::set<std::string> observed_active;
    std::vector<std::string> matched_faults;
    std::vector<std::string> exonerated_faults;
    bool partial = false;  // matched holds minimal-superset candidates, not exact matches
    std::set<std::string> unexplained_residuals;
    std::map<std::string, std::vector<std::string>> per_residual_sensors;
    std::vector<std::string> unique_sensor_set;
    double timestamp = 0.0;

    friend bool operator==(const DiagnosisReport&, const DiagnosisReport&) = default;
};

/// Exact signature match first; when nothing matches, the faults whose
/// signatures are minimal supersets of `active` are reported as partial.
DiagnosisReport diagnose(const std::set<std::string>& active, const DependencyGraph& graph,
                         const FaultSignatureMatrix& matrix, double timestamp = 0.0);

struct ForwardCheck {
    std::string fault_id;
    bool consistent = false;
    std::vector<std::string> missing;  // predicted but inactive
    std::vector<std::string> extra;    // active but not predicted
};

ForwardCheck forward_check(const std::string& fault_id, const FaultSignatureMatrix& matrix,
                           const std::set<std::string>& active);

struct ExplanationRecord {
    struct Fault {
        std::string id;
        std::string name;
    };
    struct ResidualLine {
        std::string id;
        std::string name;
        std::vector<std::string> sensors;
    };
    struct Exoneration {
        std::string fault_id;
        std::string fault_name;
        std::vector<std::string> signature;
        std::vector<std::string> missing;
        std::vector<std::string> extra;
    };

    bool healthy = true;
    bool partial = false;
    std::vector<Fault> matched;
    std::vector<ResidualLine> residuals;  // active residuals, id order
    std::vector<std::string> unique_sensor_set;
    std::vector<Exoneration> exonerated;
    std::vector<std::string> unexplained;
    double timestamp = 0.0;
};

ExplanationRecord explanation_record(const DiagnosisReport& report, const DependencyGraph& graph,
                                     const FaultSignatureMatrix& matrix);

}  // namespace arrdiag
