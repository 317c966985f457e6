#pragma once

#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "arrdiag/expression.hpp"

namespace arrdiag {

enum class SensorKind { physical, virtual_sensor };
enum class Quantity { temperature, flow, pressure };
enum class FaultKind { sensor_bias, sensor_drift, component_degradation };

/// What a component fault does to the plant physics.
enum class DegradationEffect { none, heat_transfer, loop_flow };

std::string to_string(SensorKind kind);
std::string to_string(Quantity q);
std::string to_string(FaultKind kind);
std::string to_string(DegradationEffect effect);

struct SensorSpec {
    std::string id;
    SensorKind kind = SensorKind::physical;
    Quantity quantity = Quantity::temperature;
    std::string component_id;
    std::string description;
};

/// Balance-equation solution standing in for an unmeasured variable. Its
/// validity depends on exactly `solution_inputs` and `solution_components`.
struct VirtualSensorSpec {
    std::string sensor_id;
    std::set<std::string> solution_inputs;  // physical sensors only
    std::set<std::string> solution_components;
    std::string expression_id;
};

struct ComponentSpec {
    std::string id;
    std::string description;
};

struct FaultSpec {
    std::string id;
    std::string name;
    std::string target;  // sensor id or component id
    FaultKind kind = FaultKind::sensor_bias;
    DegradationEffect effect = DegradationEffect::none;
    double canonical_magnitude = 0.0;
};

/// One analytical redundancy relation.
struct ResidualSpec {
    std::string id;
    std::string name;
    std::vector<std::string> direct_sensors;  // order as declared
    std::set<std::string> component_ids;
    std::string expression_id;
};

struct CalibrationTarget {
    std::string fit_residual;
    std::string fit_parameter;
};

/// Immutable after load; share it as `std::shared_ptr<const DependencyGraph>`.
struct DependencyGraph {
    int schema_version = 1;
    std::string system;
    std::map<std::string, SensorSpec> sensors;
    std::map<std::string, VirtualSensorSpec> virtuals;
    std::map<std::string, ComponentSpec> components;
    std::map<std::string, FaultSpec> faults;
    std::map<std::string, ResidualSpec> residuals;
    std::map<std::string, Expression> expressions;
    std::map<std::string, double> parameters;
    CalibrationTarget calibration;

    const SensorSpec& sensor(const std::string& id) const;
    const ResidualSpec& residual(const std::string& id) const;
    const FaultSpec& fault(const std::string& id) const;
    const Expression& expression(const std::string& id) const;

    bool is_physical(const std::string& sensor_id) const;
    std::vector<std::string> physical_sensor_ids() const;
    std::vector<std::string> virtual_sensor_ids() const;
    std::vector<std::string> residual_ids() const;
    std::vector<std::string> fault_ids() const;

    /// Every identifier an explanation may legitimately mention.
    std::set<std::string> vocabulary() const;
};

/// Parses and validates the system-config document (YAML). Throws
/// ParseError for malformed text and ValidationError naming the offending id.
DependencyGraph load_system_config(std::string_view document);

struct DependencyClosure {
    std::set<std::string> physical_sensors;
    std::set<std::string> components;

    bool contains(const std::string& id) const {
        return physical_sensors.count(id) != 0 || components.count(id) != 0;
    }
};

/// Physical sensors and components a residual depends on, with every virtual
/// sensor expanded into its balance-equation solution.
DependencyClosure dependency_closure(const DependencyGraph& graph, const std::string& residual_id);

/// fault id -> set of residual ids whose closure contains the fault target.
class FaultSignatureMatrix {
public:
    FaultSignatureMatrix() = default;
    FaultSignatureMatrix(std::vector<std::string> columns, std::map<std::string, std::set<std::string>> rows)
        : columns_(std::move(columns)), rows_(std::move(rows)) {}

    const std::vector<std::string>& columns() const noexcept { return columns_; }
    const std::map<std::string, std::set<std::string>>& rows() const noexcept { return rows_; }
    const std::set<std::string>& signature(const std::string& fault_id) const;
    bool has_fault(const std::string& fault_id) const { return rows_.count(fault_id) != 0; }

    friend bool operator==(const FaultSignatureMatrix&, const FaultSignatureMatrix&) = default;

private:
    std::vector<std::string> columns_;  // residual ids, lexicographic
    std::map<std::string, std::set<std::string>> rows_;
};

FaultSignatureMatrix build_signature_matrix(const DependencyGraph& graph);

struct GraphDiagnostic {
    enum class Kind { empty_signature, ambiguous_signature, unreachable_sensor };
    Kind kind;
    std::vector<std::string> ids;
    std::string message;
};

std::string to_string(GraphDiagnostic::Kind kind);

/// Report-only checks: empty signatures, duplicated signatures, and sensors
/// that no residual depends on.
std::vector<GraphDiagnostic> validate_graph(const DependencyGraph& graph);

}  // namespace arrdiag
