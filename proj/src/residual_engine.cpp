#include "arrdiag/residual_engine.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "arrdiag/errors.hpp"

namespace arrdiag {

double Batch::mean(const std::string& sensor_id) const {
    auto it = samples.find(sensor_id);
    if (it == samples.end() || it->second.size() == 0) throw MissingInput(sensor_id);
    return it->second.mean();
}

ValueMap batch_means(const Batch& batch) {
    ValueMap out;
    for (const auto& [id, v] : batch.samples) {
        if (v.size() > 0) out[id] = v.mean();
    }
    return out;
}

ValueMap effective_parameters(const DependencyGraph& graph, const ValueMap& overrides) {
    ValueMap p = graph.parameters;
    for (const auto& [k, v] : overrides) p[k] = v;
    return p;
}

namespace {

Expression::Lookup lookup_in(const ValueMap& first, const ValueMap& second, const ValueMap& third) {
    return [&](const std::string& name) {
        for (const ValueMap* m : {&first, &second, &third}) {
            auto it = m->find(name);
            if (it != m->end()) return it->second;
        }
        throw MissingInput(name);
    };
}

double guarded(const Expression& expr, const Expression::Lookup& lookup) {
    try {
        const double v = expr.evaluate(lookup);
        return std::isfinite(v) ? v : std::numeric_limits<double>::quiet_NaN();
    } catch (const std::domain_error&) {
        return std::numeric_limits<double>::quiet_NaN();
    }
}

}  // namespace

ValueMap virtual_values(const ValueMap& physical, const DependencyGraph& graph, const ValueMap& parameters) {
    ValueMap out;
    const ValueMap none;
    for (const auto& [id, v] : graph.virtuals) {
        for (const auto& in : v.solution_inputs) {
            if (!physical.count(in)) throw MissingInput(in);
        }
        out[id] = guarded(graph.expression(v.expression_id), lookup_in(physical, parameters, none));
    }
    return out;
}

ValueMap compute_virtual_sensors(const Batch& batch, const DependencyGraph& graph) {
    return virtual_values(batch_means(batch), graph, graph.parameters);
}

std::vector<ResidualValue> evaluate_residuals_at(const ValueMap& physical, const DependencyGraph& graph,
                                                 const ValueMap& parameters) {
    const ValueMap virt = virtual_values(physical, graph, parameters);
    std::vector<ResidualValue> out;
    for (const auto& [id, r] : graph.residuals) {
        for (const auto& s : r.direct_sensors) {
            if (!physical.count(s) && !virt.count(s)) throw MissingInput(s);
        }
        out.push_back({id, guarded(graph.expression(r.expression_id), lookup_in(physical, virt, parameters))});
    }
    return out;
}

std::vector<ResidualValue> evaluate_residuals(const Batch& batch, const DependencyGraph& graph,
                                              const CalibrationRecord& calibration) {
    return evaluate_residuals_at(batch_means(batch), graph, effective_parameters(graph, calibration.fitted));
}

namespace {

double residual_at(const ValueMap& physical, const DependencyGraph& graph, ValueMap params,
                   const std::string& param, double value, const std::string& residual_id) {
    params[param] = value;
    for (const auto& rv : evaluate_residuals_at(physical, graph, params)) {
        if (rv.residual_id == residual_id) return rv.value;
    }
    throw UnknownResidual(residual_id);
}

}  // namespace

CalibrationRecord calibrate(const std::vector<Batch>& training, const DependencyGraph& graph) {
    if (training.size() < min_training_batches) {
        throw InsufficientTraining("calibration needs at least " + std::to_string(min_training_batches) +
                                   " batches, got " + std::to_string(training.size()));
    }
    CalibrationRecord rec;
    rec.t_start = training.front().t_start;
    rec.t_end = training.back().t_end;
    rec.batch_count = training.size();

    std::vector<ValueMap> means;
    means.reserve(training.size());
    for (const auto& b : training) means.push_back(batch_means(b));

    const auto& target = graph.calibration;
    if (!target.fit_residual.empty()) {
        // The fitted residual is affine in the parameter: r_i(p) = a_i + b_i p.
        const auto n = static_cast<Eigen::Index>(training.size());
        Eigen::VectorXd a(n), b(n);
        const ValueMap base = graph.parameters;
        for (Eigen::Index i = 0; i < n; ++i) {
            const auto& m = means[static_cast<std::size_t>(i)];
            a(i) = residual_at(m, graph, base, target.fit_parameter, 0.0, target.fit_residual);
            b(i) = residual_at(m, graph, base, target.fit_parameter, 1.0, target.fit_residual) - a(i);
            const double r2 = residual_at(m, graph, base, target.fit_parameter, 2.0, target.fit_residual);
            if (!std::isfinite(a(i)) || !std::isfinite(b(i)) ||
                std::abs(r2 - (a(i) + 2.0 * b(i))) > 1e-9 * (std::abs(a(i)) + std::abs(b(i)) + 1.0)) {
                throw ConfigError("calibration residual " + target.fit_residual + " is not affine in " +
                                  target.fit_parameter);
            }
        }
        if (b.squaredNorm() == 0.0) {
            throw ConfigError("calibration residual does not depend on " + target.fit_parameter);
        }
        const Eigen::VectorXd p = b.colPivHouseholderQr().solve(-a);
        rec.fitted[target.fit_parameter] = p(0);
    }

    const ValueMap params = effective_parameters(graph, rec.fitted);
    std::map<std::string, std::vector<double>> series;
    for (const auto& m : means) {
        for (const auto& rv : evaluate_residuals_at(m, graph, params)) series[rv.residual_id].push_back(rv.value);
    }
    for (const auto& [id, xs] : series) {
        const Eigen::Map<const Eigen::VectorXd> v(xs.data(), static_cast<Eigen::Index>(xs.size()));
        if (!v.allFinite()) throw InsufficientTraining("residual " + id + " is not finite on training data");
        const double mu = v.mean();
        const double var = (v.array() - mu).square().sum() / static_cast<double>(v.size() - 1);
        rec.stats[id] = {mu, std::max(std::sqrt(var), sigma_floor)};
    }
    return rec;
}

Detector::Detector(DetectorConfig config, CalibrationRecord calibration)
    : config_(config), calibration_(std::move(calibration)) {
    reset();
}

void Detector::reset() {
    states_.clear();
    for (const auto& [id, s] : calibration_.stats) states_.push_back(ResidualState{id});
}

const std::vector<ResidualState>& Detector::update(double batch_end, const std::vector<ResidualValue>& values) {
    for (const auto& rv : values) {
        auto st = std::find_if(states_.begin(), states_.end(),
                               [&](const ResidualState& s) { return s.residual_id == rv.residual_id; });
        if (st == states_.end()) throw UnknownResidual(rv.residual_id);
        const auto& stats = calibration_.stats.at(rv.residual_id);
        st->value = rv.value;
        st->z_score = (rv.value - stats.mu) / stats.sigma;
        // an unevaluable relation counts as exceeding
        const bool exceeds = !std::isfinite(st->z_score) || std::abs(st->z_score) > config_.z_threshold;
        st->run_length = exceeds ? st->run_length + 1 : 0;
        if (!st->active && st->run_length >= config_.consecutive) {
            st->active = true;
            st->activation_time = batch_end;
        }
    }
    return states_;
}

}  // namespace arrdiag
