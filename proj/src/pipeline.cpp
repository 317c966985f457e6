#include "arrdiag/pipeline.hpp"

#include <chrono>
#include <cmath>
#include <thread>

#include "arrdiag/diagnoser.hpp"
#include "arrdiag/errors.hpp"

namespace arrdiag {

void validate_run(const SystemConfig& cfg, const RunOptions& opt) {
    const double w = cfg.detector.batch_seconds;
    const double needed = cfg.timeline.monitor_origin_s + w * cfg.detector.consecutive;
    if (opt.duration_s < needed) {
        throw ConfigError("duration " + std::to_string(opt.duration_s) + " s is shorter than the " +
                          std::to_string(needed) + " s needed to reach a first detection decision");
    }
    if (cfg.timeline.training_batches < static_cast<int>(min_training_batches)) {
        throw ConfigError("timeline.training_batches must be at least " + std::to_string(min_training_batches));
    }
    const double steps = w / cfg.plant.params.sample_period;
    if (std::abs(steps - std::round(steps)) > 1e-9) {
        throw ConfigError("batch_seconds must be a whole number of sample periods");
    }
    for (const auto& s : opt.scenario) {
        cfg.graph->fault(s.fault_id);
        if (s.onset_s < cfg.timeline.monitor_origin_s) {
            throw ConfigError("fault " + s.fault_id + " starts before the calibration window ends at " +
                              std::to_string(cfg.timeline.monitor_origin_s) + " s");
        }
    }
}

namespace {

class BatchCollector {
public:
    BatchCollector(PlantSimulator& sim, const SystemConfig& cfg, const std::vector<FaultScenario>& scenario)
        : sim_(sim), cfg_(cfg), scenario_(scenario) {}

    Batch collect(int index, std::vector<SensorSample>* raw = nullptr) {
        const double w = cfg_.detector.batch_seconds;
        const double dt = cfg_.plant.params.sample_period;
        Batch b;
        b.index = index;
        b.t_start = cfg_.timeline.monitor_origin_s + w * (index - 1);
        b.t_end = b.t_start + w;
        std::map<std::string, std::vector<double>> acc;
        while (sim_.state().time + dt < b.t_end - 1e-9) {
            for (auto& s : sim_.step(dt, scenario_)) {
                acc[s.sensor_id].push_back(s.value);
                if (raw) raw->push_back(std::move(s));
            }
        }
        for (auto& [id, xs] : acc) {
            b.samples[id] = Eigen::Map<const Eigen::VectorXd>(xs.data(), static_cast<Eigen::Index>(xs.size()));
        }
        return b;
    }

private:
    PlantSimulator& sim_;
    const SystemConfig& cfg_;
    const std::vector<FaultScenario>& scenario_;
};

}  // namespace

RunResult run_pipeline(const SystemConfig& cfg, const RunOptions& opt) {
    validate_run(cfg, opt);
    const auto& graph = *cfg.graph;
    const double w = cfg.detector.batch_seconds;
    const double dt = cfg.plant.params.sample_period;
    const int training = cfg.timeline.training_batches;
    const double t0 = cfg.timeline.monitor_origin_s - w * training;

    PlantSimulator sim(cfg.plant, cfg.graph, opt.seed, t0 - dt);
    BatchCollector collector(sim, cfg, opt.scenario);

    std::vector<Batch> train;
    train.reserve(static_cast<std::size_t>(training));
    for (int b = 1 - training; b <= 0; ++b) train.push_back(collector.collect(b));

    RunResult result;
    result.calibration = calibrate(train, graph);
    train.clear();

    Detector detector(cfg.detector, result.calibration);
    const auto matrix = build_signature_matrix(graph);
    const ValueMap params = effective_parameters(graph, result.calibration.fitted);

    std::map<std::string, SensorBuffer> buffers;
    for (const auto& id : graph.physical_sensor_ids()) {
        buffers.emplace(id, SensorBuffer(id, w, cfg.timeline.monitor_origin_s, cfg.analytics.buffer_capacity, dt));
    }
    std::optional<RunLogWriter> log;
    if (opt.log_path) log.emplace(*opt.log_path);

    const auto wall_start = std::chrono::steady_clock::now();
    for (int b = 1;; ++b) {
        const double end = cfg.timeline.monitor_origin_s + w * b;
        if (end > opt.duration_s + 1e-9) break;
        if (opt.stop && opt.stop->load()) break;

        std::vector<SensorSample> raw;
        const Batch batch = collector.collect(b, &raw);
        for (const auto& s : raw) buffers.at(s.sensor_id).push_sample(s.time, s.value);

        const auto values = evaluate_residuals(batch, graph, result.calibration);
        const auto& states = detector.update(batch.t_end, values);
        std::set<std::string> active;
        for (const auto& st : states) {
            if (st.active) active.insert(st.residual_id);
        }

        Snapshot snap;
        snap.timestamp_s = batch.t_end;
        snap.batch_index = b;
        const ValueMap means = batch_means(batch);
        const ValueMap virt = virtual_values(means, graph, params);
        for (const auto& [id, spec] : graph.sensors) {
            SensorSnapshot ss{id, spec.kind, std::nullopt, std::nullopt};
            if (spec.kind == SensorKind::physical) {
                if (auto m = means.find(id); m != means.end()) ss.value = m->second;
                const auto& buf = buffers.at(id);
                if (!buf.batches().empty()) ss.latest = batch_metrics(buf).back();
            } else if (auto v = virt.find(id); v != virt.end() && std::isfinite(v->second)) {
                ss.value = v->second;
            }
            snap.sensors.push_back(std::move(ss));
        }
        for (const auto& st : states) {
            const auto& spec = graph.residual(st.residual_id);
            snap.residuals.push_back(
                {st.residual_id, spec.name, st.value, st.z_score, st.active, st.activation_time, spec.direct_sensors});
        }
        snap.diagnosis = diagnose(active, graph, matrix, batch.t_end);
        for (const auto& sc : opt.scenario) {
            if (sc.onset_s < batch.t_end) snap.scenario.push_back(sc);
        }

        if (log) log->write(snap);
        if (opt.on_snapshot) opt.on_snapshot(snap);
        result.snapshots.push_back(std::move(snap));

        if (opt.time_scale > 0) {
            const auto due = wall_start + std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                                              std::chrono::duration<double>((end - cfg.timeline.monitor_origin_s) /
                                                                            opt.time_scale));
            while (std::chrono::steady_clock::now() < due) {
                if (opt.stop && opt.stop->load()) break;
                std::this_thread::sleep_for(std::chrono::milliseconds(20));
            }
        }
    }
    return result;
}

}  // namespace arrdiag
