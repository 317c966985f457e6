#include "arrdiag/snapshot.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <sstream>
#include <thread>

#include "arrdiag/errors.hpp"

namespace arrdiag {

using nlohmann::json;

namespace {

json jnum(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }
double dnum(const json& j) { return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : j.get<double>(); }

json jopt(const std::optional<double>& v) { return v ? jnum(*v) : json(nullptr); }
std::optional<double> dopt(const json& j) {
    if (j.is_null()) return std::nullopt;
    return j.get<double>();
}

}  // namespace

json to_json(const BatchMetrics& m) {
    return {{"batch_index", m.batch_index},   {"sample_count", m.sample_count},
            {"mean", jnum(m.mean)},           {"std", jnum(m.std)},
            {"d_mean", jnum(m.d_mean)},       {"d_std", jnum(m.d_std)},
            {"spectral_entropy", jnum(m.spectral_entropy)}, {"kl_divergence", jnum(m.kl_divergence)}};
}

BatchMetrics metrics_from_json(const json& j) {
    BatchMetrics m;
    m.batch_index = j.at("batch_index").get<int>();
    m.sample_count = j.at("sample_count").get<std::size_t>();
    m.mean = dnum(j.at("mean"));
    m.std = dnum(j.at("std"));
    m.d_mean = dnum(j.at("d_mean"));
    m.d_std = dnum(j.at("d_std"));
    m.spectral_entropy = dnum(j.at("spectral_entropy"));
    m.kl_divergence = dnum(j.at("kl_divergence"));
    return m;
}

json to_json(const DiagnosisReport& r) {
    return {{"observed_active", r.observed_active},
            {"matched_faults", r.matched_faults},
            {"exonerated_faults", r.exonerated_faults},
            {"partial", r.partial},
            {"unexplained_residuals", r.unexplained_residuals},
            {"per_residual_sensors", r.per_residual_sensors},
            {"unique_sensor_set", r.unique_sensor_set},
            {"timestamp", r.timestamp}};
}

DiagnosisReport diagnosis_from_json(const json& j) {
    DiagnosisReport r;
    r.observed_active = j.at("observed_active").get<std::set<std::string>>();
    r.matched_faults = j.at("matched_faults").get<std::vector<std::string>>();
    r.exonerated_faults = j.at("exonerated_faults").get<std::vector<std::string>>();
    r.partial = j.at("partial").get<bool>();
    r.unexplained_residuals = j.at("unexplained_residuals").get<std::set<std::string>>();
    r.per_residual_sensors = j.at("per_residual_sensors").get<std::map<std::string, std::vector<std::string>>>();
    r.unique_sensor_set = j.at("unique_sensor_set").get<std::vector<std::string>>();
    r.timestamp = j.at("timestamp").get<double>();
    return r;
}

json to_json(const Snapshot& s) {
    json sensors = json::array();
    for (const auto& x : s.sensors) {
        sensors.push_back({{"id", x.id},
                           {"kind", to_string(x.kind)},
                           {"value", jopt(x.value)},
                           {"latest", x.latest ? to_json(*x.latest) : json(nullptr)}});
    }
    json residuals = json::array();
    for (const auto& r : s.residuals) {
        residuals.push_back({{"id", r.id},
                             {"name", r.name},
                             {"value", jnum(r.value)},
                             {"z_score", jnum(r.z_score)},
                             {"active", r.active},
                             {"activation_time", jopt(r.activation_time)},
                             {"direct_sensors", r.direct_sensors}});
    }
    json scenario = json::array();
    for (const auto& f : s.scenario) {
        scenario.push_back({{"fault_id", f.fault_id}, {"onset_s", f.onset_s}, {"magnitude", f.magnitude}});
    }
    return {{"type", "snapshot"},
            {"schema_version", s.schema_version},
            {"timestamp_s", s.timestamp_s},
            {"batch_index", s.batch_index},
            {"sensors", sensors},
            {"residuals", residuals},
            {"diagnosis", to_json(s.diagnosis)},
            {"scenario", scenario}};
}

Snapshot snapshot_from_json(const json& j) {
    Snapshot s;
    s.schema_version = j.at("schema_version").get<int>();
    if (s.schema_version != snapshot_schema_version) {
        throw ParseError("unsupported snapshot schema_version " + std::to_string(s.schema_version));
    }
    s.timestamp_s = j.at("timestamp_s").get<double>();
    s.batch_index = j.at("batch_index").get<int>();
    for (const auto& x : j.at("sensors")) {
        SensorSnapshot ss;
        ss.id = x.at("id").get<std::string>();
        ss.kind = x.at("kind").get<std::string>() == "physical" ? SensorKind::physical : SensorKind::virtual_sensor;
        ss.value = dopt(x.at("value"));
        if (!x.at("latest").is_null()) ss.latest = metrics_from_json(x.at("latest"));
        s.sensors.push_back(std::move(ss));
    }
    for (const auto& x : j.at("residuals")) {
        ResidualSnapshot r;
        r.id = x.at("id").get<std::string>();
        r.name = x.at("name").get<std::string>();
        r.value = dnum(x.at("value"));
        r.z_score = dnum(x.at("z_score"));
        r.active = x.at("active").get<bool>();
        r.activation_time = dopt(x.at("activation_time"));
        r.direct_sensors = x.at("direct_sensors").get<std::vector<std::string>>();
        s.residuals.push_back(std::move(r));
    }
    s.diagnosis = diagnosis_from_json(j.at("diagnosis"));
    for (const auto& f : j.at("scenario")) {
        s.scenario.push_back(
            {f.at("fault_id").get<std::string>(), f.at("onset_s").get<double>(), f.at("magnitude").get<double>()});
    }
    return s;
}

std::string serialize_line(const Snapshot& s) { return to_json(s).dump(); }

AgentState agent_state_from_history(const std::deque<Snapshot>& history, std::size_t capacity) {
    AgentState st;
    if (history.empty()) return st;
    const auto& last = history.back();
    st.timestamp = last.timestamp_s;
    st.batch_index = last.batch_index;
    for (const auto& r : last.residuals) {
        ResidualState rs;
        rs.residual_id = r.id;
        rs.value = r.value;
        rs.z_score = r.z_score;
        rs.active = r.active;
        rs.activation_time = r.activation_time;
        st.residuals.push_back(std::move(rs));
    }
    st.diagnosis = last.diagnosis;
    const std::size_t n = std::min(capacity, history.size());
    for (std::size_t i = history.size() - n; i < history.size(); ++i) {
        for (const auto& s : history[i].sensors) {
            if (s.latest) st.sensor_metrics[s.id].push_back(*s.latest);
        }
    }
    return st;
}

RunLogWriter::RunLogWriter(const std::filesystem::path& path) : out_(path, std::ios::trunc) {
    if (!out_) throw ConfigError("cannot open run log " + path.string());
}

void RunLogWriter::write(const Snapshot& s) { out_ << serialize_line(s) << '\n' << std::flush; }

void RunLogWriter::write(const AnswerRecord& a) { out_ << to_json(a).dump() << '\n' << std::flush; }

std::vector<RunLogEntry> read_run_log(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open run log " + path.string());
    std::vector<RunLogEntry> out;
    std::string line;
    std::size_t lineno = 0;
    std::optional<double> last_ts;
    while (std::getline(in, line)) {
        ++lineno;
        if (in.eof()) throw CorruptLog(lineno, "truncated line (no newline terminator)");
        if (line.empty()) continue;
        try {
            const auto j = json::parse(line);
            const auto type = j.at("type").get<std::string>();
            if (type == "snapshot") {
                auto s = snapshot_from_json(j);
                if (last_ts && !(s.timestamp_s > *last_ts)) throw CorruptLog(lineno, "snapshot timestamps must increase");
                last_ts = s.timestamp_s;
                out.emplace_back(std::move(s));
            } else if (type == "answer") {
                out.emplace_back(answer_from_json(j));
            } else {
                throw CorruptLog(lineno, "unknown record type '" + type + "'");
            }
        } catch (const CorruptLog&) {
            throw;
        } catch (const std::exception& e) {
            throw CorruptLog(lineno, e.what());
        }
    }
    return out;
}

void replay(const std::filesystem::path& path, double speed, const std::function<void(const Snapshot&)>& emit,
            const std::atomic<bool>* stop) {
    const auto entries = read_run_log(path);
    const auto stopped = [stop] { return stop && stop->load(); };
    std::optional<double> prev;
    for (const auto& e : entries) {
        const auto* s = std::get_if<Snapshot>(&e);
        if (!s) continue;
        if (speed > 0 && prev) {
            using clock = std::chrono::steady_clock;
            const auto until = clock::now() + std::chrono::duration_cast<clock::duration>(
                                                  std::chrono::duration<double>((s->timestamp_s - *prev) / speed));
            while (!stopped() && clock::now() < until) {
                std::this_thread::sleep_for(std::min<clock::duration>(until - clock::now(), std::chrono::milliseconds(20)));
            }
        }
        if (stopped()) return;
        prev = s->timestamp_s;
        emit(*s);
    }
}

}  // namespace arrdiag
