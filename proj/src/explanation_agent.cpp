#include "arrdiag/explanation_agent.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <regex>
#include <sstream>

#include "arrdiag/errors.hpp"

namespace arrdiag {

std::size_t estimate_tokens(std::string_view text) {
    std::size_t code_points = 0;
    for (unsigned char c : text) {
        if ((c & 0xC0) != 0x80) ++code_points;
    }
    return (code_points + 3) / 4;
}

namespace {

std::string num(double v, int precision) {
    if (!std::isfinite(v)) return "n/a";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", precision, v);
    return buf;
}

std::string signed_num(double v, int precision) {
    if (!std::isfinite(v)) return "n/a";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%+.*f", precision, v);
    return buf;
}

template <typename Range>
std::string join(const Range& items, const std::string& sep = ", ") {
    std::string out;
    for (const auto& s : items) {
        if (!out.empty()) out += sep;
        out += s;
    }
    return out;
}

std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
    return s;
}

}  // namespace

std::string to_string(QueryKind kind) {
    switch (kind) {
        case QueryKind::fault: return "fault";
        case QueryKind::custom: return "custom";
        case QueryKind::sensor_data: return "sensor_data";
    }
    return "?";
}

std::string to_string(AnswerSource source) {
    return source == AnswerSource::llm ? "llm" : "grounded_renderer";
}

// ---------------------------------------------------------------- rendering

std::string grounded_render(const ExplanationRecord& rec) {
    if (rec.healthy) return "No active residuals; no fault diagnosed.";
    std::ostringstream out;
    std::vector<std::string> active;
    for (const auto& r : rec.residuals) active.push_back(r.id);

    if (rec.matched.empty()) {
        out << "No configured fault signature covers the active residuals " << join(active)
            << ". The activation pattern is unexplained under the single-fault assumption.\n";
    } else if (rec.partial) {
        std::vector<std::string> c;
        for (const auto& f : rec.matched) c.push_back(f.id + " (" + f.name + ")");
        out << "Partial match: no fault signature equals the active set exactly. Candidate faults whose "
               "signatures contain every active residual: "
            << join(c) << ".\n";
    } else if (rec.matched.size() == 1) {
        out << "Fault " << rec.matched[0].id << " (" << rec.matched[0].name
            << ") matches the observed residual signature.\n";
    } else {
        std::vector<std::string> c;
        for (const auto& f : rec.matched) c.push_back(f.id + " (" + f.name + ")");
        out << "Faults " << join(c) << " share the observed signature and cannot be told apart.\n";
    }

    out << "\nActive residuals and the sensors they rely on:\n";
    for (const auto& r : rec.residuals) {
        out << "- " << r.id << ": '" << r.name << "' sensors: " << join(r.sensors) << "\n";
    }
    out << "\nSensors involved in the active residuals: " << join(rec.unique_sensor_set) << ".\n";
    if (!rec.unexplained.empty()) out << "\nUnexplained residuals: " << join(rec.unexplained) << ".\n";
    if (!rec.exonerated.empty()) {
        std::vector<std::string> ex;
        for (const auto& e : rec.exonerated) ex.push_back(e.fault_id);
        out << "\nExonerated faults: " << join(ex) << ".";
    }
    std::string s = out.str();
    while (!s.empty() && s.back() == '\n') s.pop_back();
    return s;
}

std::string render_exoneration(const ExplanationRecord& rec) {
    std::ostringstream out;
    std::vector<std::string> active;
    for (const auto& r : rec.residuals) active.push_back(r.id);
    if (rec.healthy) {
        out << "No residual is active, so every configured fault is exonerated: each one would have "
               "activated at least one residual.\n";
    } else {
        std::vector<std::string> m;
        for (const auto& f : rec.matched) m.push_back(f.id);
        out << "Observed active residuals: " << join(active) << ".\n";
        if (!m.empty()) out << (rec.partial ? "Candidate faults (partial match): " : "Matched fault: ") << join(m) << ".\n";
        out << "Every other fault was exonerated because its predicted signature differs from the observed set:\n";
    }
    for (const auto& e : rec.exonerated) {
        out << "- " << e.fault_id << " (" << e.fault_name << ") would activate " << join(e.signature);
        if (!e.missing.empty()) out << "; predicted but inactive: " << join(e.missing);
        if (!e.extra.empty()) out << "; active but not predicted: " << join(e.extra);
        out << "\n";
    }
    std::vector<std::string> ex;
    for (const auto& e : rec.exonerated) ex.push_back(e.fault_id);
    out << "Exonerated: " << join(ex) << ".";
    return out.str();
}

std::string render_sensor_metrics(const std::string& sensor_id, const std::vector<BatchMetrics>& metrics,
                                  const SensorAssessment& assessment) {
    std::ostringstream out;
    if (metrics.empty()) return "Sensor " + sensor_id + " has no closed batches yet.";
    const auto& first = metrics.front();
    const auto& last = metrics.back();
    out << "Sensor " << sensor_id << ": " << metrics.size() << " batches analysed (data points " << first.batch_index
        << " to " << last.batch_index << ").\n";
    out << "Latest data point " << last.batch_index << ": mean " << num(last.mean, 3) << ", std " << num(last.std, 4)
        << ", spectral entropy " << num(last.spectral_entropy, 3) << " nats, KL divergence "
        << num(last.kl_divergence, 3) << " nats against data point " << first.batch_index << ".\n";

    auto [emin, emax] = std::minmax_element(metrics.begin(), metrics.end(), [](const auto& a, const auto& b) {
        return a.spectral_entropy < b.spectral_entropy;
    });
    auto [kmin, kmax] = std::minmax_element(metrics.begin(), metrics.end(), [](const auto& a, const auto& b) {
        return a.kl_divergence < b.kl_divergence;
    });
    out << "Spectral entropy ranged from " << num(emin->spectral_entropy, 3) << " to " << num(emax->spectral_entropy, 3)
        << " nats; KL divergence ranged from " << num(kmin->kl_divergence, 3) << " to " << num(kmax->kl_divergence, 3)
        << " nats.\n";

    if (assessment.change_batch) {
        const int b = *assessment.change_batch;
        auto it = std::find_if(metrics.begin(), metrics.end(), [&](const auto& m) { return m.batch_index == b; });
        out << "The batch mean stepped by " << signed_num(it->d_mean, 3) << " at data point " << b
            << " (after data point " << b - 1 << "), beyond the change threshold of "
            << num(assessment.change_threshold, 4) << "; the std changed by " << signed_num(it->d_std, 4)
            << " at that point.\n";
        out << "Verdict: sensor " << sensor_id << " shows anomalous behaviour starting at data point " << b << ".";
    } else {
        double largest = 0.0;
        for (std::size_t i = 1; i < metrics.size(); ++i) largest = std::max(largest, std::abs(metrics[i].d_mean));
        out << "No batch-to-batch mean step exceeded the change threshold (largest step " << num(largest, 4)
            << ").\n";
        out << "Verdict: sensor " << sensor_id << " appears to be operating normally.";
    }
    return out.str();
}

std::string render_background(const DependencyGraph& g, const FaultSignatureMatrix& matrix) {
    std::ostringstream out;
    out << "System: " << g.system << ".\n\nPhysical sensors:\n";
    for (const auto& [id, s] : g.sensors) {
        if (s.kind != SensorKind::physical) continue;
        out << "- " << id << " (" << to_string(s.quantity) << ", on " << s.component_id << "): " << s.description
            << "\n";
    }
    out << "\nVirtual sensors (balance-equation solutions):\n";
    for (const auto& [id, v] : g.virtuals) {
        const auto& s = g.sensor(id);
        out << "- " << id << " (" << to_string(s.quantity) << "): " << s.description << "; computed from "
            << (v.solution_inputs.empty() ? std::string("no physical sensor") : join(v.solution_inputs))
            << "; valid only while " << join(v.solution_components) << " are healthy\n";
    }
    out << "\nComponents: ";
    std::vector<std::string> comps;
    for (const auto& [id, c] : g.components) comps.push_back(id);
    out << join(comps) << ".\n\nResiduals (analytical redundancy relations):\n";
    for (const auto& [id, r] : g.residuals) {
        const auto c = dependency_closure(g, id);
        out << "- " << id << ": '" << r.name << "' sensors: " << join(r.direct_sensors)
            << "; depends on physical sensors " << join(c.physical_sensors) << " and components "
            << join(c.components) << "\n";
    }
    out << "\nFaults and their residual signatures:\n";
    for (const auto& [id, f] : g.faults) {
        out << "- " << id << ": '" << f.name << "' on " << f.target << " (" << to_string(f.kind)
            << "); signature " << join(matrix.signature(id)) << "\n";
    }
    out << "\nA fault is diagnosed when the set of active residuals equals its signature; every other fault "
           "is exonerated.";
    return out.str();
}

namespace {

std::string render_core(const DependencyGraph& g, const FaultSignatureMatrix& matrix, const AgentState& st) {
    std::ostringstream out;
    out << "Time " << num(st.timestamp, 0) << " s, data point " << st.batch_index << ".\nResidual states:\n";
    for (const auto& r : st.residuals) {
        out << "- " << r.residual_id << ": " << (r.active ? "active" : "inactive");
        if (r.activation_time) out << " since " << num(*r.activation_time, 0) << " s";
        out << ", value " << num(r.value, 2) << ", z " << num(r.z_score, 2) << "\n";
    }
    if (st.diagnosis) {
        const auto rec = explanation_record(*st.diagnosis, g, matrix);
        out << "\nCurrent diagnosis:\n" << grounded_render(rec) << "\n\nExoneration detail:\n" << render_exoneration(rec);
    } else {
        out << "\nNo diagnosis has been computed yet.";
    }
    return out.str();
}

std::string metric_row(const std::string& sensor, const BatchMetrics& m) {
    return sensor + " data point " + std::to_string(m.batch_index) + ": mean " + num(m.mean, 3) + ", std " +
           num(m.std, 4) + ", d_mean " + signed_num(m.d_mean, 3) + ", d_std " + signed_num(m.d_std, 4) +
           ", entropy " + num(m.spectral_entropy, 3) + ", KL " + num(m.kl_divergence, 4);
}

std::string render_conversation(const std::vector<ConversationTurn>& turns) {
    std::string out;
    for (const auto& t : turns) {
        if (!out.empty()) out += "\n";
        out += "Operator: " + t.question + "\nAgent: " + t.answer;
    }
    return out;
}

std::size_t bundle_tokens(const ContextBundle& b) {
    std::string all = b.background;
    if (!b.realtime.empty()) all += "\n\n" + b.realtime;
    if (!b.conversation.empty()) all += "\n\n" + render_conversation(b.conversation);
    return estimate_tokens(all);
}

}  // namespace

ContextBundle assemble_context(const DependencyGraph& g, const FaultSignatureMatrix& matrix, const AgentState& state,
                               const std::vector<ConversationTurn>& conversation, std::size_t budget) {
    ContextBundle b;
    b.background = render_background(g, matrix);
    if (estimate_tokens(b.background) > budget) {
        throw ContextOverflow("background needs " + std::to_string(estimate_tokens(b.background)) +
                              " tokens, budget is " + std::to_string(budget));
    }
    const std::string core = render_core(g, matrix, state);

    struct Row {
        int batch;
        std::string sensor;
        std::string text;
    };
    std::vector<Row> rows;  // newest first
    for (const auto& [sensor, ms] : state.sensor_metrics) {
        for (const auto& m : ms) rows.push_back({m.batch_index, sensor, metric_row(sensor, m)});
    }
    std::stable_sort(rows.begin(), rows.end(), [](const Row& a, const Row& c) {
        if (a.batch != c.batch) return a.batch > c.batch;
        return a.sensor < c.sensor;
    });

    std::size_t keep_rows = rows.size();
    std::size_t first_turn = 0;
    bool keep_core = true;
    auto build = [&] {
        b.realtime.clear();
        if (keep_core) b.realtime = core;
        if (keep_rows > 0) {
            if (!b.realtime.empty()) b.realtime += "\n\n";
            b.realtime += "Sensor metrics, newest first:";
            for (std::size_t i = 0; i < keep_rows; ++i) b.realtime += "\n" + rows[i].text;
        }
        b.conversation.assign(conversation.begin() + static_cast<std::ptrdiff_t>(first_turn), conversation.end());
        b.estimated_tokens = bundle_tokens(b);
        return b.estimated_tokens <= budget;
    };

    // Coarse pass on character counts, then exact re-checks.
    while (!build()) {
        const std::size_t over = (b.estimated_tokens - budget) * 4;
        if (keep_rows > 0) {
            std::size_t freed = 0;
            std::size_t drop = 0;
            while (drop < keep_rows && freed < over) freed += rows[keep_rows - 1 - drop++].text.size() + 1;
            keep_rows -= std::max<std::size_t>(drop, 1);
        } else if (first_turn < conversation.size()) {
            ++first_turn;
        } else if (keep_core) {
            keep_core = false;
        } else {
            throw ContextOverflow("context cannot be reduced under the budget");
        }
    }
    b.metric_rows_included = keep_rows;
    b.dropped_metric_rows = rows.size() - keep_rows;
    b.dropped_turns = first_turn;
    b.dropped_realtime_core = !keep_core;
    return b;
}

// ---------------------------------------------------------------- grounding

namespace {

const std::regex& qualified_name_re() {
    static const std::regex re(R"((SensorFault|ComponentFault)-[A-Za-z0-9_.:\-]+)");
    return re;
}

const std::regex& residual_name_re() {
    static const std::regex re(R"((^|[^A-Za-z0-9_\-])([a-z][a-z0-9_\-]*_r)(?![A-Za-z0-9_\-]))");
    return re;
}

const std::regex& short_id_re() {
    static const std::regex re(R"((^|[^A-Za-z0-9_])([a-z]+(?:_[a-z]+)*_[0-9]+|r[0-9]+|F[0-9]+)(?![A-Za-z0-9_]))");
    return re;
}

struct Found {
    std::size_t pos;
    std::string id;
};

std::vector<Found> scan(std::string text) {
    std::vector<Found> found;
    auto blank = [&](std::size_t pos, std::size_t len) { std::fill_n(text.begin() + static_cast<long>(pos), len, ' '); };

    std::vector<std::pair<std::size_t, std::size_t>> spans;
    for (auto it = std::sregex_iterator(text.begin(), text.end(), qualified_name_re()); it != std::sregex_iterator();
         ++it) {
        std::string id = it->str(0);
        while (!id.empty() && (id.back() == '.' || id.back() == ':' || id.back() == '-')) id.pop_back();
        found.push_back({static_cast<std::size_t>(it->position(0)), id});
        spans.emplace_back(it->position(0), it->length(0));
    }
    for (auto [p, l] : spans) blank(p, l);
    spans.clear();
    for (auto it = std::sregex_iterator(text.begin(), text.end(), residual_name_re()); it != std::sregex_iterator();
         ++it) {
        found.push_back({static_cast<std::size_t>(it->position(2)), it->str(2)});
        spans.emplace_back(it->position(2), it->length(2));
    }
    for (auto [p, l] : spans) blank(p, l);
    for (auto it = std::sregex_iterator(text.begin(), text.end(), short_id_re()); it != std::sregex_iterator(); ++it) {
        found.push_back({static_cast<std::size_t>(it->position(2)), it->str(2)});
    }
    std::sort(found.begin(), found.end(), [](const Found& a, const Found& b) { return a.pos < b.pos; });
    return found;
}

bool declares_unknown(const std::string& sentence) {
    static const char* markers[] = {"unknown", "not exist", "no such", "not part of", "not defined",
                                    "not configured", "not recognized", "not recognised", "not in the", "not a "};
    const std::string s = lower(sentence);
    return std::any_of(std::begin(markers), std::end(markers), [&](const char* m) { return s.find(m) != std::string::npos; });
}

std::vector<std::string> sentences(std::string_view text) {
    std::vector<std::string> out;
    std::string cur;
    for (std::size_t i = 0; i < text.size(); ++i) {
        const char c = text[i];
        cur += c;
        const bool end_mark = c == '!' || c == '?' || c == '\n' ||
                              (c == '.' && (i + 1 == text.size() || std::isspace(static_cast<unsigned char>(text[i + 1]))));
        if (end_mark) {
            out.push_back(cur);
            cur.clear();
        }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

bool mentions(const std::string& sentence, const std::string& id) {
    for (const auto& f : scan(sentence)) {
        if (f.id == id) return true;
    }
    return false;
}

}  // namespace

std::vector<std::string> extract_identifiers(std::string_view text) {
    std::vector<std::string> out;
    for (const auto& f : scan(std::string(text))) {
        if (std::find(out.begin(), out.end(), f.id) == out.end()) out.push_back(f.id);
    }
    return out;
}

GroundingResult ground_check(std::string_view answer, const DependencyGraph& graph,
                             const std::set<std::string>& question_ids) {
    GroundingResult res;
    const auto vocab = graph.vocabulary();
    const auto sents = sentences(answer);
    for (const auto& id : extract_identifiers(answer)) {
        if (vocab.count(id)) {
            res.cited_ids.insert(id);
            continue;
        }
        if (question_ids.count(id)) {
            const bool all_declared = std::all_of(sents.begin(), sents.end(), [&](const std::string& s) {
                return !mentions(s, id) || declares_unknown(s);
            });
            if (all_declared) {
                res.acknowledged_unknown.insert(id);
                continue;
            }
        }
        res.offending_ids.push_back(id);
    }
    res.grounded = res.offending_ids.empty();
    return res;
}

// ---------------------------------------------------------------- records

nlohmann::json to_json(const AnswerRecord& r) {
    return {{"type", "answer"},
            {"query_kind", to_string(r.query_kind)},
            {"question", r.question},
            {"answer", r.answer},
            {"grounded", r.grounded},
            {"source", to_string(r.source)},
            {"cited_ids", r.cited_ids},
            {"timestamp", r.timestamp}};
}

AnswerRecord answer_from_json(const nlohmann::json& j) {
    AnswerRecord r;
    const auto kind = j.at("query_kind").get<std::string>();
    if (kind == "fault") r.query_kind = QueryKind::fault;
    else if (kind == "custom") r.query_kind = QueryKind::custom;
    else if (kind == "sensor_data") r.query_kind = QueryKind::sensor_data;
    else throw ParseError("unknown query kind '" + kind + "'");
    r.question = j.at("question").get<std::string>();
    r.answer = j.at("answer").get<std::string>();
    r.grounded = j.at("grounded").get<bool>();
    r.source = j.at("source").get<std::string>() == "llm" ? AnswerSource::llm : AnswerSource::grounded_renderer;
    r.cited_ids = j.at("cited_ids").get<std::set<std::string>>();
    r.timestamp = j.at("timestamp").get<double>();
    return r;
}

// ---------------------------------------------------------------- session

namespace {

const char* preamble =
    "You are the diagnostics assistant for a liquid-sodium purification loop. Answer the operator using only the "
    "facts in this context. Refer to sensors, residuals and faults only by identifiers that appear in the "
    "context, written exactly as given. If the operator mentions an identifier that does not appear in the "
    "context, say that it is unknown and state nothing else about it. Do not invent values, trends or causes.";

std::string system_text(const ContextBundle& b) { return std::string(preamble) + "\n\nBACKGROUND\n" + b.background; }

std::string user_text(const ContextBundle& b, const std::string& task) {
    std::string s;
    if (!b.realtime.empty()) s = "REAL-TIME STATE\n" + b.realtime + "\n\n";
    return s + "TASK\n" + task;
}

bool contains_id(const std::string& answer, const std::string& id) {
    const auto ids = extract_identifiers(answer);
    return std::find(ids.begin(), ids.end(), id) != ids.end();
}

bool is_exoneration_question(const std::string& q) {
    static const std::regex re(R"(exonerat|ruled? out|other faults|why not)", std::regex::icase);
    return std::regex_search(q, re);
}

bool is_diagnosis_question(const std::string& q) {
    static const std::regex re(R"(diagnos|which fault|what fault|what is wrong|active residual)", std::regex::icase);
    return std::regex_search(q, re);
}

}  // namespace

AgentSession::AgentSession(std::shared_ptr<const DependencyGraph> graph, std::shared_ptr<ChatEndpoint> endpoint,
                           AgentOptions options)
    : graph_(std::move(graph)),
      matrix_(build_signature_matrix(*graph_)),
      endpoint_(std::move(endpoint)),
      options_(std::move(options)) {}

std::vector<ConversationTurn> AgentSession::conversation() const {
    std::lock_guard lock(mu_);
    return conversation_;
}

std::optional<ContextBundle> AgentSession::last_bundle() const {
    std::lock_guard lock(mu_);
    return last_bundle_;
}

void AgentSession::log(const AnswerRecord& record) {
    if (!options_.transcript_path) return;
    std::ofstream out(*options_.transcript_path, std::ios::app);
    out << to_json(record).dump() << "\n";
}

AnswerRecord AgentSession::ask(QueryKind kind, const std::string& question, const std::string& task,
                               const AgentState& state, const std::set<std::string>& question_ids,
                               const std::function<std::optional<std::string>(const std::string&)>& content_problem,
                               const std::string& fallback) {
    AnswerRecord rec;
    rec.query_kind = kind;
    rec.question = question;
    rec.timestamp = state.timestamp;

    const std::size_t reserve = estimate_tokens(preamble) + estimate_tokens(task) + 64;
    const std::size_t budget = options_.token_budget > reserve ? options_.token_budget - reserve : 0;
    last_bundle_ = assemble_context(*graph_, matrix_, state, conversation_, budget);

    if (endpoint_) {
        ChatRequest req;
        req.kind = to_string(kind);
        req.messages.push_back({"system", system_text(*last_bundle_)});
        for (const auto& t : last_bundle_->conversation) {
            req.messages.push_back({"user", t.question});
            req.messages.push_back({"assistant", t.answer});
        }
        req.messages.push_back({"user", user_text(*last_bundle_, task)});
        try {
            for (int attempt = 0; attempt < 2; ++attempt) {
                const std::string answer = endpoint_->complete(req);
                const auto g = ground_check(answer, *graph_, question_ids);
                std::optional<std::string> problem;
                if (!g.grounded) problem = "it mentions identifiers that are not in the context: " + join(g.offending_ids);
                else problem = content_problem(answer);
                if (!problem) {
                    rec.answer = answer;
                    rec.grounded = true;
                    rec.source = AnswerSource::llm;
                    rec.cited_ids = g.cited_ids;
                    return rec;
                }
                req.messages.push_back({"assistant", answer});
                req.messages.push_back({"user", "Your previous answer was rejected because " + *problem +
                                                    ". Answer again using only identifiers and facts from the "
                                                    "context."});
            }
        } catch (const EndpointError&) {
            // fall through to the deterministic renderer
        }
    }
    rec.answer = fallback;
    rec.source = AnswerSource::grounded_renderer;
    const auto g = ground_check(fallback, *graph_, question_ids);
    rec.grounded = g.grounded;
    rec.cited_ids = g.cited_ids;
    return rec;
}

AnswerRecord AgentSession::fault_query(const AgentState& state) {
    std::lock_guard lock(mu_);
    if (!state.diagnosis) throw NoDiagnosisAvailable("no diagnosis report has been produced yet");
    const auto rec = explanation_record(*state.diagnosis, *graph_, matrix_);
    const std::string rendered = grounded_render(rec);
    const std::string task =
        "Explain the current diagnosis to the operator. Name the diagnosed fault with its identifier and full "
        "name, list every active residual with its name and the sensors it relies on, and give the unique set "
        "of physical sensors involved. If no residual is active, say that no fault signature is present.\n\n"
        "Structured diagnosis:\n" +
        rendered;

    auto problem = [&](const std::string& answer) -> std::optional<std::string> {
        if (rec.healthy) {
            for (const auto& id : extract_identifiers(answer)) {
                if (graph_->faults.count(id)) return "no fault is diagnosed but the answer names " + id;
            }
            return std::nullopt;
        }
        std::vector<std::string> missing;
        for (const auto& f : rec.matched) {
            if (!contains_id(answer, f.id)) missing.push_back(f.id);
        }
        for (const auto& r : rec.residuals) {
            if (!contains_id(answer, r.id)) missing.push_back(r.id);
            for (const auto& s : r.sensors) {
                if (!contains_id(answer, s) && std::find(missing.begin(), missing.end(), s) == missing.end()) {
                    missing.push_back(s);
                }
            }
        }
        if (!missing.empty()) return "it omits " + join(missing);
        return std::nullopt;
    };
    auto out = ask(QueryKind::fault, "fault_query", task, state, {}, problem, rendered);
    log(out);
    return out;
}

AnswerRecord AgentSession::custom_query(const std::string& question, bool save, const AgentState& state) {
    std::lock_guard lock(mu_);
    const auto vocab = graph_->vocabulary();
    std::set<std::string> unknown;
    for (const auto& id : extract_identifiers(question)) {
        if (!vocab.count(id)) unknown.insert(id);
    }

    std::string fallback;
    if (!unknown.empty()) {
        fallback = "The identifier" + std::string(unknown.size() > 1 ? "s " : " ") + join(unknown) +
                   (unknown.size() > 1 ? " are" : " is") + " unknown: not part of the configured system.";
    } else if (state.diagnosis && is_exoneration_question(question)) {
        fallback = render_exoneration(explanation_record(*state.diagnosis, *graph_, matrix_));
    } else if (state.diagnosis && is_diagnosis_question(question)) {
        fallback = grounded_render(explanation_record(*state.diagnosis, *graph_, matrix_));
    } else {
        fallback = "I cannot answer this question without the language model.";
    }

    std::string task = "Operator question: " + question;
    if (!unknown.empty()) {
        task += "\n\nNote: " + join(unknown) + " do not appear in the context; state that they are unknown.";
    }
    auto problem = [](const std::string&) -> std::optional<std::string> { return std::nullopt; };
    auto out = ask(QueryKind::custom, question, task, state, unknown, problem, fallback);
    if (save) conversation_.push_back({question, out.answer});
    log(out);
    return out;
}

AnswerRecord AgentSession::query_sensor_data(const std::string& sensor_id, const AgentState& state) {
    std::lock_guard lock(mu_);
    graph_->sensor(sensor_id);  // UnknownSensor
    auto it = state.sensor_metrics.find(sensor_id);
    if (it == state.sensor_metrics.end() || it->second.size() < 2) {
        throw InsufficientData("sensor " + sensor_id + " needs at least 2 closed batches");
    }
    const auto& metrics = it->second;
    const auto assessment = assess_sensor(metrics, options_.sensor_change_sigma);
    const std::string rendered = render_sensor_metrics(sensor_id, metrics, assessment);

    std::ostringstream table;
    table << "batch | mean | std | d_mean | d_std | spectral_entropy | kl_divergence\n";
    for (const auto& m : metrics) {
        table << m.batch_index << " | " << num(m.mean, 4) << " | " << num(m.std, 4) << " | " << signed_num(m.d_mean, 4)
              << " | " << signed_num(m.d_std, 4) << " | " << num(m.spectral_entropy, 4) << " | "
              << num(m.kl_divergence, 4) << "\n";
    }
    const std::string task =
        "Summarise the batch metrics of sensor " + sensor_id +
        ": trends in mean and standard deviation, their rates of change, spectral entropy and KL divergence. "
        "Each batch is one data point. State whether the sensor appears to be operating normally or shows "
        "anomalous behaviour, and give the data point of any change.\n\nMetrics:\n" +
        table.str() + "\nRule-based assessment:\n" + rendered;

    auto problem = [&](const std::string& answer) -> std::optional<std::string> {
        if (!contains_id(answer, sensor_id)) return "it does not name " + sensor_id;
        const std::string a = lower(answer);
        const bool says_anomalous = a.find("anomal") != std::string::npos || a.find("abnormal") != std::string::npos;
        const bool says_normal = a.find("normal") != std::string::npos;
        if (assessment.anomalous && !says_anomalous) return "it does not report the detected anomaly";
        if (!assessment.anomalous && (says_anomalous || !says_normal)) {
            return "the metrics show normal operation but the answer does not say so";
        }
        return std::nullopt;
    };
    auto out = ask(QueryKind::sensor_data, "query_sensor_data(" + sensor_id + ")", task, state, {}, problem, rendered);
    log(out);
    return out;
}

}  // namespace arrdiag
