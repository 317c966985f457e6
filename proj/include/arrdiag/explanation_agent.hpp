#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "arrdiag/chat_endpoint.hpp"
#include "arrdiag/diagnoser.hpp"
#include "arrdiag/knowledge_graph.hpp"
#include "arrdiag/residual_engine.hpp"
#include "arrdiag/sensor_analytics.hpp"

namespace arrdiag {

inline constexpr int prompt_layout_version = 1;
inline constexpr std::size_t default_token_budget = 8192;

/// ceil(code points / 4). A sizing estimate only.
std::size_t estimate_tokens(std::string_view text);

/// Live facts the agent may talk about.
struct AgentState {
    double timestamp = 0.0;
    int batch_index = 0;
    std::vector<ResidualState> residuals;
    std::optional<DiagnosisReport> diagnosis;
    std::map<std::string, std::vector<BatchMetrics>> sensor_metrics;  // physical sensor -> retained batches
};

struct ConversationTurn {
    std::string question;
    std::string answer;
};

struct ContextBundle {
    std::string background;
    std::string realtime;
    std::vector<ConversationTurn> conversation;  // oldest first
    std::size_t estimated_tokens = 0;
    std::size_t dropped_metric_rows = 0;
    std::size_t dropped_turns = 0;
    bool dropped_realtime_core = false;
    std::size_t metric_rows_included = 0;
};

std::string render_background(const DependencyGraph& graph, const FaultSignatureMatrix& matrix);

/// Background in full, then the live core (residual states and diagnosis),
/// then metric rows newest-first, then conversation newest-first. When over
/// budget: oldest metric rows go first, then oldest turns, then the live core.
ContextBundle assemble_context(const DependencyGraph& graph, const FaultSignatureMatrix& matrix,
                               const AgentState& state, const std::vector<ConversationTurn>& conversation,
                               std::size_t budget);

struct GroundingResult {
    bool grounded = true;
    std::vector<std::string> offending_ids;
    std::set<std::string> cited_ids;           // extracted and present in the vocabulary
    std::set<std::string> acknowledged_unknown;  // named by the operator and declared unknown
};

/// Extracts identifier-like tokens and checks them against the graph
/// vocabulary. Tokens listed in `question_ids` that are not in the vocabulary
/// pass only when every sentence mentioning them says they are unknown.
GroundingResult ground_check(std::string_view answer, const DependencyGraph& graph,
                             const std::set<std::string>& question_ids = {});

/// Identifier-like tokens in free text, in order of first appearance.
std::vector<std::string> extract_identifiers(std::string_view text);

std::string grounded_render(const ExplanationRecord& record);
std::string render_exoneration(const ExplanationRecord& record);
std::string render_sensor_metrics(const std::string& sensor_id, const std::vector<BatchMetrics>& metrics,
                                  const SensorAssessment& assessment);

enum class QueryKind { fault, custom, sensor_data };
enum class AnswerSource { llm, grounded_renderer };
std::string to_string(QueryKind kind);
std::string to_string(AnswerSource source);

struct AnswerRecord {
    QueryKind query_kind = QueryKind::fault;
    std::string question;
    std::string answer;
    bool grounded = true;
    AnswerSource source = AnswerSource::grounded_renderer;
    std::set<std::string> cited_ids;
    double timestamp = 0.0;
};

nlohmann::json to_json(const AnswerRecord& record);
AnswerRecord answer_from_json(const nlohmann::json& j);

struct AgentOptions {
    std::size_t token_budget = default_token_budget;
    double sensor_change_sigma = 3.0;
    std::optional<std::filesystem::path> transcript_path;
};

/// One operator conversation. Queries run one at a time.
class AgentSession {
public:
    AgentSession(std::shared_ptr<const DependencyGraph> graph, std::shared_ptr<ChatEndpoint> endpoint,
                 AgentOptions options = {});

    AnswerRecord fault_query(const AgentState& state);
    AnswerRecord custom_query(const std::string& question, bool save, const AgentState& state);
    AnswerRecord query_sensor_data(const std::string& sensor_id, const AgentState& state);

    std::vector<ConversationTurn> conversation() const;
    std::optional<ContextBundle> last_bundle() const;
    const FaultSignatureMatrix& matrix() const noexcept { return matrix_; }

private:
    AnswerRecord ask(QueryKind kind, const std::string& question, const std::string& task, const AgentState& state,
                     const std::set<std::string>& question_ids,
                     const std::function<std::optional<std::string>(const std::string&)>& content_problem,
                     const std::string& fallback);
    void log(const AnswerRecord& record);

    std::shared_ptr<const DependencyGraph> graph_;
    FaultSignatureMatrix matrix_;
    std::shared_ptr<ChatEndpoint> endpoint_;
    AgentOptions options_;
    mutable std::mutex mu_;
    std::vector<ConversationTurn> conversation_;
    std::optional<ContextBundle> last_bundle_;
};

}  // namespace arrdiag
