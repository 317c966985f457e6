#pragma once

#include <chrono>
#include <deque>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

namespace arrdiag {

struct ChatMessage {
    std::string role;  // system | user | assistant
    std::string content;

    friend bool operator==(const ChatMessage&, const ChatMessage&) = default;
};

struct ChatRequest {
    std::string kind;  // fault | custom | sensor_data; routing hint, not sent on the wire
    std::vector<ChatMessage> messages;
};

/// A chat-completion backend. `complete` throws EndpointError when no
/// completion can be obtained.
class ChatEndpoint {
public:
    virtual ~ChatEndpoint() = default;
    virtual std::string complete(const ChatRequest& request) = 0;
};

/// Replays canned completions keyed by query kind, in order. A kind whose
/// queue is exhausted falls back to its sticky default, if one was set.
class MockChatEndpoint : public ChatEndpoint {
public:
    void enqueue(const std::string& kind, std::string completion);
    void set_default(const std::string& kind, std::string completion);
    void set_available(bool available);

    std::string complete(const ChatRequest& request) override;

    std::vector<ChatRequest> requests() const;

private:
    mutable std::mutex mu_;
    bool available_ = true;
    std::map<std::string, std::deque<std::string>> queued_;
    std::map<std::string, std::string> defaults_;
    std::vector<ChatRequest> requests_;
};

struct HttpEndpointConfig {
    std::string base_url;  // e.g. http://127.0.0.1:8000/v1
    std::string model;
    std::string api_key;
    std::chrono::seconds timeout{30};
    int retries = 1;
};

/// POSTs {base_url}/chat/completions with a messages array and returns
/// choices[0].message.content.
class HttpChatEndpoint : public ChatEndpoint {
public:
    explicit HttpChatEndpoint(HttpEndpointConfig config);
    std::string complete(const ChatRequest& request) override;
    const HttpEndpointConfig& config() const noexcept { return config_; }

private:
    HttpEndpointConfig config_;
    std::string scheme_host_port_;
    std::string path_prefix_;
};

inline constexpr const char* env_endpoint_url = "ARRDIAG_LLM_BASE_URL";
inline constexpr const char* env_endpoint_model = "ARRDIAG_LLM_MODEL";
inline constexpr const char* env_endpoint_key = "ARRDIAG_LLM_API_KEY";

/// Endpoint described by the environment, or nullptr when no base URL is set.
std::shared_ptr<ChatEndpoint> endpoint_from_environment();

}  // namespace arrdiag
