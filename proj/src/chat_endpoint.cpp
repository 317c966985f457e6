#include "arrdiag/chat_endpoint.hpp"

#include <cstdlib>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "arrdiag/errors.hpp"

namespace arrdiag {

void MockChatEndpoint::enqueue(const std::string& kind, std::string completion) {
    std::lock_guard lock(mu_);
    queued_[kind].push_back(std::move(completion));
}

void MockChatEndpoint::set_default(const std::string& kind, std::string completion) {
    std::lock_guard lock(mu_);
    defaults_[kind] = std::move(completion);
}

void MockChatEndpoint::set_available(bool available) {
    std::lock_guard lock(mu_);
    available_ = available;
}

std::string MockChatEndpoint::complete(const ChatRequest& request) {
    std::lock_guard lock(mu_);
    requests_.push_back(request);
    if (!available_) throw EndpointError("mock endpoint disabled");
    auto& q = queued_[request.kind];
    if (!q.empty()) {
        std::string out = std::move(q.front());
        q.pop_front();
        return out;
    }
    auto d = defaults_.find(request.kind);
    if (d != defaults_.end()) return d->second;
    throw EndpointError("mock endpoint has no completion for kind '" + request.kind + "'");
}

std::vector<ChatRequest> MockChatEndpoint::requests() const {
    std::lock_guard lock(mu_);
    return requests_;
}

HttpChatEndpoint::HttpChatEndpoint(HttpEndpointConfig config) : config_(std::move(config)) {
    const auto& url = config_.base_url;
    const auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) throw ConfigError("endpoint URL needs a scheme: " + url);
    const auto path_start = url.find('/', scheme_end + 3);
    scheme_host_port_ = url.substr(0, path_start);
    path_prefix_ = path_start == std::string::npos ? "" : url.substr(path_start);
    while (!path_prefix_.empty() && path_prefix_.back() == '/') path_prefix_.pop_back();
}

std::string HttpChatEndpoint::complete(const ChatRequest& request) {
    nlohmann::json body;
    body["model"] = config_.model;
    body["temperature"] = 0;
    body["messages"] = nlohmann::json::array();
    for (const auto& m : request.messages) body["messages"].push_back({{"role", m.role}, {"content", m.content}});
    const std::string payload = body.dump();

    std::string last_error;
    for (int attempt = 0; attempt <= config_.retries; ++attempt) {
        httplib::Client cli(scheme_host_port_);
        cli.set_connection_timeout(config_.timeout);
        cli.set_read_timeout(config_.timeout);
        cli.set_write_timeout(config_.timeout);
        httplib::Headers headers;
        if (!config_.api_key.empty()) headers.emplace("Authorization", "Bearer " + config_.api_key);
        auto res = cli.Post(path_prefix_ + "/chat/completions", headers, payload, "application/json");
        if (!res) {
            last_error = "transport error: " + httplib::to_string(res.error());
            continue;
        }
        if (res->status != 200) {
            last_error = "HTTP " + std::to_string(res->status);
            continue;
        }
        try {
            const auto j = nlohmann::json::parse(res->body);
            return j.at("choices").at(0).at("message").at("content").get<std::string>();
        } catch (const nlohmann::json::exception& e) {
            last_error = std::string("malformed completion: ") + e.what();
        }
    }
    throw EndpointError("chat endpoint failed after " + std::to_string(config_.retries + 1) +
                        " attempts: " + last_error);
}

std::shared_ptr<ChatEndpoint> endpoint_from_environment() {
    const char* url = std::getenv(env_endpoint_url);
    if (url == nullptr || *url == '\0') return nullptr;
    HttpEndpointConfig cfg;
    cfg.base_url = url;
    if (const char* m = std::getenv(env_endpoint_model)) cfg.model = m;
    if (const char* k = std::getenv(env_endpoint_key)) cfg.api_key = k;
    return std::make_shared<HttpChatEndpoint>(cfg);
}

}  // namespace arrdiag
