#include <gtest/gtest.h>

#include <atomic>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "arrdiag/chat_endpoint.hpp"
#include "arrdiag/errors.hpp"

using namespace arrdiag;

namespace {

class FakeCompletionServer {
public:
    FakeCompletionServer() {
        server_.Post("/v1/chat/completions", [this](const httplib::Request& req, httplib::Response& res) {
            ++hits_;
            last_body_ = req.body;
            last_auth_ = req.get_header_value("Authorization");
            if (fail_first_ > 0) {
                --fail_first_;
                res.status = 503;
                return;
            }
            const auto body = nlohmann::json::parse(req.body);
            const auto n = body.at("messages").size();
            nlohmann::json out{{"choices", {{{"message", {{"role", "assistant"}, {"content", "saw " + std::to_string(n)}}}}}}};
            res.set_content(out.dump(), "application/json");
        });
        port_ = server_.bind_to_any_port("127.0.0.1");
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }
    ~FakeCompletionServer() {
        server_.stop();
        thread_.join();
    }

    std::string url() const { return "http://127.0.0.1:" + std::to_string(port_) + "/v1/"; }

    httplib::Server server_;
    int port_ = 0;
    std::thread thread_;
    std::atomic<int> hits_{0};
    std::atomic<int> fail_first_{0};
    std::string last_body_;
    std::string last_auth_;
};

ChatRequest two_messages() { return {"fault", {{"system", "ctx"}, {"user", "task"}}}; }

}  // namespace

TEST(HttpChatEndpoint, PostsMessagesAndReadsFirstChoice) {
    FakeCompletionServer srv;
    HttpChatEndpoint ep({srv.url(), "test-model", "secret", std::chrono::seconds(5), 0});
    EXPECT_EQ(ep.complete(two_messages()), "saw 2");
    const auto body = nlohmann::json::parse(srv.last_body_);
    EXPECT_EQ(body.at("model"), "test-model");
    EXPECT_EQ(body.at("temperature"), 0);
    EXPECT_EQ(body.at("messages")[1].at("content"), "task");
    EXPECT_FALSE(body.contains("kind"));
    EXPECT_EQ(srv.last_auth_, "Bearer secret");
}

TEST(HttpChatEndpoint, RetriesThenGivesUp) {
    FakeCompletionServer srv;
    srv.fail_first_ = 1;
    HttpChatEndpoint ep({srv.url(), "m", "", std::chrono::seconds(5), 1});
    EXPECT_EQ(ep.complete(two_messages()), "saw 2");
    EXPECT_EQ(srv.hits_.load(), 2);

    srv.fail_first_ = 5;
    EXPECT_THROW(ep.complete(two_messages()), EndpointError);
    EXPECT_EQ(srv.hits_.load(), 4);
}

TEST(HttpChatEndpoint, UnreachableHostIsEndpointError) {
    int port = 0;
    {
        httplib::Server probe;
        port = probe.bind_to_any_port("127.0.0.1");
    }
    HttpChatEndpoint ep({"http://127.0.0.1:" + std::to_string(port), "m", "", std::chrono::seconds(1), 0});
    EXPECT_THROW(ep.complete(two_messages()), EndpointError);
    EXPECT_THROW(HttpChatEndpoint({"localhost:8000", "m", "", std::chrono::seconds(1), 0}), ConfigError);
}

TEST(MockChatEndpoint, QueuesDefaultsAndAvailability) {
    MockChatEndpoint mock;
    EXPECT_THROW(mock.complete(two_messages()), EndpointError);
    mock.enqueue("fault", "one");
    mock.set_default("fault", "sticky");
    EXPECT_EQ(mock.complete(two_messages()), "one");
    EXPECT_EQ(mock.complete(two_messages()), "sticky");
    mock.set_available(false);
    EXPECT_THROW(mock.complete(two_messages()), EndpointError);
    EXPECT_EQ(mock.requests().size(), 4u);
}

TEST(EndpointFromEnvironment, NullWithoutBaseUrl) {
    ::unsetenv(env_endpoint_url);
    EXPECT_EQ(endpoint_from_environment(), nullptr);
    ::setenv(env_endpoint_url, "http://127.0.0.1:9/v1", 1);
    ::setenv(env_endpoint_model, "m1", 1);
    auto ep = std::dynamic_pointer_cast<HttpChatEndpoint>(endpoint_from_environment());
    ASSERT_NE(ep, nullptr);
    EXPECT_EQ(ep->config().model, "m1");
    ::unsetenv(env_endpoint_url);
}
