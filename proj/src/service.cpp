#include "arrdiag/service.hpp"

#include <atomic>
#include <deque>
#include <iostream>
#include <mutex>
#include <thread>

#include <boost/asio/dispatch.hpp>
#include <boost/asio/executor_work_guard.hpp>
#include <boost/asio/ip/tcp.hpp>
#include <boost/asio/strand.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>

#include "arrdiag/errors.hpp"

namespace arrdiag {

namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
namespace net = boost::asio;
using tcp = net::ip::tcp;
using nlohmann::json;

namespace {

class WsSession;

HttpReply error_reply(int status, const std::string& kind, const std::string& message, const std::string& id = {}) {
    json j{{"error", kind}, {"message", message}};
    if (!id.empty()) j["id"] = id;
    return {status, j.dump(), "application/json"};
}

}  // namespace

struct Service::Impl {
    SystemConfig cfg;
    ServiceOptions opt;
    net::io_context ioc;
    std::optional<net::executor_work_guard<net::io_context::executor_type>> work;
    std::optional<tcp::acceptor> acceptor;
    std::vector<std::thread> io_threads;
    std::thread pipeline_thread;
    std::atomic<bool> stop_flag{false};
    std::atomic<bool> finished{false};
    unsigned short bound_port = 0;

    mutable std::mutex mu;
    std::deque<Snapshot> history;
    std::shared_ptr<const std::string> latest_line;
    std::optional<RunLogWriter> log;
    std::unique_ptr<AgentSession> agent;

    std::mutex ws_mu;
    std::vector<std::weak_ptr<WsSession>> subscribers;

    Impl(SystemConfig c, ServiceOptions o) : cfg(std::move(c)), opt(std::move(o)) {
        AgentOptions ao;
        ao.token_budget = cfg.agent.token_budget;
        ao.sensor_change_sigma = cfg.analytics.sensor_change_sigma;
        agent = std::make_unique<AgentSession>(cfg.graph, opt.endpoint, ao);
        if (opt.run.log_path) log.emplace(*opt.run.log_path);
    }

    void publish(const Snapshot& s);
    void subscribe(const std::shared_ptr<WsSession>& ws);
    void do_accept();
    HttpReply handle(const std::string& method, const std::string& target, const std::string& body);
    AgentState agent_state() const {
        std::lock_guard lock(mu);
        return agent_state_from_history(history, cfg.analytics.buffer_capacity);
    }
    void record(const AnswerRecord& a) {
        std::lock_guard lock(mu);
        if (log) log->write(a);
    }
};

namespace {

class WsSession : public std::enable_shared_from_this<WsSession> {
public:
    WsSession(tcp::socket&& socket, Service::Impl& impl) : ws_(std::move(socket)), impl_(impl) {}

    void run(http::request<http::string_body> req) {
        ws_.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
        ws_.async_accept(req, [self = shared_from_this()](beast::error_code ec) {
            if (ec) return;
            self->impl_.subscribe(self);
            self->do_read();
        });
    }

    void send(std::shared_ptr<const std::string> msg) {
        net::post(ws_.get_executor(), [self = shared_from_this(), msg = std::move(msg)] {
            self->queue_.push_back(msg);
            if (self->queue_.size() == 1) self->do_write();
        });
    }

private:
    void do_read() {
        ws_.async_read(buffer_, [self = shared_from_this()](beast::error_code ec, std::size_t) {
            if (ec) return;  // closed by the peer
            self->buffer_.consume(self->buffer_.size());
            self->do_read();
        });
    }

    void do_write() {
        ws_.text(true);
        ws_.async_write(net::buffer(*queue_.front()), [self = shared_from_this()](beast::error_code ec, std::size_t) {
            if (ec) return;
            self->queue_.pop_front();
            if (!self->queue_.empty()) self->do_write();
        });
    }

    websocket::stream<beast::tcp_stream> ws_;
    beast::flat_buffer buffer_;
    std::deque<std::shared_ptr<const std::string>> queue_;
    Service::Impl& impl_;
};

class HttpSession : public std::enable_shared_from_this<HttpSession> {
public:
    HttpSession(tcp::socket&& socket, Service::Impl& impl) : stream_(std::move(socket)), impl_(impl) {}

    void run() {
        net::dispatch(stream_.get_executor(), [self = shared_from_this()] { self->do_read(); });
    }

private:
    void do_read() {
        parser_.emplace();
        parser_->body_limit(1 << 20);
        stream_.expires_after(std::chrono::seconds(60));
        http::async_read(stream_, buffer_, *parser_,
                         [self = shared_from_this()](beast::error_code ec, std::size_t) { self->on_read(ec); });
    }

    void on_read(beast::error_code ec) {
        if (ec == http::error::end_of_stream) {
            stream_.socket().shutdown(tcp::socket::shutdown_send, ec);
            return;
        }
        if (ec) return;
        auto req = parser_->release();
        const std::string target(req.target());
        if (websocket::is_upgrade(req) && target.substr(0, target.find('?')) == "/stream") {
            stream_.expires_never();
            std::make_shared<WsSession>(stream_.release_socket(), impl_)->run(std::move(req));
            return;
        }
        const HttpReply reply = impl_.handle(std::string(req.method_string()), target, req.body());
        auto res = std::make_shared<http::response<http::string_body>>(static_cast<http::status>(reply.status),
                                                                        req.version());
        res->set(http::field::server, "arrdiag");
        res->set(http::field::content_type, reply.content_type);
        res->set(http::field::access_control_allow_origin, "*");
        res->set(http::field::access_control_allow_headers, "Content-Type");
        res->set(http::field::access_control_allow_methods, "GET, POST, OPTIONS");
        res->keep_alive(req.keep_alive());
        res->body() = reply.body;
        res->prepare_payload();
        http::async_write(stream_, *res, [self = shared_from_this(), res](beast::error_code wec, std::size_t) {
            if (wec) return;
            if (!res->keep_alive()) {
                beast::error_code sec;
                self->stream_.socket().shutdown(tcp::socket::shutdown_send, sec);
                return;
            }
            self->do_read();
        });
    }

    beast::tcp_stream stream_;
    beast::flat_buffer buffer_;
    std::optional<http::request_parser<http::string_body>> parser_;
    Service::Impl& impl_;
};

}  // namespace

void Service::Impl::publish(const Snapshot& s) {
    auto line = std::make_shared<const std::string>(serialize_line(s));
    {
        std::lock_guard lock(mu);
        history.push_back(s);
        while (history.size() > std::max<std::size_t>(cfg.analytics.buffer_capacity, 1)) history.pop_front();
        latest_line = line;
        if (log) log->write(s);
    }
    std::lock_guard lock(ws_mu);
    std::vector<std::weak_ptr<WsSession>> alive;
    for (auto& w : subscribers) {
        if (auto ws = w.lock()) {
            ws->send(line);
            alive.push_back(w);
        }
    }
    subscribers.swap(alive);
}

void Service::Impl::subscribe(const std::shared_ptr<WsSession>& ws) {
    std::shared_ptr<const std::string> line;
    {
        std::lock_guard lock(mu);
        line = latest_line;
    }
    std::lock_guard lock(ws_mu);
    subscribers.push_back(ws);
    if (line) ws->send(line);
}

void Service::Impl::do_accept() {
    acceptor->async_accept(net::make_strand(ioc), [this](beast::error_code ec, tcp::socket socket) {
        if (ec) return;  // acceptor closed
        std::make_shared<HttpSession>(std::move(socket), *this)->run();
        do_accept();
    });
}

HttpReply Service::Impl::handle(const std::string& method, const std::string& raw_target, const std::string& body) {
    const std::string target = raw_target.substr(0, raw_target.find('?'));
    if (method == "OPTIONS") return {204, "", "text/plain"};

    auto parse_body = [&]() -> std::optional<json> {
        auto j = json::parse(body.empty() ? std::string("{}") : body, nullptr, false);
        if (j.is_discarded() || !j.is_object()) return std::nullopt;
        return j;
    };

    try {
        if (method == "GET" && target == "/state") {
            std::lock_guard lock(mu);
            if (!latest_line) return error_reply(503, "NoSnapshot", "no snapshot has been produced yet");
            return {200, *latest_line, "application/json"};
        }
        if (method == "GET" && target == "/graph") return {200, cfg.document.dump(), "application/json"};

        const std::string sensors_prefix = "/sensors/";
        const std::string metrics_suffix = "/metrics";
        if (method == "GET" && target.rfind(sensors_prefix, 0) == 0 && target.size() > sensors_prefix.size() + metrics_suffix.size() &&
            target.compare(target.size() - metrics_suffix.size(), metrics_suffix.size(), metrics_suffix) == 0) {
            const std::string id =
                target.substr(sensors_prefix.size(), target.size() - sensors_prefix.size() - metrics_suffix.size());
            cfg.graph->sensor(id);
            const auto st = agent_state();
            json arr = json::array();
            if (auto it = st.sensor_metrics.find(id); it != st.sensor_metrics.end()) {
                for (const auto& m : it->second) arr.push_back(to_json(m));
            }
            return {200, arr.dump(), "application/json"};
        }

        if (method == "POST" && target == "/query/fault") {
            const auto a = agent->fault_query(agent_state());
            record(a);
            return {200, to_json(a).dump(), "application/json"};
        }
        if (method == "POST" && target == "/query/custom") {
            const auto j = parse_body();
            if (!j || !j->contains("question") || !(*j)["question"].is_string()) {
                return error_reply(400, "BadRequest", "body must be {\"question\": string, \"save\": bool}");
            }
            const bool save = j->value("save", false);
            const auto a = agent->custom_query((*j)["question"].get<std::string>(), save, agent_state());
            record(a);
            return {200, to_json(a).dump(), "application/json"};
        }
        if (method == "POST" && target == "/query/sensor-data") {
            const auto j = parse_body();
            if (!j || !j->contains("sensor_id") || !(*j)["sensor_id"].is_string()) {
                return error_reply(400, "BadRequest", "body must be {\"sensor_id\": string}");
            }
            const auto a = agent->query_sensor_data((*j)["sensor_id"].get<std::string>(), agent_state());
            record(a);
            return {200, to_json(a).dump(), "application/json"};
        }
        const bool known = target == "/state" || target == "/graph" || target.rfind("/query/", 0) == 0 ||
                           target.rfind(sensors_prefix, 0) == 0;
        return known ? error_reply(405, "MethodNotAllowed", method + " " + target)
                     : error_reply(404, "NotFound", "no route for " + target);
    } catch (const UnknownSensor& e) {
        return error_reply(404, "UnknownSensor", e.what(), e.id());
    } catch (const NoDiagnosisAvailable& e) {
        return error_reply(409, "NoDiagnosisAvailable", e.what());
    } catch (const InsufficientData& e) {
        return error_reply(409, "InsufficientData", e.what());
    } catch (const ContextOverflow& e) {
        return error_reply(500, "ContextOverflow", e.what());
    } catch (const std::exception& e) {
        return error_reply(500, "InternalError", e.what());
    }
}

Service::Service(SystemConfig config, ServiceOptions options)
    : impl_(std::make_unique<Impl>(std::move(config), std::move(options))) {}

Service::~Service() { stop(); }

void Service::start() {
    auto& im = *impl_;
    if (!im.opt.replay_log) validate_run(im.cfg, im.opt.run);
    try {
        const tcp::endpoint ep(net::ip::make_address(im.opt.address), im.opt.port);
        im.acceptor.emplace(im.ioc);
        im.acceptor->open(ep.protocol());
        im.acceptor->set_option(net::socket_base::reuse_address(true));
        im.acceptor->bind(ep);
        im.acceptor->listen(net::socket_base::max_listen_connections);
        im.bound_port = im.acceptor->local_endpoint().port();
    } catch (const boost::system::system_error& e) {
        im.acceptor.reset();
        throw BindError("cannot listen on " + im.opt.address + ":" + std::to_string(im.opt.port) + ": " + e.what());
    }
    im.work.emplace(im.ioc.get_executor());
    im.do_accept();
    for (int i = 0; i < std::max(1, im.opt.io_threads); ++i) im.io_threads.emplace_back([&im] { im.ioc.run(); });

    im.pipeline_thread = std::thread([&im] {
        RunOptions run = im.opt.run;
        run.log_path.reset();  // the service owns the log so answers interleave with snapshots
        run.stop = &im.stop_flag;
        run.on_snapshot = [&im](const Snapshot& s) { im.publish(s); };
        try {
            if (im.opt.replay_log) {
                replay(*im.opt.replay_log, im.opt.replay_speed, [&im](const Snapshot& s) {
                    if (!im.stop_flag) im.publish(s);
                }, &im.stop_flag);
            } else {
                run_pipeline(im.cfg, run);
            }
        } catch (const std::exception& e) {
            std::cerr << "pipeline stopped: " << e.what() << "\n";
        }
        im.finished = true;
    });
}

void Service::stop() {
    if (!impl_) return;
    auto& im = *impl_;
    im.stop_flag = true;
    if (im.pipeline_thread.joinable()) im.pipeline_thread.join();
    if (im.acceptor) {
        net::post(im.ioc, [&im] {
            beast::error_code ec;
            im.acceptor->close(ec);
        });
    }
    im.work.reset();
    im.ioc.stop();
    for (auto& t : im.io_threads) {
        if (t.joinable()) t.join();
    }
    im.io_threads.clear();
}

void Service::wait_for_pipeline() {
    if (impl_->pipeline_thread.joinable()) impl_->pipeline_thread.join();
}

bool Service::pipeline_finished() const { return impl_->finished.load(); }

unsigned short Service::port() const { return impl_->bound_port; }

std::optional<Snapshot> Service::latest() const {
    std::lock_guard lock(impl_->mu);
    if (impl_->history.empty()) return std::nullopt;
    return impl_->history.back();
}

HttpReply Service::handle(const std::string& method, const std::string& target, const std::string& body) {
    return impl_->handle(method, target, body);
}

void Service::publish(const Snapshot& snapshot) { impl_->publish(snapshot); }

}  // namespace arrdiag
