#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>

#include "arrdiag/chat_endpoint.hpp"
#include "arrdiag/pipeline.hpp"
#include "arrdiag/snapshot.hpp"
#include "arrdiag/system_config.hpp"

namespace arrdiag {

struct ServiceOptions {
    std::string address = "127.0.0.1";
    unsigned short port = 8080;  // 0 picks a free port
    RunOptions run;              // on_snapshot and stop are owned by the service
    std::shared_ptr<ChatEndpoint> endpoint;
    int io_threads = 2;
    // When set, snapshots come from this run log instead of a live simulation.
    std::optional<std::filesystem::path> replay_log;
    double replay_speed = 0.0;
};

struct HttpReply {
    int status = 200;
    std::string body;
    std::string content_type = "application/json";
};

/// Operator API over HTTP and a WebSocket snapshot stream, fed by a pipeline
/// running on its own thread.
///
///   GET  /state                  latest Snapshot
///   GET  /sensors/{id}/metrics   BatchMetrics array
///   POST /query/fault            AnswerRecord
///   POST /query/custom           {question, save} -> AnswerRecord
///   POST /query/sensor-data      {sensor_id} -> AnswerRecord
///   GET  /graph                  system config as loaded
///   WS   /stream                 one text frame per Snapshot
class Service {
public:
    Service(SystemConfig config, ServiceOptions options);
    ~Service();
    Service(const Service&) = delete;
    Service& operator=(const Service&) = delete;

    /// Binds and starts serving and simulating. Throws BindError.
    void start();
    void stop();
    void wait_for_pipeline();
    bool pipeline_finished() const;

    unsigned short port() const;
    std::optional<Snapshot> latest() const;

    /// Routing without sockets.
    HttpReply handle(const std::string& method, const std::string& target, const std::string& body);

    /// Feeds a snapshot as if the pipeline produced it (used by replay-backed serving).
    void publish(const Snapshot& snapshot);

    struct Impl;  // opaque outside service.cpp

private:
    std::unique_ptr<Impl> impl_;
};

}  // namespace arrdiag
