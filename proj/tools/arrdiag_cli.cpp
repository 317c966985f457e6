#include <atomic>
#include <csignal>
#include <chrono>
#include <iomanip>
#include <iostream>
#include <thread>

#include <CLI11.hpp>

#include "arrdiag/chat_endpoint.hpp"
#include "arrdiag/errors.hpp"
#include "arrdiag/pipeline.hpp"
#include "arrdiag/service.hpp"
#include "arrdiag/snapshot.hpp"
#include "arrdiag/system_config.hpp"

using namespace arrdiag;

namespace {

std::atomic<bool> interrupted{false};

void on_signal(int) { interrupted = true; }

std::string join(const std::vector<std::string>& xs) {
    std::string out;
    for (const auto& x : xs) out += (out.empty() ? "" : ",") + x;
    return out;
}

void print_summary(const RunResult& result) {
    std::cout << "calibration: " << result.calibration.batch_count << " batches";
    for (const auto& [k, v] : result.calibration.fitted) std::cout << ", fitted " << k << "=" << v;
    std::cout << "\n";
    std::string last;
    for (const auto& s : result.snapshots) {
        std::string active;
        for (const auto& id : s.diagnosis.observed_active) active += (active.empty() ? "" : ",") + id;
        std::string line = "active={" + active + "} matched={" + join(s.diagnosis.matched_faults) + "}" +
                           (s.diagnosis.partial ? " partial" : "");
        if (line != last) {
            std::cout << "t=" << std::setw(6) << s.timestamp_s << "s batch " << std::setw(3) << s.batch_index << "  "
                      << line << "\n";
            last = line;
        }
    }
    std::cout << result.snapshots.size() << " monitoring batches\n";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Residual-based fault diagnosis for a counterflow heat-exchanger loop"};
    app.require_subcommand(1);

    std::string config_path = "config/metl_purification.yaml";
    std::string scenario_path;
    RunOptions run;
    std::string log_out;

    auto* run_cmd = app.add_subcommand("run", "Simulate, detect and diagnose, writing a JSON-lines run log");
    run_cmd->add_option("-c,--config", config_path, "System config YAML")->check(CLI::ExistingFile);
    run_cmd->add_option("-s,--scenario", scenario_path, "Fault scenario YAML")->check(CLI::ExistingFile);
    run_cmd->add_option("-d,--duration", run.duration_s, "Simulated seconds")->capture_default_str();
    run_cmd->add_option("--seed", run.seed, "Noise seed")->capture_default_str();
    run_cmd->add_option("-o,--out", log_out, "Run log path");

    ServiceOptions sopt;
    std::string replay_src;
    auto* serve_cmd = app.add_subcommand("serve", "Run the pipeline behind the HTTP/WebSocket API");
    serve_cmd->add_option("-c,--config", config_path, "System config YAML")->check(CLI::ExistingFile);
    serve_cmd->add_option("-s,--scenario", scenario_path, "Fault scenario YAML")->check(CLI::ExistingFile);
    serve_cmd->add_option("-d,--duration", run.duration_s, "Simulated seconds")->capture_default_str();
    serve_cmd->add_option("--seed", run.seed, "Noise seed")->capture_default_str();
    serve_cmd->add_option("--address", sopt.address)->capture_default_str();
    serve_cmd->add_option("-p,--port", sopt.port)->capture_default_str();
    run.time_scale = 1.0;
    serve_cmd->add_option("--time-scale", run.time_scale, "Simulated seconds per wall second (0 = as fast as possible)")
        ->capture_default_str();
    serve_cmd->add_option("-o,--out", log_out, "Run log path (snapshots and answers)");
    serve_cmd->add_option("--replay", replay_src, "Serve snapshots from an existing run log")->check(CLI::ExistingFile);

    std::string replay_path;
    double speed = 0.0;
    auto* replay_cmd = app.add_subcommand("replay", "Print the snapshots of a run log as JSON lines");
    replay_cmd->add_option("-l,--log", replay_path, "Run log")->required()->check(CLI::ExistingFile);
    replay_cmd->add_option("--speed", speed, "Playback speed; 0 prints immediately")->capture_default_str();

    auto* validate_cmd = app.add_subcommand("validate", "Load a config and report graph diagnostics");
    validate_cmd->add_option("-c,--config", config_path, "System config YAML")->check(CLI::ExistingFile);

    CLI11_PARSE(app, argc, argv);

    try {
        if (*replay_cmd) {
            replay(replay_path, speed, [](const Snapshot& s) { std::cout << serialize_line(s) << "\n"; });
            return 0;
        }

        const auto cfg = load_system_config_file(config_path);
        if (!scenario_path.empty()) run.scenario = load_scenario_file(scenario_path);
        if (!log_out.empty()) run.log_path = log_out;

        if (*validate_cmd) {
            const auto diags = validate_graph(*cfg.graph);
            std::cout << cfg.graph->sensors.size() << " sensors, " << cfg.graph->residuals.size() << " residuals, "
                      << cfg.graph->faults.size() << " faults\n";
            for (const auto& d : diags) std::cout << to_string(d.kind) << ": " << d.message << "\n";
            if (diags.empty()) std::cout << "no diagnostics\n";
            return 0;
        }

        if (*run_cmd) {
            run.time_scale = 0.0;
            print_summary(run_pipeline(cfg, run));
            return 0;
        }

        sopt.run = run;
        sopt.endpoint = endpoint_from_environment();
        if (!sopt.endpoint) std::cerr << "no language model configured; answers use the grounded renderer\n";
        if (!replay_src.empty()) {
            sopt.replay_log = replay_src;
            sopt.replay_speed = run.time_scale;
        }
        Service service(cfg, sopt);
        service.start();
        std::cerr << "listening on http://" << sopt.address << ":" << service.port() << "\n";
        std::signal(SIGINT, on_signal);
        std::signal(SIGTERM, on_signal);
        while (!interrupted) std::this_thread::sleep_for(std::chrono::milliseconds(100));
        service.stop();
        return 0;
    } catch (const CLI::Error&) {
        throw;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
