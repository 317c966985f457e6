#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "arrdiag/errors.hpp"
#include "arrdiag/pipeline.hpp"
#include "test_support.hpp"

using namespace arrdiag;
using arrdiag::testing::default_config;
using arrdiag::testing::temp_path;

namespace {

std::vector<std::string> lines_of(const std::filesystem::path& p) {
    std::ifstream in(p);
    std::vector<std::string> out;
    std::string l;
    while (std::getline(in, l)) out.push_back(l);
    return out;
}

void write_text(const std::filesystem::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    out << text;
}

RunOptions golden_options() {
    RunOptions o;
    o.duration_s = 900;
    o.seed = 1;
    o.scenario = load_scenario_file(arrdiag::testing::source_dir() / "config" / "golden_scenario.yaml");
    return o;
}

}  // namespace

TEST(Scenario, ParsesAndValidates) {
    const auto sc = parse_scenarios("- {fault_id: F6, onset_s: 500, magnitude: 10.0}\n- {fault_id: F7, onset_s: 600, magnitude: 0.7}\n");
    ASSERT_EQ(sc.size(), 2u);
    EXPECT_EQ(sc[0], (FaultScenario{"F6", 500.0, 10.0}));
    EXPECT_THROW(parse_scenarios("- {fault_id: F6, onset_s: -1, magnitude: 1}"), ValidationError);
    EXPECT_THROW(parse_scenarios("- {fault_id: F6"), ParseError);
}

TEST(SystemConfig, DocumentAndSections) {
    const auto& cfg = default_config();
    EXPECT_EQ(cfg.detector.consecutive, 2);
    EXPECT_DOUBLE_EQ(cfg.timeline.monitor_origin_s, 170.0);
    EXPECT_EQ(cfg.agent.token_budget, 8192u);
    EXPECT_EQ(cfg.document.at("residuals").size(), 6u);
    EXPECT_EQ(cfg.document.at("faults")[5].at("name"), "SensorFault-economizer.hot:temp:out");
    EXPECT_EQ(cfg.plant.sensor_map.at("tc_117"), PlantNode::hot_outlet);
    EXPECT_NEAR(cfg.plant.params.noise_std.at("ft_103"), 0.25 * 0.005, 1e-15);
    EXPECT_THROW(load_system_config_file("/nonexistent/config.yaml"), ConfigError);
}

TEST(Pipeline, RejectsRunsThatCannotDecide) {
    const auto& cfg = default_config();
    RunOptions o;
    o.duration_s = 200;  // origin 170 + 2 batches of 30 needs 230
    EXPECT_THROW(validate_run(cfg, o), ConfigError);
    o.duration_s = 230;
    EXPECT_NO_THROW(validate_run(cfg, o));
    o.scenario = {{"F6", 100.0, 10.0}};
    EXPECT_THROW(validate_run(cfg, o), ConfigError);
    o.scenario = {{"F99", 300.0, 10.0}};
    EXPECT_THROW(validate_run(cfg, o), UnknownFault);
}

TEST(Pipeline, GoldenRun) {
    const auto& cfg = default_config();
    const auto res = run_pipeline(cfg, golden_options());
    ASSERT_EQ(res.snapshots.size(), 24u);  // (900 - 170) / 30 whole batches
    EXPECT_DOUBLE_EQ(res.snapshots.front().timestamp_s, 200.0);
    EXPECT_NEAR(res.calibration.fitted.at("ua") / 541.6666666666666, 1.0, 0.01);

    std::optional<double> first;
    for (const auto& s : res.snapshots) {
        for (const auto& r : s.residuals) {
            if (r.id == "r4") {
                EXPECT_FALSE(r.active) << s.timestamp_s;
            }
        }
        if (!first && !s.diagnosis.observed_active.empty()) first = s.timestamp_s;
        if (s.timestamp_s < 500) {
            EXPECT_TRUE(s.diagnosis.observed_active.empty());
        }
        EXPECT_EQ(s.scenario.empty(), s.timestamp_s <= 500.0);
    }
    ASSERT_TRUE(first);
    EXPECT_GE(*first - 500.0, 30.0);
    EXPECT_LE(*first - 500.0, 90.0);
    const auto& d = res.snapshots.back().diagnosis;
    EXPECT_EQ(d.observed_active, (std::set<std::string>{"r1", "r2", "r3", "r5", "r6"}));
    EXPECT_EQ(d.matched_faults, std::vector<std::string>{"F6"});

    // the physical reading of tc_117 carries the bias, its virtual stand-in does not
    const auto& last = res.snapshots.back();
    for (const auto& s : last.sensors) {
        if (s.id == "tc_117") {
            EXPECT_NEAR(*s.value, 160.0, 0.2);
        }
        if (s.id == "vt_102") {
            EXPECT_NEAR(*s.value, 150.0, 0.5);
        }
        if (s.kind == SensorKind::physical) {
            ASSERT_TRUE(s.latest);
            EXPECT_EQ(s.latest->batch_index, last.batch_index);
            EXPECT_EQ(s.latest->sample_count, 30u);
        }
    }
}

TEST(Pipeline, SameSeedSameLog) {
    const auto& cfg = default_config();
    auto o = golden_options();
    o.log_path = temp_path("a.jsonl");
    run_pipeline(cfg, o);
    o.log_path = temp_path("b.jsonl");
    run_pipeline(cfg, o);
    EXPECT_EQ(lines_of(temp_path("a.jsonl")), lines_of(temp_path("b.jsonl")));
}

TEST(RunLog, ReplayReserialisesByteForByte) {
    const auto& cfg = default_config();
    auto o = golden_options();
    const auto path = temp_path("golden.jsonl");
    o.log_path = path;
    std::vector<std::string> live;
    o.on_snapshot = [&](const Snapshot& s) { live.push_back(serialize_line(s)); };
    run_pipeline(cfg, o);

    const auto file = lines_of(path);
    EXPECT_EQ(file, live);
    std::vector<std::string> replayed;
    replay(path, 0.0, [&](const Snapshot& s) { replayed.push_back(serialize_line(s)); });
    EXPECT_EQ(replayed, file);
}

TEST(RunLog, MixedEntriesAndAgentState) {
    const auto path = temp_path("mixed.jsonl");
    const auto& cfg = default_config();
    auto o = golden_options();
    const auto res = run_pipeline(cfg, o);
    {
        RunLogWriter w(path);
        w.write(res.snapshots[0]);
        AnswerRecord a;
        a.answer = "No active residuals; no fault diagnosed.";
        a.timestamp = 200.0;
        w.write(a);
        w.write(res.snapshots[1]);
    }
    const auto entries = read_run_log(path);
    ASSERT_EQ(entries.size(), 3u);
    EXPECT_TRUE(std::holds_alternative<AnswerRecord>(entries[1]));

    std::deque<Snapshot> hist(res.snapshots.begin(), res.snapshots.end());
    const auto st = agent_state_from_history(hist, 20);
    EXPECT_EQ(st.batch_index, 24);
    EXPECT_EQ(st.sensor_metrics.at("tc_117").size(), 20u);
    EXPECT_EQ(st.sensor_metrics.at("tc_117").front().batch_index, 5);
    EXPECT_FALSE(st.sensor_metrics.count("vt_102"));
    ASSERT_TRUE(st.diagnosis);
    EXPECT_EQ(st.diagnosis->matched_faults, std::vector<std::string>{"F6"});
}

TEST(RunLog, CorruptLogsAreRejected) {
    const auto& cfg = default_config();
    auto o = golden_options();
    o.duration_s = 260;
    const auto good = temp_path("good.jsonl");
    o.log_path = good;
    run_pipeline(cfg, o);
    const auto lines = lines_of(good);
    ASSERT_EQ(lines.size(), 3u);

    const auto bad = temp_path("bad.jsonl");
    write_text(bad, lines[0] + "\n" + lines[1]);  // no final newline
    EXPECT_THROW(read_run_log(bad), CorruptLog);
    write_text(bad, lines[0] + "\n{not json\n");
    try {
        read_run_log(bad);
        FAIL();
    } catch (const CorruptLog& e) {
        EXPECT_EQ(e.line(), 2u);
    }
    write_text(bad, lines[1] + "\n" + lines[0] + "\n");
    EXPECT_THROW(read_run_log(bad), CorruptLog);
    write_text(bad, "{\"type\":\"telemetry\"}\n");
    EXPECT_THROW(read_run_log(bad), CorruptLog);
    write_text(bad, "");
    EXPECT_TRUE(read_run_log(bad).empty());
    EXPECT_THROW(read_run_log(temp_path("missing.jsonl")), ConfigError);
}
