#include <gtest/gtest.h>

#include <bitset>

#include "arrdiag/diagnoser.hpp"
#include "arrdiag/errors.hpp"
#include "test_support.hpp"

using namespace arrdiag;
using arrdiag::testing::default_graph;

namespace {

using Mask = unsigned;

// Bitmask oracle: bit i is residual r{i+1}.
struct Oracle {
    std::map<std::string, Mask> sig;

    std::vector<std::string> matched(Mask active, bool& partial) const {
        std::vector<std::string> out;
        for (const auto& [f, m] : sig) {
            if (m == active) out.push_back(f);
        }
        partial = false;
        if (!out.empty() || active == 0) return out;
        std::vector<std::string> cands;
        for (const auto& [f, m] : sig) {
            if ((m & active) == active) cands.push_back(f);
        }
        for (const auto& f : cands) {
            bool minimal = true;
            for (const auto& g : cands) {
                const Mask a = sig.at(f), b = sig.at(g);
                if (b != a && (b & a) == b) minimal = false;
            }
            if (minimal) out.push_back(f);
        }
        partial = !out.empty();
        return out;
    }
};

Mask to_mask(const std::set<std::string>& rs) {
    Mask m = 0;
    for (const auto& r : rs) m |= 1u << (std::stoi(r.substr(1)) - 1);
    return m;
}

std::set<std::string> from_mask(Mask m) {
    std::set<std::string> out;
    for (int i = 0; i < 6; ++i) {
        if (m & (1u << i)) out.insert("r" + std::to_string(i + 1));
    }
    return out;
}

}  // namespace

TEST(Diagnoser, AgreesWithBruteForceOnAllPatterns) {
    const auto g = default_graph();
    const auto matrix = build_signature_matrix(*g);
    Oracle oracle;
    for (const auto& [f, s] : matrix.rows()) oracle.sig[f] = to_mask(s);

    for (Mask m = 0; m < 64; ++m) {
        const auto active = from_mask(m);
        const auto rep = diagnose(active, *g, matrix, 1.0);
        bool partial = false;
        EXPECT_EQ(rep.matched_faults, oracle.matched(m, partial)) << std::bitset<6>(m);
        EXPECT_EQ(rep.partial, partial) << std::bitset<6>(m);
        EXPECT_EQ(rep.matched_faults.size() + rep.exonerated_faults.size(), 9u);
        EXPECT_EQ(rep.observed_active, active);
        for (const auto& f : rep.exonerated_faults) {
            EXPECT_TRUE(std::find(rep.matched_faults.begin(), rep.matched_faults.end(), f) == rep.matched_faults.end());
        }
    }
}

TEST(Diagnoser, HealthyReport) {
    const auto g = default_graph();
    const auto rep = diagnose({}, *g, build_signature_matrix(*g), 200.0);
    EXPECT_TRUE(rep.matched_faults.empty());
    EXPECT_EQ(rep.exonerated_faults.size(), 9u);
    EXPECT_FALSE(rep.partial);
    EXPECT_TRUE(rep.unique_sensor_set.empty());
    EXPECT_DOUBLE_EQ(rep.timestamp, 200.0);
}

TEST(Diagnoser, GoldenPattern) {
    const auto g = default_graph();
    const auto rep = diagnose({"r1", "r2", "r3", "r5", "r6"}, *g, build_signature_matrix(*g), 560.0);
    EXPECT_EQ(rep.matched_faults, std::vector<std::string>{"F6"});
    EXPECT_EQ(rep.exonerated_faults, (std::vector<std::string>{"F1", "F2", "F3", "F4", "F5", "F7", "F8", "F9"}));
    EXPECT_EQ(rep.unique_sensor_set, (std::vector<std::string>{"ft_103", "tc_114", "tc_116", "tc_117", "tc_119"}));
    EXPECT_EQ(rep.per_residual_sensors.at("r3"),
              (std::vector<std::string>{"ft_103", "vt_101", "tc_117", "vf_102", "tc_119", "tc_116"}));
    EXPECT_TRUE(rep.unexplained_residuals.empty());
}

TEST(Diagnoser, PartialMatchUsesMinimalSupersets) {
    const auto g = default_graph();
    const auto rep = diagnose({"r1", "r2"}, *g, build_signature_matrix(*g));
    EXPECT_TRUE(rep.partial);
    // F2, F3, F4 and F6 cover {r1, r2} with five residuals; F1 (all six) is not minimal.
    EXPECT_EQ(rep.matched_faults, (std::vector<std::string>{"F2", "F3", "F4", "F6"}));
}

TEST(Diagnoser, PatternWithoutCoverIsUnexplained) {
    const auto g = default_graph();
    auto text = arrdiag::testing::patched_yaml("target: ft_103", "target: tc_114");
    // F1 now duplicates F2; drop the all-residual signature so {r1..r6} has no cover
    const auto graph = load_system_config(text);
    const auto matrix = build_signature_matrix(graph);
    const auto rep = diagnose({"r1", "r2", "r3", "r4", "r5", "r6"}, graph, matrix);
    EXPECT_TRUE(rep.matched_faults.empty());
    EXPECT_FALSE(rep.partial);
    EXPECT_EQ(rep.unexplained_residuals.size(), 6u);
}

TEST(Diagnoser, RejectsUnknownResidual) {
    const auto g = default_graph();
    EXPECT_THROW(diagnose({"r7"}, *g, build_signature_matrix(*g)), UnknownResidual);
}

TEST(Diagnoser, ForwardCheck) {
    const auto matrix = build_signature_matrix(*default_graph());
    const std::set<std::string> golden{"r1", "r2", "r3", "r5", "r6"};
    const auto f6 = forward_check("F6", matrix, golden);
    EXPECT_TRUE(f6.consistent);
    const auto f7 = forward_check("F7", matrix, golden);
    EXPECT_FALSE(f7.consistent);
    EXPECT_EQ(f7.missing, std::vector<std::string>{"r4"});
    EXPECT_EQ(f7.extra, std::vector<std::string>{"r1"});
    const auto f9 = forward_check("F9", matrix, golden);
    EXPECT_TRUE(f9.missing.empty());
    EXPECT_EQ(f9.extra, (std::vector<std::string>{"r2", "r3", "r5", "r6"}));
    EXPECT_THROW(forward_check("F10", matrix, golden), UnknownFault);
}

TEST(Diagnoser, ExplanationRecordCarriesNamesAndExonerations) {
    const auto g = default_graph();
    const auto matrix = build_signature_matrix(*g);
    const auto rep = diagnose({"r1", "r2", "r3", "r5", "r6"}, *g, matrix, 560.0);
    const auto rec = explanation_record(rep, *g, matrix);
    EXPECT_FALSE(rec.healthy);
    ASSERT_EQ(rec.matched.size(), 1u);
    EXPECT_EQ(rec.matched[0].name, "SensorFault-economizer.hot:temp:out");
    ASSERT_EQ(rec.residuals.size(), 5u);
    EXPECT_EQ(rec.residuals[3].id, "r5");
    EXPECT_EQ(rec.residuals[3].name, "economizer-heat-transfer_copy2_r");
    ASSERT_EQ(rec.exonerated.size(), 8u);
    for (const auto& e : rec.exonerated) EXPECT_FALSE(e.missing.empty() && e.extra.empty()) << e.fault_id;
}
