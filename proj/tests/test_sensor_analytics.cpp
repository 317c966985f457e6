#include <gtest/gtest.h>

#include <cmath>
#include <complex>
#include <numbers>
#include <random>

#include "arrdiag/sensor_analytics.hpp"

using namespace arrdiag;

namespace {

Eigen::VectorXd white(std::uint64_t seed, int n, double sd = 1.0) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> d(0.0, sd);
    Eigen::VectorXd x(n);
    for (int i = 0; i < n; ++i) x(i) = d(rng);
    return x;
}

Eigen::VectorXd tone(int n, int bin, double amp = 1.0, double offset = 0.0) {
    Eigen::VectorXd x(n);
    for (int i = 0; i < n; ++i) x(i) = offset + amp * std::sin(2.0 * std::numbers::pi * bin * i / n);
    return x;
}

// O(N^2) DFT of the mean-removed signal, bins 1..N/2, |X|^2 / N.
Eigen::VectorXd naive_periodogram(const Eigen::VectorXd& x) {
    const int n = static_cast<int>(x.size());
    double mean = 0;
    for (int i = 0; i < n; ++i) mean += x(i);
    mean /= n;
    Eigen::VectorXd p(n / 2);
    for (int k = 1; k <= n / 2; ++k) {
        std::complex<double> acc = 0;
        for (int i = 0; i < n; ++i) acc += (x(i) - mean) * std::polar(1.0, -2.0 * std::numbers::pi * k * i / n);
        p(k - 1) = std::norm(acc) / n;
    }
    return p;
}

double entropy_of(const Eigen::VectorXd& p) {
    double h = 0;
    for (int i = 0; i < p.size(); ++i) {
        if (p(i) > 0) h -= p(i) * std::log(p(i));
    }
    return h;
}

}  // namespace

TEST(SensorAnalytics, WelfordMatchesTwoPass) {
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        const Eigen::VectorXd x = white(seed, 5 + static_cast<int>(seed), 3.0).array() + 1e6;
        double m = 0;
        for (int i = 0; i < x.size(); ++i) m += x(i);
        m /= static_cast<double>(x.size());
        double ss = 0;
        for (int i = 0; i < x.size(); ++i) ss += (x(i) - m) * (x(i) - m);
        EXPECT_NEAR(running_mean(x), m, 1e-8);
        EXPECT_NEAR(sample_std(x), std::sqrt(ss / static_cast<double>(x.size() - 1)), 1e-8);
    }
    EXPECT_EQ(sample_std(Eigen::VectorXd::Constant(1, 4.0)), 0.0);
    // works on any dense expression, including a segment of a matrix row
    Eigen::MatrixXd mtx(2, 4);
    mtx << 1, 2, 3, 4, 5, 6, 7, 8;
    EXPECT_DOUBLE_EQ(running_mean(mtx.row(1).segment(1, 3)), 7.0);
}

TEST(SensorAnalytics, PeriodogramMatchesNaiveDft) {
    for (int n : {8, 9, 30, 31}) {
        const auto x = white(static_cast<std::uint64_t>(n), n);
        const auto got = power_spectrum(x);
        const auto want = naive_periodogram(x);
        ASSERT_EQ(got.size(), n / 2);
        for (int k = 0; k < got.size(); ++k) EXPECT_NEAR(got(k), want(k), 1e-10) << n << ":" << k;
    }
}

TEST(SensorAnalytics, KlClosedForm) {
    Eigen::VectorXd p(2), q(2);
    p << 0.5, 0.5;
    q << 0.25, 0.75;
    const double eps = kl_epsilon;
    const double p0 = (0.5 + eps) / (1 + 2 * eps), q0 = (0.25 + eps) / (1 + 2 * eps), q1 = (0.75 + eps) / (1 + 2 * eps);
    const double want = p0 * std::log(p0 / q0) + p0 * std::log(p0 / q1);
    EXPECT_NEAR(kl_divergence(p, q), want, 1e-15);
    EXPECT_NEAR(kl_divergence(p, q), 0.5 * std::log(2.0) + 0.5 * std::log(2.0 / 3.0), 1e-8);

    Eigen::VectorXd zero = Eigen::VectorXd::Zero(2);
    Eigen::VectorXd one_hot(2);
    one_hot << 1.0, 0.0;
    EXPECT_TRUE(std::isfinite(kl_divergence(one_hot, zero)));
    EXPECT_THROW(kl_divergence(p, Eigen::VectorXd::Ones(3)), BinMismatch);
    EXPECT_THROW(kl_divergence(-p, q), std::invalid_argument);
}

TEST(SensorAnalytics, KlIsNonNegativeAndZeroOnSelf) {
    std::mt19937_64 rng(2024);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::uniform_int_distribution<int> len(1, 40);
    for (int i = 0; i < 1000; ++i) {
        const int n = len(rng);
        Eigen::VectorXd p(n), q(n);
        for (int k = 0; k < n; ++k) {
            p(k) = u(rng) < 0.2 ? 0.0 : u(rng);
            q(k) = u(rng) < 0.2 ? 0.0 : u(rng);
        }
        EXPECT_GE(kl_divergence(p, q), 0.0);
        EXPECT_LE(kl_divergence(p, p), 1e-12);
    }
}

TEST(SensorAnalytics, EntropyBounds) {
    std::mt19937_64 rng(11);
    std::uniform_int_distribution<int> len(8, 200);
    for (int i = 0; i < 300; ++i) {
        const int n = len(rng);
        Eigen::VectorXd x = white(static_cast<std::uint64_t>(i), n);
        if (i % 3 == 0) x = x.cwiseAbs2();  // skewed spectra too
        const double h = spectral_entropy(x);
        EXPECT_GE(h, 0.0);
        EXPECT_LE(h, std::log(n / 2) + 1e-12);
        EXPECT_NEAR(h, entropy_of(naive_periodogram(x) / naive_periodogram(x).sum()), 1e-9);
    }
    EXPECT_EQ(spectral_entropy(Eigen::VectorXd::Constant(30, 150.0)), 0.0);
    EXPECT_THROW(spectral_entropy(Eigen::VectorXd::Zero(7)), TooFewSamples);
}

// Periodogram bins of Gaussian white noise are iid exponential, so the
// normalised spectrum is uniform on the simplex and E[H] = H_K - 1 (harmonic
// number). Odd n avoids the one-degree-of-freedom Nyquist bin.
TEST(SensorAnalytics, WhiteNoiseEntropyMatchesDirichletExpectation) {
    const int n = 31, k = n / 2, runs = 400;
    double harmonic = 0;
    for (int i = 1; i <= k; ++i) harmonic += 1.0 / i;
    double sum = 0;
    for (std::uint64_t seed = 1; seed <= runs; ++seed) sum += spectral_entropy(white(seed, n));
    EXPECT_NEAR(sum / runs, harmonic - 1.0, 0.03);
}

TEST(SensorAnalytics, WhiteNoiseAt256SamplesIsNearlyFlat) {
    double sum = 0;
    for (std::uint64_t seed = 1; seed <= 50; ++seed) sum += spectral_entropy(white(seed, 256));
    EXPECT_GE(sum / 50.0, 0.9 * std::log(128.0));
}

TEST(SensorAnalytics, SingleToneIsConcentrated) {
    for (int n : {30, 64, 128}) {
        EXPECT_LE(spectral_entropy(tone(n, 3)), 0.05 * std::log(n / 2)) << n;
    }
}

TEST(SensorAnalytics, EntropyIgnoresOffsetAndScale) {
    const auto x = white(5, 30);
    const double h = spectral_entropy(x);
    EXPECT_NEAR(spectral_entropy((x.array() + 150.0).matrix()), h, 1e-9);
    EXPECT_NEAR(spectral_entropy((x * 7.5).eval()), h, 1e-12);
}

TEST(SensorBuffer, GridAssignmentAndEviction) {
    SensorBuffer buf("tc_117", 30.0, 170.0, 3, 1.0);
    buf.push_sample(100.0, 1.0);  // before the origin
    EXPECT_TRUE(buf.batches().empty());
    for (int t = 170; t < 170 + 5 * 30; ++t) buf.push_sample(t, t < 230 ? 0.0 : 1.0);
    ASSERT_EQ(buf.batches().size(), 3u);
    EXPECT_EQ(buf.batches().front().index, 3);
    EXPECT_EQ(buf.batches().back().index, 5);
    EXPECT_DOUBLE_EQ(buf.batches().back().t_start, 290.0);
    EXPECT_EQ(buf.batches().back().samples.size(), 30);
    EXPECT_THROW(buf.push_sample(200.0, 0.0), OutOfOrderSample);
}

TEST(SensorBuffer, GapClosesBatchEarly) {
    SensorBuffer buf("ft_103", 30.0, 0.0, 10, 1.0);
    for (int t = 0; t < 10; ++t) buf.push_sample(t, 1.0);
    EXPECT_TRUE(buf.batches().empty());
    buf.push_sample(45.0, 2.0);  // jumps into batch 2
    ASSERT_EQ(buf.batches().size(), 1u);
    EXPECT_EQ(buf.batches()[0].samples.size(), 10);
}

TEST(SensorBuffer, MetricsAndStepDetection) {
    SensorBuffer empty("tc_119");
    EXPECT_THROW(batch_metrics(empty), EmptyBuffer);

    SensorBuffer buf("tc_117", 30.0, 0.0, 20, 1.0);
    std::mt19937_64 rng(3);
    std::normal_distribution<double> noise(0.0, 0.15);
    for (int t = 0; t < 20 * 30; ++t) buf.push_sample(t, 150.0 + (t >= 300 ? 10.0 : 0.0) + noise(rng));
    const auto m = batch_metrics(buf);
    ASSERT_EQ(m.size(), 20u);
    EXPECT_EQ(m[0].d_mean, 0.0);
    EXPECT_DOUBLE_EQ(m[0].kl_divergence, 0.0);
    EXPECT_NEAR(m[10].d_mean, 10.0, 0.2);
    EXPECT_EQ(m[10].batch_index, 11);
    const auto a = assess_sensor(m, 3.0);
    EXPECT_TRUE(a.anomalous);
    EXPECT_EQ(a.change_batch, 11);
    EXPECT_GT(a.change_threshold, 0.0);

    SensorBuffer quiet("tc_119", 30.0, 0.0, 20, 1.0);
    for (int t = 0; t < 20 * 30; ++t) quiet.push_sample(t, 170.0 + noise(rng));
    EXPECT_FALSE(assess_sensor(batch_metrics(quiet), 3.0).anomalous);
}
