#pragma once

#include <cmath>
#include <cstddef>
#include <deque>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "arrdiag/errors.hpp"

namespace arrdiag {

inline constexpr double kl_epsilon = 1e-9;
inline constexpr Eigen::Index min_spectral_samples = 8;

/// Welford running mean over the coefficients of an expression.
template <typename Derived>
typename Derived::Scalar running_mean(const Eigen::DenseBase<Derived>& x) {
    using Scalar = typename Derived::Scalar;
    Scalar m(0);
    for (Eigen::Index i = 0; i < x.size(); ++i) m += (x.derived().coeff(i) - m) / Scalar(i + 1);
    return m;
}

/// Sample standard deviation (n - 1 denominator), Welford update; 0 for n < 2.
template <typename Derived>
typename Derived::Scalar sample_std(const Eigen::DenseBase<Derived>& x) {
    using Scalar = typename Derived::Scalar;
    using std::sqrt;
    if (x.size() < 2) return Scalar(0);
    Scalar m(0), m2(0);
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        const Scalar v = x.derived().coeff(i);
        const Scalar delta = v - m;
        m += delta / Scalar(i + 1);
        m2 += delta * (v - m);
    }
    return sqrt(m2 / Scalar(x.size() - 1));
}

/// Periodogram of the mean-removed signal with the zero-frequency bin
/// dropped: bins 1..floor(N/2).
Eigen::VectorXd power_spectrum(const Eigen::VectorXd& x);

/// Power spectrum normalised to sum to one; all zeros if the spectrum is flat zero.
Eigen::VectorXd spectrum_distribution(const Eigen::VectorXd& x);

/// Shannon entropy (nats) of the normalised periodogram; 0 for a zero spectrum.
double spectral_entropy(const Eigen::VectorXd& x);

/// sum p ln(p/q) after epsilon smoothing and renormalisation of both.
double kl_divergence(const Eigen::VectorXd& p, const Eigen::VectorXd& q);

struct BatchMetrics {
    int batch_index = 0;
    std::size_t sample_count = 0;
    double mean = 0.0;
    double std = 0.0;
    double d_mean = 0.0;
    double d_std = 0.0;
    double spectral_entropy = 0.0;
    double kl_divergence = 0.0;
};

struct ClosedBatch {
    int index = 0;
    double t_start = 0.0;
    Eigen::VectorXd samples;
};

/// Ring of closed batches for one sensor on a fixed grid
/// [origin + (b-1) W, origin + b W). Samples before the origin are ignored.
class SensorBuffer {
public:
    explicit SensorBuffer(std::string sensor_id, double batch_seconds = 30.0, double origin = 0.0,
                          std::size_t capacity = 20, double sample_period = 1.0);

    void push_sample(double time, double value);

    const std::string& sensor_id() const noexcept { return sensor_id_; }
    const std::deque<ClosedBatch>& batches() const noexcept { return closed_; }
    std::size_t capacity() const noexcept { return capacity_; }
    double batch_seconds() const noexcept { return width_; }

private:
    void close_open();

    std::string sensor_id_;
    double width_;
    double origin_;
    std::size_t capacity_;
    double period_;
    std::optional<double> last_time_;
    int open_index_ = 0;
    std::vector<double> open_;
    std::deque<ClosedBatch> closed_;
};

/// Per-batch statistics over every closed batch in the buffer. The KL
/// reference is the oldest retained batch.
std::vector<BatchMetrics> batch_metrics(const SensorBuffer& buffer);

struct SensorAssessment {
    bool anomalous = false;
    std::optional<int> change_batch;  // first batch whose mean step exceeds the rule
    double change_threshold = 0.0;    // threshold used at that batch
};

/// Flags the first batch with |d_mean| > k * sqrt(s_b^2/n_b + s_{b-1}^2/n_{b-1}).
SensorAssessment assess_sensor(const std::vector<BatchMetrics>& metrics, double k);

}  // namespace arrdiag
