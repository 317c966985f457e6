#include "arrdiag/sensor_analytics.hpp"

#include <complex>
#include <stdexcept>

#include <unsupported/Eigen/FFT>

namespace arrdiag {

Eigen::VectorXd power_spectrum(const Eigen::VectorXd& x) {
    const Eigen::Index n = x.size();
    if (n < 2) return Eigen::VectorXd();
    const Eigen::VectorXd centred = x.array() - running_mean(x);
    Eigen::FFT<double> fft;
    std::vector<double> in(centred.data(), centred.data() + n);
    std::vector<std::complex<double>> out;
    fft.fwd(out, in);
    const Eigen::Index bins = n / 2;
    Eigen::VectorXd p(bins);
    for (Eigen::Index k = 0; k < bins; ++k) p(k) = std::norm(out[static_cast<std::size_t>(k + 1)]) / double(n);
    return p;
}

Eigen::VectorXd spectrum_distribution(const Eigen::VectorXd& x) {
    Eigen::VectorXd p = power_spectrum(x);
    const double total = p.sum();
    // relative floor: round-off of a constant signal is not a spectrum
    if (!(total > 1e-24 * (1.0 + x.squaredNorm()))) return Eigen::VectorXd::Zero(p.size());
    return p / total;
}

double spectral_entropy(const Eigen::VectorXd& x) {
    if (x.size() < min_spectral_samples) {
        throw TooFewSamples("spectral entropy needs at least " + std::to_string(min_spectral_samples) +
                            " samples, got " + std::to_string(x.size()));
    }
    const Eigen::VectorXd p = spectrum_distribution(x);
    double h = 0.0;
    for (Eigen::Index i = 0; i < p.size(); ++i) {
        if (p(i) > 0) h -= p(i) * std::log(p(i));
    }
    return std::max(h, 0.0);
}

double kl_divergence(const Eigen::VectorXd& p, const Eigen::VectorXd& q) {
    if (p.size() != q.size()) {
        throw BinMismatch("KL divergence over " + std::to_string(p.size()) + " vs " + std::to_string(q.size()) +
                          " bins");
    }
    if (p.size() == 0) return 0.0;
    if ((p.array() < 0).any() || (q.array() < 0).any()) {
        throw std::invalid_argument("KL divergence needs non-negative entries");
    }
    const Eigen::ArrayXd ps = (p.array() + kl_epsilon) / (p.sum() + kl_epsilon * double(p.size()));
    const Eigen::ArrayXd qs = (q.array() + kl_epsilon) / (q.sum() + kl_epsilon * double(q.size()));
    return std::max((ps * (ps / qs).log()).sum(), 0.0);
}

SensorBuffer::SensorBuffer(std::string sensor_id, double batch_seconds, double origin, std::size_t capacity,
                           double sample_period)
    : sensor_id_(std::move(sensor_id)),
      width_(batch_seconds),
      origin_(origin),
      capacity_(capacity),
      period_(sample_period) {
    if (!(width_ > 0) || capacity_ == 0 || !(period_ > 0)) {
        throw std::invalid_argument("buffer needs positive batch width, capacity and sample period");
    }
}

void SensorBuffer::push_sample(double time, double value) {
    if (last_time_ && time < *last_time_) {
        throw OutOfOrderSample(sensor_id_ + ": sample at " + std::to_string(time) + " after " +
                               std::to_string(*last_time_));
    }
    last_time_ = time;
    if (time < origin_ - 1e-9) return;
    const int index = static_cast<int>(std::floor((time - origin_) / width_ + 1e-9)) + 1;
    if (!open_.empty() && index != open_index_) close_open();
    open_index_ = index;
    open_.push_back(value);
    const double end = origin_ + width_ * index;
    if (time + period_ >= end - 1e-9) close_open();
}

void SensorBuffer::close_open() {
    if (open_.empty()) return;
    ClosedBatch b;
    b.index = open_index_;
    b.t_start = origin_ + width_ * (open_index_ - 1);
    b.samples = Eigen::Map<const Eigen::VectorXd>(open_.data(), static_cast<Eigen::Index>(open_.size()));
    closed_.push_back(std::move(b));
    open_.clear();
    while (closed_.size() > capacity_) closed_.pop_front();
}

std::vector<BatchMetrics> batch_metrics(const SensorBuffer& buffer) {
    const auto& batches = buffer.batches();
    if (batches.empty()) throw EmptyBuffer(buffer.sensor_id() + ": no closed batch");
    const Eigen::VectorXd reference = spectrum_distribution(batches.front().samples);
    std::vector<BatchMetrics> out;
    out.reserve(batches.size());
    for (const auto& b : batches) {
        BatchMetrics m;
        m.batch_index = b.index;
        m.sample_count = static_cast<std::size_t>(b.samples.size());
        m.mean = running_mean(b.samples);
        m.std = sample_std(b.samples);
        if (!out.empty()) {
            m.d_mean = m.mean - out.back().mean;
            m.d_std = m.std - out.back().std;
        }
        m.spectral_entropy = spectral_entropy(b.samples);
        m.kl_divergence = kl_divergence(spectrum_distribution(b.samples), reference);
        out.push_back(m);
    }
    return out;
}

SensorAssessment assess_sensor(const std::vector<BatchMetrics>& metrics, double k) {
    SensorAssessment a;
    for (std::size_t i = 1; i < metrics.size(); ++i) {
        const auto& cur = metrics[i];
        const auto& prev = metrics[i - 1];
        if (cur.sample_count == 0 || prev.sample_count == 0) continue;
        const double thr = k * std::sqrt(cur.std * cur.std / double(cur.sample_count) +
                                         prev.std * prev.std / double(prev.sample_count));
        if (std::abs(cur.d_mean) > thr) {
            a.anomalous = true;
            a.change_batch = cur.batch_index;
            a.change_threshold = thr;
            break;
        }
    }
    return a;
}

}  // namespace arrdiag
