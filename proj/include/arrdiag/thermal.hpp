#pragma once

#include <cmath>
#include <limits>
#include <stdexcept>

#include "arrdiag/errors.hpp"

namespace arrdiag::thermal {

/// Log-mean of two terminal temperature differences.
///
/// Both differences must be positive. When they are (nearly) equal the
/// quotient is evaluated by its series in u = d1/d2 - 1, which converges to
/// the common value with no cancellation.
template <typename Scalar>
Scalar log_mean(Scalar d1, Scalar d2) {
    using std::abs;
    using std::log;
    if (!(d1 > Scalar(0)) || !(d2 > Scalar(0))) {
        throw std::domain_error("log-mean temperature difference needs positive terminal differences");
    }
    const Scalar u = d1 / d2 - Scalar(1);
    if (abs(u) < Scalar(1e-4)) {
        // u / ln(1 + u) = 1 + u/2 - u^2/12 + u^3/24 - 19 u^4/720 + ...
        const Scalar u2 = u * u;
        return d2 * (Scalar(1) + u / Scalar(2) - u2 / Scalar(12) + u2 * u / Scalar(24) -
                     Scalar(19) * u2 * u2 / Scalar(720));
    }
    return (d1 - d2) / log(d1 / d2);
}

/// Counterflow LMTD from the four port temperatures.
template <typename Scalar>
Scalar lmtd(Scalar hot_in, Scalar hot_out, Scalar cold_in, Scalar cold_out) {
    return log_mean(hot_in - cold_out, hot_out - cold_in);
}

template <typename Scalar>
struct ExchangerInlets {
    Scalar hot_in;
    Scalar cold_in;
    Scalar hot_flow;   // kg/s
    Scalar cold_flow;  // kg/s
};

template <typename Scalar>
struct ExchangerSolution {
    Scalar hot_out;
    Scalar cold_out;
    Scalar duty;  // W
    Scalar lmtd;
    int iterations = 0;
};

/// Steady-state counterflow exchanger: solves
///   Q = m_h cp (Th_in - Th_out) = m_c cp (Tc_out - Tc_in) = UA * LMTD
/// for the two outlet temperatures. Starts from the effectiveness-NTU closed
/// form and polishes with Newton on the duty until the relative duty
/// mismatch, or the relative Newton step, is below `rel_tol`.
template <typename Scalar>
ExchangerSolution<Scalar> solve_counterflow(const ExchangerInlets<Scalar>& in, Scalar cp, Scalar ua,
                                            Scalar rel_tol = Scalar(1e-12), int max_iterations = 50) {
    using std::abs;
    using std::exp;
    if (!(in.hot_in > in.cold_in)) throw std::invalid_argument("hot inlet must be hotter than cold inlet");
    if (!(in.hot_flow > 0) || !(in.cold_flow > 0)) throw std::invalid_argument("flows must be positive");
    if (!(cp > 0)) throw std::invalid_argument("cp must be positive");
    if (ua < 0) throw std::invalid_argument("UA must be non-negative");

    const Scalar c_hot = in.hot_flow * cp;
    const Scalar c_cold = in.cold_flow * cp;
    const Scalar span = in.hot_in - in.cold_in;
    if (ua == Scalar(0)) return {in.hot_in, in.cold_in, Scalar(0), span, 0};

    const Scalar c_min = c_hot < c_cold ? c_hot : c_cold;
    const Scalar c_max = c_hot < c_cold ? c_cold : c_hot;
    const Scalar cr = c_min / c_max;
    const Scalar ntu = ua / c_min;
    Scalar eff;
    if (abs(Scalar(1) - cr) < Scalar(1e-12)) {
        eff = ntu / (Scalar(1) + ntu);
    } else {
        const Scalar e = exp(-ntu * (Scalar(1) - cr));
        eff = (Scalar(1) - e) / (Scalar(1) - cr * e);
    }

    // Unknown: the duty q. Both terminal differences are affine in q, which
    // keeps the relative precision of q intact even when it is tiny.
    auto mismatch = [&](Scalar q) {
        return q - ua * log_mean(span - q / c_cold, span - q / c_hot);
    };
    auto solution = [&](Scalar q, int it) {
        return ExchangerSolution<Scalar>{in.hot_in - q / c_hot, in.cold_in + q / c_cold, q, q / ua, it};
    };

    const Scalar q_max = c_min * span;
    Scalar q = eff * q_max;
    for (int it = 1; it <= max_iterations; ++it) {
        const Scalar f = mismatch(q);
        if (abs(f) <= rel_tol * q) return solution(q, it);
        const Scalar h = Scalar(1e-6) * q;
        const Scalar up = q + h < q_max ? q + h : q;
        const Scalar slope = (mismatch(up) - mismatch(q - h)) / (up - (q - h));
        if (slope == Scalar(0) || !std::isfinite(static_cast<double>(slope))) break;
        Scalar next = q - f / slope;
        if (next <= Scalar(0)) next = q / Scalar(2);
        if (next >= q_max) next = (q + q_max) / Scalar(2);
        // At very large NTU one terminal difference is near zero and the
        // mismatch is dominated by rounding; a vanishing step is the best
        // available certificate there.
        if (abs(next - q) <= rel_tol * q) return solution(next, it);
        q = next;
    }
    throw NoConvergence("counterflow exchanger solve did not converge");
}

}  // namespace arrdiag::thermal
