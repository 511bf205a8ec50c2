/**
 * @file specfun.hpp
 * @brief Standard normal density, CDF and its first two iterated integrals.
 *
 *   Phi(x) = int_{-inf}^x pdf(t) dt
 *   Psi(x) = int_{-inf}^x Phi(t) dt = x Phi(x) + pdf(x)
 *   W(x)   = int_{-inf}^x Psi(t) dt = (x^2 + 1)/2 Phi(x) + x pdf(x)/2
 *
 * The closed forms lose relative accuracy in the lower tail, where Psi and W
 * are differences of nearly equal terms. Below x = -5 both are evaluated from
 * the continued fraction of the Mills ratio, which keeps them positive and
 * monotone down to underflow.
 */
#pragma once

#include <cmath>
#include <numbers>

namespace mvreplica::specfun {

namespace detail {

inline constexpr double kInvSqrt2Pi = 0.398942280401432677939946059934;
inline constexpr double kTailSwitch = -5.0;
inline constexpr double kAsymptotic = 40.0;

/// Tail quantities for t > 0, all divided by pdf(t):
///   mills = Phi(-t)/pdf(t), psi = Psi(-t)/pdf(t), w = W(-t)/pdf(t).
struct TailRatios {
    double mills;
    double psi;
    double w;
};

// Continued fraction R(t) = 1/(t + 1/(t + 2/(t + 3/(t + ...)))).
// Writing R = 1/(t + e1), e_k = k/(t + e_{k+1}), one gets
//   1 - t R = e1 R  and  (t^2 + 1) R - t = e1 e2 R,
// so Psi(-t) and W(-t) follow without cancellation.
inline TailRatios tail_ratios(double t) {
    constexpr int kTerms = 120;
    double e = 0.0;
    double e1 = 0.0;
    double e2 = 0.0;
    for (int k = kTerms; k >= 1; --k) {
        e = k / (t + e);
        if (k == 2) e2 = e;
    }
    e1 = e;
    const double mills = 1.0 / (t + e1);
    return {mills, e1 * mills, 0.5 * e1 * e2 * mills};
}

}  // namespace detail

/// exp(-x^2/2)/sqrt(2 pi)
inline double normal_pdf(double x) { return detail::kInvSqrt2Pi * std::exp(-0.5 * x * x); }

/// Standard normal CDF.
inline double Phi(double x) {
    if (x < -detail::kAsymptotic) return 0.0;
    if (x > detail::kAsymptotic) return 1.0;
    return 0.5 * std::erfc(-x / std::numbers::sqrt2);
}

/// First iterated integral of the normal CDF.
inline double Psi(double x) {
    if (x < -detail::kAsymptotic) return 0.0;
    if (x > detail::kAsymptotic) return x;
    if (x < detail::kTailSwitch) return normal_pdf(x) * detail::tail_ratios(-x).psi;
    return x * Phi(x) + normal_pdf(x);
}

/// Second iterated integral of the normal CDF.
inline double W(double x) {
    if (x < -detail::kAsymptotic) return 0.0;
    if (x > detail::kAsymptotic) return 0.5 * (x * x + 1.0);
    if (x < detail::kTailSwitch) return normal_pdf(x) * detail::tail_ratios(-x).w;
    return 0.5 * (x * x + 1.0) * Phi(x) + 0.5 * x * normal_pdf(x);
}

}  // namespace mvreplica::specfun
