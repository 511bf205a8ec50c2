/**
 * @file replica.hpp
 * @brief Replica-symmetric saddle point of high-dimensional minimum-variance
 *        portfolio optimization, with and without an asymmetric l1 penalty.
 *
 * Order parameters: chemical potential lambda (budget multiplier), out-of-sample
 * error q0, susceptibility delta and their conjugates q0_hat, delta_hat. With the
 * penalty (eta1, eta2) the free energy per asset reads
 *
 *   f = lambda - delta q0_hat - delta_hat q0 + q0 / (2 r (1 + delta))
 *       + (q0_hat / delta_hat) (1/N) sum_i [ W(a_i) + W(-b_i) ],
 *
 *   a_i = (lambda - eta1) / (sigma_i sqrt(-2 q0_hat)),
 *   b_i = (lambda + eta2) / (sigma_i sqrt(-2 q0_hat)).
 *
 * Stationarity in q0 and delta gives delta_hat = 1/(2r(1+delta)) and
 * q0_hat = -q0/(2r(1+delta)^2); the remaining three conditions are solved for
 * (lambda, q0, delta). See universe.hpp for the normalization conventions.
 */
#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <sstream>
#include <vector>

#include "mvreplica/errors.hpp"
#include "mvreplica/specfun.hpp"
#include "mvreplica/universe.hpp"

namespace mvreplica {

/// The five order parameters of the free-energy functional.
struct OrderParams {
    double lambda = 0.0;
    double q0 = 0.0;
    double delta = 0.0;
    double q0_hat = 0.0;
    double delta_hat = 0.0;

    std::array<double, 5> as_array() const { return {lambda, q0, delta, q0_hat, delta_hat}; }
    static OrderParams from_array(const std::array<double, 5>& a) { return {a[0], a[1], a[2], a[3], a[4]}; }
};

/// Sample distribution of one asset's estimated weight: Gaussian pieces
/// centred at center_pos (for w > 0) and center_neg (for w < 0) with common
/// standard deviation `std`, and probability `elimination` of w = 0.
struct AssetWeightLaw {
    double center_pos = 0.0;
    double center_neg = 0.0;  ///< +inf under the no-short ban
    double std = 0.0;
    double elimination = 0.0;
};

struct ReplicaSolution {
    double r = 0.0;
    double lambda = 0.0;
    double delta = 0.0;
    double q0 = 0.0;
    double q0_hat = 0.0;
    double delta_hat = 0.0;
    double f = 0.0;
    double q0_tilde = 0.0;
    double n0 = 0.0;
    RegularizerParams reg;
    std::vector<AssetWeightLaw> per_asset;
    /// Final residuals of the three reduced equations (zero for closed forms).
    std::array<double, 3> residuals{};

    OrderParams order_params() const { return {lambda, q0, delta, q0_hat, delta_hat}; }
};

struct CriticalSummary {
    double r_c;
    double q0_limit;
    double q0_tilde_limit;
};

namespace detail {

inline void require_positive_r(double r) {
    if (!(r > 0.0) || !std::isfinite(r)) throw DomainError("aspect ratio r must be positive and finite");
}

/// Fill the conjugates, per-asset weight laws, n0 and q0_tilde from (lambda, q0, delta).
inline ReplicaSolution assemble(const AssetUniverse& u, double r, double lambda, double q0, double delta,
                                const RegularizerParams& reg) {
    ReplicaSolution s;
    s.r = r;
    s.lambda = lambda;
    s.q0 = q0;
    s.delta = delta;
    s.reg = reg;
    s.delta_hat = 1.0 / (2.0 * r * (1.0 + delta));
    s.q0_hat = -q0 / (2.0 * r * (1.0 + delta) * (1.0 + delta));
    s.q0_tilde = q0 * u.c2();

    const double width = std::sqrt(q0 * r);
    const double scale = r * (1.0 + delta);
    double n0 = 0.0;
    s.per_asset.reserve(u.size());
    for (double sigma : u.sigmas()) {
        AssetWeightLaw law;
        law.center_pos = (lambda - reg.eta1) * scale / (sigma * sigma);
        law.std = width / sigma;
        const double a = law.center_pos / law.std;
        if (reg.bans_shorts()) {
            law.center_neg = std::numeric_limits<double>::infinity();
            law.elimination = specfun::Phi(-a);
        } else {
            law.center_neg = (lambda + reg.eta2) * scale / (sigma * sigma);
            const double b = law.center_neg / law.std;
            law.elimination = reg.eta1 == 0.0 && reg.eta2 == 0.0 ? 0.0 : specfun::Phi(-a) - specfun::Phi(-b);
        }
        n0 += law.elimination;
        s.per_asset.push_back(law);
    }
    s.n0 = n0 / static_cast<double>(u.size());
    return s;
}

}  // namespace detail

/**
 * Closed-form saddle point without the no-short ban, valid for 0 < r < 1:
 * lambda = (1-r)/(r c2), delta = r/(1-r), q0 = 1/((1-r) c2), q0_tilde = 1/(1-r).
 * Throws PhaseError for r >= 1, where the sample covariance loses full rank.
 */
inline ReplicaSolution unconstrained_solution(const AssetUniverse& u, double r) {
    detail::require_positive_r(r);
    if (r >= 1.0) {
        std::ostringstream msg;
        msg << "unconstrained saddle point does not exist for r = " << r
            << ": instability at r = 1 (sample covariance becomes singular)";
        throw PhaseError(r == 1.0 ? PhaseBoundary::Critical : PhaseBoundary::Beyond, r, 1.0, msg.str());
    }
    const double c2 = u.c2();
    const double lambda = (1.0 - r) / (r * c2);
    const double delta = r / (1.0 - r);
    const double q0 = 1.0 / ((1.0 - r) * c2);
    ReplicaSolution s = detail::assemble(u, r, lambda, q0, delta, RegularizerParams::none());
    s.q0_tilde = 1.0 / (1.0 - r);
    s.f = 0.5 * lambda;
    return s;
}

/**
 * Chemical potential under the no-short ban: the unique lambda > 0 with
 * (1/N) sum_i W(sqrt(lambda)/sigma_i) = 1/(2r), for 0 < r < 2.
 *
 * Solved in s = sqrt(lambda), where the residual is increasing and convex with
 * slope (1/N) sum Psi(s/sigma_i)/sigma_i > 0, by Newton steps safeguarded by
 * bisection. The bracket [0, s_hi] uses W(x) >= x^2/2 + 1/4 for x >= 0, which
 * gives s_hi^2 = (2 - r)/(2 r c2).
 */
inline double noshort_lambda(const AssetUniverse& u, double r) {
    detail::require_positive_r(r);
    if (r >= 2.0) {
        std::ostringstream msg;
        msg << "no-short saddle point does not exist for r = " << r << ": lambda vanishes at r_c = 2";
        throw PhaseError(r == 2.0 ? PhaseBoundary::Critical : PhaseBoundary::Beyond, r, 2.0, msg.str());
    }
    const auto sig = u.sigmas();
    const double n = static_cast<double>(sig.size());
    const double target = 1.0 / (2.0 * r);
    auto residual = [&](double s, double& slope) {
        double w = 0.0;
        double d = 0.0;
        for (double sigma : sig) {
            const double x = s / sigma;
            w += specfun::W(x);
            d += specfun::Psi(x) / sigma;
        }
        slope = d / n;
        return w / n - target;
    };

    double lo = 0.0;
    double hi = std::sqrt((2.0 - r) / (2.0 * r * u.c2()));
    double slope = 0.0;
    double s = hi;
    double g = residual(s, slope);
    for (int it = 0; it < 200 && g != 0.0; ++it) {
        if (g > 0.0) hi = s; else lo = s;
        double next = s - g / slope;
        if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
        if (std::abs(next - s) <= 4.0 * std::numeric_limits<double>::epsilon() * s) {
            s = next;
            g = residual(s, slope);
            break;
        }
        s = next;
        g = residual(s, slope);
    }
    if (!(std::abs(g) < 1e-12)) {
        throw NoConvergence("no-short lambda root did not converge", {g, 0.0, 0.0});
    }
    return s * s;
}

/// Full no-short saddle point for 0 < r < 2.
inline ReplicaSolution noshort_solution(const AssetUniverse& u, double r) {
    const double lambda = noshort_lambda(u, r);
    const double root = std::sqrt(lambda);
    double phi_bar = 0.0;
    for (double sigma : u.sigmas()) phi_bar += specfun::Phi(root / sigma);
    phi_bar /= static_cast<double>(u.size());
    const double delta = r * phi_bar / (1.0 - r * phi_bar);
    const double q0 = lambda * r * (1.0 + delta) * (1.0 + delta);
    ReplicaSolution s = detail::assemble(u, r, lambda, q0, delta, RegularizerParams::no_short());
    s.f = 0.5 * lambda;
    return s;
}

/**
 * Free energy per asset at an arbitrary order-parameter tuple. Requires
 * q0_hat < 0 and delta_hat > 0. W terms whose argument is -infinity
 * (eta2 = +inf) contribute exactly zero.
 */
inline double free_energy_functional(const OrderParams& op, const AssetUniverse& u, double r,
                                     const RegularizerParams& reg) {
    detail::require_positive_r(r);
    if (!(op.q0_hat < 0.0) || !(op.delta_hat > 0.0) || !(1.0 + op.delta > 0.0))
        throw DomainError("free energy requires q0_hat < 0, delta_hat > 0 and delta > -1");
    const double root = std::sqrt(-2.0 * op.q0_hat);
    double sum = 0.0;
    for (double sigma : u.sigmas()) {
        sum += specfun::W((op.lambda - reg.eta1) / (sigma * root));
        if (!reg.bans_shorts()) sum += specfun::W(-(op.lambda + reg.eta2) / (sigma * root));
    }
    sum /= static_cast<double>(u.size());
    return op.lambda - op.delta * op.q0_hat - op.delta_hat * op.q0 + op.q0 / (2.0 * r * (1.0 + op.delta)) +
           op.q0_hat / op.delta_hat * sum;
}

/**
 * Numerical gradient of free_energy_functional with respect to
 * (lambda, q0, delta, q0_hat, delta_hat): central differences with relative
 * steps, Richardson-extrapolated over h and h/2.
 */
inline std::array<double, 5> stationarity_residual(const OrderParams& op, const AssetUniverse& u, double r,
                                                   const RegularizerParams& reg) {
    const auto x = op.as_array();
    // Validates the base point.
    (void)free_energy_functional(op, u, r, reg);
    auto central = [&](std::size_t j, double h) {
        auto xp = x;
        auto xm = x;
        xp[j] += h;
        xm[j] -= h;
        return (free_energy_functional(OrderParams::from_array(xp), u, r, reg) -
                free_energy_functional(OrderParams::from_array(xm), u, r, reg)) /
               (2.0 * h);
    };
    std::array<double, 5> grad{};
    for (std::size_t j = 0; j < 5; ++j) {
        const double h = x[j] != 0.0 ? 1e-4 * std::abs(x[j]) : 1e-6;
        const double d1 = central(j, h);
        const double d2 = central(j, 0.5 * h);
        grad[j] = (4.0 * d2 - d1) / 3.0;
    }
    return grad;
}

struct GeneralSolveOptions {
    int max_iterations = 200;
    double tolerance = 1e-10;
};

namespace detail {

/// Reduced residuals of the (lambda, q0, delta) system, each O(1):
///   R1 = sqrt(q0 r) (1/N) sum [Psi(a_i) - Psi(-b_i)] / sigma_i - 1
///   R2 = (1/N) sum [Phi(a_i) + Phi(-b_i)] - delta / (r (1 + delta))
///   R3 = 2 r (1/N) sum [W(a_i) + W(-b_i)] - 1
/// with a_i = (lambda - eta1) k / sigma_i, b_i = (lambda + eta2) k / sigma_i,
/// k = r (1 + delta) / sqrt(q0 r).
inline Eigen::Vector3d reduced_residuals(const AssetUniverse& u, double r, const RegularizerParams& reg,
                                         double lambda, double q0, double delta) {
    const double width = std::sqrt(q0 * r);
    const double k = r * (1.0 + delta) / width;
    double psi = 0.0;
    double phi = 0.0;
    double w = 0.0;
    for (double sigma : u.sigmas()) {
        const double a = (lambda - reg.eta1) * k / sigma;
        psi += specfun::Psi(a) / sigma;
        phi += specfun::Phi(a);
        w += specfun::W(a);
        if (!reg.bans_shorts()) {
            const double b = (lambda + reg.eta2) * k / sigma;
            psi -= specfun::Psi(-b) / sigma;
            phi += specfun::Phi(-b);
            w += specfun::W(-b);
        }
    }
    const double n = static_cast<double>(u.size());
    return {width * psi / n - 1.0, phi / n - delta / (r * (1.0 + delta)), 2.0 * r * w / n - 1.0};
}

/// Damped Newton in y = (lambda, log q0, log delta) with a finite-difference Jacobian.
struct NewtonOutcome {
    Eigen::Vector3d y;
    Eigen::Vector3d residual;
    bool converged;
};

inline NewtonOutcome damped_newton(const AssetUniverse& u, double r, const RegularizerParams& reg,
                                   Eigen::Vector3d y, const GeneralSolveOptions& opt) {
    auto eval = [&](const Eigen::Vector3d& v) -> Eigen::Vector3d {
        Eigen::Vector3d res = reduced_residuals(u, r, reg, v[0], std::exp(v[1]), std::exp(v[2]));
        if (!res.allFinite()) res.setConstant(std::numeric_limits<double>::infinity());
        return res;
    };
    Eigen::Vector3d res = eval(y);
    for (int it = 0; it < opt.max_iterations; ++it) {
        if (res.lpNorm<Eigen::Infinity>() < 1e-14) break;
        Eigen::Matrix3d jac;
        for (int j = 0; j < 3; ++j) {
            const double h = 1e-6 * std::max(1.0, std::abs(y[j]));
            Eigen::Vector3d yp = y;
            Eigen::Vector3d ym = y;
            yp[j] += h;
            ym[j] -= h;
            jac.col(j) = (eval(yp) - eval(ym)) / (2.0 * h);
        }
        if (!jac.allFinite()) break;
        const Eigen::Vector3d step = -jac.colPivHouseholderQr().solve(res);
        if (!step.allFinite()) break;
        double t = 1.0;
        bool accepted = false;
        const double current = res.norm();
        while (t > 1e-12) {
            const Eigen::Vector3d trial = y + t * step;
            const Eigen::Vector3d trial_res = eval(trial);
            if (trial_res.allFinite() && trial_res.norm() < current) {
                y = trial;
                res = trial_res;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if (!accepted) break;
    }
    return {y, res, res.allFinite() && res.lpNorm<Eigen::Infinity>() < opt.tolerance};
}

}  // namespace detail

/**
 * Saddle point for a general asymmetric l1 penalty (eta1, eta2), eta2 possibly
 * infinite. Reduces to three equations in (lambda, q0, delta) and solves them
 * by damped Newton, starting from the unconstrained closed form at
 * min(r, 1/2) and continuing in r up to the requested ratio.
 *
 * Throws PhaseError when r lies past a known critical ratio (r >= 1 without
 * penalty, r >= 2 for the pure no-short ban) or when the susceptibility blows
 * up along the continuation; NoConvergence otherwise.
 */
inline ReplicaSolution general_l1_solve(const AssetUniverse& u, double r, const RegularizerParams& reg,
                                        const GeneralSolveOptions& opt = {}) {
    detail::require_positive_r(r);
    reg.validate();
    if (reg.is_unconstrained() && r >= 1.0)
        throw PhaseError(r == 1.0 ? PhaseBoundary::Critical : PhaseBoundary::Beyond, r, 1.0,
                         "unregularized saddle point does not exist for r >= 1");
    if (reg.is_pure_no_short() && r >= 2.0)
        throw PhaseError(r == 2.0 ? PhaseBoundary::Critical : PhaseBoundary::Beyond, r, 2.0,
                         "no-short saddle point does not exist for r >= 2");

    const double c2 = u.c2();
    const double r0 = std::min(r, 0.5);
    auto closed_form_guess = [&](double rr, double eta_scale) {
        return Eigen::Vector3d((1.0 - rr) / (rr * c2) + eta_scale * reg.eta1, std::log(1.0 / ((1.0 - rr) * c2)),
                               std::log(rr / (1.0 - rr)));
    };

    auto last_residual = [](const detail::NewtonOutcome& o) {
        return std::array<double, 3>{o.residual[0], o.residual[1], o.residual[2]};
    };

    detail::NewtonOutcome start = detail::damped_newton(u, r0, reg, closed_form_guess(r0, 1.0), opt);
    if (!start.converged && !reg.bans_shorts()) {
        // Homotopy in the (finite) penalty strength at fixed r0.
        Eigen::Vector3d y = closed_form_guess(r0, 0.0);
        bool ok = true;
        for (int k = 1; k <= 20 && ok; ++k) {
            const double t = k / 20.0;
            const RegularizerParams partial{t * reg.eta1, t * reg.eta2};
            auto out = detail::damped_newton(u, r0, partial, y, opt);
            ok = out.converged;
            y = out.y;
        }
        if (ok) start = detail::damped_newton(u, r0, reg, y, opt);
    }
    if (!start.converged) {
        std::ostringstream msg;
        msg << "general l1 saddle point did not converge at r = " << r0 << " (max residual "
            << start.residual.lpNorm<Eigen::Infinity>() << ")";
        throw NoConvergence(msg.str(), last_residual(start));
    }

    double current = r0;
    Eigen::Vector3d y = start.y;
    Eigen::Vector3d residual = start.residual;
    double step = 0.1;
    while (current < r) {
        const double next = std::min(r, current + step);
        auto out = detail::damped_newton(u, next, reg, y, opt);
        if (out.converged) {
            current = next;
            y = out.y;
            residual = out.residual;
            step = std::min(0.25, step * 1.5);
        } else {
            step *= 0.5;
            if (step < 1e-8) {
                std::ostringstream msg;
                if (std::exp(y[2]) > 1e6) {
                    msg << "susceptibility diverges near r = " << current << "; no saddle point at r = " << r;
                    throw PhaseError(PhaseBoundary::Beyond, r, current, msg.str());
                }
                msg << "general l1 continuation stalled at r = " << current;
                throw NoConvergence(msg.str(), last_residual(out));
            }
        }
    }
    if (std::exp(y[2]) > 1e12 || !(std::exp(y[1]) > 0.0))
        throw PhaseError(PhaseBoundary::Beyond, r, r, "susceptibility diverges: no stable saddle point");

    ReplicaSolution s = detail::assemble(u, r, y[0], std::exp(y[1]), std::exp(y[2]), reg);
    s.residuals = {residual[0], residual[1], residual[2]};
    s.f = free_energy_functional(s.order_params(), u, r, reg);
    return s;
}

/// Dispatch to the closed form, the dedicated no-short solver or the general solver.
inline ReplicaSolution solve(const AssetUniverse& u, double r, const RegularizerParams& reg) {
    if (reg.is_unconstrained()) return unconstrained_solution(u, r);
    if (reg.is_pure_no_short()) return noshort_solution(u, r);
    return general_l1_solve(u, r, reg);
}

/// Limits at the no-short critical point r_c = 2: q0 -> pi / c1^2 and
/// q0_tilde -> pi c2 / c1^2 (>= pi by Cauchy-Schwarz).
inline CriticalSummary critical_asymptotics(const AssetUniverse& u) {
    const double c1 = u.c1();
    return {2.0, std::numbers::pi / (c1 * c1), std::numbers::pi * u.c2() / (c1 * c1)};
}

}  // namespace mvreplica
