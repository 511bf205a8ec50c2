/**
 * @file optimizer.hpp
 * @brief Exact per-sample minimum-variance solvers.
 *
 *   min_w  w' C w   s.t.  sum_i w_i = budget           (equality only)
 *   min_w  w' C w   s.t.  sum_i w_i = budget, w >= 0   (no-short)
 *
 * No ridge term is ever added. When the empirical covariance is singular the
 * minimizer is not unique; the solvers then return the minimum-norm
 * representative and say so through `unique`, `degenerate` and
 * `flat_directions` instead of pretending the answer is well defined.
 */
#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <sstream>
#include <vector>

#include "mvreplica/errors.hpp"

namespace mvreplica {

enum class Constraint { Equality, NoShort };

/// Dense symmetric positive semidefinite covariance matrix.
class CovMatrix {
public:
    /// Validates symmetry (1e-12 relative to the largest entry) and
    /// positive semidefiniteness (smallest eigenvalue >= -1e-10 trace).
    explicit CovMatrix(Eigen::MatrixXd m, bool short_sample = false)
        : m_(std::move(m)), short_sample_(short_sample) {
        if (m_.rows() != m_.cols() || m_.rows() == 0) throw MatrixError("covariance must be a non-empty square matrix");
        if (!m_.allFinite()) throw MatrixError("covariance has non-finite entries");
        const double scale = std::max(1.0, m_.cwiseAbs().maxCoeff());
        if ((m_ - m_.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale) throw MatrixError("covariance is not symmetric");
        m_ = 0.5 * (m_ + m_.transpose()).eval();
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(m_, Eigen::EigenvaluesOnly);
        if (eig.eigenvalues().minCoeff() < -1e-10 * std::max(m_.trace(), 0.0) || m_.trace() < 0.0)
            throw MatrixError("covariance is not positive semidefinite");
    }

    /// C = X X' / T from an N x T return matrix. PSD and symmetric by construction.
    static CovMatrix from_returns(const Eigen::MatrixXd& returns) {
        const auto t = static_cast<double>(returns.cols());
        Eigen::MatrixXd c = Eigen::MatrixXd::Zero(returns.rows(), returns.rows());
        c.selfadjointView<Eigen::Lower>().rankUpdate(returns, 1.0 / t);
        c.triangularView<Eigen::StrictlyUpper>() = c.transpose();
        return CovMatrix(std::move(c), returns.cols() < returns.rows(), Unchecked{});
    }

    const Eigen::MatrixXd& matrix() const noexcept { return m_; }
    Eigen::Index size() const noexcept { return m_.rows(); }
    bool short_sample() const noexcept { return short_sample_; }
    double trace() const { return m_.trace(); }

private:
    struct Unchecked {};
    CovMatrix(Eigen::MatrixXd m, bool short_sample, Unchecked) : m_(std::move(m)), short_sample_(short_sample) {}

    Eigen::MatrixXd m_;
    bool short_sample_ = false;
};

struct QpResult {
    Eigen::VectorXd weights;
    double objective = 0.0;            ///< in-sample variance w' C w
    std::vector<Eigen::Index> active_set;  ///< indices pinned at w_i = 0
    bool degenerate = false;           ///< zero-variance / rank-deficient regime
    bool unique = true;                ///< false when `weights` is one of a continuum of minimizers
    Eigen::Index flat_directions = 0;  ///< null-space dimension of C on the free coordinates
    int iterations = 0;
};

namespace detail {

inline constexpr double kRankTolerance = 1e-10;

struct RestrictedSolution {
    Eigen::VectorXd w;
    Eigen::Index rank = 0;
    bool zero_objective = false;  ///< the constant vector has a null-space component
};

/// Minimum-norm minimizer of w' A w subject to sum w = budget, via eigendecomposition.
inline RestrictedSolution restricted_minimizer_eig(const Eigen::MatrixXd& a, double budget) {
    const Eigen::Index n = a.rows();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(a);
    const Eigen::VectorXd& d = eig.eigenvalues();
    const Eigen::MatrixXd& v = eig.eigenvectors();
    const double top = std::max(d.maxCoeff(), 0.0);
    const double tol = kRankTolerance * top;
    const Eigen::VectorXd z = v.transpose() * Eigen::VectorXd::Ones(n);
    RestrictedSolution out;
    Eigen::VectorXd null_part = Eigen::VectorXd::Zero(n);
    Eigen::VectorXd range_part = Eigen::VectorXd::Zero(n);
    double null_norm2 = 0.0;
    for (Eigen::Index k = 0; k < n; ++k) {
        if (d[k] > tol && top > 0.0) {
            ++out.rank;
            range_part += v.col(k) * (z[k] / d[k]);
        } else {
            null_part += v.col(k) * z[k];
            null_norm2 += z[k] * z[k];
        }
    }
    if (null_norm2 > 1e-16 * static_cast<double>(n)) {
        out.zero_objective = true;
        out.w = budget * null_part / null_norm2;
    } else {
        out.w = budget * range_part / range_part.sum();
    }
    return out;
}

/// Same problem via pivoted LDLT; falls back to the eigen path when A is numerically singular.
inline RestrictedSolution restricted_minimizer(const Eigen::MatrixXd& a, double budget) {
    const Eigen::Index n = a.rows();
    Eigen::LDLT<Eigen::MatrixXd> ldlt(a);
    if (ldlt.info() == Eigen::Success) {
        const auto d = ldlt.vectorD();
        const double dmax = d.cwiseAbs().maxCoeff();
        if (dmax > 0.0 && d.minCoeff() > 1e-9 * dmax) {
            const Eigen::VectorXd y = ldlt.solve(Eigen::VectorXd::Ones(n));
            const double s = y.sum();
            if (std::isfinite(s) && s > 0.0 && y.allFinite()) return {budget * y / s, n, false};
        }
    }
    return restricted_minimizer_eig(a, budget);
}

inline Eigen::MatrixXd principal(const Eigen::MatrixXd& c, const std::vector<Eigen::Index>& idx) {
    const auto m = static_cast<Eigen::Index>(idx.size());
    Eigen::MatrixXd out(m, m);
    for (Eigen::Index i = 0; i < m; ++i)
        for (Eigen::Index j = 0; j < m; ++j) out(i, j) = c(idx[i], idx[j]);
    return out;
}

inline Eigen::Index numerical_rank(const Eigen::MatrixXd& a) {
    if (a.rows() == 0) return 0;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(a, Eigen::EigenvaluesOnly);
    const double top = std::max(eig.eigenvalues().maxCoeff(), 0.0);
    if (top <= 0.0) return 0;
    return (eig.eigenvalues().array() > kRankTolerance * top).count();
}

/// Objective threshold below which the in-sample variance counts as zero.
inline double zero_objective_tolerance(const CovMatrix& c) {
    return 1e-10 * c.trace() / static_cast<double>(c.size());
}

inline void check_budget(double budget) {
    if (!(budget > 0.0) || !std::isfinite(budget)) throw DomainError("budget must be positive and finite");
}

}  // namespace detail

/**
 * Budget-constrained minimum variance. For full-rank C returns the unique
 * w = budget C^{-1} 1 / (1' C^{-1} 1). For rank-deficient C returns the
 * minimum-norm minimizer with unique = false, degenerate = true and
 * flat_directions = N - rank.
 */
inline QpResult min_variance_equality(const CovMatrix& c, double budget) {
    detail::check_budget(budget);
    const Eigen::MatrixXd& m = c.matrix();
    auto sol = detail::restricted_minimizer_eig(m, budget);
    QpResult out;
    out.weights = std::move(sol.w);
    out.objective = std::max(0.0, out.weights.dot(m * out.weights));
    out.flat_directions = c.size() - sol.rank;
    out.unique = out.flat_directions == 0;
    out.degenerate = !out.unique;
    return out;
}

/**
 * No-short minimum variance by a primal active-set method.
 *
 * Starts from equal weights with every coordinate free. Each iteration solves
 * the budget-only problem on the free coordinates. If that point is feasible
 * it is accepted and the most negative multiplier 2(Cw)_j - lambda among the
 * pinned coordinates is released; otherwise a step is taken to the first
 * blocking bound and that coordinate is pinned. Ties go to the lowest index.
 */
inline QpResult min_variance_noshort(const CovMatrix& c, double budget) {
    detail::check_budget(budget);
    const Eigen::MatrixXd& m = c.matrix();
    const Eigen::Index n = c.size();
    const int max_iterations = static_cast<int>(50 * n);

    Eigen::VectorXd w = Eigen::VectorXd::Constant(n, budget / static_cast<double>(n));
    std::vector<bool> pinned(static_cast<std::size_t>(n), false);
    const double grad_scale = 2.0 * std::max(c.trace() / static_cast<double>(n), 1e-300) * budget / static_cast<double>(n);
    const double multiplier_tol = 1e-11 * grad_scale;

    auto free_indices = [&] {
        std::vector<Eigen::Index> f;
        for (Eigen::Index i = 0; i < n; ++i)
            if (!pinned[static_cast<std::size_t>(i)]) f.push_back(i);
        return f;
    };

    QpResult out;
    int it = 0;
    bool done = false;
    detail::RestrictedSolution last;
    std::vector<Eigen::Index> free;
    for (; it < max_iterations; ++it) {
        free = free_indices();
        last = detail::restricted_minimizer(detail::principal(m, free), budget);
        const auto nf = static_cast<Eigen::Index>(free.size());

        double alpha = 1.0;
        Eigen::Index blocking = -1;
        for (Eigen::Index k = 0; k < nf; ++k) {
            const double p = last.w[k];
            if (p < 0.0) {
                const double wi = w[free[k]];
                const double ratio = wi / (wi - p);
                if (ratio < alpha) {
                    alpha = ratio;
                    blocking = free[k];
                }
            }
        }
        if (blocking >= 0) {
            for (Eigen::Index k = 0; k < nf; ++k) w[free[k]] += alpha * (last.w[k] - w[free[k]]);
            w[blocking] = 0.0;
            pinned[static_cast<std::size_t>(blocking)] = true;
            continue;
        }
        for (Eigen::Index k = 0; k < nf; ++k) w[free[k]] = last.w[k];

        const Eigen::VectorXd grad = 2.0 * (m * w);
        double lambda = 0.0;
        for (Eigen::Index i : free) lambda += grad[i];
        lambda /= static_cast<double>(nf);
        Eigen::Index release = -1;
        double most_negative = -multiplier_tol;
        for (Eigen::Index i = 0; i < n; ++i) {
            if (!pinned[static_cast<std::size_t>(i)]) continue;
            const double mu = grad[i] - lambda;
            if (mu < most_negative) {
                most_negative = mu;
                release = i;
            }
        }
        if (release < 0) {
            done = true;
            break;
        }
        pinned[static_cast<std::size_t>(release)] = false;
    }
    if (!done) {
        std::ostringstream msg;
        msg << "active-set loop did not terminate after " << max_iterations << " iterations; iterate w = ["
            << w.transpose() << "], pinned = {";
        for (Eigen::Index i = 0; i < n; ++i)
            if (pinned[static_cast<std::size_t>(i)]) msg << ' ' << i;
        msg << " }";
        throw SolverError(msg.str());
    }

    out.weights = std::move(w);
    out.iterations = it + 1;
    for (Eigen::Index i = 0; i < n; ++i)
        if (pinned[static_cast<std::size_t>(i)]) out.active_set.push_back(i);
    out.objective = std::max(0.0, out.weights.dot(m * out.weights));
    const Eigen::Index rank = last.rank == static_cast<Eigen::Index>(free.size())
                                  ? static_cast<Eigen::Index>(free.size())
                                  : detail::numerical_rank(detail::principal(m, free));
    out.flat_directions = static_cast<Eigen::Index>(free.size()) - rank;
    out.unique = out.flat_directions == 0;
    out.degenerate = out.objective < detail::zero_objective_tolerance(c);
    return out;
}

/**
 * Largest violation of the KKT conditions of the chosen problem: budget,
 * sign feasibility, stationarity |2(Cw)_i - lambda| on free coordinates,
 * dual feasibility and complementary slackness |mu_i w_i| on pinned ones.
 * Coordinates with w_i <= 1e-8 budget/N count as pinned.
 */
inline double kkt_residual(const CovMatrix& c, const QpResult& result, double budget,
                           Constraint constraint = Constraint::NoShort) {
    const Eigen::MatrixXd& m = c.matrix();
    const Eigen::VectorXd& w = result.weights;
    const Eigen::Index n = c.size();
    const Eigen::VectorXd grad = 2.0 * (m * w);
    const double zero_tol = 1e-8 * budget / static_cast<double>(n);

    double worst = std::abs(w.sum() - budget);
    std::vector<bool> free(static_cast<std::size_t>(n), true);
    if (constraint == Constraint::NoShort) {
        for (Eigen::Index i = 0; i < n; ++i) {
            worst = std::max(worst, std::max(0.0, -w[i]));
            if (w[i] <= zero_tol) free[static_cast<std::size_t>(i)] = false;
        }
    }
    double lambda = 0.0;
    Eigen::Index nfree = 0;
    for (Eigen::Index i = 0; i < n; ++i)
        if (free[static_cast<std::size_t>(i)]) {
            lambda += grad[i];
            ++nfree;
        }
    if (nfree > 0) lambda /= static_cast<double>(nfree);
    for (Eigen::Index i = 0; i < n; ++i) {
        const double mu = grad[i] - lambda;
        if (free[static_cast<std::size_t>(i)]) {
            worst = std::max(worst, std::abs(mu));
        } else {
            worst = std::max(worst, std::max(0.0, -mu));
            worst = std::max(worst, std::abs(mu * w[i]));
        }
    }
    return worst;
}

/**
 * Reference solver: enumerates every nonempty free set, solves the
 * budget-only problem on it, keeps the best sign-feasible point. Ties in the
 * objective go to the larger free set. Limited to N <= 12.
 */
inline QpResult brute_force_noshort(const CovMatrix& c, double budget) {
    detail::check_budget(budget);
    const Eigen::Index n = c.size();
    if (n > 12) throw DomainError("brute-force enumeration is limited to N <= 12");
    const Eigen::MatrixXd& m = c.matrix();
    const double feas_tol = 1e-12 * budget;

    QpResult best;
    best.objective = std::numeric_limits<double>::infinity();
    Eigen::Index best_free = 0;
    std::vector<Eigen::Index> best_set;
    Eigen::Index best_rank = 0;
    const std::uint32_t total = 1u << n;
    for (std::uint32_t mask = 1; mask < total; ++mask) {
        std::vector<Eigen::Index> free;
        for (Eigen::Index i = 0; i < n; ++i)
            if (mask & (1u << i)) free.push_back(i);
        auto sol = detail::restricted_minimizer_eig(detail::principal(m, free), budget);
        if (sol.w.minCoeff() < -feas_tol) continue;
        Eigen::VectorXd w = Eigen::VectorXd::Zero(n);
        for (std::size_t k = 0; k < free.size(); ++k) w[free[k]] = std::max(0.0, sol.w[static_cast<Eigen::Index>(k)]);
        w *= budget / w.sum();
        const double obj = std::max(0.0, w.dot(m * w));
        const double tie = 1e-12 * (1.0 + std::abs(best.objective));
        const auto nfree = static_cast<Eigen::Index>(free.size());
        const bool better = obj < best.objective - tie ||
                            (std::abs(obj - best.objective) <= tie && nfree > best_free);
        if (better) {
            best.objective = obj;
            best.weights = w;
            best_free = nfree;
            best_set = free;
            best_rank = sol.rank;
        }
    }
    best.active_set.clear();
    for (Eigen::Index i = 0; i < n; ++i)
        if (std::find(best_set.begin(), best_set.end(), i) == best_set.end()) best.active_set.push_back(i);
    best.flat_directions = best_free - best_rank;
    best.unique = best.flat_directions == 0;
    best.degenerate = best.objective < detail::zero_objective_tolerance(c);
    return best;
}

}  // namespace mvreplica
