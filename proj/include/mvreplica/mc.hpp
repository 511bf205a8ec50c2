/**
 * @file mc.hpp
 * @brief Monte Carlo harness comparing per-sample QP optima with the replica
 *        predictions.
 *
 * Normalization (same as universe.hpp):
 *  - returns x_it ~ N(0, sigma_i^2 / N), independent over i and t;
 *  - C = X X' / T, weights sum to N;
 *  - lambda_hat = w'Cw / r. From F = T sigma_p^2 / (2N) and f = lambda/2 with
 *    the in-sample variance sigma_p^2 = N w'Cw one gets f = w'Cw / (2r).
 *    Sanity check: as r -> 0, w'Cw -> 1/c2 and lambda_hat -> 1/(r c2), the
 *    leading term of (1 - r)/(r c2);
 *  - q0_tilde_hat = sum sigma_i^2 w_i^2 / sum sigma_i^2 w*_i^2, the
 *    out-of-sample variance relative to the true optimum.
 *
 * Every random number is a pure function of (seed, T, trial, asset, time), so
 * results do not depend on the number of worker threads.
 */
#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <limits>
#include <mutex>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <thread>
#include <vector>

#include "mvreplica/optimizer.hpp"
#include "mvreplica/philox.hpp"
#include "mvreplica/universe.hpp"

namespace mvreplica {

struct TrialConfig {
    AssetUniverse universe;
    std::size_t T = 1;
    Constraint constraint = Constraint::NoShort;
    std::uint64_t seed = 0;
    std::uint64_t trial_index = 0;

    double r() const { return static_cast<double>(universe.size()) / static_cast<double>(T); }
};

struct SampleMetrics {
    double lambda_hat = 0.0;
    double q0_tilde_hat = 0.0;
    double zero_fraction = 0.0;
    double objective = 0.0;
    bool degenerate = false;
    /// Linear-response susceptibility estimate (experimental, NaN unless requested).
    double delta_proxy = std::numeric_limits<double>::quiet_NaN();
    std::vector<double> weights;
};

/// A trial failed inside the optimizer; identifies the trial for reproduction.
class TrialError : public std::runtime_error {
public:
    TrialError(std::size_t T, std::uint64_t trial, const std::string& what)
        : std::runtime_error(what), T_(T), trial_(trial) {}
    std::size_t T() const noexcept { return T_; }
    std::uint64_t trial() const noexcept { return trial_; }

private:
    std::size_t T_;
    std::uint64_t trial_;
};

/// Weights below this count as eliminated.
inline double weight_zero_tolerance(double budget, std::size_t n) { return 1e-8 * budget / static_cast<double>(n); }

/// N x T matrix of returns. Entry (i, t) comes from Philox block
/// (t/2, i, 0, 0) under a key derived from (seed, T, trial_index).
inline Eigen::MatrixXd generate_returns(const TrialConfig& cfg) {
    if (cfg.T < 1) throw std::invalid_argument("sample length T must be >= 1");
    const auto n = static_cast<Eigen::Index>(cfg.universe.size());
    const auto t_len = static_cast<Eigen::Index>(cfg.T);
    const Philox4x32 gen = Philox4x32::from_seed(cfg.seed, Philox4x32::splitmix64(cfg.T) ^ cfg.trial_index);
    Eigen::MatrixXd x(n, t_len);
    const double inv_sqrt_n = 1.0 / std::sqrt(static_cast<double>(n));
    for (Eigen::Index i = 0; i < n; ++i) {
        const double scale = cfg.universe.sigma(static_cast<std::size_t>(i)) * inv_sqrt_n;
        for (Eigen::Index t = 0; t < t_len; t += 2) {
            const auto z = gen.normal_pair({static_cast<std::uint32_t>(t / 2), static_cast<std::uint32_t>(i), 0u, 0u});
            x(i, t) = scale * z[0];
            if (t + 1 < t_len) x(i, t + 1) = scale * z[1];
        }
    }
    return x;
}

/**
 * Linear-response susceptibility of the optimal weights: with the cost scaled
 * as (T/2) w'Cw and a field h added as -h'w, the response on the free
 * coordinates is K^{-1} - K^{-1} 1 1' K^{-1} / (1' K^{-1} 1), K = T C_FF, and
 * the proxy is (1/N) sum_{i free} sigma_i^2 chi_ii. Returns NaN on singular K.
 */
inline double susceptibility_proxy(const CovMatrix& c, const QpResult& res, const AssetUniverse& u, std::size_t T) {
    const Eigen::Index n = c.size();
    std::vector<Eigen::Index> free;
    std::vector<bool> pinned(static_cast<std::size_t>(n), false);
    for (auto i : res.active_set) pinned[static_cast<std::size_t>(i)] = true;
    for (Eigen::Index i = 0; i < n; ++i)
        if (!pinned[static_cast<std::size_t>(i)]) free.push_back(i);
    if (free.empty() || !res.unique) return std::numeric_limits<double>::quiet_NaN();
    const Eigen::MatrixXd k = static_cast<double>(T) * detail::principal(c.matrix(), free);
    Eigen::LDLT<Eigen::MatrixXd> ldlt(k);
    if (ldlt.info() != Eigen::Success) return std::numeric_limits<double>::quiet_NaN();
    const auto m = static_cast<Eigen::Index>(free.size());
    const Eigen::MatrixXd inv = ldlt.solve(Eigen::MatrixXd::Identity(m, m));
    const Eigen::VectorXd g = inv * Eigen::VectorXd::Ones(m);
    const double denom = g.sum();
    double acc = 0.0;
    for (Eigen::Index k2 = 0; k2 < m; ++k2) {
        const double s = u.sigma(static_cast<std::size_t>(free[static_cast<std::size_t>(k2)]));
        acc += s * s * (inv(k2, k2) - g[k2] * g[k2] / denom);
    }
    return acc / static_cast<double>(n);
}

struct TrialOptions {
    bool keep_weights = false;
    bool delta_proxy = false;
};

/// One synthetic sample: returns, empirical covariance, optimum, metrics.
inline SampleMetrics run_trial(const TrialConfig& cfg, const TrialOptions& opt = {}) {
    const std::size_t n = cfg.universe.size();
    const double budget = static_cast<double>(n);
    const CovMatrix c = CovMatrix::from_returns(generate_returns(cfg));
    QpResult res;
    try {
        res = cfg.constraint == Constraint::Equality ? min_variance_equality(c, budget) : min_variance_noshort(c, budget);
    } catch (const std::exception& e) {
        std::ostringstream msg;
        msg << "trial " << cfg.trial_index << " (T = " << cfg.T << ", seed = " << cfg.seed << "): " << e.what();
        throw TrialError(cfg.T, cfg.trial_index, msg.str());
    }
    const auto truth = true_optimum(cfg.universe);
    double num = 0.0;
    double den = 0.0;
    std::size_t zeros = 0;
    const double zero_tol = weight_zero_tolerance(budget, n);
    for (std::size_t i = 0; i < n; ++i) {
        const double s2 = cfg.universe.sigma(i) * cfg.universe.sigma(i);
        const double wi = res.weights[static_cast<Eigen::Index>(i)];
        num += s2 * wi * wi;
        den += s2 * truth.weights[i] * truth.weights[i];
        if (std::abs(wi) <= zero_tol) ++zeros;
    }
    SampleMetrics out;
    out.objective = res.objective;
    out.lambda_hat = res.objective / cfg.r();
    out.q0_tilde_hat = num / den;
    out.zero_fraction = static_cast<double>(zeros) / static_cast<double>(n);
    out.degenerate = res.degenerate;
    if (opt.delta_proxy) out.delta_proxy = susceptibility_proxy(c, res, cfg.universe, cfg.T);
    if (opt.keep_weights) out.weights.assign(res.weights.data(), res.weights.data() + res.weights.size());
    return out;
}

struct MetricStats {
    double mean = 0.0;
    double se = 0.0;
};

/// Mean and standard error (sample sd / sqrt(n)), accumulated in the given order.
inline MetricStats summarize(const std::vector<double>& v) {
    MetricStats s;
    if (v.empty()) return s;
    double sum = 0.0;
    for (double x : v) sum += x;
    s.mean = sum / static_cast<double>(v.size());
    if (v.size() > 1) {
        double ss = 0.0;
        for (double x : v) ss += (x - s.mean) * (x - s.mean);
        s.se = std::sqrt(ss / static_cast<double>(v.size() - 1) / static_cast<double>(v.size()));
    }
    return s;
}

struct SweepPoint {
    double r_target = 0.0;
    std::size_t T = 0;
    double r = 0.0;  ///< N / T actually simulated
    std::size_t trials = 0;
    MetricStats lambda_hat;
    MetricStats q0_tilde_hat;
    MetricStats zero_fraction;
    MetricStats objective;
    MetricStats delta_proxy;
    std::size_t degenerate_count = 0;
    double zero_variance_probability = 0.0;
    double zero_variance_se = 0.0;
    /// Per-trial weights (trial-major), kept only when requested.
    std::vector<std::vector<double>> weights;
};

struct SweepSummary {
    std::uint64_t seed = 0;
    std::size_t n = 0;
    Constraint constraint = Constraint::NoShort;
    std::vector<SweepPoint> points;
};

struct SweepOptions {
    std::size_t trials = 100;
    std::uint64_t seed = 0;
    Constraint constraint = Constraint::NoShort;
    unsigned threads = 1;
    bool keep_weights = false;
    bool delta_proxy = false;
};

/// Sample length used for a target ratio: T = max(1, round(N / r)).
inline std::size_t sample_length(std::size_t n, double r) {
    if (!(r > 0.0) || !std::isfinite(r)) throw std::invalid_argument("grid values must be positive and finite");
    const double t = std::round(static_cast<double>(n) / r);
    return static_cast<std::size_t>(std::max(1.0, t));
}

/**
 * Runs `trials` independent trials per grid point. Trials are distributed
 * over worker threads; the reduction is over trial index in fixed order, so
 * the summary is identical for any thread count.
 */
inline SweepSummary sweep(const std::vector<double>& grid, const AssetUniverse& universe, const SweepOptions& opt) {
    if (grid.empty()) throw std::invalid_argument("r grid must be nonempty");
    if (opt.trials < 2) throw std::invalid_argument("sweep needs at least 2 trials per point");
    SweepSummary summary;
    summary.seed = opt.seed;
    summary.n = universe.size();
    summary.constraint = opt.constraint;
    const unsigned workers = std::max(1u, opt.threads);
    const TrialOptions trial_opt{opt.keep_weights, opt.delta_proxy};

    for (double r_target : grid) {
        SweepPoint pt;
        pt.r_target = r_target;
        pt.T = sample_length(universe.size(), r_target);
        pt.r = static_cast<double>(universe.size()) / static_cast<double>(pt.T);
        pt.trials = opt.trials;

        std::vector<SampleMetrics> results(opt.trials);
        std::vector<std::exception_ptr> errors(opt.trials);
        std::atomic<std::size_t> next{0};
        auto work = [&] {
            for (std::size_t k = next.fetch_add(1); k < opt.trials; k = next.fetch_add(1)) {
                try {
                    results[k] = run_trial({universe, pt.T, opt.constraint, opt.seed, k}, trial_opt);
                } catch (...) {
                    errors[k] = std::current_exception();
                }
            }
        };
        if (workers == 1) {
            work();
        } else {
            std::vector<std::thread> pool;
            for (unsigned w = 0; w < workers; ++w) pool.emplace_back(work);
            for (auto& th : pool) th.join();
        }
        for (auto& e : errors)
            if (e) std::rethrow_exception(e);

        std::vector<double> lam, q, z, obj, dp;
        for (auto& m : results) {
            lam.push_back(m.lambda_hat);
            q.push_back(m.q0_tilde_hat);
            z.push_back(m.zero_fraction);
            obj.push_back(m.objective);
            if (opt.delta_proxy) dp.push_back(m.delta_proxy);
            if (m.degenerate) ++pt.degenerate_count;
            if (opt.keep_weights) pt.weights.push_back(std::move(m.weights));
        }
        pt.lambda_hat = summarize(lam);
        pt.q0_tilde_hat = summarize(q);
        pt.zero_fraction = summarize(z);
        pt.objective = summarize(obj);
        if (opt.delta_proxy) pt.delta_proxy = summarize(dp);
        const double p = static_cast<double>(pt.degenerate_count) / static_cast<double>(opt.trials);
        pt.zero_variance_probability = p;
        pt.zero_variance_se = std::sqrt(p * (1.0 - p) / static_cast<double>(opt.trials));
        summary.points.push_back(std::move(pt));
    }
    return summary;
}

struct PhasePoint {
    double r_target;
    double r;
    std::size_t T;
    std::size_t trials;
    double probability;
    double se;
};

/// Fraction of no-short trials whose optimal in-sample variance is zero.
inline std::vector<PhasePoint> zero_variance_probability(const std::vector<double>& grid, const AssetUniverse& universe,
                                                         std::size_t trials, std::uint64_t seed, unsigned threads = 1) {
    SweepOptions opt;
    opt.trials = trials;
    opt.seed = seed;
    opt.constraint = Constraint::NoShort;
    opt.threads = threads;
    const auto s = sweep(grid, universe, opt);
    std::vector<PhasePoint> out;
    for (const auto& p : s.points)
        out.push_back({p.r_target, p.r, p.T, p.trials, p.zero_variance_probability, p.zero_variance_se});
    return out;
}

inline std::vector<PhasePoint> zero_variance_probability(const std::vector<double>& grid, std::size_t n,
                                                         std::size_t trials, std::uint64_t seed, unsigned threads = 1) {
    return zero_variance_probability(grid, AssetUniverse::uniform(n), trials, seed, threads);
}

struct HistogramBin {
    double lo;
    double hi;
    double mass;  ///< fraction of all pooled weights in [lo, hi)
};

struct WeightHistogram {
    double atom_mass = 0.0;
    double atom_se = 0.0;  ///< standard error over trials
    double bin_width = 0.0;
    std::size_t count = 0;
    std::vector<HistogramBin> bins;

    double density(std::size_t k) const { return bins[k].mass / bin_width; }
};

/**
 * Pools the stored weights of one sweep point over trials and assets.
 * Weights with |w| <= weight_zero_tolerance form the atom; the rest are binned
 * on a grid aligned to multiples of `bin_width`.
 */
inline WeightHistogram weight_histogram(const SweepPoint& point, double bin_width = 0.05) {
    if (point.weights.empty()) throw std::invalid_argument("sweep point has no stored weights");
    if (!(bin_width > 0.0)) throw std::invalid_argument("bin width must be positive");
    WeightHistogram h;
    h.bin_width = bin_width;
    const std::size_t n = point.weights.front().size();
    const double tol = weight_zero_tolerance(static_cast<double>(n), n);

    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    std::vector<double> per_trial_atom;
    for (const auto& w : point.weights) {
        std::size_t zeros = 0;
        for (double x : w) {
            if (std::abs(x) <= tol) {
                ++zeros;
                continue;
            }
            lo = std::min(lo, x);
            hi = std::max(hi, x);
        }
        per_trial_atom.push_back(static_cast<double>(zeros) / static_cast<double>(w.size()));
        h.count += w.size();
    }
    const auto atom = summarize(per_trial_atom);
    h.atom_mass = atom.mean;
    h.atom_se = atom.se;
    if (!std::isfinite(lo)) return h;

    const auto first = static_cast<long long>(std::floor(lo / bin_width));
    const auto last = static_cast<long long>(std::floor(hi / bin_width));
    std::vector<std::size_t> counts(static_cast<std::size_t>(last - first + 1), 0);
    for (const auto& w : point.weights)
        for (double x : w) {
            if (std::abs(x) <= tol) continue;
            const auto k = static_cast<long long>(std::floor(x / bin_width)) - first;
            ++counts[static_cast<std::size_t>(std::clamp<long long>(k, 0, last - first))];
        }
    const double total = static_cast<double>(h.count);
    for (std::size_t k = 0; k < counts.size(); ++k) {
        const double b = static_cast<double>(first + static_cast<long long>(k)) * bin_width;
        h.bins.push_back({b, b + bin_width, static_cast<double>(counts[k]) / total});
    }
    return h;
}

}  // namespace mvreplica
