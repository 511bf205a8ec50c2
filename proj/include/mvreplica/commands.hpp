/**
 * @file commands.hpp
 * @brief Subcommand bodies of the `mvreplica` tool, returning plot-ready tables.
 *
 * Column order per subcommand:
 *   replica:  r_target, r, status, lambda, delta, q0, q0_tilde, f, n0
 *   simulate: r_target, r, T, trials, lambda_hat_mean, lambda_hat_se,
 *             q0_tilde_hat_mean, q0_tilde_hat_se, zero_fraction_mean,
 *             zero_fraction_se, objective_mean, objective_se, degenerate_count,
 *             zero_variance_prob, zero_variance_se
 *             [, delta_proxy_mean, delta_proxy_se with --experimental-delta]
 *   compare:  r, metric, analytic, sim_mean, sim_se, z, verdict
 *   phase:    r_target, r, N, T, trials, prob, se
 *   weights:  r_target, r, kind, lo, hi, analytic, simulated, se
 */
#pragma once

#include <json.hpp>

#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <thread>
#include <vector>

#include "mvreplica/errors.hpp"
#include "mvreplica/io.hpp"
#include "mvreplica/mc.hpp"
#include "mvreplica/replica.hpp"
#include "mvreplica/universe.hpp"
#include "mvreplica/weights.hpp"

namespace mvreplica::cli {

using io::Table;

struct RunSpec {
    std::string subcommand;
    std::vector<double> grid;
    std::size_t n = 100;
    std::size_t trials = 100;
    std::string sigma = "const:1";
    Constraint constraint = Constraint::NoShort;
    double eta1 = 0.0;
    double eta2 = std::numeric_limits<double>::infinity();
    std::uint64_t seed = 0;
    bool snap = false;
    double bin_width = 0.05;
    bool experimental_delta = false;
    std::string analytic_path;
    std::string simulation_path;
    double threshold = 3.0;
    // Not part of the result; excluded from the embedded spec.
    unsigned threads = 1;
    std::string out;
    std::string format = "csv";

    RegularizerParams regularizer() const { return {eta1, eta2}; }
};

inline const char* constraint_name(Constraint c) { return c == Constraint::Equality ? "equality" : "noshort"; }

/// Resolved spec as embedded in output files. Thread count, output path and
/// format do not change the rows and are left out.
inline nlohmann::json spec_json(const RunSpec& s, const AssetUniverse* u = nullptr) {
    nlohmann::json j;
    j["subcommand"] = s.subcommand;
    if (s.subcommand == "compare") {
        j["analytic"] = s.analytic_path;
        j["simulation"] = s.simulation_path;
        j["threshold"] = s.threshold;
        return j;
    }
    j["r_grid"] = s.grid;
    j["n"] = s.n;
    j["sigma"] = s.sigma;
    if (u) j["sigma_values"] = std::vector<double>(u->sigmas().begin(), u->sigmas().end());
    if (s.subcommand == "replica") {
        j["eta1"] = s.eta1;
        j["eta2"] = std::isinf(s.eta2) ? nlohmann::json("inf") : nlohmann::json(s.eta2);
        j["snap"] = s.snap;
        return j;
    }
    j["trials"] = s.trials;
    j["seed"] = s.seed;
    j["constraint"] = s.subcommand == "phase" ? "noshort" : constraint_name(s.constraint);
    if (s.subcommand == "weights") j["bin_width"] = s.bin_width;
    if (s.subcommand == "simulate") j["experimental_delta"] = s.experimental_delta;
    return j;
}

inline constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

inline Table cmd_replica(const RunSpec& s, const AssetUniverse& u) {
    const RegularizerParams reg = s.regularizer();
    try {
        reg.validate();
    } catch (const std::invalid_argument& e) {
        throw io::SpecError(e.what());
    }
    Table t;
    t.columns = {"r_target", "r", "status", "lambda", "delta", "q0", "q0_tilde", "f", "n0"};
    for (double r_target : s.grid) {
        const double r = s.snap ? static_cast<double>(u.size()) / static_cast<double>(sample_length(u.size(), r_target))
                                : r_target;
        std::vector<io::Cell> row{r_target, r};
        try {
            const auto sol = solve(u, r, reg);
            row.insert(row.end(), {std::string("ok"), sol.lambda, sol.delta, sol.q0, sol.q0_tilde, sol.f, sol.n0});
        } catch (const PhaseError& e) {
            row.insert(row.end(), {std::string(e.reason_code()), kNaN, kNaN, kNaN, kNaN, kNaN, kNaN});
        } catch (const NoConvergence&) {
            row.insert(row.end(), {std::string("no-convergence"), kNaN, kNaN, kNaN, kNaN, kNaN, kNaN});
        } catch (const DomainError&) {
            row.insert(row.end(), {std::string("invalid-r"), kNaN, kNaN, kNaN, kNaN, kNaN, kNaN});
        }
        t.rows.push_back(std::move(row));
    }
    return t;
}

inline SweepOptions sweep_options(const RunSpec& s) {
    SweepOptions opt;
    opt.trials = s.trials;
    opt.seed = s.seed;
    opt.constraint = s.constraint;
    opt.threads = s.threads;
    opt.delta_proxy = s.experimental_delta;
    return opt;
}

inline Table cmd_simulate(const RunSpec& s, const AssetUniverse& u) {
    if (s.trials < 2) throw io::SpecError("--trials must be >= 2 for standard errors");
    const auto summary = sweep(s.grid, u, sweep_options(s));
    Table t;
    t.columns = {"r_target",           "r",
                 "T",                  "trials",
                 "lambda_hat_mean",    "lambda_hat_se",
                 "q0_tilde_hat_mean",  "q0_tilde_hat_se",
                 "zero_fraction_mean", "zero_fraction_se",
                 "objective_mean",     "objective_se",
                 "degenerate_count",   "zero_variance_prob",
                 "zero_variance_se"};
    if (s.experimental_delta) {
        t.columns.push_back("delta_proxy_mean");
        t.columns.push_back("delta_proxy_se");
    }
    for (const auto& p : summary.points) {
        std::vector<io::Cell> row{p.r_target,
                                  p.r,
                                  static_cast<double>(p.T),
                                  static_cast<double>(p.trials),
                                  p.lambda_hat.mean,
                                  p.lambda_hat.se,
                                  p.q0_tilde_hat.mean,
                                  p.q0_tilde_hat.se,
                                  p.zero_fraction.mean,
                                  p.zero_fraction.se,
                                  p.objective.mean,
                                  p.objective.se,
                                  static_cast<double>(p.degenerate_count),
                                  p.zero_variance_probability,
                                  p.zero_variance_se};
        if (s.experimental_delta) {
            row.emplace_back(p.delta_proxy.mean);
            row.emplace_back(p.delta_proxy.se);
        }
        t.rows.push_back(std::move(row));
    }
    return t;
}

/// Simulated and analytic grids do not line up.
class GridMismatch : public io::SpecError {
public:
    using io::SpecError::SpecError;
};

struct CompareReport {
    Table table;
    bool pass = true;
};

/// |sim mean - analytic| / SE per simulated point and metric; pass when all are below `threshold`.
inline CompareReport cmd_compare(const io::Table& analytic, const io::Table& sim, double threshold = 3.0) {
    CompareReport rep;
    rep.table.columns = {"r", "metric", "analytic", "sim_mean", "sim_se", "z", "verdict"};
    if (sim.rows.empty()) throw GridMismatch("simulation file has no rows");
    const std::pair<const char*, const char*> metrics[] = {{"lambda", "lambda_hat"}, {"q0_tilde", "q0_tilde_hat"}};
    for (std::size_t i = 0; i < sim.rows.size(); ++i) {
        const double r = sim.number(i, "r");
        std::size_t match = analytic.rows.size();
        for (std::size_t k = 0; k < analytic.rows.size(); ++k)
            if (std::abs(analytic.number(k, "r") - r) <= 1e-9 * std::max(1.0, std::abs(r))) {
                match = k;
                break;
            }
        if (match == analytic.rows.size())
            throw GridMismatch("no analytic row at r = " + io::format_number(r) +
                               " (generate the analytic curve with --snap and the same --n)");
        const bool ok = analytic.text(match, "status") == "ok";
        for (const auto& [a_col, s_col] : metrics) {
            const double a = ok ? analytic.number(match, a_col) : kNaN;
            const double m = sim.number(i, std::string(s_col) + "_mean");
            const double se = sim.number(i, std::string(s_col) + "_se");
            std::string verdict = "skipped";
            double z = kNaN;
            if (ok) {
                const double diff = std::abs(m - a);
                z = se > 0.0 ? diff / se : (diff == 0.0 ? 0.0 : std::numeric_limits<double>::infinity());
                verdict = z < threshold ? "pass" : "fail";
                if (verdict == "fail") rep.pass = false;
            }
            rep.table.rows.push_back({r, std::string(a_col), a, m, se, z, verdict});
        }
    }
    rep.table.rows.push_back({kNaN, std::string("overall"), kNaN, kNaN, kNaN, kNaN,
                              std::string(rep.pass ? "pass" : "fail")});
    return rep;
}

inline Table cmd_phase(const RunSpec& s, const AssetUniverse& u) {
    if (s.trials < 2) throw io::SpecError("--trials must be >= 2");
    const auto pts = zero_variance_probability(s.grid, u, s.trials, s.seed, s.threads);
    Table t;
    t.columns = {"r_target", "r", "N", "T", "trials", "prob", "se"};
    for (const auto& p : pts)
        t.rows.push_back({p.r_target, p.r, static_cast<double>(u.size()), static_cast<double>(p.T),
                          static_cast<double>(p.trials), p.probability, p.se});
    return t;
}

/// Histogram range over which the analytic continuous part has essentially all its mass.
inline std::pair<double, double> mixture_support(const WeightMixture& mix) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (const auto& c : mix.components) {
        hi = std::max(hi, c.center_pos + 8.0 * c.std);
        lo = std::min(lo, std::max(0.0, c.center_pos - 8.0 * c.std));
        if (std::isfinite(c.center_neg)) lo = std::min(lo, c.center_neg - 8.0 * c.std);
    }
    return {lo, hi};
}

struct WeightComparison {
    double atom_analytic = kNaN;
    double atom_simulated = 0.0;
    double atom_se = 0.0;
    std::vector<HistogramBin> analytic_bins;
    std::vector<HistogramBin> simulated_bins;
    double l1 = kNaN;  ///< sum over bins of |simulated - analytic| continuous mass
};

/// Aligns the pooled simulated histogram with the analytic mixture on a common bin grid.
inline WeightComparison compare_weights(const SweepPoint& point, const WeightMixture* mix, double bin_width) {
    const WeightHistogram h = weight_histogram(point, bin_width);
    WeightComparison out;
    out.atom_simulated = h.atom_mass;
    out.atom_se = h.atom_se;
    long long first = std::numeric_limits<long long>::max();
    long long last = std::numeric_limits<long long>::min();
    if (!h.bins.empty()) {
        first = std::llround(h.bins.front().lo / bin_width);
        last = std::llround(h.bins.back().lo / bin_width);
    }
    if (mix) {
        out.atom_analytic = mix->n0;
        const auto [lo, hi] = mixture_support(*mix);
        first = std::min(first, static_cast<long long>(std::floor(lo / bin_width)));
        last = std::max(last, static_cast<long long>(std::floor(hi / bin_width)));
    }
    if (first > last) return out;
    std::vector<double> sim(static_cast<std::size_t>(last - first + 1), 0.0);
    for (const auto& b : h.bins) sim[static_cast<std::size_t>(std::llround(b.lo / bin_width) - first)] = b.mass;
    double l1 = 0.0;
    for (long long k = first; k <= last; ++k) {
        const double lo = static_cast<double>(k) * bin_width;
        const double hi = lo + bin_width;
        const double s = sim[static_cast<std::size_t>(k - first)];
        out.simulated_bins.push_back({lo, hi, s});
        if (mix) {
            const double a = mix->continuous_mass(lo, hi);
            out.analytic_bins.push_back({lo, hi, a});
            l1 += std::abs(s - a);
        }
    }
    if (mix) out.l1 = l1;
    return out;
}

inline Table cmd_weights(const RunSpec& s, const AssetUniverse& u) {
    if (s.trials < 2) throw io::SpecError("--trials must be >= 2");
    if (!(s.bin_width > 0.0)) throw io::SpecError("--bin-width must be positive");
    auto opt = sweep_options(s);
    opt.keep_weights = true;
    opt.delta_proxy = false;
    const RegularizerParams reg =
        s.constraint == Constraint::Equality ? RegularizerParams::none() : RegularizerParams::no_short();
    Table t;
    t.columns = {"r_target", "r", "kind", "lo", "hi", "analytic", "simulated", "se"};
    for (double r_target : s.grid) {
        const auto summary = sweep({r_target}, u, opt);
        const auto& p = summary.points.front();
        std::optional<WeightMixture> mix;
        try {
            mix = build_mixture(solve(u, p.r, reg), reg);
        } catch (const PhaseError&) {
        } catch (const NoConvergence&) {
        }
        const auto cmp = compare_weights(p, mix ? &*mix : nullptr, s.bin_width);
        t.rows.push_back({r_target, p.r, std::string("atom"), 0.0, 0.0, cmp.atom_analytic, cmp.atom_simulated,
                          cmp.atom_se});
        for (std::size_t k = 0; k < cmp.simulated_bins.size(); ++k) {
            const auto& b = cmp.simulated_bins[k];
            const double a = mix ? cmp.analytic_bins[k].mass : kNaN;
            t.rows.push_back({r_target, p.r, std::string("bin"), b.lo, b.hi, a, b.mass, kNaN});
        }
        t.rows.push_back({r_target, p.r, std::string("l1"), kNaN, kNaN, cmp.l1, kNaN, kNaN});
    }
    return t;
}

}  // namespace mvreplica::cli
