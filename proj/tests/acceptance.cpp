// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "mvreplica/commands.hpp"
#include "mvreplica/mc.hpp"
#include "mvreplica/optimizer.hpp"
#include "mvreplica/replica.hpp"
#include "mvreplica/specfun.hpp"
#include "mvreplica/weights.hpp"

using namespace mvreplica;

namespace {

constexpr std::uint64_t kSeed = 20240601;

unsigned workers() { return std::max(1u, std::thread::hardware_concurrency()); }

struct Outcome {
    bool pass = true;
    std::ostringstream detail;

    void require(bool ok, const std::string& what) {
        if (!ok) {
            pass = false;
            detail << " [violated: " << what << "]";
        }
    }
};

int failures = 0;

void criterion(int id, const char* title, double budget_s, const std::function<void(Outcome&)>& body) {
    Outcome o;
    const auto t0 = std::chrono::steady_clock::now();
    try {
        body(o);
    } catch (const std::exception& e) {
        o.pass = false;
        o.detail << " [exception: " << e.what() << "]";
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (budget_s > 0.0) o.require(secs < budget_s, "runtime budget");
    if (!o.pass) ++failures;
    std::printf("%s %2d  %s  (%.1f s)%s\n", o.pass ? "PASS" : "FAIL", id, title, secs, o.detail.str().c_str());
    std::fflush(stdout);
}

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

void special_functions(Outcome& o) {
    std::mt19937_64 rng(kSeed);
    std::uniform_real_distribution<double> d(-12.0, 12.0);
    double worst1 = 0.0, worst2 = 0.0;
    for (int k = 0; k < 1000; ++k) {
        const double x = d(rng);
        worst1 = std::max(worst1, std::abs(specfun::W(x) + specfun::W(-x) - 0.5 * (x * x + 1.0)));
        worst2 = std::max(worst2, std::abs(specfun::W(x) - 0.5 * x * specfun::Psi(x) - 0.5 * specfun::Phi(x)));
    }
    o.detail << " max errors " << fmt(worst1) << ", " << fmt(worst2);
    o.require(worst1 < 1e-12, "W(x)+W(-x) identity");
    o.require(worst2 < 1e-12, "W = x Psi/2 + Phi/2 identity");
    o.require(specfun::W(0.0) == 0.25, "W(0) = 1/4");
    o.require(specfun::Phi(0.0) == 0.5, "Phi(0) = 1/2");
}

void unconstrained(Outcome& o) {
    const auto u = AssetUniverse::uniform(1);
    double worst = 0.0;
    for (int k = 1; k <= 9; ++k) {
        const double r = 0.1 * k;
        const auto s = solve(u, r, RegularizerParams::none());
        worst = std::max({worst, std::abs(s.lambda - (1 - r) / r), std::abs(s.delta - r / (1 - r)),
                          std::abs(s.q0_tilde - 1 / (1 - r)), std::abs(s.f - s.lambda / 2)});
    }
    o.detail << " max deviation " << fmt(worst);
    o.require(worst < 1e-10, "closed forms to 1e-10");
}

void stationarity(Outcome& o) {
    double worst_grad = 0.0, worst_f = 0.0;
    int checked = 0, refused = 0;
    for (const auto& u : {AssetUniverse::uniform(1), AssetUniverse({1.0, 2.0, 4.0})})
        for (double r : {0.5, 1.0, 1.5})
            for (const auto& reg : {RegularizerParams::none(), RegularizerParams::no_short()}) {
                ReplicaSolution s;
                try {
                    s = solve(u, r, reg);
                } catch (const PhaseError&) {
                    // The unconstrained saddle does not exist for r >= 1.
                    o.require(reg.is_unconstrained() && r >= 1.0, "unexpected phase refusal");
                    ++refused;
                    continue;
                }
                for (double g : stationarity_residual(s.order_params(), u, r, reg))
                    worst_grad = std::max(worst_grad, std::abs(g));
                worst_f = std::max(worst_f, std::abs(s.f - 0.5 * s.lambda));
                ++checked;
            }
    o.detail << " " << checked << " saddles, " << refused << " refusals; max |grad| " << fmt(worst_grad)
             << ", max |f - lambda/2| " << fmt(worst_f);
    o.require(worst_grad < 1e-6, "gradient max-norm < 1e-6");
    o.require(worst_f < 1e-8, "f = lambda/2");
}

void critical(Outcome& o) {
    const auto one = AssetUniverse::uniform(1);
    const AssetUniverse two({1.0, 2.0});
    const AssetUniverse three({1.0, 2.0, 4.0});
    const double lam = noshort_solution(one, 1.9999).lambda;
    o.detail << " lambda(1.9999) " << fmt(lam);
    o.require(lam < 1e-4, "lambda(1.9999) < 1e-4");
    double lo = 1e9, hi = -1e9;
    for (const auto* u : {&one, &two, &three})
        for (double r : {1.99, 1.995, 1.999, 1.9995, 1.9999}) {
            const auto s = noshort_solution(*u, r);
            lo = std::min(lo, s.delta * (2 - r));
            hi = std::max(hi, s.delta * (2 - r));
        }
    o.detail << "; Delta(2-r) in [" << fmt(lo) << ", " << fmt(hi) << "]";
    o.require(lo >= 3.92 && hi <= 4.08, "Delta (2-r) in [3.92, 4.08]");
    const double q1 = noshort_solution(one, 1.9999).q0;
    const double q2 = noshort_solution(two, 1.9999).q0;
    const double pi2 = std::numbers::pi / (two.c1() * two.c1());
    o.detail << "; q0/limit " << fmt(q1 / std::numbers::pi) << ", " << fmt(q2 / pi2);
    o.require(std::abs(q1 / std::numbers::pi - 1) < 5e-3, "q0 -> pi for sigma = 1");
    o.require(std::abs(q2 / pi2 - 1) < 5e-3, "q0 -> pi/c1^2 for sigma = (1,2)");
    for (const auto* u : {&one, &two, &three}) {
        for (double r = 0.1; r < 2.0; r += 0.1) o.require(noshort_solution(*u, r).q0_tilde >= 1.0, "q0_tilde >= 1");
        o.require(noshort_solution(*u, 1.9999).q0_tilde >= 1.0, "q0_tilde >= 1");
        o.require(critical_asymptotics(*u).q0_tilde_limit >= std::numbers::pi, "q0_tilde limit >= pi");
    }
}

void corners(Outcome& o) {
    const AssetUniverse u({1.0, 2.0, 4.0});
    double worst = 0.0;
    auto diff = [](const ReplicaSolution& a, const ReplicaSolution& b) {
        double d = 0.0;
        for (auto [x, y] : {std::pair{a.lambda, b.lambda}, {a.q0, b.q0}, {a.delta, b.delta}, {a.q0_tilde, b.q0_tilde}})
            d = std::max(d, std::abs(x - y) / std::max(1.0, std::abs(y)));
        return d;
    };
    for (int k = 0; k < 10; ++k) {
        const double r_eq = 0.05 + 0.1 * k;
        worst = std::max(worst, diff(general_l1_solve(u, r_eq, RegularizerParams::none()), unconstrained_solution(u, r_eq)));
        const double r_ns = 0.1 + 0.2 * k;
        worst = std::max(worst, diff(general_l1_solve(u, r_ns, RegularizerParams::no_short()), noshort_solution(u, r_ns)));
    }
    o.detail << " max relative deviation " << fmt(worst);
    o.require(worst < 1e-8, "corner agreement to 1e-8");
}

void qp_oracle(Outcome& o) {
    std::mt19937_64 rng(kSeed);
    std::normal_distribution<double> g;
    double worst_obj = 0.0, worst_kkt = 0.0;
    for (int k = 0; k < 500; ++k) {
        const int n = 2 + k % 7;
        const int rank = 1 + static_cast<int>(rng() % static_cast<unsigned>(n + 3));
        Eigen::MatrixXd x(n, rank);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < rank; ++j) x(i, j) = g(rng);
        const CovMatrix c(x * x.transpose() / rank);
        const auto a = min_variance_noshort(c, n);
        const auto b = brute_force_noshort(c, n);
        worst_obj = std::max(worst_obj, std::abs(a.objective - b.objective) / std::max(1.0, b.objective));
        worst_kkt = std::max(worst_kkt, kkt_residual(c, a, n));
    }
    o.detail << " max objective gap " << fmt(worst_obj) << ", max KKT residual " << fmt(worst_kkt);
    o.require(worst_obj < 1e-10, "objective matches enumeration");
    o.require(worst_kkt < 1e-8, "KKT residual < 1e-8");
}

void equality_curve(Outcome& o) {
    SweepOptions opt;
    opt.trials = 1000;
    opt.seed = kSeed;
    opt.constraint = Constraint::Equality;
    opt.threads = workers();
    const auto s = sweep({0.25, 0.5, 0.75, 0.9, 1.25, 1.5}, AssetUniverse::uniform(100), opt);
    for (const auto& p : s.points) {
        if (p.r_target < 1.0) {
            const double expect = 1.0 / (1.0 - p.r);
            const double z = std::abs(p.q0_tilde_hat.mean - expect) / p.q0_tilde_hat.se;
            o.detail << " r=" << fmt(p.r) << " z=" << fmt(z) << ";";
            o.require(z < 3.0, "q0_tilde within 3 SE at r=" + fmt(p.r));
        } else {
            o.detail << " r=" << fmt(p.r) << " degenerate " << p.degenerate_count << "/" << p.trials << ";";
            o.require(p.degenerate_count == p.trials, "all trials degenerate at r=" + fmt(p.r));
        }
    }
}

void noshort_curve(Outcome& o) {
    SweepOptions opt;
    opt.trials = 1000;
    opt.seed = kSeed;
    opt.constraint = Constraint::NoShort;
    opt.threads = workers();
    const auto u = AssetUniverse::uniform(100);
    const auto s = sweep({0.5, 1.0, 1.5, 1.9}, u, opt);
    for (const auto& p : s.points) {
        const auto a = noshort_solution(u, p.r);
        const double zl = std::abs(p.lambda_hat.mean - a.lambda) / p.lambda_hat.se;
        const double zq = std::abs(p.q0_tilde_hat.mean - a.q0_tilde) / p.q0_tilde_hat.se;
        o.detail << " r=" << fmt(p.r) << " z_lambda=" << fmt(zl) << " z_q=" << fmt(zq) << ";";
        o.require(zl < 3.0 && zq < 3.0, "within 3 SE at r=" + fmt(p.r));
    }
}

void phase_scan(Outcome& o) {
    const auto low = zero_variance_probability({0.5}, 50, 200, kSeed, workers());
    o.detail << " P(r=0.5,N=50)=" << fmt(low[0].probability) << ";";
    o.require(low[0].probability == 0.0, "zero probability at r=0.5");
    const auto curve =
        zero_variance_probability({0.5, 1.0, 1.5, 1.75, 2.0, 2.25, 2.5}, 100, 200, kSeed, workers());
    for (std::size_t k = 0; k < curve.size(); ++k) {
        o.detail << " " << fmt(curve[k].r) << ":" << fmt(curve[k].probability);
        if (k > 0) {
            const double slack = 3.0 * std::hypot(curve[k].se, curve[k - 1].se);
            o.require(curve[k].probability >= curve[k - 1].probability - slack, "nondecreasing within noise");
        }
    }
    o.require(curve.back().probability > 0.95, "P(r=2.5, N=100) > 0.95");
}

void weight_distribution(Outcome& o) {
    SweepOptions opt;
    opt.trials = 1000;
    opt.seed = kSeed;
    opt.constraint = Constraint::NoShort;
    opt.threads = workers();
    opt.keep_weights = true;
    const auto u = AssetUniverse::uniform(100);
    const auto s = sweep({1.0}, u, opt);
    const auto mix = build_mixture(noshort_solution(u, s.points[0].r), RegularizerParams::no_short());
    const auto cmp = cli::compare_weights(s.points[0], &mix, 0.05);
    const double z = std::abs(cmp.atom_simulated - cmp.atom_analytic) / cmp.atom_se;
    o.detail << " atom " << fmt(cmp.atom_simulated) << " vs " << fmt(cmp.atom_analytic) << " (z=" << fmt(z)
             << "), L1 " << fmt(cmp.l1);
    o.require(z < 3.0, "atom within 3 SE");
    o.require(cmp.l1 < 0.05, "L1 < 0.05");
    const auto sol = noshort_solution(AssetUniverse({1.0, 2.0, 4.0}), 1.0);
    const double p0 = elimination_probability(sol, 0), p1 = elimination_probability(sol, 1),
                 p2 = elimination_probability(sol, 2);
    o.detail << "; elimination " << fmt(p0) << " < " << fmt(p1) << " < " << fmt(p2);
    o.require(p0 < p1 && p1 < p2, "elimination increases with sigma");
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void determinism(Outcome& o) {
    namespace fs = std::filesystem;
    const auto dir = fs::temp_directory_path() / "mvreplica_acceptance";
    fs::create_directories(dir);
    for (const std::string constraint : {"noshort", "equality"})
        for (const std::string format : {"csv", "json"}) {
            std::vector<std::string> outputs;
            for (int threads : {1, 2, 5}) {
                const auto path = dir / (constraint + "_" + std::to_string(threads) + "." + format);
                const std::string cmd = std::string(MVREPLICA_CLI) +
                                        " simulate --r-grid 0.5,1.1,1.8 --n 40 --trials 24 --seed 424242 --constraint " +
                                        constraint + " --format " + format + " --threads " + std::to_string(threads) +
                                        " --out " + path.string();
                o.require(std::system(cmd.c_str()) == 0, "simulate exits 0");
                outputs.push_back(slurp(path));
            }
            o.require(!outputs[0].empty(), "non-empty output");
            o.require(outputs[0] == outputs[1] && outputs[0] == outputs[2],
                      "byte-identical " + constraint + "/" + format + " output");
        }
    o.detail << " threads 1/2/5, csv and json, both constraints";
}

}  // namespace

int main() {
    criterion(1, "special-function identities", 1.0, special_functions);
    criterion(2, "unconstrained closed forms", 1.0, unconstrained);
    criterion(3, "stationarity of solver outputs", 0.0, stationarity);
    criterion(4, "no-short critical behaviour", 5.0, critical);
    criterion(5, "general l1 solver corner reductions", 0.0, corners);
    criterion(6, "QP vs brute-force enumeration", 30.0, qp_oracle);
    criterion(7, "equality-only estimation error curve", 300.0, equality_curve);
    criterion(8, "no-short lambda and estimation error curves", 600.0, noshort_curve);
    criterion(9, "zero-variance phase scan", 0.0, phase_scan);
    criterion(10, "weight distribution", 0.0, weight_distribution);
    criterion(11, "thread-count determinism of simulate", 0.0, determinism);
    std::printf("%d criteria failed\n", failures);
    return failures == 0 ? 0 : 1;
}
