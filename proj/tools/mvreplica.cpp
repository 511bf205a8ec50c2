// Command-line front end: replica curves, Monte Carlo sweeps, comparison,
// phase scans and weight histograms as CSV or JSON tables.

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <optional>
#include <thread>

#include "mvreplica/commands.hpp"

namespace {

using namespace mvreplica;

constexpr int kExitUsage = 2;
constexpr int kExitSolver = 3;

struct Flags {
    std::string grid = "0.1:0.9:0.1";
    std::size_t n = 100;
    std::size_t trials = 100;
    std::string sigma = "const:1";
    std::string constraint = "noshort";
    std::optional<double> eta1;
    std::string eta2;
    std::uint64_t seed = 0;
    std::string out;
    std::string format = "csv";
    unsigned threads = std::max(1u, std::thread::hardware_concurrency());
};

void add_shared(CLI::App* sub, Flags& f, bool monte_carlo) {
    sub->add_option("--r-grid", f.grid, "start:stop:step (inclusive) or comma list of r = N/T")->capture_default_str();
    sub->add_option("--n", f.n, "number of assets (ignored by file sigma specs unless it disagrees)")
        ->capture_default_str();
    sub->add_option("--sigma", f.sigma, "const:<v> | file:<path> | lognormal:<mu>,<s>,<seed>")->capture_default_str();
    sub->add_option("--out", f.out, "output path (default stdout)");
    sub->add_option("--format", f.format, "csv | json")->check(CLI::IsMember({"csv", "json"}))->capture_default_str();
    if (monte_carlo) {
        sub->add_option("--trials", f.trials, "trials per grid point")->capture_default_str();
        sub->add_option("--seed", f.seed, "master seed")->capture_default_str();
        sub->add_option("--threads", f.threads, "worker threads (results do not depend on it)")
            ->check(CLI::PositiveNumber);
    }
}

void emit(const io::Table& t, const nlohmann::json& spec, const Flags& f) {
    auto write = [&](std::ostream& os) {
        if (f.format == "json") io::write_json(os, t, spec);
        else io::write_csv(os, t, spec);
    };
    if (f.out.empty()) {
        write(std::cout);
        return;
    }
    std::ofstream os(f.out, std::ios::binary);
    if (!os) throw io::SpecError("cannot write '" + f.out + "'");
    write(os);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Replica and Monte Carlo analysis of sample minimum-variance portfolios"};
    app.require_subcommand(1);
    Flags f;
    bool snap = false;
    double bin_width = 0.05;
    bool experimental_delta = false;
    std::string analytic_path, simulation_path;
    double threshold = 3.0;

    auto* replica = app.add_subcommand("replica",
                                       "analytic curves; columns: r_target,r,status,lambda,delta,q0,q0_tilde,f,n0");
    add_shared(replica, f, false);
    replica->add_option("--constraint", f.constraint, "equality | noshort (sets the default eta2)")
        ->check(CLI::IsMember({"equality", "noshort"}));
    replica->add_option("--eta1", f.eta1, "l1 penalty on long positions");
    replica->add_option("--eta2", f.eta2, "l1 penalty on short positions; inf bans shorts");
    replica->add_flag("--snap", snap, "evaluate at r = N/round(N/r), the ratio simulate actually uses");

    auto* simulate = app.add_subcommand(
        "simulate",
        "Monte Carlo sweep; columns: r_target,r,T,trials,lambda_hat_mean,lambda_hat_se,q0_tilde_hat_mean,"
        "q0_tilde_hat_se,zero_fraction_mean,zero_fraction_se,objective_mean,objective_se,degenerate_count,"
        "zero_variance_prob,zero_variance_se[,delta_proxy_mean,delta_proxy_se]");
    add_shared(simulate, f, true);
    simulate->add_option("--constraint", f.constraint, "equality | noshort")
        ->check(CLI::IsMember({"equality", "noshort"}));
    simulate->add_flag("--experimental-delta", experimental_delta,
                       "also report a linear-response susceptibility estimate (not validated)");

    auto* compare = app.add_subcommand("compare", "z-scores of a simulate file against a replica file; columns: "
                                                  "r,metric,analytic,sim_mean,sim_se,z,verdict");
    compare->add_option("--analytic", analytic_path, "replica output (use --snap and the same --n)")->required();
    compare->add_option("--simulation", simulation_path, "simulate output")->required();
    compare->add_option("--threshold", threshold, "z-score threshold")->capture_default_str();
    compare->add_option("--out", f.out, "output path (default stdout)");
    compare->add_option("--format", f.format, "csv | json")->check(CLI::IsMember({"csv", "json"}));

    auto* phase = app.add_subcommand("phase", "no-short zero-variance probability; columns: r_target,r,N,T,trials,prob,se");
    add_shared(phase, f, true);

    auto* weights = app.add_subcommand(
        "weights", "pooled weight histogram vs analytic law; columns: r_target,r,kind,lo,hi,analytic,simulated,se");
    add_shared(weights, f, true);
    weights->add_option("--constraint", f.constraint, "equality | noshort")
        ->check(CLI::IsMember({"equality", "noshort"}));
    weights->add_option("--bin-width", bin_width, "histogram bin width")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : kExitUsage;
    }

    cli::RunSpec s;
    try {
        s.subcommand = app.get_subcommands().front()->get_name();
        s.n = f.n;
        s.trials = f.trials;
        s.sigma = f.sigma;
        s.constraint = f.constraint == "equality" ? Constraint::Equality : Constraint::NoShort;
        s.seed = f.seed;
        s.threads = f.threads;
        s.out = f.out;
        s.format = f.format;
        s.snap = snap;
        s.bin_width = bin_width;
        s.experimental_delta = experimental_delta;
        s.analytic_path = analytic_path;
        s.simulation_path = simulation_path;
        s.threshold = threshold;
        s.eta1 = f.eta1.value_or(0.0);
        if (!f.eta2.empty()) {
            const auto v = io::parse_number(f.eta2);
            if (!v || !(*v >= 0.0)) throw io::SpecError("--eta2 must be a non-negative number or inf");
            s.eta2 = *v;
        } else {
            s.eta2 = s.constraint == Constraint::Equality ? 0.0 : std::numeric_limits<double>::infinity();
        }

        if (s.subcommand == "compare") {
            const auto a = io::read_document(s.analytic_path);
            const auto m = io::read_document(s.simulation_path);
            const auto rep = cli::cmd_compare(a.table, m.table, s.threshold);
            emit(rep.table, cli::spec_json(s), f);
            return 0;
        }

        s.grid = io::parse_grid(f.grid);
        const AssetUniverse u = io::build_universe(s.sigma, s.sigma.rfind("file:", 0) == 0 ? 0 : s.n);
        s.n = u.size();
        if (s.trials < 1) throw io::SpecError("--trials must be >= 1");
        io::Table t;
        if (s.subcommand == "replica") t = cli::cmd_replica(s, u);
        else if (s.subcommand == "simulate") t = cli::cmd_simulate(s, u);
        else if (s.subcommand == "phase") t = cli::cmd_phase(s, u);
        else t = cli::cmd_weights(s, u);
        emit(t, cli::spec_json(s, &u), f);
        return 0;
    } catch (const io::SpecError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const TrialError& e) {
        std::cerr << "solver error in trial " << e.trial() << " (T = " << e.T() << ", seed = " << s.seed
                  << "): " << e.what() << '\n';
        return kExitSolver;
    } catch (const std::exception& e) {
        std::cerr << "runtime error: " << e.what() << '\n';
        return kExitSolver;
    }
}
