#include "phasekit/cli.hpp"

#include "phasekit/experiments.hpp"
#include "phasekit/keyvalue.hpp"
#include "phasekit/parallel.hpp"
#include "phasekit/solvers.hpp"
#include "phasekit/statdim.hpp"
#include "phasekit/verify.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>

namespace phasekit {

namespace {

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

const std::map<std::string, ProblemVariant> kVariants{{"l1_plain", ProblemVariant::l1_plain},
                                                      {"l1_l2ball", ProblemVariant::l1_l2ball},
                                                      {"l1_nonneg", ProblemVariant::l1_nonneg}};

ProblemVariant parse_variant(const std::string& name) {
    const auto it = kVariants.find(name);
    if (it == kVariants.end()) throw UsageError("unknown variant '" + name + "' (l1_plain, l1_l2ball, l1_nonneg)");
    return it->second;
}

std::vector<double> parse_grid(const std::string& text) {
    const auto a = text.find(':'), b = text.find(':', a == std::string::npos ? a : a + 1);
    if (a == std::string::npos || b == std::string::npos) throw UsageError("grid must look like lo:hi:count");
    double lo = 0, hi = 0;
    long count = 0;
    try {
        std::size_t used = 0;
        lo = std::stod(text.substr(0, a), &used);
        if (used != a) throw UsageError("");
        hi = std::stod(text.substr(a + 1, b - a - 1), &used);
        if (used != b - a - 1) throw UsageError("");
        count = std::stol(text.substr(b + 1), &used);
        if (used != text.size() - b - 1) throw UsageError("");
    } catch (const std::exception&) {
        throw UsageError("grid must look like lo:hi:count");
    }
    if (!(lo >= 0 && hi <= 1 && lo <= hi) || count < 1 || (count == 1 && lo != hi))
        throw UsageError("grid needs 0 <= lo <= hi <= 1 and a positive count");
    std::vector<double> out;
    for (long i = 0; i < count; ++i)
        out.push_back(count == 1 ? lo : lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(count - 1));
    out.back() = hi;
    return out;
}

std::string join(const VectorXd& v) {
    std::string s;
    for (Index i = 0; i < v.size(); ++i) s += (i ? " " : "") + format_number(v[i]);
    return s;
}

void write_or_print(const std::string& path, const std::string& text, std::ostream& out) {
    if (path.empty() || path == "-") {
        out << text;
        return;
    }
    std::ofstream f(path, std::ios::trunc);
    if (!f || !(f << text)) throw UsageError("cannot write " + path);
}

// --- subcommands -------------------------------------------------------------

struct CurveArgs {
    std::string variant;
    std::string grid = "0.01:0.99:99";
    std::string out;
};

int cmd_curve(const CurveArgs& a, std::ostream& out) {
    if (a.variant != "psi1" && a.variant != "psi2") throw UsageError("--variant must be psi1 or psi2");
    const auto v = a.variant == "psi1" ? PsiVariant::psi1 : PsiVariant::psi2;
    std::string text = "rho,psi,tau_star\n";
    for (double rho : parse_grid(a.grid)) {
        const auto p = psi_value(rho, v);
        text += format_number(rho) + "," + format_number(p.psi) + "," + format_number(p.tau_star) + "\n";
    }
    write_or_print(a.out, text, out);
    return kExitOk;
}

struct StatdimArgs {
    Index n = 128;
    Index s = 16;
    std::string variant = "l1_plain";
    std::string method = "closed_form";
    std::size_t samples = 100000;
    std::uint64_t seed = 1;
};

int cmd_statdim(const StatdimArgs& a, std::ostream& out) {
    if (a.n < 1 || a.s < 1 || a.s > a.n) throw UsageError("need 1 <= s <= n");
    if (a.samples < 2) throw UsageError("--samples must be at least 2");
    const auto variant = parse_variant(a.variant);
    StatDimEstimate est;
    if (a.method == "closed_form") {
        est = closed_form_statdim(a.s, a.n, variant);
    } else if (a.method == "mc_recipe" || a.method == "mc_exact") {
        GaussianStream rng(derive_stream(a.seed, {static_cast<std::uint64_t>(a.n), static_cast<std::uint64_t>(a.s)}));
        const auto signal = generate_signal(a.n, a.s, variant, rng);
        std::vector<Constraint> cons;
        if (variant == ProblemVariant::l1_l2ball) cons.push_back(Constraint::l2_ball);
        if (variant == ProblemVariant::l1_nonneg) cons.push_back(Constraint::nonneg);
        const auto family = build_family(signal, Objective::l1, cons);
        est = a.method == "mc_recipe" ? minimize_j(family, a.samples, a.seed) : mc_statdim_exact(family, a.samples, a.seed);
    } else {
        throw UsageError("--method must be closed_form, mc_recipe or mc_exact");
    }
    out << "method = " << to_string(est.method) << "\n";
    out << "variant = " << to_string(variant) << "\n";
    out << "value = " << format_number(est.value) << "\n";
    out << "tau_star = " << join(est.tau_star) << "\n";
    if (const auto* b = std::get_if<Bracket>(&est.uncertainty)) {
        out << "bracket = " << format_number(b->lower) << " " << format_number(b->upper) << "\n";
    } else {
        const auto& e = std::get<StdError>(est.uncertainty);
        out << "std_error = " << format_number(e.se) << "\n";
        out << "samples = " << e.n_samples << "\n";
    }
    out << "converged = " << (est.converged ? "true" : "false") << "\n";
    return kExitOk;
}

struct SolveArgs {
    std::string problem;
    double rho = 1;
    int max_iters = 50000;
    std::string out;
};

int cmd_solve(const SolveArgs& a, std::ostream& out) {
    if (!(a.rho > 0) || a.max_iters < 1) throw UsageError("--rho must be positive and --max-iters at least 1");
    const auto kv = KeyValueFile::load(a.problem);
    const auto m = kv.get_int("m"), n = kv.get_int("n");
    if (m < 1 || n < 1) throw UsageError(a.problem + ": m and n must be positive");
    const auto entries = kv.get_doubles("A");
    const auto y = kv.get_doubles("y");
    if (static_cast<std::int64_t>(entries.size()) != m * n) throw UsageError(a.problem + ": A needs m*n entries");
    if (static_cast<std::int64_t>(y.size()) != m) throw UsageError(a.problem + ": y needs m entries");

    RecoveryProblem<double> problem;
    problem.A = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(entries.data(), m, n);
    problem.y = Eigen::Map<const VectorXd>(y.data(), m);
    if (kv.has("l2_radius")) problem.l2_radius = kv.get_double("l2_radius");
    if (kv.has("nonneg")) problem.nonneg = kv.get_bool("nonneg");
    std::optional<VectorXd> x_star;
    if (kv.has("x_star")) {
        const auto xs = kv.get_doubles("x_star");
        if (static_cast<std::int64_t>(xs.size()) != n) throw UsageError(a.problem + ": x_star needs n entries");
        x_star = Eigen::Map<const VectorXd>(xs.data(), n);
    }
    kv.reject_unused();

    SolverParams<double> params;
    params.rho_penalty = a.rho;
    params.max_iters = a.max_iters;
    const auto r = solve_recovery(problem, params);

    std::string text;
    text += std::string("status = ") + (r.status == SolveStatus::converged ? "converged" : "max_iters") + "\n";
    text += "iterations = " + std::to_string(r.iterations) + "\n";
    text += "primal_residual = " + format_number(r.primal_residual) + "\n";
    text += "dual_residual = " + format_number(r.dual_residual) + "\n";
    text += "objective = " + format_number(r.x_hat.lpNorm<1>()) + "\n";
    if (x_star) text += std::string("success = ") + (check_success<double>(r.x_hat, *x_star) ? "true" : "false") + "\n";
    text += "x_hat = " + join(r.x_hat) + "\n";
    write_or_print(a.out, text, out);
    return r.status == SolveStatus::converged ? kExitOk : kExitNotConverged;
}

PhaseGridConfig load_grid_config(const std::string& path) {
    const auto kv = KeyValueFile::load(path);
    PhaseGridConfig c;
    const auto to_index = [](const std::vector<std::int64_t>& v) { return std::vector<Index>(v.begin(), v.end()); };
    c.n = kv.get_int("n");
    c.s_values = to_index(kv.get_int_list("s_values"));
    if (kv.has("m_values")) c.m_values = to_index(kv.get_int_list("m_values"));
    c.trials = static_cast<int>(kv.get_int("trials"));
    c.variant = parse_variant(kv.get_string("variant"));
    c.seed = kv.get_uint("seed");
    if (kv.has("rho")) c.solver.rho_penalty = kv.get_double("rho");
    if (kv.has("max_iters")) c.solver.max_iters = static_cast<int>(kv.get_int("max_iters"));
    if (kv.has("feas_tol")) c.solver.feas_tol = kv.get_double("feas_tol");
    if (kv.has("obj_tol")) c.solver.obj_tol = kv.get_double("obj_tol");
    if (kv.has("adaptive") && kv.get_bool("adaptive")) {
        AdaptiveSweep sweep;
        if (kv.has("adaptive_zeta")) sweep.zeta = kv.get_double("adaptive_zeta");
        if (kv.has("adaptive_stride")) sweep.stride = kv.get_int("adaptive_stride");
        if (kv.has("adaptive_refine")) sweep.refine_radius = kv.get_int("adaptive_refine");
        c.adaptive = sweep;
    }
    kv.reject_unused();
    c.validate();
    return c;
}

struct GridArgs {
    std::string config;
    std::string out;
    bool resume = false;
    bool reset = false;
};

int cmd_grid(const GridArgs& a, std::ostream& out) {
    const auto config = load_grid_config(a.config);
    const std::filesystem::path dir(a.out);
    std::filesystem::create_directories(dir);
    GridRunOptions opts;
    opts.checkpoint = dir / "checkpoint.txt";
    opts.reset = a.reset;
    if (std::filesystem::exists(opts.checkpoint) && !a.resume && !a.reset)
        throw UsageError(opts.checkpoint.string() + " exists; pass --resume to continue or --reset to start over");
    if (a.reset) std::filesystem::remove(opts.checkpoint);

    const auto grid = run_grid(config, opts);
    emit_outputs(grid, dir);
    int non_converged = 0;
    for (const auto& [key, cell] : grid.cells) non_converged += cell.non_converged;
    out << "cells = " << grid.cells.size() << "\n";
    out << "non_converged = " << non_converged << "\n";
    for (Index s : grid.s_values()) {
        const auto b = statdim_bounds(s, config.n, config.variant);
        out << "s = " << s << "  m_theory = " << format_number(b.upper);
        if (grid.column(s).size() >= 2) out << "  m50 = " << format_number(find_crossing(grid, s).m50);
        out << "\n";
    }
    return kExitOk;
}

int cmd_verify(bool fast, std::ostream& out) {
    bool ok = true;
    for (const auto& c : run_verification(fast)) {
        out << (c.passed ? "PASS " : "FAIL ") << c.name;
        if (!c.detail.empty()) out << " (" << c.detail << ")";
        out << "\n";
        ok = ok && c.passed;
    }
    return ok ? kExitOk : kExitVerifyFailed;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"phasekit: phase transitions of l1 recovery with prior constraints"};
    app.require_subcommand(1);
    std::size_t workers = 0;
    app.add_option("--workers", workers, "worker threads (default: PHASEKIT_WORKERS or logical cores)")
        ->check(CLI::PositiveNumber);

    CurveArgs curve;
    auto* c = app.add_subcommand("curve", "tabulate psi over a grid of sparsity ratios");
    c->add_option("--variant", curve.variant, "psi1 or psi2")->required();
    c->add_option("--grid", curve.grid, "lo:hi:count")->capture_default_str();
    c->add_option("--out", curve.out, "output CSV (stdout when omitted)");

    StatdimArgs sd;
    auto* d = app.add_subcommand("statdim", "estimate the statistical dimension for an s-sparse signal");
    d->add_option("--n", sd.n)->capture_default_str();
    d->add_option("--s", sd.s)->capture_default_str();
    d->add_option("--variant", sd.variant, "l1_plain, l1_l2ball or l1_nonneg")->capture_default_str();
    d->add_option("--method", sd.method, "closed_form, mc_recipe or mc_exact")->capture_default_str();
    d->add_option("--samples", sd.samples)->capture_default_str();
    d->add_option("--seed", sd.seed)->capture_default_str();

    SolveArgs sv;
    auto* s = app.add_subcommand("solve", "solve one recovery problem from a key = value file");
    s->add_option("--problem", sv.problem)->required();
    s->add_option("--rho", sv.rho)->capture_default_str();
    s->add_option("--max-iters", sv.max_iters)->capture_default_str();
    s->add_option("--out", sv.out, "result file (stdout when omitted)");

    GridArgs gr;
    auto* g = app.add_subcommand("grid", "run a checkpointed (m, s) sweep");
    g->add_option("--config", gr.config)->required();
    g->add_option("--out", gr.out)->required();
    g->add_flag("--resume", gr.resume, "continue from the checkpoint in --out");
    g->add_flag("--reset", gr.reset, "discard any existing checkpoint");

    bool fast = false;
    auto* v = app.add_subcommand("verify", "run the oracle cross-checks");
    v->add_flag("--fast", fast, "smaller sample sizes");

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "phasekit: " << e.what() << "\n";
        return kExitUsage;
    }

    if (workers > 0) set_worker_count(workers);
    try {
        if (*c) return cmd_curve(curve, out);
        if (*d) return cmd_statdim(sd, out);
        if (*s) return cmd_solve(sv, out);
        if (*g) return cmd_grid(gr, out);
        if (*v) return cmd_verify(fast, out);
    } catch (const std::exception& e) {
        err << "phasekit: " << e.what() << "\n";
        return kExitUsage;
    }
    return kExitUsage;
}

}  // namespace phasekit
