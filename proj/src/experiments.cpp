#include "phasekit/experiments.hpp"

#include "phasekit/parallel.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <mutex>
#include <set>
#include <sstream>

namespace phasekit {

namespace {

const char* kCheckpointHeader = "phasekit-checkpoint v1";

std::vector<Index> sorted_unique(std::vector<Index> v) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
    return v;
}

}  // namespace

std::string format_number(double value) {
    if (std::isnan(value)) return "nan";
    if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, value);
    return std::string(buf, res.ptr);
}

void PhaseGridConfig::validate() const {
    if (n < 1) throw std::invalid_argument("n must be positive");
    if (trials < 1) throw std::invalid_argument("trials must be at least 1");
    if (s_values.empty()) throw std::invalid_argument("s_values is empty");
    if (m_values.empty() && !adaptive) throw std::invalid_argument("m_values is empty");
    for (Index m : m_values)
        if (m < 1 || m > n) throw std::invalid_argument("m values must lie in [1, n]");
    for (Index s : s_values)
        if (s < 1 || s > n) throw std::invalid_argument("s values must lie in [1, n]");
    if (adaptive && (adaptive->stride < 1 || adaptive->refine_radius < 0))
        throw std::invalid_argument("adaptive sweep needs stride >= 1 and refine_radius >= 0");
}

std::string PhaseGridConfig::fingerprint() const {
    std::ostringstream out;
    out << "n=" << n << " trials=" << trials << " variant=" << to_string(variant) << " seed=" << seed
        << " rho=" << format_number(solver.rho_penalty) << " max_iters=" << solver.max_iters
        << " feas_tol=" << format_number(solver.feas_tol) << " obj_tol=" << format_number(solver.obj_tol)
        << " polish=" << solver.polish_every << " relax=" << format_number(solver.relaxation)
        << " adapt=" << solver.adapt_every;
    return out.str();
}

std::vector<Index> PhaseGrid::m_values() const {
    std::vector<Index> out;
    for (const auto& [key, cell] : cells) out.push_back(key.first);
    return sorted_unique(std::move(out));
}

std::vector<Index> PhaseGrid::s_values() const {
    std::vector<Index> out;
    for (const auto& [key, cell] : cells) out.push_back(key.second);
    return sorted_unique(std::move(out));
}

std::vector<std::pair<Index, double>> PhaseGrid::column(Index s) const {
    std::vector<std::pair<Index, double>> out;
    for (const auto& [key, cell] : cells)
        if (key.second == s) out.emplace_back(key.first, cell.probability());
    return out;
}

std::uint64_t cell_stream(std::uint64_t seed, Index m, Index s) {
    return derive_stream(seed, {static_cast<std::uint64_t>(m), static_cast<std::uint64_t>(s)});
}

std::uint64_t trial_stream(std::uint64_t cell, int trial, int attempt) {
    return derive_stream(cell, {static_cast<std::uint64_t>(trial), static_cast<std::uint64_t>(attempt)});
}

SparseSignal<double> generate_signal(Index n, Index s, ProblemVariant variant, GaussianStream& stream) {
    if (s < 1 || s > n) throw std::invalid_argument("generate_signal needs 1 <= s <= n");
    const bool nonneg = variant == ProblemVariant::l1_nonneg;
    VectorXd x = VectorXd::Zero(n);
    for (Index i = 0; i < s; ++i) {
        double v = stream.next();
        while (v == 0.0) v = stream.next();
        x[i] = nonneg ? std::fabs(v) : v;
    }
    return SparseSignal<double>(std::move(x), nonneg ? SignalVariant::nonnegative : SignalVariant::signed_values);
}

CellRecord run_cell(const PhaseGridConfig& config, Index m, Index s) {
    if (m < 1 || m > config.n || s < 1 || s > config.n) throw std::invalid_argument("cell outside [1, n]");
    CellRecord rec;
    rec.stream = cell_stream(config.seed, m, s);
    for (int t = 0; t < config.trials; ++t) {
        for (int attempt = 0;; ++attempt) {
            GaussianStream rng(trial_stream(rec.stream, t, attempt));
            const auto signal = generate_signal(config.n, s, config.variant, rng);
            Matrix<double> A(m, config.n);
            rng.fill(A);
            RecoveryProblem<double> problem{A, A * signal.values(), {}, config.variant == ProblemVariant::l1_nonneg};
            if (config.variant == ProblemVariant::l1_l2ball) problem.l2_radius = signal.values().norm();
            try {
                const auto result = solve_recovery(problem, config.solver);
                if (result.status != SolveStatus::converged)
                    ++rec.non_converged;
                else if (check_success(result.x_hat, signal.values()))
                    ++rec.successes;
            } catch (const IllPosedError&) {
                ++rec.redraws;
                if (attempt >= 16) throw;
                continue;
            }
            break;
        }
        ++rec.trials_run;
    }
    return rec;
}

std::vector<Index> coarse_m_values(Index n, Index s, ProblemVariant variant, const AdaptiveSweep& sweep) {
    const auto bounds = statdim_bounds(s, n, variant);
    const auto window = transition_window(bounds.upper, n, sweep.zeta);
    const Index lo = std::max<Index>(1, static_cast<Index>(std::floor(std::min(window.m_low, bounds.lower))));
    const Index hi = std::min<Index>(n, static_cast<Index>(std::ceil(window.m_high)));
    std::vector<Index> out;
    for (Index m = lo; m <= hi; m += sweep.stride) out.push_back(m);
    if (out.back() != hi) out.push_back(hi);
    return out;
}

namespace {

struct Checkpoint {
    std::filesystem::path path;
    std::string fingerprint;

    std::map<std::pair<Index, Index>, CellRecord> load(bool reset) const {
        std::map<std::pair<Index, Index>, CellRecord> cells;
        if (path.empty() || !std::filesystem::exists(path)) return cells;
        std::ifstream in(path);
        std::string line;
        const auto refuse = [&](const std::string& why) -> std::map<std::pair<Index, Index>, CellRecord> {
            if (reset) return {};
            throw CheckpointError("checkpoint " + path.string() + ": " + why + " (pass reset to discard it)");
        };
        if (!in) return refuse("unreadable");
        if (!std::getline(in, line) || line != kCheckpointHeader) return refuse("missing version header");
        if (!std::getline(in, line) || line != "config " + fingerprint) return refuse("written for a different configuration");
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            std::istringstream fields(line);
            std::string tag;
            Index m = 0, s = 0;
            CellRecord rec;
            if (!(fields >> tag >> m >> s >> rec.successes >> rec.trials_run >> rec.non_converged >> rec.redraws >>
                  rec.stream) ||
                tag != "cell" || rec.successes < 0 || rec.successes > rec.trials_run)
                return refuse("corrupt cell line '" + line + "'");
            cells[{m, s}] = rec;
        }
        return cells;
    }

    void save(const std::map<std::pair<Index, Index>, CellRecord>& cells) const {
        if (path.empty()) return;
        auto tmp = path;
        tmp += ".tmp";
        {
            std::ofstream out(tmp, std::ios::trunc);
            out << kCheckpointHeader << '\n' << "config " << fingerprint << '\n';
            for (const auto& [key, r] : cells)
                out << "cell " << key.first << ' ' << key.second << ' ' << r.successes << ' ' << r.trials_run << ' '
                    << r.non_converged << ' ' << r.redraws << ' ' << r.stream << '\n';
            if (!out) throw CheckpointError("cannot write checkpoint " + tmp.string());
        }
        std::filesystem::rename(tmp, path);
    }
};

// Runs the missing cells among `wanted`; returns false when the new-cell
// budget ran out first.
bool run_missing(PhaseGrid& grid, const std::vector<std::pair<Index, Index>>& wanted, const Checkpoint& ckpt,
                 std::size_t& budget) {
    std::vector<std::pair<Index, Index>> pending;
    for (const auto& key : wanted)
        if (!grid.cells.count(key)) pending.push_back(key);
    const bool complete = pending.size() <= budget;
    if (!complete) pending.resize(budget);
    budget -= pending.size();

    std::mutex writer;
    parallel_for(pending.size(), [&](std::size_t i) {
        const auto [m, s] = pending[i];
        const auto rec = run_cell(grid.config, m, s);
        const std::lock_guard lock(writer);
        grid.cells[{m, s}] = rec;
        ckpt.save(grid.cells);
    });
    return complete;
}

}  // namespace

PhaseGrid run_grid(const PhaseGridConfig& config, const GridRunOptions& options) {
    config.validate();
    PhaseGrid grid{config, {}};
    const Checkpoint ckpt{options.checkpoint, config.fingerprint()};
    grid.cells = ckpt.load(options.reset);
    ckpt.save(grid.cells);
    std::size_t budget = options.max_new_cells;

    std::vector<std::pair<Index, Index>> wanted;
    for (Index s : config.s_values) {
        const auto ms = config.adaptive ? coarse_m_values(config.n, s, config.variant, *config.adaptive) : config.m_values;
        for (Index m : ms) wanted.emplace_back(m, s);
    }
    const bool complete = run_missing(grid, wanted, ckpt, budget);

    if (config.adaptive && complete) {
        wanted.clear();
        const Index r = config.adaptive->refine_radius;
        for (Index s : config.s_values) {
            const double c = find_crossing(grid, s).m50;
            const auto centre = static_cast<Index>(std::lround(c));
            for (Index m = std::max<Index>(1, centre - r); m <= std::min(config.n, centre + r); ++m)
                wanted.emplace_back(m, s);
        }
        run_missing(grid, wanted, ckpt, budget);
    }

    // Cells from the checkpoint outside this config do not belong in the result.
    if (!config.adaptive) {
        const std::set<Index> ms(config.m_values.begin(), config.m_values.end());
        const std::set<Index> ss(config.s_values.begin(), config.s_values.end());
        std::erase_if(grid.cells, [&](const auto& kv) { return !ms.count(kv.first.first) || !ss.count(kv.first.second); });
    } else {
        const std::set<Index> ss(config.s_values.begin(), config.s_values.end());
        std::erase_if(grid.cells, [&](const auto& kv) { return !ss.count(kv.first.second); });
    }
    return grid;
}

std::vector<double> isotonic_fit(const std::vector<double>& values, const std::vector<double>& weights) {
    if (values.size() != weights.size()) throw std::invalid_argument("isotonic_fit: length mismatch");
    struct Block {
        double mean, weight;
        std::size_t count;
    };
    std::vector<Block> blocks;
    for (std::size_t i = 0; i < values.size(); ++i) {
        blocks.push_back({values[i], weights[i], 1});
        while (blocks.size() > 1 && blocks[blocks.size() - 2].mean > blocks.back().mean) {
            const Block b = blocks.back();
            blocks.pop_back();
            Block& a = blocks.back();
            const double w = a.weight + b.weight;
            a.mean = w > 0 ? (a.mean * a.weight + b.mean * b.weight) / w : 0.5 * (a.mean + b.mean);
            a.weight = w;
            a.count += b.count;
        }
    }
    std::vector<double> fit;
    for (const auto& b : blocks) fit.insert(fit.end(), b.count, b.mean);
    return fit;
}

Crossing find_crossing(const PhaseGrid& grid, Index s) {
    std::vector<double> ms, p, w;
    for (const auto& [key, cell] : grid.cells) {
        if (key.second != s) continue;
        ms.push_back(static_cast<double>(key.first));
        p.push_back(cell.probability());
        w.push_back(cell.trials_run);
    }
    if (ms.size() < 2) throw std::invalid_argument("find_crossing needs at least two m values in the column");
    const auto fit = isotonic_fit(p, w);
    if (fit.front() >= 0.5) return {ms.front() - 1, CrossingStatus::below_range};
    if (fit.back() < 0.5) return {ms.back() + 1, CrossingStatus::above_range};
    std::size_t i = 1;
    while (fit[i] < 0.5) ++i;
    const double t = (0.5 - fit[i - 1]) / (fit[i] - fit[i - 1]);
    return {ms[i - 1] + t * (ms[i] - ms[i - 1]), CrossingStatus::found};
}

namespace {

// Vertical position of a (possibly fractional) m given row centres for the
// sorted m values, interpolating between rows and clamping at the ends.
double row_position(const std::vector<Index>& ms, double m, double height, double top) {
    const double cell = height / static_cast<double>(ms.size());
    const auto y_of = [&](std::size_t j) { return top + height - (static_cast<double>(j) + 0.5) * cell; };
    if (m <= static_cast<double>(ms.front())) return y_of(0);
    for (std::size_t j = 1; j < ms.size(); ++j) {
        if (m <= static_cast<double>(ms[j])) {
            const double t = (m - ms[j - 1]) / static_cast<double>(ms[j] - ms[j - 1]);
            return y_of(j - 1) + t * (y_of(j) - y_of(j - 1));
        }
    }
    return y_of(ms.size() - 1);
}

void write_svg(const PhaseGrid& grid, std::ostream& out) {
    const auto ms = grid.m_values();
    const auto ss = grid.s_values();
    const double left = 50, top = 20, width = 600, height = 600;
    const double cw = width / static_cast<double>(ss.size()), ch = height / static_cast<double>(ms.size());

    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << left + width + 20 << "\" height=\""
        << top + height + 50 << "\">\n";
    out << "<g id=\"cells\" shape-rendering=\"crispEdges\">\n";
    for (std::size_t j = 0; j < ms.size(); ++j) {
        for (std::size_t i = 0; i < ss.size(); ++i) {
            const double x = left + static_cast<double>(i) * cw;
            const double y = top + height - static_cast<double>(j + 1) * ch;
            out << "<rect x=\"" << format_number(x) << "\" y=\"" << format_number(y) << "\" width=\""
                << format_number(cw) << "\" height=\"" << format_number(ch) << "\"";
            const auto it = grid.cells.find({ms[j], ss[i]});
            if (it == grid.cells.end()) {
                out << " fill=\"none\"/>\n";
                continue;
            }
            const int level = static_cast<int>(std::lround(255 * it->second.probability()));
            out << " fill=\"rgb(" << level << ',' << level << ',' << level << ")\"><title>m=" << ms[j]
                << " s=" << ss[i] << " p=" << format_number(it->second.probability()) << "</title></rect>\n";
        }
    }
    out << "</g>\n<polyline id=\"theory\" fill=\"none\" stroke=\"red\" stroke-width=\"2\" points=\"";
    for (std::size_t i = 0; i < ss.size(); ++i) {
        const double m = statdim_bounds(ss[i], grid.config.n, grid.config.variant).upper;
        out << (i ? " " : "") << format_number(left + (static_cast<double>(i) + 0.5) * cw) << ','
            << format_number(row_position(ms, m, height, top));
    }
    out << "\"/>\n";
    out << "<text x=\"" << left + width / 2 << "\" y=\"" << top + height + 35 << "\" text-anchor=\"middle\">s</text>\n";
    out << "<text x=\"15\" y=\"" << top + height / 2 << "\" text-anchor=\"middle\">m</text>\n";
    out << "</svg>\n";
}

}  // namespace

void emit_outputs(const PhaseGrid& grid, const std::filesystem::path& out_dir) {
    if (grid.cells.empty()) throw std::invalid_argument("emit_outputs: grid is empty");
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    const auto open = [&](const char* name) {
        std::ofstream f(out_dir / name, std::ios::trunc);
        if (!f) throw std::runtime_error("cannot write " + (out_dir / name).string());
        return f;
    };

    auto csv = open("grid.csv");
    csv << "m,s,successes,trials,non_converged\n";
    for (const auto& [key, c] : grid.cells)
        csv << key.first << ',' << key.second << ',' << c.successes << ',' << c.trials_run << ',' << c.non_converged
            << '\n';

    auto curve = open("curve.csv");
    curve << "s,m_theory_upper,m_theory_lower,m50_empirical\n";
    for (Index s : grid.s_values()) {
        const auto b = statdim_bounds(s, grid.config.n, grid.config.variant);
        const auto col = grid.column(s);
        const double m50 = col.size() >= 2 ? find_crossing(grid, s).m50 : std::nan("");
        curve << s << ',' << format_number(b.upper) << ',' << format_number(b.lower) << ',' << format_number(m50)
              << '\n';
    }

    auto svg = open("heatmap.svg");
    write_svg(grid, svg);
    if (!csv || !curve || !svg) throw std::runtime_error("failed writing outputs to " + out_dir.string());
}

}  // namespace phasekit
