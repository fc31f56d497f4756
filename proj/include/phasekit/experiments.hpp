#pragma once

// Phase-transition sweeps: repeated random recovery trials over an (m, s)
// grid, checkpointed cell by cell, plus the crossing summary and file output.

#include "phasekit/geometry.hpp"
#include "phasekit/random.hpp"
#include "phasekit/solvers.hpp"
#include "phasekit/statdim.hpp"

#include <cstdint>
#include <filesystem>
#include <limits>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace phasekit {

/// Coarse sweep over the predicted window delta +- a_zeta sqrt(n) with the
/// given stride, then every m within refine_radius of the coarse crossing.
struct AdaptiveSweep {
    double zeta = 0.5;
    Index stride = 4;
    Index refine_radius = 4;
};

struct PhaseGridConfig {
    Index n = 128;
    std::vector<Index> m_values;
    std::vector<Index> s_values;
    int trials = 20;
    ProblemVariant variant = ProblemVariant::l1_plain;
    std::uint64_t seed = 1;
    SolverParams<double> solver;
    std::optional<AdaptiveSweep> adaptive;  ///< when set, m_values are chosen per s

    void validate() const;
    /// Everything that determines a cell's result, in one line.
    std::string fingerprint() const;
};

struct CellRecord {
    int successes = 0;
    int trials_run = 0;
    int non_converged = 0;
    int redraws = 0;              ///< ill-posed draws replaced by a fresh stream
    std::uint64_t stream = 0;     ///< root of the cell's trial streams

    double probability() const { return trials_run ? double(successes) / trials_run : 0.0; }
    bool operator==(const CellRecord&) const = default;
};

struct PhaseGrid {
    PhaseGridConfig config;
    std::map<std::pair<Index, Index>, CellRecord> cells;  ///< keyed by (m, s)

    std::vector<Index> m_values() const;
    std::vector<Index> s_values() const;
    /// (m, success probability) for column s, ascending in m.
    std::vector<std::pair<Index, double>> column(Index s) const;
};

class CheckpointError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

std::uint64_t cell_stream(std::uint64_t seed, Index m, Index s);
std::uint64_t trial_stream(std::uint64_t cell, int trial, int attempt);

/// Support on the first s coordinates; N(0,1) values, absolute values for
/// the nonnegative variant.
SparseSignal<double> generate_signal(Index n, Index s, ProblemVariant variant, GaussianStream& stream);

CellRecord run_cell(const PhaseGridConfig& config, Index m, Index s);

struct GridRunOptions {
    std::filesystem::path checkpoint;  ///< empty: no checkpointing
    bool reset = false;                ///< discard an unusable checkpoint instead of refusing
    std::size_t max_new_cells = std::numeric_limits<std::size_t>::max();
};

/// Runs every (m, s) cell of the config not already present in the
/// checkpoint. With adaptive set, the m values for each s come from the sweep.
PhaseGrid run_grid(const PhaseGridConfig& config, const GridRunOptions& options = {});

enum class CrossingStatus { found, below_range, above_range };

struct Crossing {
    double m50;
    CrossingStatus status;
};

/// Weighted pool-adjacent-violators fit of success probability against m.
std::vector<double> isotonic_fit(const std::vector<double>& values, const std::vector<double>& weights);

/// First m where the isotonic fit reaches 1/2, interpolated linearly. Columns
/// entirely at or above 1/2 give min(m) - 1, entirely below give max(m) + 1.
Crossing find_crossing(const PhaseGrid& grid, Index s);

/// m values for column s under the coarse part of an adaptive sweep.
std::vector<Index> coarse_m_values(Index n, Index s, ProblemVariant variant, const AdaptiveSweep& sweep);

/// grid.csv, curve.csv and heatmap.svg in out_dir.
void emit_outputs(const PhaseGrid& grid, const std::filesystem::path& out_dir);

/// Shortest decimal that round-trips.
std::string format_number(double value);

}  // namespace phasekit
