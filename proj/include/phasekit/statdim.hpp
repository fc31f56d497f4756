#pragma once

// Statistical-dimension predictions for l1 recovery with prior constraints:
// closed-form psi curves, Monte-Carlo evaluation and minimization of
// J(tau) = E dist^2(g, S(tau)), and the exact per-sample estimator.

#include "phasekit/geometry.hpp"

#include <cstdint>
#include <limits>
#include <variant>

namespace phasekit {

using VectorXd = Eigen::VectorXd;
using Family = SeparableFamily<double>;

/// phi(u) = sqrt(2/pi) exp(-u^2/2), the density of |g| for standard normal g.
double folded_density(double u);

struct TailMoments {
    double m0;  ///< int_tau^inf phi
    double m1;  ///< int_tau^inf u phi
    double m2;  ///< int_tau^inf u^2 phi
};

TailMoments gaussian_tail_moments(double tau);

/// int_tau^inf (u - tau)^2 phi(u) du = E max(|g| - tau, 0)^2.
double tail_sq_integral(double tau);

enum class PsiVariant { psi1, psi2 };

struct PsiPoint {
    double psi;
    double tau_star;  ///< +inf at rho = 0
};

/// rho (1 + tau^2) + w (1 - rho) tail_sq_integral(tau), with w = 1 for psi1 and
/// w = 1/2 for psi2. psi is its infimum over tau >= 0.
double psi_objective(double rho, double tau, PsiVariant variant);

/// int_tau^inf (u/tau - 1) phi(u) du, strictly decreasing on (0, inf).
double stationary_rhs(double tau);

/// stationary_rhs(tau) - c rho / (1 - rho) with c = 1 (psi1) or 2 (psi2).
double stationary_residual(double rho, double tau, PsiVariant variant);

double stationary_solve(double rho, PsiVariant variant);
PsiPoint psi_value(double rho, PsiVariant variant);

enum class ProblemVariant { l1_plain, l1_l2ball, l1_nonneg };

struct Bracket {
    double lower;
    double upper;
};

/// Deterministic bracket on delta for an s-sparse signal in dimension n.
Bracket statdim_bounds(Index s, Index n, ProblemVariant variant);

struct TransitionWindow {
    double delta;
    Index n;
    double zeta;
    double m_low;
    double m_high;

    double half_width() const { return 0.5 * (m_high - m_low); }
};

/// a_zeta = sqrt(8 log(4 / zeta)); the window is delta +- a_zeta sqrt(n).
TransitionWindow transition_window(double delta, Index n, double zeta);

struct StdError {
    double se;
    std::size_t n_samples;
};

enum class StatDimMethod { closed_form_psi1, closed_form_psi2, mc_recipe, mc_exact };

struct StatDimEstimate {
    double value = 0;
    VectorXd tau_star;
    StatDimMethod method = StatDimMethod::mc_recipe;
    std::variant<Bracket, StdError> uncertainty;
    bool converged = true;
    int iterations = 0;

    double std_error() const {
        if (const auto* e = std::get_if<StdError>(&uncertainty)) return e->se;
        return 0;
    }
};

/// n psi(s/n) with its tau* and the bracket from statdim_bounds.
StatDimEstimate closed_form_statdim(Index s, Index n, ProblemVariant variant);

// --- Monte Carlo -----------------------------------------------------------

/// Samples are drawn in fixed-size chunks; chunk c uses the stream derived
/// from (seed, c), so results do not depend on the worker count.
inline constexpr std::size_t kSampleChunk = 4096;

struct McValue {
    double mean;
    double std_error;
    std::size_t samples;
};

struct McGradient {
    VectorXd grad;
    VectorXd std_error;
    McValue value;
};

McValue mc_j(const Family& family, const VectorXd& tau, std::size_t samples, std::uint64_t seed);
McGradient mc_j_gradient(const Family& family, const VectorXd& tau, std::size_t samples, std::uint64_t seed);

struct MinimizeOptions {
    int max_iters = 500;
    double step = 0;      ///< 0 selects 1 / (2n)
    double grad_tol = 0;  ///< 0 selects 1e-4 n
    VectorXd tau0;        ///< empty selects all ones
};

/// Minimizes the sample-average J over tau >= 0 with common random numbers.
/// One scalable set: golden-section search. Several: projected gradient with
/// backtracking.
StatDimEstimate minimize_j(const Family& family, std::size_t samples, std::uint64_t seed,
                           const MinimizeOptions& opts = {});

/// E[inf_tau dist^2(g, S(tau))], which equals delta of the prior restricted
/// cone. Supports at most two scalable sets.
StatDimEstimate mc_statdim_exact(const Family& family, std::size_t samples, std::uint64_t seed);

const char* to_string(StatDimMethod method);
const char* to_string(ProblemVariant variant);

}  // namespace phasekit
