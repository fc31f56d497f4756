#include "phasekit/statdim.hpp"

#include "phasekit/numeric.hpp"
#include "phasekit/parallel.hpp"
#include "phasekit/random.hpp"

#include <array>
#include <cmath>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <vector>

namespace phasekit {

// --- closed forms ----------------------------------------------------------

double folded_density(double u) {
    return std::sqrt(2.0 / std::numbers::pi) * std::exp(-0.5 * u * u);
}

// With phi the folded density: int_tau^inf phi = erfc(tau/sqrt2),
// int_tau^inf u phi = phi(tau), and integrating u * (u phi) by parts gives
// int_tau^inf u^2 phi = tau phi(tau) + erfc(tau/sqrt2).
TailMoments gaussian_tail_moments(double tau) {
    if (!(tau >= 0)) throw std::invalid_argument("tail moments need tau >= 0");
    if (std::isinf(tau)) return {0, 0, 0};
    const double m0 = std::erfc(tau / std::numbers::sqrt2);
    const double p = folded_density(tau);
    return {m0, p, tau * p + m0};
}

double tail_sq_integral(double tau) {
    const auto m = gaussian_tail_moments(tau);
    return (1 + tau * tau) * m.m0 - tau * m.m1;
}

namespace {

double tail_weight(PsiVariant variant) { return variant == PsiVariant::psi1 ? 1.0 : 0.5; }

void check_rho(double rho) {
    if (!(rho >= 0 && rho <= 1)) throw std::invalid_argument("rho must lie in [0, 1]");
}

}  // namespace

double psi_objective(double rho, double tau, PsiVariant variant) {
    check_rho(rho);
    return rho * (1 + tau * tau) + tail_weight(variant) * (1 - rho) * tail_sq_integral(tau);
}

double stationary_rhs(double tau) {
    if (!(tau > 0)) throw std::invalid_argument("stationary equation needs tau > 0");
    const auto m = gaussian_tail_moments(tau);
    return m.m1 / tau - m.m0;
}

double stationary_residual(double rho, double tau, PsiVariant variant) {
    const double c = variant == PsiVariant::psi1 ? 1.0 : 2.0;
    return stationary_rhs(tau) - c * rho / (1 - rho);
}

double stationary_solve(double rho, PsiVariant variant) {
    if (!(rho > 0 && rho < 1)) throw std::invalid_argument("stationary equation needs rho in (0, 1)");
    auto h = [&](double tau) { return stationary_residual(rho, tau, variant); };

    double lo = 1e-8, hi = 1.0;
    while (h(lo) < 0) {
        lo *= 0.5;
        if (lo < 1e-300) throw std::domain_error("stationary equation: rho too close to 1");
    }
    int doublings = 0;
    while (h(hi) > 0) {
        if (++doublings > 64) throw std::domain_error("stationary equation: no sign change");
        lo = hi;
        hi *= 2;
    }
    return numeric::brent_root(h, lo, hi, 1e-15);
}

PsiPoint psi_value(double rho, PsiVariant variant) {
    check_rho(rho);
    if (rho == 0) return {0.0, std::numeric_limits<double>::infinity()};
    if (rho == 1) return {1.0, 0.0};
    const double tau = stationary_solve(rho, variant);
    return {psi_objective(rho, tau, variant), tau};
}

Bracket statdim_bounds(Index s, Index n, ProblemVariant variant) {
    if (n < 1 || s < 1 || s > n) throw std::invalid_argument("statdim bounds need 1 <= s <= n");
    const double rho = static_cast<double>(s) / static_cast<double>(n);
    const auto which = variant == ProblemVariant::l1_nonneg ? PsiVariant::psi2 : PsiVariant::psi1;
    const double upper = static_cast<double>(n) * psi_value(rho, which).psi;
    double slack = 2 * std::sqrt(static_cast<double>(n) / static_cast<double>(s));
    if (variant == ProblemVariant::l1_l2ball) slack += 0.5;
    return {std::max(0.0, upper - slack), upper};
}

TransitionWindow transition_window(double delta, Index n, double zeta) {
    if (!(zeta > 0 && zeta <= 4)) throw std::invalid_argument("zeta must lie in (0, 4]");
    if (n < 1 || !(delta >= 0 && delta <= static_cast<double>(n)))
        throw std::invalid_argument("delta must lie in [0, n]");
    const double half = std::sqrt(8 * std::log(4 / zeta)) * std::sqrt(static_cast<double>(n));
    return {delta, n, zeta, delta - half, delta + half};
}

StatDimEstimate closed_form_statdim(Index s, Index n, ProblemVariant variant) {
    const auto bracket = statdim_bounds(s, n, variant);
    const auto which = variant == ProblemVariant::l1_nonneg ? PsiVariant::psi2 : PsiVariant::psi1;
    const auto p = psi_value(static_cast<double>(s) / static_cast<double>(n), which);

    StatDimEstimate est;
    est.value = bracket.upper;
    est.method = which == PsiVariant::psi1 ? StatDimMethod::closed_form_psi1 : StatDimMethod::closed_form_psi2;
    est.tau_star = variant == ProblemVariant::l1_l2ball ? VectorXd{{p.tau_star, 0.0}} : VectorXd{{p.tau_star}};
    est.uncertainty = bracket;
    return est;
}

// --- Monte Carlo -----------------------------------------------------------

namespace {

struct Moments {
    std::size_t count = 0;
    double mean = 0;
    double m2 = 0;

    void add(double x) {
        ++count;
        const double d = x - mean;
        mean += d / static_cast<double>(count);
        m2 += d * (x - mean);
    }

    void merge(const Moments& o) {
        if (o.count == 0) return;
        const double total = static_cast<double>(count + o.count);
        const double d = o.mean - mean;
        mean += d * static_cast<double>(o.count) / total;
        m2 += o.m2 + d * d * static_cast<double>(count) * static_cast<double>(o.count) / total;
        count += o.count;
    }

    double std_error() const {
        if (count < 2) return 0;
        return std::sqrt(m2 / static_cast<double>(count - 1) / static_cast<double>(count));
    }
};

struct VectorMoments {
    std::size_t count = 0;
    VectorXd mean;
    VectorXd m2;

    explicit VectorMoments(Index k = 0) : mean(VectorXd::Zero(k)), m2(VectorXd::Zero(k)) {}

    void add(const VectorXd& x) {
        ++count;
        const VectorXd d = x - mean;
        mean += d / static_cast<double>(count);
        m2.array() += d.array() * (x - mean).array();
    }

    void merge(const VectorMoments& o) {
        if (o.count == 0) return;
        if (count == 0) {
            *this = o;
            return;
        }
        const double total = static_cast<double>(count + o.count);
        const VectorXd d = o.mean - mean;
        mean += d * (static_cast<double>(o.count) / total);
        m2 += o.m2 + d.cwiseAbs2() * (static_cast<double>(count) * static_cast<double>(o.count) / total);
        count += o.count;
    }

    VectorXd std_error() const {
        if (count < 2) return VectorXd::Zero(mean.size());
        return (m2 / static_cast<double>(count - 1) / static_cast<double>(count)).cwiseSqrt();
    }
};

std::size_t chunk_count(std::size_t samples) { return (samples + kSampleChunk - 1) / kSampleChunk; }

std::size_t chunk_length(std::size_t samples, std::size_t c) {
    return std::min(kSampleChunk, samples - c * kSampleChunk);
}

Eigen::MatrixXd draw_chunk(Index n, std::size_t samples, std::uint64_t seed, std::size_t c) {
    Eigen::MatrixXd g(n, static_cast<Index>(chunk_length(samples, c)));
    GaussianStream(derive_stream(seed, {c})).fill(g);
    return g;
}

/// All samples of a run, kept in memory so repeated evaluations reuse them.
class SampleBank {
public:
    SampleBank(Index n, std::size_t samples, std::uint64_t seed) : samples_(samples), g_(n, static_cast<Index>(samples)) {
        parallel_for(chunk_count(samples), [&](std::size_t c) {
            g_.middleCols(static_cast<Index>(c * kSampleChunk), static_cast<Index>(chunk_length(samples, c))) =
                draw_chunk(n, samples, seed, c);
        });
    }

    std::size_t samples() const { return samples_; }

    auto chunk(std::size_t c) const {
        return g_.middleCols(static_cast<Index>(c * kSampleChunk), static_cast<Index>(chunk_length(samples_, c)));
    }

private:
    std::size_t samples_;
    Eigen::MatrixXd g_;
};

void check_samples(const Family& family, std::size_t samples) {
    if (samples < 2) throw std::invalid_argument("Monte Carlo needs at least two samples");
    (void)family;
}

/// Runs per_chunk(c, G) on every chunk, either drawing G or reading it from a bank.
template <typename PerChunk>
void for_each_chunk(const Family& family, std::size_t samples, std::uint64_t seed, const SampleBank* bank,
                    PerChunk&& per_chunk) {
    parallel_for(chunk_count(samples), [&](std::size_t c) {
        if (bank) {
            per_chunk(c, bank->chunk(c));
        } else {
            const Eigen::MatrixXd g = draw_chunk(family.dim(), samples, seed, c);
            per_chunk(c, g);
        }
    });
}

McValue mean_value(const Family& family, const VectorXd& tau, std::size_t samples, std::uint64_t seed,
                   const SampleBank* bank) {
    const auto b = family.bounds(tau);
    std::vector<Moments> parts(chunk_count(samples));
    for_each_chunk(family, samples, seed, bank, [&](std::size_t c, const auto& g) {
        for (Index j = 0; j < g.cols(); ++j) parts[c].add(dist_sq(b, g.col(j)));
    });
    Moments total;
    for (const auto& p : parts) total.merge(p);
    return {total.mean, total.std_error(), total.count};
}

McGradient mean_gradient(const Family& family, const VectorXd& tau, std::size_t samples, std::uint64_t seed,
                         const SampleBank* bank) {
    const auto b = family.bounds(tau);
    const Index k = family.num_scaled();
    std::vector<Moments> values(chunk_count(samples));
    std::vector<VectorMoments> grads(chunk_count(samples), VectorMoments(k));
    for_each_chunk(family, samples, seed, bank, [&](std::size_t c, const auto& g) {
        VectorXd grad(k);
        for (Index j = 0; j < g.cols(); ++j) {
            values[c].add(dist_sq_with_gradient(family, b, g.col(j), grad));
            grads[c].add(grad);
        }
    });
    Moments value;
    VectorMoments grad(k);
    for (std::size_t c = 0; c < values.size(); ++c) {
        value.merge(values[c]);
        grad.merge(grads[c]);
    }
    return {grad.mean, grad.std_error(), {value.mean, value.std_error(), value.count}};
}

}  // namespace

McValue mc_j(const Family& family, const VectorXd& tau, std::size_t samples, std::uint64_t seed) {
    check_samples(family, samples);
    return mean_value(family, tau, samples, seed, nullptr);
}

McGradient mc_j_gradient(const Family& family, const VectorXd& tau, std::size_t samples, std::uint64_t seed) {
    check_samples(family, samples);
    return mean_gradient(family, tau, samples, seed, nullptr);
}

StatDimEstimate minimize_j(const Family& family, std::size_t samples, std::uint64_t seed,
                           const MinimizeOptions& opts) {
    check_samples(family, samples);
    const Index k = family.num_scaled();
    if (k < 1) throw std::invalid_argument("minimize_j needs at least one scalable set");
    const double n = static_cast<double>(family.dim());

    const SampleBank bank(family.dim(), samples, seed);
    StatDimEstimate est;
    est.method = StatDimMethod::mc_recipe;

    if (k == 1) {
        auto value = [&](double t) { return mean_value(family, VectorXd::Constant(1, t), samples, seed, &bank).mean; };
        auto slope = [&](double t) {
            return mean_gradient(family, VectorXd::Constant(1, t), samples, seed, &bank).grad[0];
        };
        double tau = 0;
        if (slope(0) < 0) {
            double hi = 1;
            int doublings = 0;
            while (slope(hi) < 0 && doublings++ < 60) hi *= 2;
            est.converged = doublings <= 60;
            int evals = 0;
            auto counted = [&](double t) {
                ++evals;
                return value(t);
            };
            tau = numeric::golden_section(counted, 0, hi, 1e-9 * (1 + hi)).first;
            est.iterations = evals;
        }
        est.tau_star = VectorXd::Constant(1, tau);
    } else {
        const double step0 = opts.step > 0 ? opts.step : 1 / (2 * n);
        const double tol = opts.grad_tol > 0 ? opts.grad_tol : 1e-4 * n;
        VectorXd tau = opts.tau0.size() == k ? opts.tau0 : VectorXd::Ones(k);
        family.check_tau(tau);

        auto current = mean_gradient(family, tau, samples, seed, &bank);
        est.converged = false;
        int it = 0;
        for (; it < opts.max_iters; ++it) {
            const VectorXd projected = (tau - current.grad).cwiseMax(0.0) - tau;
            if (projected.norm() <= tol) {
                est.converged = true;
                break;
            }
            double step = step0;
            bool moved = false;
            for (int halvings = 0; halvings < 60; ++halvings, step *= 0.5) {
                const VectorXd trial = (tau - step * current.grad).cwiseMax(0.0);
                auto next = mean_gradient(family, trial, samples, seed, &bank);
                if (next.value.mean <= current.value.mean) {
                    tau = trial;
                    current = std::move(next);
                    moved = true;
                    break;
                }
            }
            if (!moved) {
                // No descent at any step length: stationary up to rounding.
                est.converged = true;
                break;
            }
        }
        est.iterations = it;
        est.tau_star = tau;
    }

    const auto final_value = mean_value(family, est.tau_star, samples, seed, &bank);
    est.value = final_value.mean;
    est.uncertainty = StdError{final_value.std_error, final_value.samples};
    return est;
}

namespace {

/// dist^2(g, S(tau)) and its tau-gradient for one sample, with no allocation.
class SampleObjective {
public:
    explicit SampleObjective(const Family& family) : family_(family), k_(family.num_scaled()) {
        fixed_lo_ = VectorXd::Zero(family.dim());
        fixed_hi_ = VectorXd::Zero(family.dim());
        for (const auto& v : family.fixed_sets()) {
            fixed_lo_ += v.lower;
            fixed_hi_ += v.upper;
        }
    }

    double operator()(const double* g, const std::array<double, 2>& tau, std::array<double, 2>& grad) const {
        grad = {0, 0};
        double value = 0;
        const auto& sets = family_.scaled_sets();
        for (Index j = 0; j < family_.dim(); ++j) {
            double lo = fixed_lo_[j], hi = fixed_hi_[j];
            for (Index i = 0; i < k_; ++i) {
                const auto& v = sets[static_cast<std::size_t>(i)];
                hi += tau[static_cast<std::size_t>(i)] * v.upper[j];
                lo = std::isinf(v.lower[j]) ? v.lower[j] : lo + tau[static_cast<std::size_t>(i)] * v.lower[j];
            }
            double r = 0;
            if (g[j] > hi)
                r = g[j] - hi;
            else if (g[j] < lo)
                r = g[j] - lo;
            else
                continue;
            value += r * r;
            for (Index i = 0; i < k_; ++i) {
                const auto& v = sets[static_cast<std::size_t>(i)];
                grad[static_cast<std::size_t>(i)] -= 2 * r * (r > 0 ? v.upper[j] : v.lower[j]);
            }
        }
        return value;
    }

    Index num_scaled() const { return k_; }

private:
    const Family& family_;
    Index k_;
    VectorXd fixed_lo_;
    VectorXd fixed_hi_;
};

/// Minimizes the convex, continuously differentiable sample objective over
/// tau_i >= 0 with the other coordinate held fixed. Returns nullopt if no
/// upper bracket for the minimizer is found.
std::optional<double> minimize_coordinate(const SampleObjective& obj, const double* g, std::array<double, 2> tau,
                                          std::size_t i) {
    std::array<double, 2> grad;
    auto slope = [&](double t) {
        tau[i] = t;
        obj(g, tau, grad);
        return grad[i];
    };
    if (slope(0) >= 0) return 0.0;
    double lo = 0, hi = 1;
    for (int doublings = 0; slope(hi) < 0; ++doublings) {
        if (doublings > 200) return std::nullopt;
        lo = hi;
        hi *= 2;
    }
    return numeric::brent_root(slope, lo, hi, 1e-14 * (1 + hi));
}

struct SampleMinimum {
    double value;
    std::array<double, 2> tau;
    bool converged;
};

SampleMinimum minimize_sample(const SampleObjective& obj, const double* g) {
    std::array<double, 2> tau{0, 0}, grad;
    const Index k = obj.num_scaled();
    if (k == 0) return {obj(g, tau, grad), tau, true};

    bool converged = false;
    for (int sweep = 0; sweep < 2000 && !converged; ++sweep) {
        double change = 0;
        for (std::size_t i = 0; i < static_cast<std::size_t>(k); ++i) {
            const auto t = minimize_coordinate(obj, g, tau, i);
            if (!t) return {obj(g, tau, grad), tau, false};
            change = std::max(change, std::fabs(*t - tau[i]) / (1 + std::fabs(*t)));
            tau[i] = *t;
        }
        converged = k == 1 || change < 1e-12;
    }
    return {obj(g, tau, grad), tau, converged};
}

}  // namespace

StatDimEstimate mc_statdim_exact(const Family& family, std::size_t samples, std::uint64_t seed) {
    check_samples(family, samples);
    const Index k = family.num_scaled();
    if (k > 2) throw std::invalid_argument("exact estimator supports at most two scalable sets");

    const SampleObjective obj(family);
    const std::size_t chunks = chunk_count(samples);
    std::vector<Moments> values(chunks);
    std::vector<VectorMoments> taus(chunks, VectorMoments(k));
    std::vector<std::size_t> failures(chunks, 0);
    for_each_chunk(family, samples, seed, nullptr, [&](std::size_t c, const auto& g) {
        VectorXd t(k);
        for (Index j = 0; j < g.cols(); ++j) {
            const auto m = minimize_sample(obj, g.col(j).data());
            values[c].add(m.value);
            for (Index i = 0; i < k; ++i) t[i] = m.tau[static_cast<std::size_t>(i)];
            taus[c].add(t);
            if (!m.converged) ++failures[c];
        }
    });

    Moments value;
    VectorMoments tau(k);
    std::size_t failed = 0;
    for (std::size_t c = 0; c < chunks; ++c) {
        value.merge(values[c]);
        tau.merge(taus[c]);
        failed += failures[c];
    }

    StatDimEstimate est;
    est.method = StatDimMethod::mc_exact;
    est.value = value.mean;
    est.tau_star = tau.mean;
    est.uncertainty = StdError{value.std_error(), value.count};
    est.converged = failed == 0;
    return est;
}

const char* to_string(StatDimMethod method) {
    switch (method) {
    case StatDimMethod::closed_form_psi1: return "closed_form_psi1";
    case StatDimMethod::closed_form_psi2: return "closed_form_psi2";
    case StatDimMethod::mc_recipe: return "mc_recipe";
    case StatDimMethod::mc_exact: return "mc_exact";
    }
    return "unknown";
}

const char* to_string(ProblemVariant variant) {
    switch (variant) {
    case ProblemVariant::l1_plain: return "l1_plain";
    case ProblemVariant::l1_l2ball: return "l1_l2ball";
    case ProblemVariant::l1_nonneg: return "l1_nonneg";
    }
    return "unknown";
}

}  // namespace phasekit
