#include "phasekit/verify.hpp"

#include "phasekit/experiments.hpp"
#include "phasekit/geometry.hpp"
#include "phasekit/random.hpp"
#include "phasekit/solvers.hpp"
#include "phasekit/statdim.hpp"

#include <cmath>
#include <functional>
#include <numbers>
#include <sstream>

namespace phasekit {

namespace {

double simpson(const std::function<double(double)>& f, double a, double b, double fa, double fm, double fb,
               double whole, double eps, int depth) {
    const double m = 0.5 * (a + b), lm = 0.5 * (a + m), rm = 0.5 * (m + b);
    const double flm = f(lm), frm = f(rm);
    const double left = (m - a) / 6 * (fa + 4 * flm + fm), right = (b - m) / 6 * (fm + 4 * frm + fb);
    if (depth <= 0 || std::fabs(left + right - whole) <= 15 * eps) return left + right + (left + right - whole) / 15;
    return simpson(f, a, m, fa, flm, fm, left, eps / 2, depth - 1) +
           simpson(f, m, b, fm, frm, fb, right, eps / 2, depth - 1);
}

// int_tau^inf h(u) sqrt(2/pi) exp(-u^2/2) du on unit panels.
double tail_quadrature(const std::function<double(double)>& h, double tau) {
    const auto f = [&](double u) { return h(u) * std::sqrt(2 / std::numbers::pi) * std::exp(-0.5 * u * u); };
    double total = 0;
    for (double a = tau; a < tau + 40; a += 1) {
        const double b = a + 1, fa = f(a), fb = f(b), fm = f(0.5 * (a + b));
        total += simpson(f, a, b, fa, fm, fb, (b - a) / 6 * (fa + 4 * fm + fb), 1e-16, 40);
    }
    return total;
}

// Projection of g onto a sum of boxes by cyclic block minimization.
double block_projection_dist_sq(const std::vector<std::pair<VectorXd, VectorXd>>& boxes, const VectorXd& g) {
    std::vector<VectorXd> parts(boxes.size(), VectorXd::Zero(g.size()));
    VectorXd total = VectorXd::Zero(g.size());
    for (int it = 0; it < 10000; ++it) {
        for (std::size_t i = 0; i < boxes.size(); ++i) {
            total -= parts[i];
            parts[i] = (g - total).cwiseMax(boxes[i].first).cwiseMin(boxes[i].second);
            total += parts[i];
        }
    }
    return (g - total).squaredNorm();
}

SeparableFamily<double> random_family(GaussianStream& rng, Index n, int kind) {
    const auto variant = kind == 2 ? ProblemVariant::l1_nonneg : ProblemVariant::l1_plain;
    const auto signal = generate_signal(n, 1 + static_cast<Index>(std::fabs(rng.next()) * n) % n, variant, rng);
    std::vector<Constraint> cons;
    if (kind == 1) cons.push_back(Constraint::l2_ball);
    if (kind == 2) cons.push_back(Constraint::nonneg);
    return build_family(signal, Objective::l1, cons);
}

CheckResult check_quadrature(bool fast) {
    double worst = 0;
    const double step = fast ? 0.5 : 0.1;
    for (int i = 0; i * step <= 8 + 1e-12; ++i) {
        const double tau = i * step;
        const auto m = gaussian_tail_moments(tau);
        worst = std::max(worst, std::fabs(m.m0 - tail_quadrature([](double) { return 1.0; }, tau)));
        worst = std::max(worst, std::fabs(m.m1 - tail_quadrature([](double u) { return u; }, tau)));
        worst = std::max(worst, std::fabs(m.m2 - tail_quadrature([](double u) { return u * u; }, tau)));
    }
    return {"tail moments vs adaptive Simpson", worst <= 1e-10, "max abs error " + format_number(worst)};
}

CheckResult check_stationary() {
    double worst = 0;
    for (double rho : {0.05, 0.125, 0.25, 0.5})
        for (auto v : {PsiVariant::psi1, PsiVariant::psi2})
            worst = std::max(worst, std::fabs(stationary_residual(rho, stationary_solve(rho, v), v)));
    return {"stationary equation residuals", worst <= 1e-10, "max residual " + format_number(worst)};
}

CheckResult check_curves() {
    bool ok = true;
    double prev1 = 0, prev2 = 0;
    for (int i = 1; i <= 99; ++i) {
        const double rho = i / 100.0;
        const double p1 = psi_value(rho, PsiVariant::psi1).psi, p2 = psi_value(rho, PsiVariant::psi2).psi;
        ok = ok && p2 <= p1 && p1 >= prev1 && p2 >= prev2;
        if (rho <= 0.9) ok = ok && p1 - p2 >= 1e-6;
        prev1 = p1;
        prev2 = p2;
    }
    return {"psi2 below psi1, both nondecreasing", ok, ""};
}

CheckResult check_projection(bool fast) {
    GaussianStream rng(derive_stream(2, {0}));
    double worst = 0;
    const int count = fast ? 20 : 100;
    for (int t = 0; t < count; ++t) {
        const Index n = 1 + t % 8;
        const auto f = random_family(rng, n, t % 3);
        VectorXd tau(f.num_scaled()), g(n);
        for (Index i = 0; i < tau.size(); ++i) tau[i] = std::fabs(1.5 * rng.next());
        rng.fill(g);
        std::vector<std::pair<VectorXd, VectorXd>> boxes;
        for (Index i = 0; i < f.num_scaled(); ++i) {
            const auto& v = f.scaled_sets()[static_cast<std::size_t>(i)];
            boxes.emplace_back(tau[i] * v.lower, tau[i] * v.upper);
        }
        for (const auto& v : f.fixed_sets()) boxes.emplace_back(v.lower, v.upper);
        worst = std::max(worst, std::fabs(dist_sq_and_project(f, tau, g).first - block_projection_dist_sq(boxes, g)));
    }
    return {"separable distance vs block projection", worst <= 1e-8, "max abs error " + format_number(worst)};
}

CheckResult check_gradients(bool fast) {
    GaussianStream rng(derive_stream(3, {0}));
    const std::size_t samples = fast ? 20000 : 100000;
    const double h = 1e-4;
    double worst = 0;
    const int count = fast ? 4 : 20;
    for (int t = 0; t < count; ++t) {
        const auto f = random_family(rng, 32 + 8 * (t % 4), t % 3);
        VectorXd tau(f.num_scaled());
        for (Index i = 0; i < tau.size(); ++i) tau[i] = 0.3 + std::fabs(rng.next());
        const auto seed = static_cast<std::uint64_t>(50 + t);
        const auto g = mc_j_gradient(f, tau, samples, seed);
        for (Index i = 0; i < tau.size(); ++i) {
            VectorXd up = tau, down = tau;
            up[i] += h;
            down[i] -= h;
            const double fd = (mc_j(f, up, samples, seed).mean - mc_j(f, down, samples, seed).mean) / (2 * h);
            worst = std::max(worst, std::fabs(g.grad[i] - fd) / std::max(std::fabs(fd), 1e-12));
        }
    }
    return {"gradient vs common-seed central differences", worst <= 1e-2, "max rel error " + format_number(worst)};
}

CheckResult check_solver(bool fast) {
    GaussianStream rng(derive_stream(4, {0}));
    double worst_obj = 0, worst_feas = 0;
    int failed = 0;
    const int count = fast ? 30 : 200;
    for (int t = 0; t < count; ++t) {
        const Index n = 2 + t % 7;
        const Index m = 1 + (t / 7) % n;
        const bool nonneg = t % 2 == 1;
        const auto signal = generate_signal(n, 1 + (t / 3) % n, nonneg ? ProblemVariant::l1_nonneg : ProblemVariant::l1_plain, rng);
        Matrix<double> A(m, n);
        rng.fill(A);
        const RecoveryProblem<double> p{A, A * signal.values(), {}, nonneg};
        const auto r = solve_recovery(p);
        if (r.status != SolveStatus::converged) ++failed;
        double feas = (A * r.x_hat - p.y).norm();
        if (nonneg) feas = std::max(feas, -r.x_hat.minCoeff());
        worst_feas = std::max(worst_feas, feas);
        worst_obj = std::max(worst_obj, std::fabs(r.x_hat.lpNorm<1>() - lp_oracle_small(p).objective));
    }
    std::ostringstream detail;
    detail << "max objective gap " << format_number(worst_obj) << ", max infeasibility " << format_number(worst_feas)
           << ", non-converged " << failed;
    return {"ADMM vs exact LP on small instances", failed == 0 && worst_obj <= 1e-6 && worst_feas <= 1e-7,
            detail.str()};
}

}  // namespace

std::vector<CheckResult> run_verification(bool fast) {
    return {check_quadrature(fast), check_stationary(),   check_curves(),
            check_projection(fast), check_gradients(fast), check_solver(fast)};
}

}  // namespace phasekit
