#include "phasekit/statdim.hpp"
#include "phasekit/random.hpp"

#include "oracles.hpp"

#include <doctest.h>

#include <cmath>

using namespace phasekit;

namespace {

Family l1_family(Index n, Index s, std::vector<Constraint> cons = {}, std::uint64_t seed = 5) {
    GaussianStream rng(derive_stream(seed, {static_cast<std::uint64_t>(n), static_cast<std::uint64_t>(s)}));
    const bool nonneg = std::find(cons.begin(), cons.end(), Constraint::nonneg) != cons.end();
    VectorXd x = VectorXd::Zero(n);
    for (Index i = 0; i < s; ++i) x[i] = nonneg ? std::fabs(rng.next()) : rng.next();
    return build_family(SparseSignal<double>(x, nonneg ? SignalVariant::nonnegative : SignalVariant::signed_values),
                        Objective::l1, cons);
}

Family point_family(const std::vector<VectorXd>& points) {
    std::vector<AtomVector<double>> sets;
    for (const auto& p : points) sets.push_back({p, p, "point"});
    return Family(points.front().size(), std::move(sets), {});
}

Family cone_family(Index n, Index half_lines) {
    AtomVector<double> cone{VectorXd::Zero(n), VectorXd::Zero(n), "cone"};
    for (Index i = 0; i < half_lines; ++i) cone.lower[i] = -std::numeric_limits<double>::infinity();
    return Family(n, {}, {cone});
}

// psi objective evaluated by quadrature only.
double quadrature_psi_objective(double rho, double tau, double weight) {
    const double tail = oracle::tail_integral([tau](double u) { return (u - tau) * (u - tau); }, tau);
    return rho * (1 + tau * tau) + weight * (1 - rho) * tail;
}

}  // namespace

TEST_CASE("psi endpoints") {
    for (auto v : {PsiVariant::psi1, PsiVariant::psi2}) {
        const auto one = psi_value(1, v);
        CHECK(one.psi == 1.0);
        CHECK(one.tau_star == 0.0);
        const auto zero = psi_value(0, v);
        CHECK(zero.psi == 0.0);
        CHECK(std::isinf(zero.tau_star));
    }
    CHECK_THROWS_AS(psi_value(-0.01, PsiVariant::psi1), std::invalid_argument);
    CHECK_THROWS_AS(psi_value(1.01, PsiVariant::psi2), std::invalid_argument);
}

TEST_CASE("psi2 at rho = 1/16 matches golden section on the quadrature objective") {
    const double rho = 0.0625;
    const auto p = psi_value(rho, PsiVariant::psi2);
    const auto [tau, value] =
        oracle::golden_min([&](double t) { return quadrature_psi_objective(rho, t, 0.5); }, 0, 6, 1e-10);
    CHECK(std::fabs(p.psi - value) <= 1e-8);
    CHECK(std::fabs(p.tau_star - tau) <= 1e-4);
}

TEST_CASE("psi1 matches golden section on a grid of rho") {
    for (double rho : {0.02, 0.1, 0.3, 0.6, 0.9}) {
        const auto p = psi_value(rho, PsiVariant::psi1);
        const auto [tau, value] =
            oracle::golden_min([&](double t) { return quadrature_psi_objective(rho, t, 1.0); }, 0, 6, 1e-10);
        CHECK(std::fabs(p.psi - value) <= 1e-8);
    }
}

TEST_CASE("stationary root back-substituted with quadrature") {
    const double rho = 0.25;
    const double tau = stationary_solve(rho, PsiVariant::psi1);
    const double rhs = oracle::tail_integral([tau](double u) { return u / tau - 1; }, tau);
    CHECK(std::fabs(rho / (1 - rho) - rhs) <= 1e-10);

    const double tau2 = stationary_solve(rho, PsiVariant::psi2);
    const double rhs2 = oracle::tail_integral([tau2](double u) { return u / tau2 - 1; }, tau2);
    CHECK(std::fabs(2 * rho / (1 - rho) - rhs2) <= 1e-10);
}

TEST_CASE("stationary root limits") {
    CHECK(stationary_solve(1 - 1e-9, PsiVariant::psi1) < 1e-6);
    CHECK(stationary_solve(1e-9, PsiVariant::psi1) > 5);
    CHECK(stationary_solve(0.999, PsiVariant::psi1) < stationary_solve(0.5, PsiVariant::psi1));
    CHECK_THROWS_AS(stationary_solve(0, PsiVariant::psi1), std::invalid_argument);
    CHECK_THROWS_AS(stationary_solve(1, PsiVariant::psi2), std::invalid_argument);
}

TEST_CASE("curves are ordered, monotone and pinned at the endpoints") {
    double prev1 = 0, prev2 = 0;
    for (int i = 1; i <= 99; ++i) {
        const double rho = i / 100.0;
        const double p1 = psi_value(rho, PsiVariant::psi1).psi;
        const double p2 = psi_value(rho, PsiVariant::psi2).psi;
        CHECK(p2 < p1);
        CHECK(p1 >= prev1);
        CHECK(p2 >= prev2);
        CHECK(p1 <= 1.0);
        prev1 = p1;
        prev2 = p2;
    }
}

TEST_CASE("nonneg J is midpoint convex in tau") {
    GaussianStream rng(derive_stream(3, {}));
    for (int i = 0; i < 200; ++i) {
        const double a = 4 * std::fabs(rng.next()), b = 4 * std::fabs(rng.next());
        const double rho = 0.01 + 0.98 * std::fabs(std::tanh(rng.next()));
        const double mid = psi_objective(rho, 0.5 * (a + b), PsiVariant::psi2);
        CHECK(mid <= 0.5 * (psi_objective(rho, a, PsiVariant::psi2) + psi_objective(rho, b, PsiVariant::psi2)) + 1e-12);
    }
}

TEST_CASE("statdim bounds") {
    const auto full = statdim_bounds(8, 8, ProblemVariant::l1_nonneg);
    CHECK(full.upper == 8.0);

    const auto small = statdim_bounds(1, 4, ProblemVariant::l1_nonneg);
    CHECK(small.upper == doctest::Approx(4 * psi_value(0.25, PsiVariant::psi2).psi));
    CHECK(small.lower == std::max(0.0, small.upper - 4));

    const auto ball = statdim_bounds(16, 128, ProblemVariant::l1_l2ball);
    const auto plain = statdim_bounds(16, 128, ProblemVariant::l1_plain);
    CHECK(ball.upper == plain.upper);
    CHECK(ball.lower == doctest::Approx(plain.lower - 0.5));

    CHECK_THROWS_AS(statdim_bounds(0, 4, ProblemVariant::l1_plain), std::invalid_argument);
    CHECK_THROWS_AS(statdim_bounds(5, 4, ProblemVariant::l1_plain), std::invalid_argument);
}

TEST_CASE("nonneg bracket contains the exact Monte-Carlo estimate") {
    const auto b = statdim_bounds(16, 128, ProblemVariant::l1_nonneg);
    const auto est = mc_statdim_exact(l1_family(128, 16, {Constraint::nonneg}), 20000, 41);
    CHECK(est.value >= b.lower - 3 * est.std_error());
    CHECK(est.value <= b.upper + 3 * est.std_error());
}

TEST_CASE("transition window") {
    const auto w = transition_window(64, 128, 4);
    CHECK(w.m_low == 64.0);
    CHECK(w.m_high == 64.0);

    const auto e = transition_window(0.5, 1, 4 / std::exp(1.0));
    CHECK(e.half_width() == doctest::Approx(2.828427).epsilon(1e-6));

    const auto z = transition_window(50, 100, 0.04);
    CHECK(z.half_width() == doctest::Approx(std::sqrt(8 * std::log(100.0)) * 10).epsilon(1e-14));
    CHECK(z.half_width() == doctest::Approx(60.697).epsilon(1e-4));

    CHECK_THROWS_AS(transition_window(1, 4, 0), std::invalid_argument);
    CHECK_THROWS_AS(transition_window(1, 4, 4.5), std::invalid_argument);
    CHECK_THROWS_AS(transition_window(5, 4, 1), std::invalid_argument);
}

TEST_CASE("mc_j on a zero point family equals n") {
    const Index n = 10;
    const auto f = point_family({VectorXd::Zero(n)});
    const auto v = mc_j(f, VectorXd::Constant(1, 3.0), 20000, 1);
    CHECK(std::fabs(v.mean - n) <= 3 * v.std_error);
    CHECK(v.samples == 20000);
}

TEST_CASE("mc_j on the half-line cone is one half") {
    const auto v = mc_j(cone_family(1, 1), VectorXd(0), 100000, 2);
    CHECK(std::fabs(v.mean - 0.5) <= 3 * v.std_error);
}

TEST_CASE("mc_j at the psi1 minimizer reproduces psi1") {
    const auto p = psi_value(0.125, PsiVariant::psi1);
    const auto v = mc_j(l1_family(128, 16), VectorXd::Constant(1, p.tau_star), 100000, 3);
    CHECK(std::fabs(v.mean / 128 - p.psi) <= 3 * v.std_error / 128);
}

TEST_CASE("mc_j is reproducible and rejects tiny sample counts") {
    const auto f = l1_family(20, 4);
    const auto a = mc_j(f, VectorXd::Constant(1, 1.2), 9000, 77);
    const auto b = mc_j(f, VectorXd::Constant(1, 1.2), 9000, 77);
    CHECK(a.mean == b.mean);
    CHECK(a.std_error == b.std_error);
    CHECK_THROWS_AS(mc_j(f, VectorXd::Constant(1, 1.0), 1, 0), std::invalid_argument);
}

TEST_CASE("gradient of a point family has a closed form") {
    const VectorXd c0{{1, -2, 0.5}}, c1{{0.3, 0.1, -1}};
    const auto f = point_family({c0, c1});
    const VectorXd tau{{0.7, 1.3}};
    const auto g = mc_j_gradient(f, tau, 50000, 9);
    const VectorXd center = tau[0] * c0 + tau[1] * c1;
    const VectorXd exact{{2 * center.dot(c0), 2 * center.dot(c1)}};
    for (Index i = 0; i < 2; ++i) CHECK(std::fabs(g.grad[i] - exact[i]) <= 3 * g.std_error[i]);
}

TEST_CASE("l2-singleton partial derivative") {
    GaussianStream rng(derive_stream(21, {}));
    const Index n = 40, s = 6;
    VectorXd x = VectorXd::Zero(n);
    for (Index i = 0; i < s; ++i) x[i] = rng.next();
    const auto f = build_family(SparseSignal<double>(x, SignalVariant::signed_values), Objective::l1,
                                {Constraint::l2_ball});
    const VectorXd tau{{1.1, 0.4}};
    const auto g = mc_j_gradient(f, tau, 100000, 10);
    const double exact = 2 * tau[0] * x.lpNorm<1>() / x.norm() + 2 * tau[1];
    CHECK(std::fabs(g.grad[1] - exact) <= 3 * g.std_error[1]);
}

TEST_CASE("gradient agrees with common-seed central differences") {
    const double h = 1e-4;
    const std::vector<Family> families{l1_family(64, 8), l1_family(64, 8, {Constraint::nonneg}),
                                       l1_family(64, 8, {Constraint::l2_ball})};
    for (std::size_t k = 0; k < families.size(); ++k) {
        const auto& f = families[k];
        VectorXd tau = VectorXd::Constant(f.num_scaled(), 1.3);
        if (tau.size() == 2) tau[1] = 0.5;
        const auto g = mc_j_gradient(f, tau, 100000, 100 + k);
        for (Index i = 0; i < tau.size(); ++i) {
            VectorXd up = tau, down = tau;
            up[i] += h;
            down[i] -= h;
            const double fd = (mc_j(f, up, 100000, 100 + k).mean - mc_j(f, down, 100000, 100 + k).mean) / (2 * h);
            CHECK(std::fabs(g.grad[i] - fd) <= 1e-2 * std::fabs(fd));
        }
    }
}

TEST_CASE("minimize_j on the l1 family finds the stationary root") {
    const auto est = minimize_j(l1_family(128, 16), 50000, 4);
    CHECK(est.method == StatDimMethod::mc_recipe);
    CHECK(est.converged);
    CHECK(std::fabs(est.tau_star[0] - stationary_solve(0.125, PsiVariant::psi1)) <= 1e-2);
}

TEST_CASE("minimize_j on l1 + l2 puts the l2 weight at zero") {
    const auto est = minimize_j(l1_family(64, 8, {Constraint::l2_ball}), 20000, 5);
    REQUIRE(est.tau_star.size() == 2);
    CHECK(est.converged);
    CHECK(est.tau_star[1] <= 1e-3 * (1 + est.tau_star[0]));
}

TEST_CASE("minimize_j on l1 + nonneg reproduces psi2") {
    const auto est = minimize_j(l1_family(128, 16, {Constraint::nonneg}), 100000, 6);
    CHECK(std::fabs(est.value / 128 - psi_value(0.125, PsiVariant::psi2).psi) <= 3 * est.std_error() / 128 + 1e-3);
}

TEST_CASE("minimize_j requires a scalable set") {
    CHECK_THROWS_AS(minimize_j(cone_family(2, 1), 100, 1), std::invalid_argument);
}

TEST_CASE("exact estimator on trivial cones") {
    const auto all = mc_statdim_exact(point_family({VectorXd::Zero(5)}), 20000, 7);
    CHECK(std::fabs(all.value - 5) <= 3 * all.std_error());
    const auto half = mc_statdim_exact(cone_family(1, 1), 100000, 8);
    CHECK(std::fabs(half.value - 0.5) <= 3 * half.std_error());
    CHECK(half.method == StatDimMethod::mc_exact);
}

TEST_CASE("exact estimator sits below the recipe within the error bound") {
    const auto f = l1_family(32, 4, {Constraint::nonneg});
    const auto exact = mc_statdim_exact(f, 20000, 12);
    const auto recipe = minimize_j(f, 20000, 12);
    const double se = std::hypot(exact.std_error(), recipe.std_error());
    CHECK(exact.converged);
    CHECK(exact.value <= recipe.value + 3 * se);
    CHECK(exact.value >= recipe.value - 2 * std::sqrt(32.0 / 4) - 3 * se);
}

TEST_CASE("adding the l2 ball changes delta by at most one half") {
    const auto plain = mc_statdim_exact(l1_family(32, 4), 20000, 13);
    const auto ball = mc_statdim_exact(l1_family(32, 4, {Constraint::l2_ball}), 20000, 13);
    CHECK(ball.converged);
    const double se = std::hypot(plain.std_error(), ball.std_error());
    CHECK(ball.value <= plain.value + 3 * se);
    CHECK(std::fabs(plain.value - ball.value) <= 0.5 + 3 * se);
}

TEST_CASE("statistical dimension is additive over orthogonal cones") {
    const auto two = mc_statdim_exact(cone_family(2, 2), 100000, 14);
    CHECK(std::fabs(two.value - 1.0) <= 3 * two.std_error());

    const auto one_a = mc_statdim_exact(cone_family(1, 1), 100000, 15);
    const auto one_b = mc_statdim_exact(cone_family(1, 1), 100000, 16);
    CHECK(std::fabs(two.value - one_a.value - one_b.value) <=
          3 * std::sqrt(two.std_error() * two.std_error() + one_a.std_error() * one_a.std_error() +
                        one_b.std_error() * one_b.std_error()));

    const auto space = mc_statdim_exact(point_family({VectorXd::Zero(3)}), 100000, 17);
    CHECK(std::fabs(space.value - 3.0) <= 3 * space.std_error());
}

TEST_CASE("closed-form estimate") {
    const auto est = closed_form_statdim(16, 128, ProblemVariant::l1_nonneg);
    CHECK(est.method == StatDimMethod::closed_form_psi2);
    CHECK(est.value == doctest::Approx(128 * psi_value(0.125, PsiVariant::psi2).psi));
    CHECK(std::holds_alternative<Bracket>(est.uncertainty));
    CHECK(est.std_error() == 0);
    const auto ball = closed_form_statdim(16, 128, ProblemVariant::l1_l2ball);
    CHECK(ball.tau_star.size() == 2);
    CHECK(ball.tau_star[1] == 0);
}
