#pragma once

// l1 recovery from noise-free linear measurements, optionally with an l2-ball
// or a nonnegativity constraint, by a two-block ADMM splitting.

#include "phasekit/geometry.hpp"

#include <Eigen/Cholesky>
#include <Eigen/LU>
#include <Eigen/QR>

#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace phasekit {

/// AA^T is singular (or numerically so): the feasible set is not an affine
/// subspace of codimension m.
class IllPosedError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

template <typename Scalar>
struct RecoveryProblem {
    Matrix<Scalar> A;
    Vector<Scalar> y;
    std::optional<Scalar> l2_radius;  ///< ||x||_2 <= radius when set
    bool nonneg = false;

    void validate() const {
        if (A.rows() < 1 || A.cols() < 1) throw std::invalid_argument("sensing matrix is empty");
        if (y.size() != A.rows()) throw std::invalid_argument("measurement length does not match A");
        if (l2_radius && !(*l2_radius > Scalar(0))) throw std::invalid_argument("l2-ball radius must be positive");
        if (!A.allFinite() || !y.allFinite()) throw std::invalid_argument("problem data must be finite");
    }
};

/// x -> x + A^T (AA^T)^{-1} (y - Ax), the Euclidean projection onto {x : Ax = y}.
template <typename Scalar>
class AffineProjector {
public:
    AffineProjector(const Matrix<Scalar>& A, const Vector<Scalar>& y) : A_(A), y_(y) {
        if (y.size() != A.rows()) throw std::invalid_argument("measurement length does not match A");
        if (A.rows() > A.cols()) throw IllPosedError("more measurements than unknowns");
        const Matrix<Scalar> gram = A * A.transpose();
        Eigen::LLT<Matrix<Scalar>> llt(gram);
        if (llt.info() != Eigen::Success) throw IllPosedError("AA^T is not positive definite");
        const Vector<Scalar> diag = llt.matrixL().toDenseMatrix().diagonal().cwiseAbs();
        if (diag.minCoeff() <= Scalar(1e-10) * diag.maxCoeff())
            throw IllPosedError("AA^T is numerically rank deficient");
        correction_ = A.transpose() * llt.solve(Matrix<Scalar>::Identity(A.rows(), A.rows()));
    }

    template <typename Derived>
    Vector<Scalar> operator()(const Eigen::MatrixBase<Derived>& x) const {
        return x - correction_ * (A_ * x - y_);
    }

    /// argmin_w ||A^T w - v||, i.e. (AA^T)^{-1} A v.
    template <typename Derived>
    Vector<Scalar> multiplier(const Eigen::MatrixBase<Derived>& v) const {
        return correction_.transpose() * v;
    }

    const Matrix<Scalar>& matrix() const { return A_; }
    const Vector<Scalar>& rhs() const { return y_; }

private:
    Matrix<Scalar> A_;
    Vector<Scalar> y_;
    Matrix<Scalar> correction_;  ///< A^T (AA^T)^{-1}
};

template <typename Scalar>
struct SolverParams {
    Scalar rho_penalty = Scalar(1);
    int max_iters = 50000;
    Scalar feas_tol = Scalar(1e-7);
    Scalar obj_tol = Scalar(1e-6);
    int polish_every = 10;  ///< iterations between support polishing attempts; 0 disables
    Scalar relaxation = Scalar(1.6);  ///< over-relaxation factor in (0, 2)
    int adapt_every = 50;             ///< residual balancing period for rho; 0 keeps rho fixed
};

enum class SolveStatus { converged, max_iters };

template <typename Scalar>
struct RecoveryResult {
    Vector<Scalar> x_hat;
    int iterations = 0;
    Scalar primal_residual = 0;
    Scalar dual_residual = 0;
    SolveStatus status = SolveStatus::max_iters;
};

/// prox of (1/rho)(||.||_1 + constraints): soft threshold (one-sided when
/// nonneg), then radial projection onto the ball. The composition is exact
/// because every map preserves signs and the ball is rotation invariant.
template <typename Scalar, typename Derived>
Vector<Scalar> l1_constrained_prox(const Eigen::MatrixBase<Derived>& v, Scalar threshold,
                                   const RecoveryProblem<Scalar>& problem) {
    Vector<Scalar> z;
    if (problem.nonneg)
        z = (v.array() - threshold).cwiseMax(Scalar(0)).matrix();
    else
        z = (v.array().abs() - threshold).cwiseMax(Scalar(0)).matrix().cwiseProduct(v.cwiseSign());
    if (problem.l2_radius) {
        const Scalar norm = z.norm();
        if (norm > *problem.l2_radius) z *= *problem.l2_radius / norm;
    }
    return z;
}

/// Support polishing. Solves A_S x_S = y on the support S of an iterate and
/// accepts the point only with a dual certificate: w such that A^T w - mu x
/// lies in the l1 subdifferential at x (one-sided off the support when
/// nonneg), with mu >= 0 nonzero only on the sphere. The certificate starts
/// from the ADMM dual estimate v and is corrected by the least-norm change
/// that makes the support equations exact.
template <typename Scalar>
std::optional<Vector<Scalar>> polish_with_certificate(const RecoveryProblem<Scalar>& problem,
                                                      const AffineProjector<Scalar>& project,
                                                      const Vector<Scalar>& iterate, const Vector<Scalar>& dual,
                                                      Scalar feas_tol) {
    const auto& A = problem.A;
    const Index n = A.cols();
    std::vector<Index> support;
    for (Index i = 0; i < n; ++i)
        if (iterate[i] != Scalar(0)) support.push_back(i);
    const auto k = static_cast<Index>(support.size());
    if (k == 0 || k > A.rows()) return std::nullopt;

    const Matrix<Scalar> A_s = A(Eigen::all, support);
    const Eigen::ColPivHouseholderQR<Matrix<Scalar>> qr(A_s);
    if (qr.rank() < k) return std::nullopt;
    const Vector<Scalar> x_s = qr.solve(problem.y);
    if ((A_s * x_s - problem.y).norm() > feas_tol) return std::nullopt;
    for (Index j = 0; j < k; ++j) {
        const Scalar z = iterate[support[static_cast<std::size_t>(j)]];
        if (x_s[j] == Scalar(0) || (x_s[j] > Scalar(0)) != (z > Scalar(0))) return std::nullopt;
    }

    Vector<Scalar> target = x_s.cwiseSign();
    if (problem.l2_radius) {
        const Scalar r = *problem.l2_radius;
        const Scalar norm = x_s.norm();
        if (norm > r + feas_tol) return std::nullopt;
        if (norm >= r * (Scalar(1) - Scalar(1e-9))) {
            const Scalar mu = std::max(Scalar(0), (dual(support) - target).dot(x_s) / (norm * norm));
            target += mu * x_s;
        }
    }

    Vector<Scalar> w = project.multiplier(dual);
    const Vector<Scalar> gap = target - A_s.transpose() * w;
    w += A_s * (A_s.transpose() * A_s).ldlt().solve(gap);
    if ((A_s.transpose() * w - target).cwiseAbs().maxCoeff() > Scalar(1e-9)) return std::nullopt;

    const Vector<Scalar> c = A.transpose() * w;
    const Scalar slack = Scalar(1) + Scalar(1e-10);
    std::vector<bool> on_support(static_cast<std::size_t>(n), false);
    for (Index i : support) on_support[static_cast<std::size_t>(i)] = true;
    for (Index i = 0; i < n; ++i) {
        if (on_support[static_cast<std::size_t>(i)]) continue;
        if ((problem.nonneg ? c[i] : std::abs(c[i])) > slack) return std::nullopt;
    }

    Vector<Scalar> x = Vector<Scalar>::Zero(n);
    x(support) = x_s;
    return x;
}

/// ADMM on min ||z||_1 + constraints(z) s.t. x = z, Ax = y. Returns z, which
/// satisfies the norm-ball and sign constraints exactly; convergence also
/// requires ||Az - y|| <= feas_tol.
template <typename Scalar>
RecoveryResult<Scalar> solve_recovery(const RecoveryProblem<Scalar>& problem, const SolverParams<Scalar>& params = {}) {
    problem.validate();
    if (!(params.rho_penalty > Scalar(0))) throw std::invalid_argument("rho_penalty must be positive");
    if (!(params.relaxation > Scalar(0) && params.relaxation < Scalar(2)))
        throw std::invalid_argument("relaxation must lie in (0, 2)");
    const AffineProjector<Scalar> project(problem.A, problem.y);
    const Index n = problem.A.cols();
    Scalar rho = params.rho_penalty;

    Vector<Scalar> x = Vector<Scalar>::Zero(n);
    Vector<Scalar> z = Vector<Scalar>::Zero(n);
    Vector<Scalar> u = Vector<Scalar>::Zero(n);
    Vector<Scalar> z_old(n), x_rel(n);
    RecoveryResult<Scalar> result;
    for (int it = 1; it <= params.max_iters; ++it) {
        x = project(z - u);
        x_rel = params.relaxation * x + (Scalar(1) - params.relaxation) * z;
        z_old = z;
        z = l1_constrained_prox<Scalar>(x_rel + u, Scalar(1) / rho, problem);
        u += x_rel - z;

        result.iterations = it;
        result.primal_residual = (x - z).norm();
        result.dual_residual = rho * (z - z_old).norm();
        if (result.primal_residual <= params.feas_tol && result.dual_residual <= params.feas_tol &&
            (problem.A * z - problem.y).norm() <= params.feas_tol) {
            result.status = SolveStatus::converged;
            break;
        }
        if (params.polish_every > 0 && it % params.polish_every == 0) {
            if (auto polished = polish_with_certificate<Scalar>(problem, project, z, Vector<Scalar>(rho * u),
                                                                params.feas_tol)) {
                result.status = SolveStatus::converged;
                result.primal_residual = (problem.A * *polished - problem.y).norm();
                result.dual_residual = 0;
                result.x_hat = std::move(*polished);
                return result;
            }
        }
        if (params.adapt_every > 0 && it % params.adapt_every == 0) {
            if (result.primal_residual > 10 * result.dual_residual) {
                rho *= 2;
                u /= 2;
            } else if (result.dual_residual > 10 * result.primal_residual) {
                rho /= 2;
                u *= 2;
            }
        }
    }
    result.x_hat = std::move(z);
    return result;
}

template <typename Scalar>
struct LpSolution {
    Scalar objective;
    Vector<Scalar> x;
};

/// Exact minimum of ||x||_1 s.t. Ax = y (and x >= 0) by enumerating the
/// basic solutions of the equivalent linear program: an optimal vertex is
/// supported on r = rank(A) linearly independent columns.
template <typename Scalar>
LpSolution<Scalar> lp_oracle_small(const RecoveryProblem<Scalar>& problem) {
    problem.validate();
    if (problem.l2_radius) throw std::invalid_argument("lp oracle does not handle the l2-ball constraint");
    const Index n = problem.A.cols();
    if (n > 12) throw std::invalid_argument("lp oracle is limited to n <= 12");
    const auto& A = problem.A;
    const auto& y = problem.y;
    const Scalar scale = Scalar(1) + y.norm();

    if (y.norm() == Scalar(0)) return {Scalar(0), Vector<Scalar>::Zero(n)};

    const Eigen::FullPivLU<Matrix<Scalar>> full(A);
    const Index r = full.rank();
    if ((A * full.solve(y) - y).norm() > Scalar(1e-9) * scale)
        throw std::domain_error("lp oracle: Ax = y is infeasible");

    std::optional<LpSolution<Scalar>> best;
    std::vector<bool> pick(static_cast<std::size_t>(n), false);
    std::fill(pick.begin(), pick.begin() + r, true);
    do {
        std::vector<Index> cols;
        for (Index j = 0; j < n; ++j)
            if (pick[static_cast<std::size_t>(j)]) cols.push_back(j);
        const Matrix<Scalar> sub = A(Eigen::all, cols);
        const Eigen::FullPivLU<Matrix<Scalar>> lu(sub);
        if (lu.rank() < r) continue;
        const Vector<Scalar> xs = lu.solve(y);
        if ((sub * xs - y).norm() > Scalar(1e-9) * scale) continue;
        if (problem.nonneg && xs.minCoeff() < Scalar(-1e-12) * scale) continue;

        Vector<Scalar> x = Vector<Scalar>::Zero(n);
        x(cols) = xs;
        if (problem.nonneg) x = x.cwiseMax(Scalar(0));
        const Scalar obj = x.template lpNorm<1>();
        if (!best || obj < best->objective) best = LpSolution<Scalar>{obj, std::move(x)};
    } while (std::prev_permutation(pick.begin(), pick.end()));

    if (!best) throw std::domain_error("lp oracle: no feasible basic solution");
    return *best;
}

/// ||x_hat - x_star||_2 <= 1e-4, inclusive.
template <typename Scalar>
bool check_success(const Vector<Scalar>& x_hat, const Vector<Scalar>& x_star) {
    if (x_hat.size() != x_star.size()) throw std::invalid_argument("check_success: length mismatch");
    return (x_hat - x_star).norm() <= Scalar(1e-4);
}

}  // namespace phasekit
