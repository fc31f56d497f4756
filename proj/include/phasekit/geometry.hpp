#pragma once

// Coordinate-wise separable sets: subdifferentials and normal cones of the
// l1 norm, the l2 norm and the nonnegative orthant at a sparse point, and
// exact Minkowski sums / projections / distances over them.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <vector>

namespace phasekit {

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

using Index = Eigen::Index;

enum class SignalVariant { signed_values, nonnegative };

/// The unknown signal x*: a nonzero vector together with its support.
template <typename Scalar>
class SparseSignal {
public:
    SparseSignal(Vector<Scalar> values, SignalVariant variant)
        : values_(std::move(values)), variant_(variant) {
        for (Index i = 0; i < values_.size(); ++i) {
            if (!std::isfinite(values_[i]))
                throw std::invalid_argument("signal entries must be finite");
            if (values_[i] != Scalar(0)) support_.push_back(i);
            if (variant_ == SignalVariant::nonnegative && values_[i] < Scalar(0))
                throw std::invalid_argument("nonnegative signal has a negative entry");
        }
        if (support_.empty())
            throw std::invalid_argument("signal must have a nonempty support");
    }

    const Vector<Scalar>& values() const { return values_; }
    const std::vector<Index>& support() const { return support_; }
    SignalVariant variant() const { return variant_; }
    Index dim() const { return values_.size(); }
    Index sparsity() const { return static_cast<Index>(support_.size()); }

private:
    Vector<Scalar> values_;
    std::vector<Index> support_;
    SignalVariant variant_;
};

/// A closed interval of the real line: a point, a bounded box, or (-inf, hi].
template <typename Scalar>
class IntervalAtom {
public:
    enum class Kind { point, box, half_line_below };

    static IntervalAtom point(Scalar c) { return IntervalAtom(Kind::point, c, c); }
    static IntervalAtom box(Scalar lo, Scalar hi) {
        if (!(lo <= hi)) throw std::invalid_argument("box requires lo <= hi");
        if (lo == hi) return point(lo);
        return IntervalAtom(Kind::box, lo, hi);
    }
    static IntervalAtom half_line_below(Scalar hi) {
        return IntervalAtom(Kind::half_line_below, -std::numeric_limits<Scalar>::infinity(), hi);
    }

    Kind kind() const { return kind_; }
    Scalar lower() const { return lo_; }
    Scalar upper() const { return hi_; }

    // Half-lines keep an infinite lower end under every tau >= 0, so cones
    // (hi = 0) are invariant.
    IntervalAtom scaled(Scalar tau) const {
        if (kind_ == Kind::half_line_below) return half_line_below(tau * hi_);
        return IntervalAtom(kind_ == Kind::point || tau == Scalar(0) ? Kind::point : Kind::box,
                            tau * lo_, tau * hi_);
    }

    bool contains(Scalar x, Scalar tol = Scalar(0)) const {
        return x >= lo_ - tol && x <= hi_ + tol;
    }

    Scalar clamp(Scalar x) const { return std::clamp(x, lo_, hi_); }

    friend IntervalAtom operator+(const IntervalAtom& a, const IntervalAtom& b) {
        if (a.kind_ == Kind::half_line_below || b.kind_ == Kind::half_line_below)
            return half_line_below(a.hi_ + b.hi_);
        if (a.kind_ == Kind::point && b.kind_ == Kind::point) return point(a.lo_ + b.lo_);
        return IntervalAtom(Kind::box, a.lo_ + b.lo_, a.hi_ + b.hi_);
    }

    friend bool operator==(const IntervalAtom& a, const IntervalAtom& b) {
        return a.kind_ == b.kind_ && a.lo_ == b.lo_ && a.hi_ == b.hi_;
    }

private:
    IntervalAtom(Kind kind, Scalar lo, Scalar hi) : kind_(kind), lo_(lo), hi_(hi) {}

    Kind kind_;
    Scalar lo_;
    Scalar hi_;
};

/// Per-coordinate endpoints of one set: lower may be -inf (half-line atoms).
template <typename Scalar>
struct AtomVector {
    Vector<Scalar> lower;
    Vector<Scalar> upper;
    std::string label;

    Index size() const { return lower.size(); }

    IntervalAtom<Scalar> atom(Index coord) const {
        const Scalar lo = lower[coord];
        const Scalar hi = upper[coord];
        if (std::isinf(lo)) return IntervalAtom<Scalar>::half_line_below(hi);
        return IntervalAtom<Scalar>::box(lo, hi);
    }

    static AtomVector from_atoms(const std::vector<IntervalAtom<Scalar>>& atoms, std::string label) {
        AtomVector v{Vector<Scalar>(static_cast<Index>(atoms.size())),
                     Vector<Scalar>(static_cast<Index>(atoms.size())), std::move(label)};
        for (std::size_t i = 0; i < atoms.size(); ++i) {
            v.lower[static_cast<Index>(i)] = atoms[i].lower();
            v.upper[static_cast<Index>(i)] = atoms[i].upper();
        }
        return v;
    }
};

/// Endpoints of S(tau) = sum_i tau_i S_i + sum_j N_j, one interval per coordinate.
template <typename Scalar>
struct IntervalBounds {
    Vector<Scalar> lower;
    Vector<Scalar> upper;
};

/// The sum S(tau) of scalable sets and fixed cones, each a product of intervals.
template <typename Scalar>
class SeparableFamily {
public:
    SeparableFamily(Index n, std::vector<AtomVector<Scalar>> scaled,
                    std::vector<AtomVector<Scalar>> fixed)
        : n_(n), scaled_(std::move(scaled)), fixed_(std::move(fixed)) {
        if (n_ < 1) throw std::invalid_argument("family dimension must be positive");
        auto check = [this](const AtomVector<Scalar>& v) {
            if (v.lower.size() != n_ || v.upper.size() != n_)
                throw std::invalid_argument("atom vector '" + v.label + "' has wrong length");
            for (Index i = 0; i < n_; ++i) {
                if (std::isnan(v.lower[i]) || !std::isfinite(v.upper[i]) || v.lower[i] > v.upper[i])
                    throw std::invalid_argument("atom vector '" + v.label + "' has an invalid interval");
            }
        };
        for (const auto& v : scaled_) check(v);
        for (const auto& v : fixed_) check(v);

        fixed_lower_ = Vector<Scalar>::Zero(n_);
        fixed_upper_ = Vector<Scalar>::Zero(n_);
        for (const auto& v : fixed_) {
            fixed_lower_ += v.lower;
            fixed_upper_ += v.upper;
        }
    }

    Index dim() const { return n_; }
    Index num_scaled() const { return static_cast<Index>(scaled_.size()); }
    Index num_fixed() const { return static_cast<Index>(fixed_.size()); }
    const std::vector<AtomVector<Scalar>>& scaled_sets() const { return scaled_; }
    const std::vector<AtomVector<Scalar>>& fixed_sets() const { return fixed_; }

    void check_tau(const Vector<Scalar>& tau) const {
        if (tau.size() != num_scaled())
            throw std::invalid_argument("tau length does not match the number of scalable sets");
        for (Index i = 0; i < tau.size(); ++i)
            if (!(tau[i] >= Scalar(0)) || !std::isfinite(tau[i]))
                throw std::invalid_argument("tau must be finite and nonnegative");
    }

    /// Endpoints of S(tau) for every coordinate. Lower ends are -inf wherever a
    /// half-line participates.
    IntervalBounds<Scalar> bounds(const Vector<Scalar>& tau) const {
        check_tau(tau);
        IntervalBounds<Scalar> b{fixed_lower_, fixed_upper_};
        for (std::size_t i = 0; i < scaled_.size(); ++i) {
            const Scalar t = tau[static_cast<Index>(i)];
            const auto& v = scaled_[i];
            b.upper += t * v.upper;
            b.lower = (v.lower.array().isInf())
                          .select(v.lower, b.lower + t * v.lower)
                          .eval();
        }
        return b;
    }

private:
    Index n_;
    std::vector<AtomVector<Scalar>> scaled_;
    std::vector<AtomVector<Scalar>> fixed_;
    Vector<Scalar> fixed_lower_;
    Vector<Scalar> fixed_upper_;
};

enum class Objective { l1 };
enum class Constraint { l2_ball, nonneg };

/// Scalable sets: the l1 subdifferential, then the l2 singleton when the
/// l2-ball constraint is present. Fixed: the normal cone of the orthant.
template <typename Scalar>
SeparableFamily<Scalar> build_family(const SparseSignal<Scalar>& signal, Objective objective,
                                     const std::vector<Constraint>& constraints) {
    (void)objective;
    const Index n = signal.dim();
    const auto& x = signal.values();

    AtomVector<Scalar> l1{Vector<Scalar>::Constant(n, Scalar(-1)), Vector<Scalar>::Constant(n, Scalar(1)),
                          "l1"};
    for (Index i : signal.support()) {
        const Scalar sign = x[i] > Scalar(0) ? Scalar(1) : Scalar(-1);
        l1.lower[i] = sign;
        l1.upper[i] = sign;
    }
    std::vector<AtomVector<Scalar>> scaled{std::move(l1)};
    std::vector<AtomVector<Scalar>> fixed;

    bool seen_ball = false, seen_nonneg = false;
    for (Constraint c : constraints) {
        switch (c) {
        case Constraint::l2_ball: {
            if (seen_ball) throw std::invalid_argument("duplicate l2_ball constraint");
            seen_ball = true;
            const Vector<Scalar> dir = x / x.norm();
            scaled.push_back(AtomVector<Scalar>{dir, dir, "l2_ball"});
            break;
        }
        case Constraint::nonneg: {
            if (seen_nonneg) throw std::invalid_argument("duplicate nonneg constraint");
            seen_nonneg = true;
            if (signal.variant() != SignalVariant::nonnegative)
                throw std::invalid_argument("nonneg constraint requires a nonnegative signal");
            AtomVector<Scalar> cone{Vector<Scalar>::Constant(n, -std::numeric_limits<Scalar>::infinity()),
                                    Vector<Scalar>::Zero(n), "nonneg"};
            for (Index i : signal.support()) cone.lower[i] = Scalar(0);
            fixed.push_back(std::move(cone));
            break;
        }
        }
    }
    return SeparableFamily<Scalar>(n, std::move(scaled), std::move(fixed));
}

template <typename Scalar>
IntervalAtom<Scalar> interval_sum_at(const SeparableFamily<Scalar>& family, const Vector<Scalar>& tau,
                                     Index coord) {
    family.check_tau(tau);
    if (coord < 0 || coord >= family.dim()) throw std::invalid_argument("coordinate out of range");
    auto sum = IntervalAtom<Scalar>::point(Scalar(0));
    for (Index i = 0; i < family.num_scaled(); ++i)
        sum = sum + family.scaled_sets()[static_cast<std::size_t>(i)].atom(coord).scaled(tau[i]);
    for (const auto& v : family.fixed_sets()) sum = sum + v.atom(coord);
    return sum;
}

/// Squared distance from g to the product of intervals.
template <typename Scalar, typename Derived>
Scalar dist_sq(const IntervalBounds<Scalar>& b, const Eigen::MatrixBase<Derived>& g) {
    const auto above = (g.array() - b.upper.array()).cwiseMax(Scalar(0));
    const auto below = (b.lower.array() - g.array()).cwiseMax(Scalar(0));
    return above.square().sum() + below.square().sum();
}

/// Squared distance and its gradient in tau, -2 <g - P(g), s_i> with s_i the
/// active endpoint of set i. At tau_i = 0 this is the right derivative.
template <typename Scalar, typename Derived>
Scalar dist_sq_with_gradient(const SeparableFamily<Scalar>& family, const IntervalBounds<Scalar>& b,
                             const Eigen::MatrixBase<Derived>& g, std::type_identity_t<Eigen::Ref<Vector<Scalar>>> grad) {
    const Vector<Scalar> residual =
        (g.array() - b.upper.array()).cwiseMax(Scalar(0)) - (b.lower.array() - g.array()).cwiseMax(Scalar(0));
    for (Index i = 0; i < family.num_scaled(); ++i) {
        const auto& v = family.scaled_sets()[static_cast<std::size_t>(i)];
        const Vector<Scalar> active =
            (residual.array() > Scalar(0)).select(v.upper, (residual.array() < Scalar(0)).select(v.lower, Scalar(0)));
        grad[i] = Scalar(-2) * residual.dot(active);
    }
    return residual.squaredNorm();
}

template <typename Scalar>
struct ProjectionDecomposition {
    Vector<Scalar> projection;
    std::vector<Vector<Scalar>> components;        ///< tau_i * s_i, one per scalable set
    std::vector<Vector<Scalar>> fixed_components;  ///< one per fixed cone
    std::vector<Vector<Scalar>> directions;        ///< unscaled s_i in S_i used for the gradient
    Vector<Scalar> residual;
};

/// Exact squared distance from g to S(tau) with a decomposition of the
/// nearest point. Each coordinate's projected value is split greedily in set
/// order (scalable first, fixed last), keeping every later set feasible.
template <typename Scalar>
std::pair<Scalar, ProjectionDecomposition<Scalar>> dist_sq_and_project(const SeparableFamily<Scalar>& family,
                                                                       const Vector<Scalar>& tau,
                                                                       const Vector<Scalar>& g) {
    if (g.size() != family.dim()) throw std::invalid_argument("query length does not match family dimension");
    const auto b = family.bounds(tau);
    const Index n = family.dim();
    const auto k = static_cast<std::size_t>(family.num_scaled());
    const auto f = static_cast<std::size_t>(family.num_fixed());

    ProjectionDecomposition<Scalar> out;
    out.projection = g.cwiseMax(b.lower).cwiseMin(b.upper);
    out.residual = g - out.projection;
    out.components.assign(k, Vector<Scalar>::Zero(n));
    out.fixed_components.assign(f, Vector<Scalar>::Zero(n));
    out.directions.assign(k, Vector<Scalar>::Zero(n));

    std::vector<IntervalAtom<Scalar>> parts;
    parts.reserve(k + f);
    std::vector<Scalar> rest_lo(k + f + 1), rest_hi(k + f + 1);
    for (Index j = 0; j < n; ++j) {
        parts.clear();
        for (std::size_t i = 0; i < k; ++i)
            parts.push_back(family.scaled_sets()[i].atom(j).scaled(tau[static_cast<Index>(i)]));
        for (const auto& v : family.fixed_sets()) parts.push_back(v.atom(j));

        // Suffix sums of the remaining sets' reachable range.
        rest_lo[parts.size()] = Scalar(0);
        rest_hi[parts.size()] = Scalar(0);
        for (std::size_t p = parts.size(); p-- > 0;) {
            rest_lo[p] = rest_lo[p + 1] + parts[p].lower();
            rest_hi[p] = rest_hi[p + 1] + parts[p].upper();
        }

        Scalar remaining = out.projection[j];
        for (std::size_t p = 0; p < parts.size(); ++p) {
            const Scalar lo = std::max(parts[p].lower(), remaining - rest_hi[p + 1]);
            const Scalar hi = std::min(parts[p].upper(), remaining - rest_lo[p + 1]);
            const Scalar c = p + 1 == parts.size() ? remaining : std::clamp(remaining, lo, std::max(lo, hi));
            if (p < k)
                out.components[p][j] = c;
            else
                out.fixed_components[p - k][j] = c;
            remaining -= c;
        }

        for (std::size_t i = 0; i < k; ++i) {
            const auto& v = family.scaled_sets()[i];
            const Scalar t = tau[static_cast<Index>(i)];
            if (out.residual[j] > Scalar(0))
                out.directions[i][j] = v.upper[j];
            else if (out.residual[j] < Scalar(0))
                out.directions[i][j] = v.lower[j];
            else if (t > Scalar(0))
                out.directions[i][j] = v.atom(j).clamp(out.components[i][j] / t);
            else
                out.directions[i][j] = v.atom(j).clamp(Scalar(0));
        }
    }
    return {out.residual.squaredNorm(), std::move(out)};
}

/// Extension point for sets that are not coordinate-wise separable. No
/// implementation ships; separable families cover every supported program.
template <typename Scalar>
class ProjectionOracle {
public:
    virtual ~ProjectionOracle() = default;
    virtual Index dim() const = 0;
    virtual Vector<Scalar> project(const Vector<Scalar>& point) const = 0;
};

}  // namespace phasekit
