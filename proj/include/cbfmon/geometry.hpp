#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>
#include <vector>

namespace cbfmon {

// Thrown when the LP solver exceeds its pivot cap or loses feasibility.
// Callers treat the affected check as unverifiable and fold it into a
// conservative outcome.
struct NumericalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class Sense { Ge, Le, Eq };

// Constraint normal.dot(x) + offset {>=,<=,==} 0.
struct Halfspace {
    Eigen::VectorXd normal;
    double offset = 0.0;
    Sense sense = Sense::Ge;
};

// Axis-aligned box with finite bounds, lower <= upper componentwise.
struct Box {
    Eigen::VectorXd lower;
    Eigen::VectorXd upper;

    Box() = default;
    Box(Eigen::VectorXd lo, Eigen::VectorXd hi) : lower(std::move(lo)), upper(std::move(hi)) {
        if (lower.size() != upper.size())
            throw std::invalid_argument("Box: bound dimension mismatch");
        for (int i = 0; i < lower.size(); ++i) {
            if (!std::isfinite(lower[i]) || !std::isfinite(upper[i]))
                throw std::invalid_argument("Box: bounds must be finite");
            if (lower[i] > upper[i])
                throw std::invalid_argument("Box: lower bound exceeds upper bound");
        }
    }

    static Box point(const Eigen::VectorXd& x) { return Box(x, x); }

    int dim() const { return static_cast<int>(lower.size()); }

    bool contains(const Eigen::VectorXd& x, double tol = 0.0) const {
        if (x.size() != lower.size()) return false;
        for (int i = 0; i < x.size(); ++i)
            if (x[i] < lower[i] - tol || x[i] > upper[i] + tol) return false;
        return true;
    }

    Eigen::VectorXd center() const { return 0.5 * (lower + upper); }

    // Componentwise intersection; empty result when the boxes are disjoint.
    static std::optional<Box> intersect(const Box& a, const Box& b) {
        Eigen::VectorXd lo = a.lower.cwiseMax(b.lower);
        Eigen::VectorXd hi = a.upper.cwiseMin(b.upper);
        for (int i = 0; i < lo.size(); ++i)
            if (lo[i] > hi[i]) return std::nullopt;
        return Box(std::move(lo), std::move(hi));
    }

    // Grows every face outward by r >= 0.
    Box inflate(double r) const {
        return Box(lower.array() - r, upper.array() + r);
    }
};

// Intersection of halfspaces in fixed dimension. Zero-normal constraints are
// resolved at insertion: tautologies are dropped, contradictions mark the
// polytope infeasible without touching the solver.
struct Polytope {
    int dim = 0;
    std::vector<Halfspace> faces;
    bool trivially_infeasible = false;

    Polytope() = default;
    explicit Polytope(int d) : dim(d) {}

    void add(Halfspace h) {
        if (h.normal.size() != dim)
            throw std::invalid_argument("Polytope::add: normal dimension mismatch");
        if (h.normal.lpNorm<Eigen::Infinity>() == 0.0) {
            bool ok = (h.sense == Sense::Ge && h.offset >= 0.0) ||
                      (h.sense == Sense::Le && h.offset <= 0.0) ||
                      (h.sense == Sense::Eq && h.offset == 0.0);
            if (!ok) trivially_infeasible = true;
            return;
        }
        faces.push_back(std::move(h));
    }

    void add_box(const Box& b) {
        if (b.dim() != dim)
            throw std::invalid_argument("Polytope::add_box: dimension mismatch");
        for (int i = 0; i < dim; ++i) {
            Eigen::VectorXd e = Eigen::VectorXd::Zero(dim);
            e[i] = 1.0;
            add({e, -b.lower[i], Sense::Ge});
            add({e, -b.upper[i], Sense::Le});
        }
    }

    static Polytope from_box(const Box& b) {
        Polytope p(b.dim());
        p.add_box(b);
        return p;
    }

    // Direct arithmetic check, no LP involved.
    bool contains(const Eigen::VectorXd& x, double tol = 0.0) const {
        if (trivially_infeasible) return false;
        for (const auto& f : faces) {
            double v = f.normal.dot(x) + f.offset;
            if (f.sense == Sense::Ge && v < -tol) return false;
            if (f.sense == Sense::Le && v > tol) return false;
            if (f.sense == Sense::Eq && std::abs(v) > tol) return false;
        }
        return true;
    }
};

enum class LpStatus { Optimal, Infeasible, Unbounded };

// point is meaningful only for Optimal; it satisfies every constraint and
// achieves value within kLpTol.
struct LpResult {
    LpStatus status = LpStatus::Infeasible;
    double value = std::numeric_limits<double>::quiet_NaN();
    Eigen::VectorXd point;
};

inline constexpr double kLpTol = 1e-7;   // feasibility / optimality tolerance
inline constexpr int kLpMaxPivots = 10000;

namespace detail {

// Dense two-phase tableau simplex over the standard form produced from a
// Polytope: free variables split x = xp - xn, inequalities slacked, rows
// normalized to nonnegative right-hand sides, artificials only where no slack
// can seed the basis. Bland's smallest-index rule for both the entering
// column and ratio-test ties, which makes every run deterministic and
// cycle-free; the pivot cap is a belt-and-braces guard.
class SimplexTableau {
  public:
    SimplexTableau(const Polytope& p, const Eigen::VectorXd& objective, int max_pivots)
        : d_(p.dim), max_pivots_(max_pivots) {
        const int m = static_cast<int>(p.faces.size());
        int n_slack = 0;
        for (const auto& f : p.faces)
            if (f.sense != Sense::Eq) ++n_slack;
        n_real_ = 2 * d_ + n_slack;

        Eigen::MatrixXd rows = Eigen::MatrixXd::Zero(m, n_real_);
        Eigen::VectorXd rhs(m);
        int slack = 0;
        for (int i = 0; i < m; ++i) {
            const auto& f = p.faces[i];
            rows.row(i).head(d_) = f.normal.transpose();
            rows.row(i).segment(d_, d_) = -f.normal.transpose();
            rhs[i] = -f.offset;
            if (f.sense == Sense::Ge)
                rows(i, 2 * d_ + slack++) = -1.0;
            else if (f.sense == Sense::Le)
                rows(i, 2 * d_ + slack++) = 1.0;
            if (rhs[i] < 0.0) {
                rows.row(i) *= -1.0;
                rhs[i] = -rhs[i];
            }
        }

        // Slack columns that survived sign normalization with +1 seed the
        // basis; remaining rows get artificial columns.
        basis_.assign(m, -1);
        std::vector<int> art_rows;
        for (int i = 0; i < m; ++i) {
            int col = -1;
            for (int j = 2 * d_; j < n_real_; ++j)
                if (rows(i, j) == 1.0) { col = j; break; }
            if (col >= 0) basis_[i] = col;
            else art_rows.push_back(i);
        }
        n_art_ = static_cast<int>(art_rows.size());
        n_ = n_real_ + n_art_;

        T_ = Eigen::MatrixXd::Zero(m, n_ + 1);
        T_.block(0, 0, m, n_real_) = rows;
        T_.col(n_) = rhs;
        for (int k = 0; k < n_art_; ++k) {
            T_(art_rows[k], n_real_ + k) = 1.0;
            basis_[art_rows[k]] = n_real_ + k;
        }

        objective_ = Eigen::VectorXd::Zero(n_real_);
        objective_.head(d_) = objective;
        objective_.segment(d_, d_) = -objective;
    }

    // Returns the solved status; for Optimal, x() yields the original-space
    // optimizer.
    LpStatus solve() {
        const int m = static_cast<int>(T_.rows());
        if (n_art_ > 0) {
            // Phase 1: minimize the sum of artificials. Unit cost on each
            // artificial column, then price out the starting basis so basic
            // columns carry reduced cost zero.
            Eigen::RowVectorXd cost = Eigen::RowVectorXd::Zero(n_ + 1);
            for (int k = 0; k < n_art_; ++k) cost[n_real_ + k] = 1.0;
            for (int i = 0; i < m; ++i)
                if (basis_[i] >= n_real_) cost -= T_.row(i);
            if (!run_phase(cost, /*allow_art=*/true)) return LpStatus::Unbounded;
            if (-cost[n_] > kLpTol) return LpStatus::Infeasible;
            drive_out_artificials(cost);
        }
        // Phase 2 on the real objective, artificials barred from entering.
        Eigen::RowVectorXd cost = Eigen::RowVectorXd::Zero(n_ + 1);
        cost.head(n_real_) = objective_.transpose();
        for (int i = 0; i < m; ++i)
            if (cost[basis_[i]] != 0.0) cost -= cost[basis_[i]] * T_.row(i);
        if (!run_phase(cost, /*allow_art=*/false)) return LpStatus::Unbounded;
        return LpStatus::Optimal;
    }

    Eigen::VectorXd x() const {
        Eigen::VectorXd full = Eigen::VectorXd::Zero(n_);
        for (int i = 0; i < static_cast<int>(basis_.size()); ++i)
            full[basis_[i]] = T_(i, n_);
        return full.head(d_) - full.segment(d_, d_);
    }

  private:
    static constexpr double kPivotEps = 1e-9;

    bool run_phase(Eigen::RowVectorXd& cost, bool allow_art) {
        const int m = static_cast<int>(T_.rows());
        const int limit = allow_art ? n_ : n_real_;
        for (;;) {
            int enter = -1;
            for (int j = 0; j < limit; ++j)
                if (cost[j] < -kPivotEps) { enter = j; break; }
            if (enter < 0) return true;

            int leave = -1;
            double best_ratio = 0.0;
            for (int i = 0; i < m; ++i) {
                double a = T_(i, enter);
                if (a <= kPivotEps) continue;
                double r = std::max(T_(i, n_), 0.0) / a;
                if (leave < 0 || r < best_ratio - kPivotEps ||
                    (r < best_ratio + kPivotEps && basis_[i] < basis_[leave])) {
                    leave = i;
                    best_ratio = r;
                }
            }
            if (leave < 0) return false;

            pivot(leave, enter, cost);
            if (++pivots_ > max_pivots_)
                throw NumericalError("lp_minimize: pivot cap exceeded");
        }
    }

    void pivot(int row, int col, Eigen::RowVectorXd& cost) {
        T_.row(row) /= T_(row, col);
        const int m = static_cast<int>(T_.rows());
        for (int i = 0; i < m; ++i) {
            if (i == row) continue;
            double f = T_(i, col);
            if (f != 0.0) T_.row(i) -= f * T_.row(row);
        }
        double fc = cost[col];
        if (fc != 0.0) cost -= fc * T_.row(row);
        basis_[row] = col;
    }

    // After phase 1 an artificial may linger in the basis at value zero;
    // pivot it onto any real column, or accept the row as redundant.
    void drive_out_artificials(Eigen::RowVectorXd& cost) {
        const int m = static_cast<int>(T_.rows());
        for (int i = 0; i < m; ++i) {
            if (basis_[i] < n_real_) continue;
            for (int j = 0; j < n_real_; ++j) {
                if (std::abs(T_(i, j)) > kPivotEps) {
                    pivot(i, j, cost);
                    break;
                }
            }
        }
    }

    int d_;
    int n_real_ = 0;
    int n_art_ = 0;
    int n_ = 0;
    int max_pivots_;
    int pivots_ = 0;
    Eigen::MatrixXd T_;
    Eigen::VectorXd objective_;
    std::vector<int> basis_;
};

} // namespace detail

// Minimizes objective.dot(x) + constant over P. Variables are free; equality
// constraints stay explicit. Throws NumericalError past the pivot cap.
inline LpResult lp_minimize(const Polytope& P, const Eigen::VectorXd& objective,
                            double constant = 0.0, int max_pivots = kLpMaxPivots) {
    if (objective.size() != P.dim)
        throw std::invalid_argument("lp_minimize: objective dimension mismatch");
    LpResult res;
    if (P.trivially_infeasible) {
        res.status = LpStatus::Infeasible;
        return res;
    }
    detail::SimplexTableau tab(P, objective, max_pivots);
    res.status = tab.solve();
    if (res.status == LpStatus::Optimal) {
        res.point = tab.x();
        res.value = objective.dot(res.point) + constant;
    } else if (res.status == LpStatus::Unbounded) {
        res.value = -std::numeric_limits<double>::infinity();
    }
    return res;
}

// Phase-1 feasibility. Propagates NumericalError.
inline bool polytope_nonempty(const Polytope& P) {
    return lp_minimize(P, Eigen::VectorXd::Zero(P.dim)).status == LpStatus::Optimal;
}

// Center of the largest inscribed ball, measured against the inequality
// faces; equality constraints pin the center to their affine subspace.
// Deterministic for a fixed constraint order. Requires P nonempty and
// bounded.
inline Eigen::VectorXd chebyshev_center(const Polytope& P) {
    Polytope Q(P.dim + 1);
    Q.trivially_infeasible = P.trivially_infeasible;
    for (const auto& f : P.faces) {
        Eigen::VectorXd n(P.dim + 1);
        if (f.sense == Sense::Eq) {
            n << f.normal, 0.0;
            Q.add({n, f.offset, Sense::Eq});
        } else {
            // Normalize to alpha.dot(x) <= beta, then charge the radius.
            Eigen::VectorXd alpha = (f.sense == Sense::Ge) ? (-f.normal).eval() : f.normal;
            double beta = (f.sense == Sense::Ge) ? f.offset : -f.offset;
            n << alpha, f.normal.norm();
            Q.add({n, -beta, Sense::Le});
        }
    }
    Eigen::VectorXd r_axis = Eigen::VectorXd::Zero(P.dim + 1);
    r_axis[P.dim] = 1.0;
    Q.add({r_axis, 0.0, Sense::Ge});

    LpResult res = lp_minimize(Q, -r_axis);
    if (res.status == LpStatus::Infeasible)
        throw std::invalid_argument("chebyshev_center: empty polytope");
    if (res.status == LpStatus::Unbounded)
        throw std::invalid_argument("chebyshev_center: unbounded polytope");
    return res.point.head(P.dim);
}

// Extreme value of v.dot(u) over a box, in closed form.
inline double box_extreme(const Eigen::VectorXd& v, const Box& box, bool maximize) {
    if (v.size() != box.dim())
        throw std::invalid_argument("box_extreme: dimension mismatch");
    double s = 0.0;
    for (int i = 0; i < v.size(); ++i) {
        double a = v[i] * box.lower[i];
        double b = v[i] * box.upper[i];
        s += maximize ? std::max(a, b) : std::min(a, b);
    }
    return s;
}

} // namespace cbfmon
