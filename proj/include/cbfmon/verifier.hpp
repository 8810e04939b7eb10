#pragma once

/**
 * @file verifier.hpp
 * @brief Per-region certificate checks and the boundary sweep that walks the
 *        zero-level surface of a ReLU barrier inside a reachability cone.
 *
 * Every activation pattern pins the barrier to an affine form on a closed
 * polyhedral region ("cube"). A cube is certified by linear programs only:
 * the region must avoid the unsafe set wherever the barrier is nonnegative,
 * and on the zero-level slice of the region the barrier's directional flow
 * must not point outward for the quantified control set. The sweep seeds at
 * a zero crossing found by bisection, then breadth-first expands across
 * 1-bit pattern flips, deferring cubes the cone has not reached yet and
 * growing the cone slice by slice until the horizon is exhausted.
 *
 * Failure handling is uniformly conservative: any LP that cannot be decided
 * counts against the certificate, never in its favor.
 */

#include <Eigen/Dense>

#include <deque>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

#include "cbfmon/dynamics.hpp"
#include "cbfmon/geometry.hpp"
#include "cbfmon/relu_network.hpp"
#include "cbfmon/cone.hpp"

namespace cbfmon {

/// Why a verdict dropped to zero (or, for budget_overrun alone, why a passing
/// verdict should still worry the caller).
enum class Cause {
    None,
    UnsafeReach,     // reachable unsafe point inside the claimed invariant set
    CubeViolation,   // some boundary cube failed a certificate condition
    BudgetOverrun,   // step exceeded the time budget
    Numerical        // out-of-domain observation or unverifiable computation
};

inline const char* cause_name(Cause c) {
    switch (c) {
        case Cause::UnsafeReach: return "unsafe_reach";
        case Cause::CubeViolation: return "cube_violation";
        case Cause::BudgetOverrun: return "budget_overrun";
        case Cause::Numerical: return "numerical";
        default: return "";
    }
}

struct VerifierConfig {
    bool robust = true;              // quantify controls universally; false = existentially
    double tol = kLpTol;             // certificate slack delta
    bool check_unstable = false;     // directional checks on every unstable face
    bool interior_lie_check = false; // optional Lie condition on {B >= 0}
    double lambda = 0.0;             // class-K slope for the interior check
    double tau_z = kDefaultTauZ;     // unstable-neuron tolerance for patterns
    int bisection_cap = 64;
};

/// Activation region with everything the checks need: canonical pattern, the
/// region polytope already clipped to the operating domain, and the affine
/// restriction of the barrier.
struct Cube {
    ActivationPattern pattern;
    Polytope region;
    MaskedAffine aff;
};

inline Cube make_cube(const ReluNetwork& net, const SystemSpec& spec,
                      const ActivationPattern& pattern) {
    Cube c;
    c.pattern = pattern;
    c.region = cube_polytope(net, pattern);
    c.region.add_box(spec.state_bounds);
    c.aff = masked_affine(net, pattern);
    return c;
}

enum class CubeStatus { Valid, Violation, Empty, OutsideCone };

/// margin is the worst signed slack across the performed flow checks
/// (positive means satisfied with room, +inf when every check was vacuous);
/// witness, when present, violates its condition under direct arithmetic.
struct VerificationOutcome {
    CubeStatus status = CubeStatus::Valid;
    double margin = std::numeric_limits<double>::infinity();
    std::optional<Eigen::VectorXd> witness;
    bool touches_boundary = false;
};

/// All one-bit flips of a canonical pattern, layer-major, neuron-minor.
inline std::vector<ActivationPattern> neighborhood(const ReluNetwork& net,
                                                   const ActivationPattern& A) {
    detail::check_pattern_shape(net, A, "neighborhood");
    if (!A.is_canonical())
        throw std::invalid_argument("neighborhood: pattern must be canonical");
    std::vector<ActivationPattern> out;
    out.reserve(net.total_hidden_neurons());
    for (int i = 0; i < net.num_hidden_layers(); ++i)
        for (int j = 0; j < net.layer_width(i); ++j) {
            ActivationPattern p = A;
            p.active[i][j] ^= 1;
            out.push_back(std::move(p));
        }
    return out;
}

namespace detail {

struct FlowCheck {
    bool vacuous = true;
    double slack = std::numeric_limits<double>::infinity();
    Eigen::VectorXd witness;
};

// Worst value of d.(A x + c) + extreme_u d.B u over P. lower_bound=true
// evaluates the infimum (a ">= 0" condition), false the supremum (a "<= 0"
// condition); the control extreme follows the quantifier in cfg. slack is
// signed so that negative always means violated.
inline FlowCheck check_flow(const Polytope& P, const Eigen::VectorXd& d,
                            const SystemSpec& spec, bool lower_bound,
                            const VerifierConfig& cfg,
                            const Eigen::VectorXd& extra_obj = {},
                            double extra_const = 0.0) {
    FlowCheck fc;
    Eigen::VectorXd obj = spec.system.A.transpose() * d;
    if (extra_obj.size() > 0) obj += extra_obj;
    LpResult lp = lp_minimize(P, lower_bound ? obj : (-obj).eval());
    if (lp.status == LpStatus::Infeasible) return fc;
    if (lp.status != LpStatus::Optimal)
        throw NumericalError("check_flow: unbounded flow objective");
    const bool maximize_u = lower_bound ? !cfg.robust : cfg.robust;
    double q = box_extreme(spec.system.B.transpose() * d, spec.control_box, maximize_u);
    // Re-evaluate at the optimizer directly so the reported slack is honest
    // arithmetic at a concrete point, not the drifted tableau value.
    double value = obj.dot(lp.point) + d.dot(spec.system.c) + q + extra_const;
    fc.vacuous = false;
    fc.slack = lower_bound ? value : -value;
    fc.witness = lp.point;
    return fc;
}

} // namespace detail

/// Certifies one cube. Checks, in order: region nonemptiness; disjointness of
/// region ∩ {B >= 0} from every unsafe polytope; the boundary flow condition
/// on region ∩ {B = 0}; optionally the per-face directional conditions on
/// every neuron face of that slice, and the interior Lie condition on
/// region ∩ {B >= 0}. Undecidable LPs are folded into a violation outcome.
inline VerificationOutcome verify_linear(const SystemSpec& spec, const Cube& cube,
                                         const VerifierConfig& cfg) {
    VerificationOutcome out;
    try {
        if (cube.region.trivially_infeasible || !polytope_nonempty(cube.region)) {
            out.status = CubeStatus::Empty;
            return out;
        }

        const Eigen::VectorXd& w = cube.aff.w_out;
        const double r = cube.aff.r_out;

        for (const auto& unsafe_poly : spec.unsafe) {
            if (unsafe_poly.trivially_infeasible) continue;
            Polytope q = cube.region;
            q.add({w, r, Sense::Ge});
            for (const auto& f : unsafe_poly.faces) q.add(f);
            if (q.trivially_infeasible) continue;
            LpResult lp = lp_minimize(q, Eigen::VectorXd::Zero(q.dim));
            if (lp.status == LpStatus::Optimal) {
                out.status = CubeStatus::Violation;
                out.margin = -std::numeric_limits<double>::infinity();
                out.witness = lp.point;
                return out;
            }
        }

        Polytope boundary = cube.region;
        boundary.add({w, r, Sense::Eq});

        auto fold = [&](const detail::FlowCheck& fc) {
            if (fc.vacuous) return true;
            out.margin = std::min(out.margin, fc.slack);
            if (fc.slack < -cfg.tol) {
                out.status = CubeStatus::Violation;
                out.witness = fc.witness;
                return false;
            }
            return true;
        };

        detail::FlowCheck flow = detail::check_flow(boundary, w, spec, true, cfg);
        out.touches_boundary = !flow.vacuous;
        if (!fold(flow)) return out;

        if (cfg.check_unstable && out.touches_boundary) {
            for (std::size_t i = 0; i < cube.aff.pre_grad.size(); ++i) {
                for (int j = 0; j < cube.aff.pre_grad[i].rows(); ++j) {
                    Polytope face = boundary;
                    Eigen::VectorXd a = cube.aff.pre_grad[i].row(j).transpose();
                    face.add({a, cube.aff.pre_off[i][j], Sense::Eq});
                    if (face.trivially_infeasible) continue;
                    bool active = cube.pattern.active[i][j];
                    if (!fold(detail::check_flow(face, a, spec, active, cfg))) return out;
                }
            }
        }

        if (cfg.interior_lie_check) {
            Polytope inside = cube.region;
            inside.add({w, r, Sense::Ge});
            if (!fold(detail::check_flow(inside, w, spec, true, cfg,
                                         cfg.lambda * w, cfg.lambda * r)))
                return out;
        }
    } catch (const NumericalError&) {
        out.status = CubeStatus::Violation;
        out.margin = -std::numeric_limits<double>::infinity();
        out.witness.reset();
    }
    return out;
}

/// Result of bisecting the segment x_safe -> x_unsafe for a zero crossing.
/// When the unsafe endpoint itself satisfies B >= 0 the certificate is
/// already breached and no search result is produced.
struct BoundarySearchResult {
    bool unsafe_in_invariant = false;
    Eigen::VectorXd point;  // final midpoint (or the offending unsafe point)
    Eigen::VectorXd lo;     // final bracket, B(lo) >= 0
    Eigen::VectorXd hi;     // final bracket, B(hi) <  0
    std::optional<Cube> cube;
};

/// Sign bisection with cap cfg.bisection_cap, stopping once |B| <= tol_B.
/// The returned cube is the canonical region of the midpoint's pattern
/// (unstable neurons promoted to active). Requires B(x_safe) >= 0.
inline BoundarySearchResult binary_search_boundary(const ReluNetwork& net,
                                                   const SystemSpec& spec,
                                                   const Eigen::VectorXd& x_safe,
                                                   const Eigen::VectorXd& x_unsafe,
                                                   double tol_B,
                                                   const VerifierConfig& cfg = {}) {
    BoundarySearchResult res;
    if (forward(net, x_unsafe) >= 0.0) {
        res.unsafe_in_invariant = true;
        res.point = x_unsafe;
        res.lo = x_safe;
        res.hi = x_unsafe;
        return res;
    }
    if (forward(net, x_safe) < 0.0)
        throw std::invalid_argument("binary_search_boundary: B(x_safe) must be >= 0");
    Eigen::VectorXd lo = x_safe, hi = x_unsafe;
    Eigen::VectorXd mid = 0.5 * (lo + hi);
    for (int it = 0; it < cfg.bisection_cap; ++it) {
        mid = 0.5 * (lo + hi);
        double b = forward(net, mid);
        if (std::abs(b) <= tol_B) break;
        (b >= 0.0 ? lo : hi) = mid;
    }
    res.point = mid;
    res.lo = lo;
    res.hi = hi;
    res.cube = make_cube(net, spec, activation_pattern(net, mid, cfg.tau_z).canonicalized());
    return res;
}

/// Cubes already settled by earlier steps of the same monitor. A hit skips
/// the LP work only; traversal is unaffected, so verdicts match a cold run.
/// Insert/lookup are guarded for concurrent sweeps and idempotent.
class VerifiedCache {
  public:
    bool known_valid(const std::string& k) const { return contains(valid_, k); }
    bool known_empty(const std::string& k) const { return contains(empty_, k); }
    bool known_off_boundary(const std::string& k) const { return contains(off_boundary_, k); }
    void insert_valid(const std::string& k) { insert(valid_, k); }
    void insert_empty(const std::string& k) { insert(empty_, k); }
    void insert_off_boundary(const std::string& k) { insert(off_boundary_, k); }

    std::size_t valid_count() const {
        std::lock_guard<std::mutex> g(*mu_);
        return valid_.size();
    }

  private:
    bool contains(const std::unordered_set<std::string>& s, const std::string& k) const {
        std::lock_guard<std::mutex> g(*mu_);
        return s.count(k) > 0;
    }
    void insert(std::unordered_set<std::string>& s, const std::string& k) {
        std::lock_guard<std::mutex> g(*mu_);
        s.insert(k);
    }
    std::unordered_set<std::string> valid_, empty_, off_boundary_;
    // Owned indirectly so the cache (and the monitor state holding it) stays
    // movable.
    std::unique_ptr<std::mutex> mu_ = std::make_unique<std::mutex>();
};

/// Outcome of one boundary sweep. verified_keys lists freshly certified cubes
/// in visit order; final_cone/final_depth reflect the cone as of the last
/// sweep, for diagnostics and containment tests.
struct SweepResult {
    int verdict = 1;
    Cause cause = Cause::None;
    std::optional<Eigen::VectorXd> witness;
    std::vector<std::string> verified_keys;
    Cone final_cone;
    int final_depth = 0;
};

/// Walks the barrier's zero-level surface inside the cone, certifying every
/// reachable cube. Per sweep: deferred cubes that now intersect the cone are
/// certified and enter the BFS queue; the queue expands across 1-bit pattern
/// flips, skipping settled/empty/off-surface cubes and deferring cubes the
/// cone has not reached. The cone then grows one slice; the loop ends when
/// nothing is deferred or depth i exceeds h. Any failed check invokes the
/// fail-safe hook once and latches verdict 0.
inline SweepResult verify_cubes_on_boundary(const SystemSpec& spec, const ReluNetwork& net,
                                            const Eigen::VectorXd& x,
                                            const Eigen::VectorXd& x_unsafe, Cone cone,
                                            int i, int h, const VerifierConfig& cfg,
                                            VerifiedCache& cache,
                                            const std::function<void()>& fail_safe = {}) {
    SweepResult res;
    res.final_depth = i;
    auto fail = [&](Cause cause, std::optional<Eigen::VectorXd> witness) {
        res.verdict = 0;
        res.cause = cause;
        res.witness = std::move(witness);
        if (fail_safe) fail_safe();
        return res;
    };

    double b_safe = forward(net, x);
    if (b_safe < 0.0) {
        // Contract breach (the observed state already left the invariant
        // set); fold into a conservative verdict.
        res.final_cone = std::move(cone);
        return fail(Cause::Numerical, x);
    }
    const double tol_B = 1e-6 * (1.0 + std::abs(b_safe));
    BoundarySearchResult bs = binary_search_boundary(net, spec, x, x_unsafe, tol_B, cfg);
    if (bs.unsafe_in_invariant) {
        res.final_cone = std::move(cone);
        return fail(Cause::UnsafeReach, x_unsafe);
    }

    // Seed with the midpoint cube plus both bracket endpoints: if the
    // midpoint's region only grazes the surface, a bracket cube still anchors
    // the walk.
    std::vector<ActivationPattern> boundary;
    std::unordered_set<std::string> boundary_seen;
    auto seed = [&](const Eigen::VectorXd& p) {
        ActivationPattern pat = activation_pattern(net, p, cfg.tau_z).canonicalized();
        std::string k = pat.key();
        if (boundary_seen.insert(k).second) boundary.push_back(std::move(pat));
    };
    seed(bs.point);
    seed(bs.lo);
    seed(bs.hi);

    std::unordered_set<std::string> expanded;  // entered the BFS this call

    auto region_nonempty = [&](const Cube& c) {
        if (c.region.trivially_infeasible) return false;
        try {
            return polytope_nonempty(c.region);
        } catch (const NumericalError&) {
            return true;  // undecided: keep it in play
        }
    };
    auto touches_surface = [&](const Cube& c) {
        Polytope p = c.region;
        p.add({c.aff.w_out, c.aff.r_out, Sense::Eq});
        if (p.trivially_infeasible) return false;
        try {
            return polytope_nonempty(p);
        } catch (const NumericalError&) {
            return true;
        }
    };
    auto intersects_cone = [&](const Cube& c, const Box& hull) {
        try {
            Polytope ph = c.region;
            ph.add_box(hull);
            if (!polytope_nonempty(ph)) return false;  // sound reject: hull covers all slices
            for (int s = static_cast<int>(cone.slices.size()) - 1; s >= 0; --s) {
                Polytope p = c.region;
                p.add_box(cone.slices[s]);
                if (polytope_nonempty(p)) return true;
            }
            return false;
        } catch (const NumericalError&) {
            return true;
        }
    };
    auto cone_hull = [&]() {
        Eigen::VectorXd lo = cone.slices.front().lower;
        Eigen::VectorXd hi = cone.slices.front().upper;
        for (const auto& s : cone.slices) {
            lo = lo.cwiseMin(s.lower);
            hi = hi.cwiseMax(s.upper);
        }
        return Box(lo, hi);
    };

    // nullopt: cube settled, skipped, or deferred; otherwise the cube is
    // certified and ready for expansion. A violation comes back through
    // *witness. Cached-valid cubes skip the feasibility and certificate LPs
    // (they were proven nonempty, on-surface, and valid when first seen) but
    // still take the cone test, which depends on the current sweep.
    auto admit = [&](const ActivationPattern& pat, const std::string& k, const Box& hull,
                     bool* deferred, std::optional<Eigen::VectorXd>* witness) -> std::optional<Cube> {
        *deferred = false;
        if (cache.known_empty(k) || cache.known_off_boundary(k)) return std::nullopt;
        if (cache.known_valid(k)) {
            Cube cube = make_cube(net, spec, pat);
            if (!intersects_cone(cube, hull)) {
                *deferred = true;
                return std::nullopt;
            }
            return cube;
        }
        Cube cube = make_cube(net, spec, pat);
        if (!region_nonempty(cube)) {
            cache.insert_empty(k);
            return std::nullopt;
        }
        if (!touches_surface(cube)) {
            cache.insert_off_boundary(k);
            return std::nullopt;
        }
        if (!intersects_cone(cube, hull)) {
            *deferred = true;
            return std::nullopt;
        }
        VerificationOutcome out = verify_linear(spec, cube, cfg);
        if (out.status == CubeStatus::Violation) {
            *witness = out.witness ? out.witness : std::optional<Eigen::VectorXd>(bs.point);
            return std::nullopt;
        }
        if (out.status == CubeStatus::Empty) {
            cache.insert_empty(k);
            return std::nullopt;
        }
        cache.insert_valid(k);
        res.verified_keys.push_back(k);
        return cube;
    };

    for (;;) {
        const Box hull = cone_hull();
        std::deque<Cube> queue;
        std::vector<ActivationPattern> next_boundary;
        std::unordered_set<std::string> next_seen;
        auto defer = [&](const ActivationPattern& pat, const std::string& k) {
            if (next_seen.insert(k).second) next_boundary.push_back(pat);
        };

        for (const auto& pat : boundary) {
            std::string k = pat.key();
            if (expanded.count(k)) continue;
            bool deferred = false;
            std::optional<Eigen::VectorXd> witness;
            auto cube = admit(pat, k, hull, &deferred, &witness);
            if (witness) {
                res.final_cone = std::move(cone);
                return fail(Cause::CubeViolation, std::move(witness));
            }
            if (deferred) {
                defer(pat, k);
                continue;
            }
            if (!cube) continue;
            expanded.insert(k);
            queue.push_back(std::move(*cube));
        }
        boundary = std::move(next_boundary);
        boundary_seen = std::move(next_seen);

        while (!queue.empty()) {
            Cube current = std::move(queue.front());
            queue.pop_front();
            for (auto& pat : neighborhood(net, current.pattern)) {
                std::string k = pat.key();
                if (expanded.count(k)) continue;
                bool deferred = false;
                std::optional<Eigen::VectorXd> witness;
                auto cube = admit(pat, k, hull, &deferred, &witness);
                if (witness) {
                    res.final_cone = std::move(cone);
                    return fail(Cause::CubeViolation, std::move(witness));
                }
                if (deferred) {
                    if (!boundary_seen.count(k)) {
                        boundary_seen.insert(k);
                        boundary.push_back(pat);
                    }
                    continue;
                }
                if (!cube) continue;
                expanded.insert(k);
                queue.push_back(std::move(*cube));
            }
        }

        if (boundary.empty() || i >= h) break;
        auto next = expand_slice(spec, cone.slices.back(), cone.bloat);
        if (!next) break;
        cone.slices.push_back(std::move(*next));
        ++i;
    }

    res.final_cone = std::move(cone);
    res.final_depth = i;
    return res;
}

} // namespace cbfmon
