#pragma once

// Interval reachability cone: a chain of axis-aligned boxes, one per future
// observation step, grown by a first-order interval image plus an additive
// bloat that absorbs the discretization defect.

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <vector>

#include "cbfmon/dynamics.hpp"
#include "cbfmon/geometry.hpp"
#include "cbfmon/rng.hpp"

namespace cbfmon {

struct Cone {
    std::vector<Box> slices;  // slices[k] covers the state k steps ahead
    double bloat = 0.0;
};

struct ConeResult {
    Cone cone;
    std::optional<Eigen::VectorXd> unsafe_witness;
    int depth = 0;  // slice index of the witness, or the scanned horizon
};

// One-step interval image {x + dt (A x + B u + c) : x in slice, u in U},
// inflated by bloat on every face and clipped to the operating domain.
// The per-coordinate interval is exact for the first-order map; clipping can
// empty the result when the whole image leaves the domain.
inline std::optional<Box> expand_slice(const SystemSpec& spec, const Box& slice,
                                       double bloat) {
    const int n = spec.system.state_dim();
    if (slice.dim() != n)
        throw std::invalid_argument("expand_slice: slice dimension mismatch");
    if (bloat < 0.0)
        throw std::invalid_argument("expand_slice: bloat must be nonnegative");
    Box in = Box::intersect(slice, spec.state_bounds)
                 ? *Box::intersect(slice, spec.state_bounds)
                 : slice;  // clip the input to the domain hull

    Eigen::MatrixXd M = Eigen::MatrixXd::Identity(n, n) + spec.dt * spec.system.A;
    Eigen::VectorXd lo(n), hi(n);
    for (int i = 0; i < n; ++i) {
        double l = spec.dt * spec.system.c[i];
        double h = l;
        for (int j = 0; j < n; ++j) {
            double a = M(i, j) * in.lower[j];
            double b = M(i, j) * in.upper[j];
            l += std::min(a, b);
            h += std::max(a, b);
        }
        Eigen::VectorXd brow = spec.dt * spec.system.B.row(i).transpose();
        l += box_extreme(brow, spec.control_box, false);
        h += box_extreme(brow, spec.control_box, true);
        lo[i] = l - bloat;
        hi[i] = h + bloat;
    }
    return Box::intersect(Box(lo, hi), spec.state_bounds);
}

namespace detail {

// slice ∩ X_u[i] feasibility, then a deterministic interior pick.
inline std::optional<Eigen::VectorXd> find_unsafe_in_slice(const SystemSpec& spec,
                                                           const Box& slice) {
    for (const auto& unsafe_poly : spec.unsafe) {
        if (unsafe_poly.trivially_infeasible) continue;
        Polytope q = unsafe_poly;
        q.add_box(slice);
        try {
            if (!polytope_nonempty(q)) continue;
            return chebyshev_center(q);
        } catch (const NumericalError&) {
            // Unverifiable intersection: conservatively report the slice
            // center as a hit.
            return slice.center();
        } catch (const std::invalid_argument&) {
            // The center LP disagreed with the feasibility LP at tolerance
            // level; same conservative fallback.
            return slice.center();
        }
    }
    return std::nullopt;
}

} // namespace detail

// Grows slices from the degenerate box {x}, checking each against the unsafe
// region as it is created. Returns at the first hit with the witness (a
// deterministic interior point of slice ∩ X_u) and its depth; otherwise the
// full h+1-slice cone with depth h. Stops early if expansion leaves the
// operating domain entirely (nothing further is reachable inside it).
inline ConeResult construct_cone(const SystemSpec& spec, const Eigen::VectorXd& x,
                                 int h, double bloat) {
    if (h < 0)
        throw std::invalid_argument("construct_cone: negative horizon");
    if (!spec.state_bounds.contains(x))
        throw std::invalid_argument("construct_cone: state outside operating domain");
    ConeResult res;
    res.cone.bloat = bloat;
    res.cone.slices.push_back(Box::point(x));
    for (int k = 0;; ++k) {
        if (auto w = detail::find_unsafe_in_slice(spec, res.cone.slices.back())) {
            res.unsafe_witness = std::move(w);
            res.depth = k;
            return res;
        }
        if (k == h) break;
        auto next = expand_slice(spec, res.cone.slices.back(), bloat);
        if (!next) break;
        res.cone.slices.push_back(std::move(*next));
    }
    res.depth = h;
    return res;
}

// Default bloat: 1.5x the largest one-step gap between the exact successor
// and the first-order map, over seeded uniform probes of X x U. Deterministic
// for a fixed seed and probe count.
inline double calibrate_bloat(const SystemSpec& spec, int n_probes = 1000000,
                              std::uint64_t seed = 1) {
    if (n_probes < 1)
        throw std::invalid_argument("calibrate_bloat: need at least one probe");
    const int n = spec.system.state_dim();
    const int m = spec.system.control_dim();
    ExactStepper st = ExactStepper::make(spec.system, spec.dt);
    Eigen::MatrixXd M = Eigen::MatrixXd::Identity(n, n) + spec.dt * spec.system.A;
    double worst = 0.0;
    Eigen::VectorXd x(n), u(m);
    std::uint64_t idx = 0;
    for (int p = 0; p < n_probes; ++p) {
        for (int i = 0; i < n; ++i)
            x[i] = rng_uniform(seed, idx++, spec.state_bounds.lower[i],
                               spec.state_bounds.upper[i]);
        for (int i = 0; i < m; ++i)
            u[i] = rng_uniform(seed, idx++, spec.control_box.lower[i],
                               spec.control_box.upper[i]);
        Eigen::VectorXd exact = st.step(x, u);
        Eigen::VectorXd euler = M * x + spec.dt * (spec.system.B * u + spec.system.c);
        worst = std::max(worst, (exact - euler).lpNorm<Eigen::Infinity>());
    }
    return 1.5 * worst;
}

} // namespace cbfmon
