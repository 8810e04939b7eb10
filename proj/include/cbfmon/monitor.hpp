#pragma once

// Stateful runtime monitor. Each observed state buys a fresh reachability
// cone two steps deeper than the requested horizon (the sampling slack on
// either side of an observation); if the cone clips the unsafe set, the
// boundary sweep has to certify every reachable barrier cube before the
// verdict stays 1. Verdicts latch at 0, the fail-safe hook fires exactly
// once, and a per-monitor cache carries certified cubes across steps without
// changing any verdict a cold monitor would produce.

#include <Eigen/Dense>

#include <chrono>
#include <cmath>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "cbfmon/cone.hpp"
#include "cbfmon/dynamics.hpp"
#include "cbfmon/relu_network.hpp"
#include "cbfmon/verifier.hpp"

namespace cbfmon {

struct MonitorConfig {
    int horizon_steps = 1;        // user horizon; the cone runs 2 steps deeper
    double budget = 0.0;          // per-step wall budget in seconds; 0 = epsilon
    double epsilon = 0.0;         // sampling period; 0 = spec.dt, else must equal it
    double bloat = 0.0;           // additive slice inflation radius
    VerifierConfig verifier;
    std::function<void()> fail_safe;  // invoked once, on the first 0 verdict
};

struct MonitorStep {
    int k = 0;
    int verdict = 1;
    Cause cause = Cause::None;
    double ms = 0.0;
    std::size_t verified_new = 0;  // cubes certified fresh during this step
    int cone_depth = 0;
    std::optional<Eigen::VectorXd> witness;  // violating point, when one exists
};

// Pluggable core: the abstraction builds the cone, the verifier settles it.
// monitor_next runs exactly these two through schematic_next, so any other
// pair with the same contracts slots into the same verdict machinery.
using AbstractionFn =
    std::function<ConeResult(const SystemSpec&, const Eigen::VectorXd&, int, double)>;
using VerifierFn = std::function<SweepResult(
    const SystemSpec&, const Eigen::VectorXd&, const ConeResult&, int, VerifiedCache&,
    const std::function<void()>&)>;

struct MonitorState {
    SystemSpec spec;
    ReluNetwork net;
    MonitorConfig cfg;
    int h_eff = 0;
    double epsilon = 0.0;
    double budget = 0.0;
    int k = 0;
    int verdict = 1;
    Cause cause = Cause::None;
    bool hook_fired = false;
    VerifiedCache cache;
    std::vector<MonitorStep> steps;
};

inline MonitorState monitor_init(const SystemSpec& spec, const ReluNetwork& net,
                                 const MonitorConfig& cfg) {
    validate_spec(spec);
    if (net.input_dim != spec.system.A.rows())
        throw std::invalid_argument("monitor_init: barrier input dimension mismatch");
    if (cfg.horizon_steps < 1)
        throw std::invalid_argument("monitor_init: horizon_steps must be >= 1");
    if (cfg.bloat < 0.0)
        throw std::invalid_argument("monitor_init: bloat must be nonnegative");

    MonitorState st;
    st.epsilon = (cfg.epsilon == 0.0) ? spec.dt : cfg.epsilon;
    if (std::abs(st.epsilon - spec.dt) > 1e-12)
        throw std::invalid_argument("monitor_init: epsilon must equal the sampling period");
    st.budget = (cfg.budget == 0.0) ? st.epsilon : cfg.budget;
    if (st.budget <= 0.0 || st.budget > st.epsilon + 1e-12)
        throw std::invalid_argument("monitor_init: budget must lie in (0, epsilon]");

    st.spec = spec;
    st.net = net;
    st.cfg = cfg;
    st.h_eff = cfg.horizon_steps + 2;
    return st;
}

inline AbstractionFn relu_abstraction() {
    return [](const SystemSpec& spec, const Eigen::VectorXd& x, int h, double bloat) {
        return construct_cone(spec, x, h, bloat);
    };
}

// The sweep needs the network and verifier knobs; both are captured by
// reference, so the returned callable must not outlive its arguments.
inline VerifierFn relu_verifier(const ReluNetwork& net, const VerifierConfig& vcfg) {
    return [&net, &vcfg](const SystemSpec& spec, const Eigen::VectorXd& x,
                         const ConeResult& cr, int h, VerifiedCache& cache,
                         const std::function<void()>& fail_safe) -> SweepResult {
        if (!cr.unsafe_witness) {
            SweepResult ok;
            ok.final_cone = cr.cone;
            ok.final_depth = cr.depth;
            return ok;  // unsafe set unreachable within the horizon
        }
        return verify_cubes_on_boundary(spec, net, x, *cr.unsafe_witness, cr.cone,
                                        cr.depth, h, vcfg, cache, fail_safe);
    };
}

inline MonitorStep schematic_next(MonitorState& st, const Eigen::VectorXd& x,
                                  const AbstractionFn& abstraction,
                                  const VerifierFn& verifier) {
    MonitorStep step;
    step.k = st.k;

    auto hook = [&st] {
        if (!st.hook_fired) {
            st.hook_fired = true;
            if (st.cfg.fail_safe) st.cfg.fail_safe();
        }
    };

    if (st.verdict == 0) {
        // Latched: nothing further to compute.
        step.verdict = 0;
        step.cause = st.cause;
        ++st.k;
        st.steps.push_back(step);
        return step;
    }

    const auto t0 = std::chrono::steady_clock::now();
    if (x.size() != st.net.input_dim || !st.spec.state_bounds.contains(x) ||
        !x.allFinite()) {
        step.verdict = 0;
        step.cause = Cause::Numerical;
        hook();
    } else {
        try {
            ConeResult cr = abstraction(st.spec, x, st.h_eff, st.cfg.bloat);
            SweepResult sr = verifier(st.spec, x, cr, st.h_eff, st.cache, hook);
            step.verdict = sr.verdict;
            step.cause = sr.cause;
            step.verified_new = sr.verified_keys.size();
            step.cone_depth = sr.final_depth;
            step.witness = std::move(sr.witness);
        } catch (const NumericalError&) {
            step.verdict = 0;
            step.cause = Cause::Numerical;
            hook();
        } catch (const std::invalid_argument&) {
            step.verdict = 0;
            step.cause = Cause::Numerical;
            hook();
        }
    }
    const auto t1 = std::chrono::steady_clock::now();
    step.ms = std::chrono::duration<double, std::milli>(t1 - t0).count();

    // Deadline misses taint a passing verdict's cause but never the verdict
    // itself; a failing verdict keeps its own cause.
    if (step.verdict == 1 && step.ms > st.budget * 1e3) step.cause = Cause::BudgetOverrun;

    st.verdict = step.verdict;
    st.cause = (step.cause == Cause::BudgetOverrun && step.verdict == 1) ? Cause::None
                                                                         : step.cause;
    ++st.k;
    st.steps.push_back(step);
    return step;
}

inline MonitorStep monitor_next(MonitorState& st, const Eigen::VectorXd& x) {
    return schematic_next(st, x, relu_abstraction(), relu_verifier(st.net, st.cfg.verifier));
}

} // namespace cbfmon
