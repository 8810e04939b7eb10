#pragma once

/**
 * @file dynamics.hpp
 * @brief Control-affine linear plants, exact zero-order-hold discretization,
 *        and closed-loop simulation against black-box controllers.
 */

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>
#include <nlohmann/json.hpp>

#include <cmath>
#include <fstream>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "cbfmon/geometry.hpp"

namespace cbfmon {

// dx/dt = A x + B u + c
struct LinearAffineSystem {
    Eigen::MatrixXd A;
    Eigen::MatrixXd B;
    Eigen::VectorXd c;

    int state_dim() const { return static_cast<int>(A.rows()); }
    int control_dim() const { return static_cast<int>(B.cols()); }
};

// Plant plus the geometry the monitor reasons over: operating domain X,
// initial set X_0, unsafe region X_u (union of polytopes), control box U,
// and the observation interval dt.
struct SystemSpec {
    LinearAffineSystem system;
    Box state_bounds;
    Box initial_set;
    std::vector<Polytope> unsafe;
    Box control_box;
    double dt = 0.1;
};

struct Trace {
    std::vector<Eigen::VectorXd> states;    // n_steps + 1
    std::vector<Eigen::VectorXd> controls;  // n_steps, clamped into U
};

using Controller = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;

// ---- construction and validation -------------------------------------------

inline void validate_spec(const SystemSpec& s) {
    const int n = s.system.state_dim();
    const int m = s.system.control_dim();
    if (s.system.A.cols() != n)
        throw std::invalid_argument("SystemSpec: A must be square");
    if (s.system.B.rows() != n)
        throw std::invalid_argument("SystemSpec: B row count must match state dimension");
    if (s.system.c.size() != n)
        throw std::invalid_argument("SystemSpec: c length must match state dimension");
    if (s.state_bounds.dim() != n || s.initial_set.dim() != n)
        throw std::invalid_argument("SystemSpec: state boxes must match state dimension");
    if (s.control_box.dim() != m)
        throw std::invalid_argument("SystemSpec: control box must match control dimension");
    for (const auto& p : s.unsafe)
        if (p.dim != n)
            throw std::invalid_argument("SystemSpec: unsafe polytope dimension mismatch");
    if (!(s.dt > 0.0) || !std::isfinite(s.dt))
        throw std::invalid_argument("SystemSpec: dt must be positive and finite");
    for (int i = 0; i < n; ++i)
        if (s.initial_set.lower[i] < s.state_bounds.lower[i] ||
            s.initial_set.upper[i] > s.state_bounds.upper[i])
            throw std::invalid_argument("SystemSpec: initial set must lie inside state bounds");
}

// ---- Clohessy-Wiltshire relative motion -------------------------------------

// Six-state relative orbital dynamics [x y z vx vy vz] about a circular
// reference orbit with mean motion n_orbit, per-axis thrust inputs.
inline LinearAffineSystem cwh_system(double n_orbit) {
    LinearAffineSystem s;
    s.A = Eigen::MatrixXd::Zero(6, 6);
    s.A(0, 3) = 1.0;
    s.A(1, 4) = 1.0;
    s.A(2, 5) = 1.0;
    s.A(3, 0) = 3.0 * n_orbit * n_orbit;
    s.A(3, 4) = 2.0 * n_orbit;
    s.A(4, 3) = -2.0 * n_orbit;
    s.A(5, 2) = -n_orbit * n_orbit;
    s.B = Eigen::MatrixXd::Zero(6, 3);
    s.B(3, 0) = 1.0;
    s.B(4, 1) = 1.0;
    s.B(5, 2) = 1.0;
    s.c = Eigen::VectorXd::Zero(6);
    return s;
}

// ---- exact discretization ---------------------------------------------------

// One-step transition under a zero-order hold: x' = phi_x x + phi_u u + phi_c,
// obtained from the exponential of the augmented matrix [[A B c];[0 0 0]].
struct ExactStepper {
    Eigen::MatrixXd phi_x;
    Eigen::MatrixXd phi_u;
    Eigen::VectorXd phi_c;

    static ExactStepper make(const LinearAffineSystem& sys, double dt) {
        const int n = sys.state_dim();
        const int m = sys.control_dim();
        Eigen::MatrixXd M = Eigen::MatrixXd::Zero(n + m + 1, n + m + 1);
        M.topLeftCorner(n, n) = sys.A;
        M.block(0, n, n, m) = sys.B;
        M.block(0, n + m, n, 1) = sys.c;
        Eigen::MatrixXd E = (M * dt).exp();
        ExactStepper st;
        st.phi_x = E.topLeftCorner(n, n);
        st.phi_u = E.block(0, n, n, m);
        st.phi_c = E.block(0, n + m, n, 1);
        return st;
    }

    Eigen::VectorXd step(const Eigen::VectorXd& x, const Eigen::VectorXd& u) const {
        return phi_x * x + phi_u * u + phi_c;
    }
};

// ---- stepping and simulation ------------------------------------------------

inline Eigen::VectorXd clamp_to_box(const Eigen::VectorXd& u, const Box& box) {
    if (u.size() != box.dim())
        throw std::invalid_argument("clamp_to_box: dimension mismatch");
    return u.cwiseMax(box.lower).cwiseMin(box.upper);
}

/// Exact successor after spec.dt with u held constant. x must lie in the
/// (closed) operating domain and u inside the control box; clamping is the
/// caller's job.
inline Eigen::VectorXd step(const SystemSpec& spec, const Eigen::VectorXd& x,
                            const Eigen::VectorXd& u) {
    if (x.size() != spec.system.state_dim())
        throw std::invalid_argument("step: state dimension mismatch");
    if (u.size() != spec.system.control_dim())
        throw std::invalid_argument("step: control dimension mismatch");
    if (!spec.state_bounds.contains(x))
        throw std::invalid_argument("step: state outside operating domain");
    if (!spec.control_box.contains(u))
        throw std::invalid_argument("step: control outside control box");
    return ExactStepper::make(spec.system, spec.dt).step(x, u);
}

/// Closed-loop rollout: controller output is clamped componentwise into the
/// control box before each exact step. Only x0 is checked against the
/// operating domain; later states are recorded as-is and left to the caller
/// (the monitor flags out-of-domain observations itself).
inline Trace simulate(const SystemSpec& spec, const Controller& controller,
                      const Eigen::VectorXd& x0, int n_steps) {
    if (n_steps < 0)
        throw std::invalid_argument("simulate: negative step count");
    if (!spec.state_bounds.contains(x0))
        throw std::invalid_argument("simulate: x0 outside operating domain");
    ExactStepper st = ExactStepper::make(spec.system, spec.dt);
    Trace tr;
    tr.states.reserve(n_steps + 1);
    tr.controls.reserve(n_steps);
    tr.states.push_back(x0);
    for (int k = 0; k < n_steps; ++k) {
        Eigen::VectorXd u = controller(tr.states.back());
        if (u.size() != spec.system.control_dim())
            throw std::invalid_argument("simulate: controller output dimension mismatch");
        u = clamp_to_box(u, spec.control_box);
        tr.states.push_back(st.step(tr.states.back(), u));
        tr.controls.push_back(std::move(u));
    }
    return tr;
}

// ---- serialization ----------------------------------------------------------

namespace detail {

inline Eigen::VectorXd vec_from_json(const nlohmann::json& j, const std::string& where) {
    if (!j.is_array())
        throw std::invalid_argument(where + ": expected array");
    Eigen::VectorXd v(j.size());
    for (std::size_t i = 0; i < j.size(); ++i) v[i] = j[i].get<double>();
    if (!v.allFinite())
        throw std::invalid_argument(where + ": non-finite entry");
    return v;
}

inline Eigen::MatrixXd mat_from_json(const nlohmann::json& j, const std::string& where) {
    if (!j.is_array() || j.empty())
        throw std::invalid_argument(where + ": expected nonempty array of rows");
    const int rows = static_cast<int>(j.size());
    const int cols = static_cast<int>(j[0].size());
    Eigen::MatrixXd m(rows, cols);
    for (int r = 0; r < rows; ++r) {
        if (static_cast<int>(j[r].size()) != cols)
            throw std::invalid_argument(where + ": ragged rows");
        for (int c = 0; c < cols; ++c) m(r, c) = j[r][c].get<double>();
    }
    if (!m.allFinite())
        throw std::invalid_argument(where + ": non-finite entry");
    return m;
}

inline nlohmann::json vec_to_json(const Eigen::VectorXd& v) {
    nlohmann::json j = nlohmann::json::array();
    for (int i = 0; i < v.size(); ++i) j.push_back(v[i]);
    return j;
}

inline nlohmann::json mat_to_json(const Eigen::MatrixXd& m) {
    nlohmann::json j = nlohmann::json::array();
    for (int r = 0; r < m.rows(); ++r) {
        nlohmann::json row = nlohmann::json::array();
        for (int c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
        j.push_back(std::move(row));
    }
    return j;
}

inline Box box_from_json(const nlohmann::json& j, const std::string& where) {
    if (!j.contains("lower") || !j.contains("upper"))
        throw std::invalid_argument(where + ": box needs 'lower' and 'upper'");
    return Box(vec_from_json(j["lower"], where + ".lower"),
               vec_from_json(j["upper"], where + ".upper"));
}

inline nlohmann::json box_to_json(const Box& b) {
    return {{"lower", vec_to_json(b.lower)}, {"upper", vec_to_json(b.upper)}};
}

inline Sense sense_from_string(const std::string& s, const std::string& where) {
    if (s == ">=") return Sense::Ge;
    if (s == "<=") return Sense::Le;
    if (s == "=") return Sense::Eq;
    throw std::invalid_argument(where + ": sense must be one of \">=\", \"<=\", \"=\"");
}

inline std::string sense_to_string(Sense s) {
    switch (s) {
        case Sense::Ge: return ">=";
        case Sense::Le: return "<=";
        default: return "=";
    }
}

} // namespace detail

/// Parses a system configuration. The plant is either explicit matrices
/// {"A","B","c"} or {"cwh": {"mean_motion": n}}; boxes are lower/upper pairs;
/// the unsafe region is a list of {"halfspaces": [{normal, offset, sense}]}.
inline SystemSpec parse_system_spec(const nlohmann::json& j) {
    SystemSpec spec;
    if (!j.contains("system"))
        throw std::invalid_argument("system config: missing 'system'");
    const auto& js = j["system"];
    if (js.contains("cwh")) {
        spec.system = cwh_system(js["cwh"].at("mean_motion").get<double>());
    } else {
        spec.system.A = detail::mat_from_json(js.at("A"), "system.A");
        spec.system.B = detail::mat_from_json(js.at("B"), "system.B");
        spec.system.c = detail::vec_from_json(js.at("c"), "system.c");
    }
    spec.state_bounds = detail::box_from_json(j.at("state_bounds"), "state_bounds");
    spec.initial_set = detail::box_from_json(j.at("initial_set"), "initial_set");
    spec.control_box = detail::box_from_json(j.at("control_box"), "control_box");
    spec.dt = j.at("dt").get<double>();
    if (j.contains("unsafe")) {
        for (std::size_t pi = 0; pi < j["unsafe"].size(); ++pi) {
            const auto& jp = j["unsafe"][pi];
            Polytope p(spec.system.state_dim());
            for (const auto& jh : jp.at("halfspaces")) {
                p.add({detail::vec_from_json(jh.at("normal"), "unsafe normal"),
                       jh.at("offset").get<double>(),
                       detail::sense_from_string(jh.at("sense").get<std::string>(),
                                                 "unsafe sense")});
            }
            spec.unsafe.push_back(std::move(p));
        }
    }
    validate_spec(spec);
    return spec;
}

inline nlohmann::json system_spec_to_json(const SystemSpec& spec) {
    nlohmann::json j;
    j["system"] = {{"A", detail::mat_to_json(spec.system.A)},
                   {"B", detail::mat_to_json(spec.system.B)},
                   {"c", detail::vec_to_json(spec.system.c)}};
    j["state_bounds"] = detail::box_to_json(spec.state_bounds);
    j["initial_set"] = detail::box_to_json(spec.initial_set);
    j["control_box"] = detail::box_to_json(spec.control_box);
    j["dt"] = spec.dt;
    j["unsafe"] = nlohmann::json::array();
    for (const auto& p : spec.unsafe) {
        nlohmann::json jh = nlohmann::json::array();
        for (const auto& f : p.faces)
            jh.push_back({{"normal", detail::vec_to_json(f.normal)},
                          {"offset", f.offset},
                          {"sense", detail::sense_to_string(f.sense)}});
        j["unsafe"].push_back({{"halfspaces", std::move(jh)}});
    }
    return j;
}

inline SystemSpec load_system_spec(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw std::invalid_argument("load_system_spec: cannot open " + path);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw std::invalid_argument("load_system_spec: " + path + ": " + e.what());
    }
    return parse_system_spec(j);
}

inline void save_system_spec(const SystemSpec& spec, const std::string& path) {
    std::ofstream out(path);
    if (!out)
        throw std::invalid_argument("save_system_spec: cannot open " + path);
    out << system_spec_to_json(spec).dump(2) << "\n";
}

} // namespace cbfmon
