#pragma once

/**
 * @file relu_network.hpp
 * @brief Scalar-output ReLU networks: exact evaluation, activation patterns,
 *        and the per-pattern affine restriction used for region reasoning.
 *
 * A network is a stack of ReLU hidden layers followed by a single linear
 * output row. On the closed region carved out by one activation pattern the
 * network is affine; the helpers below expose that affine form together with
 * the pre-activation forms of every hidden neuron, which double as the face
 * constraints of the region polytope.
 */

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <cmath>
#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "cbfmon/geometry.hpp"

namespace cbfmon {

inline constexpr double kDefaultTauZ = 1e-8; // unstable-neuron tolerance

struct ReluNetwork {
    struct Layer {
        Eigen::MatrixXd W;
        Eigen::VectorXd b;
    };

    int input_dim = 0;
    std::vector<Layer> hidden;   // ReLU layers, in forward order
    Eigen::RowVectorXd w_out;    // final linear row
    double b_out = 0.0;

    int num_hidden_layers() const { return static_cast<int>(hidden.size()); }
    int layer_width(int i) const { return static_cast<int>(hidden[i].W.rows()); }

    int total_hidden_neurons() const {
        int n = 0;
        for (const auto& l : hidden) n += static_cast<int>(l.W.rows());
        return n;
    }
};

/// Per-layer active/unstable flags over the hidden neurons. `unstable` is
/// populated only when the pattern was read off a concrete state; canonical
/// patterns (used as region identifiers and cache keys) carry none.
struct ActivationPattern {
    std::vector<std::vector<std::uint8_t>> active;
    std::vector<std::vector<std::uint8_t>> unstable;

    bool is_canonical() const {
        for (const auto& layer : unstable)
            for (auto u : layer)
                if (u) return false;
        return true;
    }

    /// Resolves boundary neurons by promoting unstable to active.
    ActivationPattern canonicalized() const {
        ActivationPattern p = *this;
        for (std::size_t i = 0; i < p.active.size(); ++i)
            for (std::size_t j = 0; j < p.active[i].size(); ++j) {
                if (i < p.unstable.size() && p.unstable[i][j]) p.active[i][j] = 1;
                if (i < p.unstable.size()) p.unstable[i][j] = 0;
            }
        return p;
    }

    /// Canonical key: active bits packed little-endian (bit j of a layer at
    /// byte j/8, bit j%8), layers concatenated in order. Usable as a map key.
    std::string key() const {
        int bits = 0;
        for (const auto& layer : active) bits += static_cast<int>(layer.size());
        std::string out((bits + 7) / 8, '\0');
        int pos = 0;
        for (const auto& layer : active)
            for (auto a : layer) {
                if (a) out[pos / 8] |= static_cast<char>(1 << (pos % 8));
                ++pos;
            }
        return out;
    }

    bool operator==(const ActivationPattern& o) const {
        return active == o.active && unstable == o.unstable;
    }
};

/// Affine restriction of the network under a fixed pattern: pre-activation
/// forms of every hidden neuron plus the end-to-end output form. pre_grad[i]
/// is layer_width(i) x input_dim; row j with pre_off[i][j] gives neuron
/// (i,j)'s pre-activation as a function of the network input.
struct MaskedAffine {
    std::vector<Eigen::MatrixXd> pre_grad;
    std::vector<Eigen::VectorXd> pre_off;
    Eigen::VectorXd w_out;
    double r_out = 0.0;
};

// ---- evaluation ------------------------------------------------------------

/// Exact forward pass: max(z,0) on hidden layers, linear output.
inline double forward(const ReluNetwork& net, const Eigen::VectorXd& x) {
    if (x.size() != net.input_dim)
        throw std::invalid_argument("forward: input dimension mismatch");
    Eigen::VectorXd y = x;
    for (const auto& l : net.hidden)
        y = (l.W * y + l.b).cwiseMax(0.0);
    return net.w_out.dot(y) + net.b_out;
}

/// Reads the pattern at x. A neuron is active when its pre-activation exceeds
/// tau_z, unstable when it lies within [-tau_z, tau_z]. Deeper layers see the
/// masked outputs of shallower ones (non-active neurons contribute zero), so
/// the result is consistent with the affine restriction it induces.
inline ActivationPattern activation_pattern(const ReluNetwork& net, const Eigen::VectorXd& x,
                                            double tau_z = kDefaultTauZ) {
    if (x.size() != net.input_dim)
        throw std::invalid_argument("activation_pattern: input dimension mismatch");
    if (tau_z < 0.0)
        throw std::invalid_argument("activation_pattern: tau_z must be nonnegative");
    ActivationPattern p;
    Eigen::VectorXd y = x;
    for (const auto& l : net.hidden) {
        Eigen::VectorXd z = l.W * y + l.b;
        std::vector<std::uint8_t> act(z.size()), uns(z.size());
        Eigen::VectorXd masked = Eigen::VectorXd::Zero(z.size());
        for (int j = 0; j < z.size(); ++j) {
            act[j] = z[j] > tau_z;
            uns[j] = std::abs(z[j]) <= tau_z;
            if (act[j]) masked[j] = z[j];
        }
        p.active.push_back(std::move(act));
        p.unstable.push_back(std::move(uns));
        y = std::move(masked);
    }
    return p;
}

namespace detail {
inline void check_pattern_shape(const ReluNetwork& net, const ActivationPattern& p,
                                const char* who) {
    if (static_cast<int>(p.active.size()) != net.num_hidden_layers())
        throw std::invalid_argument(std::string(who) + ": pattern layer count mismatch");
    for (int i = 0; i < net.num_hidden_layers(); ++i)
        if (static_cast<int>(p.active[i].size()) != net.layer_width(i))
            throw std::invalid_argument(std::string(who) + ": pattern width mismatch");
}
} // namespace detail

/// Affine forms of every pre-activation and of the output under pattern A.
/// First hidden layer sees the raw input; layer i sees layer i-1's outputs
/// with non-active rows zeroed.
inline MaskedAffine masked_affine(const ReluNetwork& net, const ActivationPattern& A) {
    detail::check_pattern_shape(net, A, "masked_affine");
    MaskedAffine m;
    Eigen::MatrixXd G = Eigen::MatrixXd::Identity(net.input_dim, net.input_dim);
    Eigen::VectorXd g = Eigen::VectorXd::Zero(net.input_dim);
    for (int i = 0; i < net.num_hidden_layers(); ++i) {
        const auto& l = net.hidden[i];
        Eigen::MatrixXd P = l.W * G;
        Eigen::VectorXd q = l.W * g + l.b;
        m.pre_grad.push_back(P);
        m.pre_off.push_back(q);
        for (int j = 0; j < P.rows(); ++j) {
            if (!A.active[i][j]) {
                P.row(j).setZero();
                q[j] = 0.0;
            }
        }
        G = std::move(P);
        g = std::move(q);
    }
    m.w_out = (net.w_out * G).transpose();
    m.r_out = net.w_out.dot(g) + net.b_out;
    return m;
}

/// Closed region of pattern A: pre-activation >= 0 for active neurons,
/// <= 0 otherwise. Requires a canonical pattern.
inline Polytope cube_polytope(const ReluNetwork& net, const ActivationPattern& A) {
    detail::check_pattern_shape(net, A, "cube_polytope");
    if (!A.is_canonical())
        throw std::invalid_argument("cube_polytope: pattern must be canonical");
    MaskedAffine m = masked_affine(net, A);
    Polytope P(net.input_dim);
    for (int i = 0; i < net.num_hidden_layers(); ++i)
        for (int j = 0; j < net.layer_width(i); ++j)
            P.add({m.pre_grad[i].row(j).transpose(), m.pre_off[i][j],
                   A.active[i][j] ? Sense::Ge : Sense::Le});
    return P;
}

// ---- serialization ---------------------------------------------------------

/// Parses {"input_dim": n, "layers": [{"weights": [[..]], "bias": [..]}, ..]}.
/// The last layer is the linear output and must have exactly one row; chained
/// widths are validated and non-finite entries rejected, each error naming
/// the offending layer.
inline ReluNetwork parse_network(const nlohmann::json& j) {
    ReluNetwork net;
    if (!j.contains("input_dim") || !j["input_dim"].is_number_integer())
        throw std::invalid_argument("network: missing integer field 'input_dim'");
    net.input_dim = j["input_dim"].get<int>();
    if (net.input_dim < 1)
        throw std::invalid_argument("network: input_dim must be positive");
    if (!j.contains("layers") || !j["layers"].is_array() || j["layers"].empty())
        throw std::invalid_argument("network: 'layers' must be a nonempty array");

    const auto& layers = j["layers"];
    int prev = net.input_dim;
    std::vector<ReluNetwork::Layer> parsed;
    for (std::size_t li = 0; li < layers.size(); ++li) {
        const std::string where = "network layer " + std::to_string(li);
        const auto& jl = layers[li];
        if (!jl.contains("weights") || !jl["weights"].is_array() || jl["weights"].empty())
            throw std::invalid_argument(where + ": missing weight rows");
        if (!jl.contains("bias") || !jl["bias"].is_array())
            throw std::invalid_argument(where + ": missing bias");
        const auto& jw = jl["weights"];
        const int rows = static_cast<int>(jw.size());
        ReluNetwork::Layer layer;
        layer.W.resize(rows, prev);
        layer.b.resize(rows);
        for (int r = 0; r < rows; ++r) {
            if (!jw[r].is_array() || static_cast<int>(jw[r].size()) != prev)
                throw std::invalid_argument(where + ": weight row " + std::to_string(r) +
                                            " must have " + std::to_string(prev) + " entries");
            for (int c = 0; c < prev; ++c) {
                double v = jw[r][c].get<double>();
                if (!std::isfinite(v))
                    throw std::invalid_argument(where + ": non-finite weight");
                layer.W(r, c) = v;
            }
        }
        if (static_cast<int>(jl["bias"].size()) != rows)
            throw std::invalid_argument(where + ": bias length must match row count");
        for (int r = 0; r < rows; ++r) {
            double v = jl["bias"][r].get<double>();
            if (!std::isfinite(v))
                throw std::invalid_argument(where + ": non-finite bias");
            layer.b[r] = v;
        }
        parsed.push_back(std::move(layer));
        prev = rows;
    }

    if (parsed.back().W.rows() != 1)
        throw std::invalid_argument("network layer " + std::to_string(parsed.size() - 1) +
                                    ": final layer must have exactly one row");
    net.w_out = parsed.back().W.row(0);
    net.b_out = parsed.back().b[0];
    parsed.pop_back();
    net.hidden = std::move(parsed);
    return net;
}

inline nlohmann::json network_to_json(const ReluNetwork& net) {
    nlohmann::json layers = nlohmann::json::array();
    auto emit = [&](const Eigen::MatrixXd& W, const Eigen::VectorXd& b) {
        nlohmann::json jw = nlohmann::json::array();
        for (int r = 0; r < W.rows(); ++r) {
            nlohmann::json row = nlohmann::json::array();
            for (int c = 0; c < W.cols(); ++c) row.push_back(W(r, c));
            jw.push_back(std::move(row));
        }
        nlohmann::json jb = nlohmann::json::array();
        for (int r = 0; r < b.size(); ++r) jb.push_back(b[r]);
        layers.push_back({{"weights", std::move(jw)}, {"bias", std::move(jb)}});
    };
    for (const auto& l : net.hidden) emit(l.W, l.b);
    emit(net.w_out, Eigen::VectorXd::Constant(1, net.b_out));
    return {{"input_dim", net.input_dim}, {"layers", std::move(layers)}};
}

inline ReluNetwork load_network(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw std::invalid_argument("load_network: cannot open " + path);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw std::invalid_argument("load_network: " + path + ": " + e.what());
    }
    return parse_network(j);
}

inline void save_network(const ReluNetwork& net, const std::string& path) {
    std::ofstream out(path);
    if (!out)
        throw std::invalid_argument("save_network: cannot open " + path);
    out << network_to_json(net).dump(2) << "\n";
}

} // namespace cbfmon
