#pragma once

// Hand-built ReLU barriers with known ground truth, used by the harness and
// the command line tool to seed experiments.
//
//   affine          B(x) = x_1; no hidden layers, certificate quality depends
//                   entirely on the dynamics it is paired with.
//   valid_box       B(x) = margin - max_i |x_i - center_i|; the zero level is
//                   the surface of an axis-aligned box. Exact by construction.
//   invalid_flipped valid_box with the output row negated, so the barrier
//                   claims the exterior of the box is invariant. Any inward
//                   pointing flow on the box surface becomes a violation a
//                   sound monitor must catch.

#include <Eigen/Dense>

#include <stdexcept>
#include <string>

#include "cbfmon/relu_network.hpp"

namespace cbfmon {

enum class SyntheticKind { Affine, ValidBox, InvalidFlipped };

inline SyntheticKind synthetic_kind_from_string(const std::string& s) {
    if (s == "affine") return SyntheticKind::Affine;
    if (s == "valid_box") return SyntheticKind::ValidBox;
    if (s == "invalid_flipped") return SyntheticKind::InvalidFlipped;
    throw std::invalid_argument("unknown synthetic kind: " + s);
}

struct SyntheticParams {
    Eigen::VectorXd center;  // empty = origin
    double margin = 0.5;
    double radius = 10.0;    // bound on max_i |x_i - center_i| over the domain,
                             // keeps the internal carry neurons always active
};

namespace detail {

// max over coordinates via a chain of "gap" neurons sigma(t - v) and offset
// "carry" neurons sigma(v + M); pending coordinates ride along as sigma(. + M)
// until their stage. Layer widths: 2d, then d stages of (gap, carry, pending).
inline ReluNetwork box_gadget(int dim, const SyntheticParams& p) {
    Eigen::VectorXd c = p.center.size() ? p.center : Eigen::VectorXd::Zero(dim);
    if (c.size() != dim)
        throw std::invalid_argument("synthetic valid_box: center dimension mismatch");
    const double M = std::max(1.0, p.radius - p.margin + 1.0);

    ReluNetwork net;
    net.input_dim = dim;

    ReluNetwork::Layer l1;
    l1.W = Eigen::MatrixXd::Zero(2 * dim, dim);
    l1.b = Eigen::VectorXd::Zero(2 * dim);
    for (int i = 0; i < dim; ++i) {
        l1.W(2 * i, i) = 1.0;
        l1.b(2 * i) = -c(i);
        l1.W(2 * i + 1, i) = -1.0;
        l1.b(2 * i + 1) = c(i);
    }
    net.hidden.push_back(std::move(l1));

    if (dim == 1) {
        net.w_out = Eigen::RowVectorXd::Constant(2, -1.0);
        net.b_out = p.margin;
        return net;
    }

    // Stage 1 reads the per-coordinate pairs; v_i occupies columns 2i, 2i+1.
    {
        int width = 2 + (dim - 2);
        ReluNetwork::Layer l;
        l.W = Eigen::MatrixXd::Zero(width, 2 * dim);
        l.b = Eigen::VectorXd::Zero(width);
        l.W(0, 0) = l.W(0, 1) = 1.0;   // gap: sigma(v_1 - v_2)
        l.W(0, 2) = l.W(0, 3) = -1.0;
        l.W(1, 2) = l.W(1, 3) = 1.0;   // carry: sigma(v_2 + M)
        l.b(1) = M;
        for (int j = 2; j < dim; ++j) {  // pending: sigma(v_{j+1} + M)
            l.W(2 + (j - 2), 2 * j) = 1.0;
            l.W(2 + (j - 2), 2 * j + 1) = 1.0;
            l.b(2 + (j - 2)) = M;
        }
        net.hidden.push_back(std::move(l));
    }

    // Stage s combines the running max t = gap + carry - M with the next
    // pending value v = pending - M; the two offsets cancel inside the gap.
    for (int s = 2; s < dim; ++s) {
        int pending_in = dim - s;          // pending columns in the previous layer
        int width = 2 + (pending_in - 1);
        ReluNetwork::Layer l;
        l.W = Eigen::MatrixXd::Zero(width, 2 + pending_in);
        l.b = Eigen::VectorXd::Zero(width);
        l.W(0, 0) = l.W(0, 1) = 1.0;  // gap: sigma(t - v)
        l.W(0, 2) = -1.0;
        l.W(1, 2) = 1.0;              // carry: sigma(v + M) = previous pending
        for (int j = 1; j < pending_in; ++j) l.W(2 + (j - 1), 2 + j) = 1.0;
        net.hidden.push_back(std::move(l));
    }

    net.w_out = Eigen::RowVectorXd::Zero(net.hidden.back().W.rows());
    net.w_out(0) = -1.0;
    net.w_out(1) = -1.0;
    net.b_out = p.margin + M;
    return net;
}

} // namespace detail

inline ReluNetwork make_synthetic_cbf(SyntheticKind kind, int dim,
                                      const SyntheticParams& params = {}) {
    if (dim < 1) throw std::invalid_argument("make_synthetic_cbf: dim must be >= 1");
    switch (kind) {
        case SyntheticKind::Affine: {
            ReluNetwork net;
            net.input_dim = dim;
            net.w_out = Eigen::RowVectorXd::Zero(dim);
            net.w_out(0) = 1.0;
            net.b_out = 0.0;
            return net;
        }
        case SyntheticKind::ValidBox:
            return detail::box_gadget(dim, params);
        case SyntheticKind::InvalidFlipped: {
            ReluNetwork net = detail::box_gadget(dim, params);
            net.w_out = -net.w_out;
            net.b_out = -net.b_out;
            return net;
        }
    }
    throw std::logic_error("make_synthetic_cbf: unreachable");
}

} // namespace cbfmon
