#include <catch2/catch_amalgamated.hpp>

#include "cbfmon/relu_network.hpp"
#include "cbfmon/rng.hpp"
#include "oracles.hpp"

#include <cstdio>
#include <filesystem>
#include <set>

using namespace cbfmon;
using Catch::Approx;
using nlohmann::json;

namespace {

// One hidden neuron z = x, output reads it with weight 1: B(x) = max(x, 0).
ReluNetwork relu_1d() {
    return parse_network(json::parse(R"({
        "input_dim": 1,
        "layers": [
            {"weights": [[1.0]], "bias": [0.0]},
            {"weights": [[1.0]], "bias": [0.0]}
        ]})"));
}

Eigen::VectorXd vec1(double a) {
    Eigen::VectorXd v(1);
    v << a;
    return v;
}

} // namespace

TEST_CASE("single-layer file parses as a pure affine network", "[relu_network]") {
    auto net = parse_network(json::parse(
        R"({"input_dim": 1, "layers": [{"weights": [[1.0]], "bias": [0.0]}]})"));
    CHECK(net.hidden.empty());
    CHECK(net.w_out(0) == 1.0);
    CHECK(net.b_out == 0.0);
    CHECK(forward(net, vec1(-3.0)) == -3.0);
    CHECK(forward(net, vec1(2.0)) == 2.0);
}

TEST_CASE("two-layer file applies the hidden rectifier", "[relu_network]") {
    auto net = relu_1d();
    REQUIRE(net.hidden.size() == 1);
    CHECK(forward(net, vec1(-3.0)) == 0.0);
    CHECK(forward(net, vec1(2.0)) == 2.0);
}

TEST_CASE("parse errors name the offending layer", "[relu_network]") {
    auto expect_throw = [](const char* text, const char* needle) {
        try {
            parse_network(json::parse(text));
            FAIL("expected parse to throw");
        } catch (const std::invalid_argument& e) {
            CHECK(std::string(e.what()).find(needle) != std::string::npos);
        }
    };
    expect_throw(R"({"layers": [{"weights": [[1]], "bias": [0]}]})", "input_dim");
    expect_throw(R"({"input_dim": 2, "layers": [
                      {"weights": [[1.0]], "bias": [0]}]})",
                 "network layer 0");
    expect_throw(R"({"input_dim": 1, "layers": [
                      {"weights": [[1.0],[2.0]], "bias": [0, 0]},
                      {"weights": [[1.0]], "bias": [0]},
                      {"weights": [[1.0]], "bias": [0]}]})",
                 "network layer 1");
    expect_throw(R"({"input_dim": 1, "layers": [
                      {"weights": [[1.0],[2.0]], "bias": [0, 0]}]})",
                 "exactly one row");
    expect_throw(R"({"input_dim": 1, "layers": [
                      {"weights": [[1.0]], "bias": [0, 0]}]})",
                 "bias length");
}

TEST_CASE("parse rejects non-finite entries", "[relu_network]") {
    json j = json::parse(
        R"({"input_dim": 1, "layers": [{"weights": [[1.0]], "bias": [0.0]}]})");
    j["layers"][0]["weights"][0][0] = std::numeric_limits<double>::infinity();
    CHECK_THROWS_AS(parse_network(j), std::invalid_argument);
    j["layers"][0]["weights"][0][0] = 1.0;
    j["layers"][0]["bias"][0] = std::nan("");
    CHECK_THROWS_AS(parse_network(j), std::invalid_argument);
}

TEST_CASE("save/load round trip is bit exact", "[relu_network]") {
    auto net = oracle::random_network({3, 8, 5}, 42);
    auto path = std::filesystem::temp_directory_path() / "cbfmon_net_roundtrip.json";
    save_network(net, path.string());
    auto back = load_network(path.string());
    std::filesystem::remove(path);
    REQUIRE(back.input_dim == net.input_dim);
    REQUIRE(back.hidden.size() == net.hidden.size());
    for (std::size_t i = 0; i < net.hidden.size(); ++i) {
        CHECK(back.hidden[i].W == net.hidden[i].W);
        CHECK(back.hidden[i].b == net.hidden[i].b);
    }
    CHECK(back.w_out == net.w_out);
    CHECK(back.b_out == net.b_out);
}

TEST_CASE("forward matches a plain-loop evaluation", "[relu_network]") {
    auto net = oracle::random_network({2, 4, 3}, 7);
    for (std::uint64_t t = 0; t < 500; ++t) {
        Eigen::VectorXd x(2);
        x << rng_uniform(99, 2 * t, -5, 5), rng_uniform(99, 2 * t + 1, -5, 5);
        CHECK(forward(net, x) == Approx(oracle::naive_forward(net, x)).margin(1e-12));
    }
    CHECK_THROWS_AS(forward(net, Eigen::VectorXd::Zero(3)), std::invalid_argument);
}

TEST_CASE("activation pattern flags match the pre-activation signs", "[relu_network]") {
    auto net = oracle::random_network({2, 5, 4}, 11);
    for (std::uint64_t t = 0; t < 200; ++t) {
        Eigen::VectorXd x(2);
        x << rng_uniform(12, 2 * t, -3, 3), rng_uniform(12, 2 * t + 1, -3, 3);
        auto p = activation_pattern(net, x);
        auto zs = oracle::naive_pre_activations(net, x);
        REQUIRE(p.active.size() == zs.size());
        for (std::size_t i = 0; i < zs.size(); ++i)
            for (std::size_t j = 0; j < zs[i].size(); ++j) {
                if (std::abs(zs[i][j]) > 1e-6) {
                    CHECK(p.active[i][j] == (zs[i][j] > 0));
                    CHECK_FALSE(p.unstable[i][j]);
                }
            }
    }
}

TEST_CASE("deeper layers read masked outputs of shallower ones", "[relu_network]") {
    // Hidden layer 1: z = x. Hidden layer 2: z = y1 + 0.5, where y1 is the
    // rectified (hence masked) output of layer 1. At x = -1 the first neuron
    // is inactive and contributes zero, leaving the second at +0.5, active.
    auto net = parse_network(json::parse(R"({
        "input_dim": 1,
        "layers": [
            {"weights": [[1.0]], "bias": [0.0]},
            {"weights": [[1.0]], "bias": [0.5]},
            {"weights": [[1.0]], "bias": [0.0]}
        ]})"));
    auto p = activation_pattern(net, vec1(-1.0));
    REQUIRE(p.active.size() == 2);
    CHECK(p.active[0][0] == 0);
    CHECK(p.active[1][0] == 1);
}

TEST_CASE("boundary neurons are flagged unstable and canonicalization clears them",
          "[relu_network]") {
    auto net = relu_1d();
    auto p = activation_pattern(net, vec1(0.0));
    CHECK(p.unstable[0][0] == 1);
    CHECK(p.active[0][0] == 0);
    CHECK_FALSE(p.is_canonical());
    auto c = p.canonicalized();
    CHECK(c.is_canonical());
    CHECK(c.active[0][0] == 1);
    CHECK(c.unstable[0][0] == 0);
    // Clearly off the boundary on either side the pattern is already canonical.
    CHECK(activation_pattern(net, vec1(0.5)).is_canonical());
    CHECK(activation_pattern(net, vec1(-0.5)).is_canonical());
}

TEST_CASE("pattern keys pack active bits little endian", "[relu_network]") {
    ActivationPattern p;
    p.active = {{1, 0}, {1, 1}};
    p.unstable = {{0, 0}, {0, 0}};
    std::string k = p.key();
    REQUIRE(k.size() == 1);
    CHECK(static_cast<unsigned char>(k[0]) == 0x0D);

    ActivationPattern q;
    q.active = {{0, 0, 0, 0, 0, 0, 0, 0, 1}};  // ninth bit lands in byte 1
    q.unstable = {{0, 0, 0, 0, 0, 0, 0, 0, 0}};
    std::string kq = q.key();
    REQUIRE(kq.size() == 2);
    CHECK(static_cast<unsigned char>(kq[0]) == 0x00);
    CHECK(static_cast<unsigned char>(kq[1]) == 0x01);
}

TEST_CASE("masked affine of the all-active pattern is the raw layer product",
          "[relu_network]") {
    auto net = oracle::random_network({2, 3, 2}, 5);
    ActivationPattern all_on;
    all_on.active = {{1, 1, 1}, {1, 1}};
    all_on.unstable = {{0, 0, 0}, {0, 0}};
    auto m = masked_affine(net, all_on);
    Eigen::MatrixXd G = net.hidden[1].W * net.hidden[0].W;
    Eigen::VectorXd g = net.hidden[1].W * net.hidden[0].b + net.hidden[1].b;
    CHECK(m.w_out.isApprox((net.w_out * G).transpose(), 1e-12));
    CHECK(m.r_out == Approx(net.w_out.dot(g) + net.b_out).margin(1e-12));
}

TEST_CASE("masked affine of the all-inactive pattern is the output bias",
          "[relu_network]") {
    auto net = oracle::random_network({2, 3, 2}, 6);
    ActivationPattern all_off;
    all_off.active = {{0, 0, 0}, {0, 0}};
    all_off.unstable = {{0, 0, 0}, {0, 0}};
    auto m = masked_affine(net, all_off);
    CHECK(m.w_out.isZero(0.0));
    CHECK(m.r_out == net.b_out);
}

TEST_CASE("masked affine agrees with forward at the defining point", "[relu_network]") {
    auto net = oracle::random_network({3, 6, 4}, 21);
    for (std::uint64_t t = 0; t < 300; ++t) {
        Eigen::VectorXd x(3);
        for (int i = 0; i < 3; ++i) x(i) = rng_uniform(33, 3 * t + i, -4, 4);
        auto m = masked_affine(net, activation_pattern(net, x));
        double f = forward(net, x);
        CHECK(m.w_out.dot(x) + m.r_out == Approx(f).margin(1e-9 * (1.0 + std::abs(f))));
    }
}

TEST_CASE("masked output form is exact across many random networks",
          "[relu_network][property]") {
    for (std::uint64_t n = 0; n < 10; ++n) {
        auto net = oracle::random_network({2, 4, 4, 3}, 1000 + n);
        std::uint64_t s = rng_substream(2000, n);
        for (std::uint64_t t = 0; t < 100; ++t) {
            Eigen::VectorXd x(2);
            x << rng_uniform(s, 2 * t, -6, 6), rng_uniform(s, 2 * t + 1, -6, 6);
            auto m = masked_affine(net, activation_pattern(net, x));
            double f = forward(net, x);
            CHECK(std::abs(m.w_out.dot(x) + m.r_out - f) <= 1e-9 * (1.0 + std::abs(f)));
        }
    }
}

TEST_CASE("network output is affine along segments inside one region", "[relu_network]") {
    auto net = oracle::random_network({2, 4, 3}, 77);
    int checked = 0;
    for (std::uint64_t t = 0; t < 400 && checked < 50; ++t) {
        Eigen::VectorXd a(2), b(2);
        a << rng_uniform(55, 4 * t, -3, 3), rng_uniform(55, 4 * t + 1, -3, 3);
        b = a + 0.01 * Eigen::Vector2d(rng_uniform(55, 4 * t + 2, -1, 1),
                                       rng_uniform(55, 4 * t + 3, -1, 1));
        auto pa = activation_pattern(net, a);
        auto pb = activation_pattern(net, b);
        if (!(pa == pb) || !pa.is_canonical()) continue;
        double mid = forward(net, 0.5 * (a + b));
        CHECK(mid == Approx(0.5 * (forward(net, a) + forward(net, b))).margin(1e-10));
        ++checked;
    }
    CHECK(checked == 50);
}

TEST_CASE("cube polytope of the 1D rectifier splits at the origin", "[relu_network]") {
    auto net = relu_1d();
    ActivationPattern on, off;
    on.active = {{1}};
    on.unstable = {{0}};
    off.active = {{0}};
    off.unstable = {{0}};
    auto p_on = cube_polytope(net, on);
    auto p_off = cube_polytope(net, off);
    CHECK(p_on.contains(vec1(2.0)));
    CHECK_FALSE(p_on.contains(vec1(-2.0)));
    CHECK(p_off.contains(vec1(-2.0)));
    CHECK_FALSE(p_off.contains(vec1(2.0)));
    CHECK(p_on.contains(vec1(0.0)));  // regions are closed
    CHECK(p_off.contains(vec1(0.0)));
}

TEST_CASE("cube polytope requires a canonical pattern", "[relu_network]") {
    auto net = relu_1d();
    auto p = activation_pattern(net, vec1(0.0));
    REQUIRE_FALSE(p.is_canonical());
    CHECK_THROWS_AS(cube_polytope(net, p), std::invalid_argument);
    CHECK_NOTHROW(cube_polytope(net, p.canonicalized()));
}

TEST_CASE("every point lies in the polytope of its own pattern", "[relu_network][property]") {
    auto net = oracle::random_network({2, 5, 4}, 90);
    for (std::uint64_t t = 0; t < 1000; ++t) {
        Eigen::VectorXd x(2);
        x << rng_uniform(91, 2 * t, -4, 4), rng_uniform(91, 2 * t + 1, -4, 4);
        auto P = cube_polytope(net, activation_pattern(net, x).canonicalized());
        CHECK(P.contains(x, kDefaultTauZ));
    }
}

TEST_CASE("pattern count over a grid stays within the combinatorial bound",
          "[relu_network]") {
    auto net = oracle::random_network({2, 4}, 3);
    std::set<std::string> keys;
    oracle::grid_scan_2d(Eigen::Vector2d(-3, -3), Eigen::Vector2d(3, 3), 101,
                         [&](const Eigen::Vector2d& x) {
                             keys.insert(activation_pattern(net, x).canonicalized().key());
                         });
    CHECK(keys.size() <= 16);
    CHECK(keys.size() >= 2);  // the grid must actually cross hyperplanes
}

TEST_CASE("pattern shape mismatches are rejected", "[relu_network]") {
    auto net = oracle::random_network({2, 3}, 1);
    ActivationPattern bad;
    bad.active = {{1, 1}};  // wrong width
    bad.unstable = {{0, 0}};
    CHECK_THROWS_AS(masked_affine(net, bad), std::invalid_argument);
    ActivationPattern two_layers;
    two_layers.active = {{1, 1, 1}, {1}};
    two_layers.unstable = {{0, 0, 0}, {0}};
    CHECK_THROWS_AS(masked_affine(net, two_layers), std::invalid_argument);
}
