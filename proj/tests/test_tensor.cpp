#include <cmath>
#include <limits>

#include "doctest.h"
#include "helpers.hpp"
#include "stdit/tensor.hpp"

using namespace stdit;
using testutil::random_tensor;

namespace {

// weighted sum so the cotangent reaching the op under test is non-uniform
Graph::NodeId scalarize(Graph& g, Graph::NodeId node, Rng& rng) {
    const Tensor& v = g.value(node);
    Tensor w = random_tensor(v.rows, v.cols, rng, 0.2, 1.2);
    return g.sum(g.mul(node, g.input(w)));
}

}  // namespace

TEST_SUITE("tensor") {

TEST_CASE("matmul examples") {
    Graph g;
    auto i2 = g.input(Tensor(2, 2, {1, 0, 0, 1}));
    auto m = g.input(Tensor(2, 2, {1, 2, 3, 4}));
    CHECK(g.value(g.matmul(i2, m)).data == std::vector<double>{1, 2, 3, 4});

    auto a = g.input(Tensor(1, 2, {1, 2}));
    auto b = g.input(Tensor(2, 1, {3, 4}));
    CHECK(g.value(g.matmul(a, b))[0] == 11.0);
}

TEST_CASE("matmul shape mismatch names both shapes") {
    Graph g;
    auto a = g.input(Tensor(2, 3));
    auto b = g.input(Tensor(4, 5));
    try {
        g.matmul(a, b);
        FAIL("expected ShapeError");
    } catch (const ShapeError& e) {
        std::string msg = e.what();
        CHECK(msg.find("2x3") != std::string::npos);
        CHECK(msg.find("4x5") != std::string::npos);
    }
}

TEST_CASE("matmul gradient vs finite differences") {
    Rng rng(11);
    std::vector<Tensor> inputs = {random_tensor(3, 4, rng), random_tensor(4, 2, rng)};
    double err = grad_check(
        [&](Graph& g, const std::vector<Graph::NodeId>& ids) {
            Rng local(12);
            return scalarize(g, g.matmul(ids[0], ids[1]), local);
        },
        inputs, 1e-5);
    CHECK(err < 1e-6);
}

TEST_CASE("softmax_rows examples") {
    Graph g;
    auto r = g.softmax_rows(g.input(Tensor(1, 3, {0, 0, 0})));
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(g.value(r)[i] == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
    }
    auto r2 = g.softmax_rows(g.input(Tensor(1, 2, {0.0, std::log(2.0)})));
    CHECK(g.value(r2)[0] == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
    CHECK(g.value(r2)[1] == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("softmax_rows shift invariance and row sums") {
    Rng rng(5);
    for (int trial = 0; trial < 50; ++trial) {
        Tensor x = random_tensor(3, 6, rng, -5.0, 5.0);
        Tensor shifted = x;
        for (double& v : shifted.data) v += 100.0;
        Graph g;
        const Tensor& y = g.value(g.softmax_rows(g.input(x)));
        const Tensor& ys = g.value(g.softmax_rows(g.input(shifted)));
        for (std::size_t r = 0; r < y.rows; ++r) {
            double sum = 0.0;
            for (std::size_t c = 0; c < y.cols; ++c) {
                CHECK(y.at(r, c) >= 0.0);
                CHECK(y.at(r, c) == doctest::Approx(ys.at(r, c)).epsilon(1e-12));
                sum += y.at(r, c);
            }
            CHECK(std::fabs(sum - 1.0) <= 1e-12);
        }
    }
}

TEST_CASE("layer_norm examples") {
    Graph g;
    auto gain = g.input(Tensor::full(1, 3, 1.0));
    auto bias = g.input(Tensor(1, 3));
    auto y = g.layer_norm(g.input(Tensor(1, 3, {1, 1, 1})), gain, bias);
    for (std::size_t i = 0; i < 3; ++i) CHECK(g.value(y)[i] == doctest::Approx(0.0));

    auto gain2 = g.input(Tensor::full(1, 2, 1.0));
    auto bias2 = g.input(Tensor(1, 2));
    auto y2 = g.layer_norm(g.input(Tensor(1, 2, {-1, 1})), gain2, bias2);
    CHECK(std::fabs(g.value(y2)[0] + 1.0) < 1e-3);
    CHECK(std::fabs(g.value(y2)[1] - 1.0) < 1e-3);
}

TEST_CASE("layer_norm normalizes rows before affine") {
    Rng rng(7);
    Tensor x = random_tensor(4, 8, rng, -2.0, 2.0);
    Graph g;
    auto y = g.layer_norm(g.input(x), g.input(Tensor::full(1, 8, 1.0)), g.input(Tensor(1, 8)));
    const Tensor& v = g.value(y);
    for (std::size_t r = 0; r < v.rows; ++r) {
        double mean = 0.0, var = 0.0;
        for (std::size_t c = 0; c < v.cols; ++c) mean += v.at(r, c);
        mean /= 8.0;
        for (std::size_t c = 0; c < v.cols; ++c) var += (v.at(r, c) - mean) * (v.at(r, c) - mean);
        var /= 8.0;
        CHECK(std::fabs(mean) < 1e-12);
        CHECK(var == doctest::Approx(1.0).epsilon(1e-4));
    }
}

TEST_CASE("layer_norm gradient vs finite differences") {
    Rng rng(21);
    std::vector<Tensor> inputs = {random_tensor(3, 5, rng), random_tensor(1, 5, rng, 0.5, 1.5),
                                  random_tensor(1, 5, rng)};
    double err = grad_check(
        [&](Graph& g, const std::vector<Graph::NodeId>& ids) {
            Rng local(22);
            return scalarize(g, g.layer_norm(ids[0], ids[1], ids[2]), local);
        },
        inputs, 1e-5);
    CHECK(err < 1e-4);
}

TEST_CASE("grad_check closed forms") {
    // f(x) = sum(x^2): analytic gradient 2x
    std::vector<Tensor> x = {Tensor(1, 2, {1, 2})};
    double err = grad_check(
        [](Graph& g, const std::vector<Graph::NodeId>& ids) {
            return g.sum(g.mul(ids[0], ids[0]));
        },
        x, 1e-5);
    CHECK(err < 1e-8);

    {
        Graph g;
        auto id = g.input(Tensor(1, 2, {1, 2}));
        auto root = g.sum(g.mul(id, id));
        g.backward(root);
        CHECK(g.grad(id)[0] == doctest::Approx(2.0).epsilon(1e-12));
        CHECK(g.grad(id)[1] == doctest::Approx(4.0).epsilon(1e-12));
    }

    // linear f: central differences are exact
    Rng rng(3);
    std::vector<Tensor> y = {random_tensor(1, 4, rng)};
    Tensor w = random_tensor(1, 4, rng);
    double lin_err = grad_check(
        [&](Graph& g, const std::vector<Graph::NodeId>& ids) {
            return g.sum(g.mul(ids[0], g.input(w)));
        },
        y, 1e-5);
    CHECK(lin_err < 1e-10);
}

TEST_CASE("grad_check rejects non-finite values") {
    std::vector<Tensor> x = {Tensor(1, 1, {1.0})};
    CHECK_THROWS_AS(grad_check(
                        [](Graph& g, const std::vector<Graph::NodeId>& ids) {
                            Tensor inf(1, 1, {std::numeric_limits<double>::infinity()});
                            return g.sum(g.mul(ids[0], g.input(inf)));
                        },
                        x),
                    NumericError);
}

TEST_CASE("every primitive backward matches finite differences") {
    Rng rng(101);
    auto check = [&](const char* name, std::vector<Tensor> inputs, auto build) {
        INFO(name);
        double err = grad_check(
            [&](Graph& g, const std::vector<Graph::NodeId>& ids) {
                Rng local(55);
                return scalarize(g, build(g, ids), local);
            },
            inputs, 1e-5);
        CHECK(err < 1e-4);
    };

    check("add", {random_tensor(3, 4, rng), random_tensor(3, 4, rng)},
          [](Graph& g, const auto& ids) { return g.add(ids[0], ids[1]); });
    check("sub", {random_tensor(3, 4, rng), random_tensor(3, 4, rng)},
          [](Graph& g, const auto& ids) { return g.sub(ids[0], ids[1]); });
    check("mul", {random_tensor(3, 4, rng), random_tensor(3, 4, rng)},
          [](Graph& g, const auto& ids) { return g.mul(ids[0], ids[1]); });
    check("add_rowvec", {random_tensor(3, 4, rng), random_tensor(1, 4, rng)},
          [](Graph& g, const auto& ids) { return g.add_rowvec(ids[0], ids[1]); });
    check("mul_rowvec", {random_tensor(3, 4, rng), random_tensor(1, 4, rng)},
          [](Graph& g, const auto& ids) { return g.mul_rowvec(ids[0], ids[1]); });
    check("scale", {random_tensor(2, 3, rng)},
          [](Graph& g, const auto& ids) { return g.scale(ids[0], -1.7); });
    check("add_scalar", {random_tensor(2, 3, rng)},
          [](Graph& g, const auto& ids) { return g.add_scalar(ids[0], 0.4); });
    check("matmul_nt", {random_tensor(3, 4, rng), random_tensor(5, 4, rng)},
          [](Graph& g, const auto& ids) { return g.matmul_nt(ids[0], ids[1]); });
    check("softmax_rows", {random_tensor(3, 5, rng)},
          [](Graph& g, const auto& ids) { return g.softmax_rows(ids[0]); });
    check("gelu", {random_tensor(2, 6, rng)},
          [](Graph& g, const auto& ids) { return g.gelu(ids[0]); });
    check("mean_rows", {random_tensor(4, 3, rng)},
          [](Graph& g, const auto& ids) { return g.mean_rows(ids[0]); });
    check("sum", {random_tensor(2, 5, rng)},
          [](Graph& g, const auto& ids) { return g.add_scalar(g.sum(ids[0]), 0.0); });
    check("concat_rows", {random_tensor(2, 3, rng), random_tensor(1, 3, rng)},
          [](Graph& g, const auto& ids) { return g.concat_rows(ids[0], ids[1]); });
    check("concat_cols", {random_tensor(2, 3, rng), random_tensor(2, 2, rng)},
          [](Graph& g, const auto& ids) { return g.concat_cols(ids[0], ids[1]); });
    check("slice_row", {random_tensor(3, 4, rng)},
          [](Graph& g, const auto& ids) { return g.slice_row(ids[0], 1); });
    check("slice_cols", {random_tensor(3, 5, rng)},
          [](Graph& g, const auto& ids) { return g.slice_cols(ids[0], 1, 4); });
    check("select_rows", {random_tensor(4, 3, rng)}, [](Graph& g, const auto& ids) {
        return g.select_rows(ids[0], {0, 2, 2});
    });

    {
        Rng aux(77);
        Tensor target = random_tensor(1, 6, aux);
        Tensor mask(1, 6, {1, 0, 1, 1, 0, 1});
        INFO("masked_mse");
        double err = grad_check(
            [&](Graph& g, const std::vector<Graph::NodeId>& ids) {
                return g.masked_mse(ids[0], target, mask);
            },
            {random_tensor(1, 6, rng)}, 1e-5);
        CHECK(err < 1e-4);
    }
}

TEST_CASE("masked_mse rejects an empty mask") {
    Graph g;
    auto pred = g.input(Tensor(1, 3, {1, 2, 3}));
    CHECK_THROWS_AS(g.masked_mse(pred, Tensor(1, 3), Tensor(1, 3)), ConfigError);
}

TEST_CASE("matmul associativity") {
    Rng rng(31);
    for (int trial = 0; trial < 20; ++trial) {
        Tensor a = random_tensor(8, 8, rng);
        Tensor b = random_tensor(8, 8, rng);
        Tensor c = random_tensor(8, 8, rng);
        Graph g;
        auto ab_c = g.matmul(g.matmul(g.input(a), g.input(b)), g.input(c));
        auto a_bc = g.matmul(g.input(a), g.matmul(g.input(b), g.input(c)));
        const Tensor& l = g.value(ab_c);
        const Tensor& r = g.value(a_bc);
        double num = 0.0, den = 0.0;
        for (std::size_t i = 0; i < l.size(); ++i) {
            num += (l[i] - r[i]) * (l[i] - r[i]);
            den += r[i] * r[i];
        }
        CHECK(std::sqrt(num) <= 1e-9 * std::max(1.0, std::sqrt(den)));
    }
}

TEST_CASE("ops are deterministic") {
    Rng rng(9);
    Tensor a = random_tensor(4, 4, rng);
    Tensor b = random_tensor(4, 4, rng);
    Graph g1, g2;
    auto r1 = g1.softmax_rows(g1.matmul(g1.input(a), g1.gelu(g1.input(b))));
    auto r2 = g2.softmax_rows(g2.matmul(g2.input(a), g2.gelu(g2.input(b))));
    CHECK(testutil::bit_equal(g1.value(r1), g2.value(r2)));
}

}
