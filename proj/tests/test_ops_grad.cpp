#include <cmath>
#include <map>

#include <gtest/gtest.h>

#include "focal/ops.hpp"
#include "grad_suite.hpp"

using namespace focal;
using namespace focal::testing;

TEST(OpGradients, EveryOpFiveShapesWithinTolerance) {
    const auto cases = op_gradient_suite(20240601, 5);
    std::map<std::string, int> per_op;
    for (const auto& c : cases) {
        ++per_op[c.op];
        EXPECT_LE(c.result.max_rel_error, 1e-5) << c.op << " " << c.shape << " analytic " << c.result.analytic
                                                << " numeric " << c.result.numeric;
    }
    for (const auto& [op, n] : per_op) EXPECT_GE(n, 5) << op;
    EXPECT_GE(per_op.size(), 18u);
}

TEST(OpGradients, StraightThroughClipPassesGradient) {
    Tensor<double> x({4}, {-3, 0.5, 2, 7}, true);
    Graph<double> g;
    const auto y = clip_st(g, x, 1.0, 5.0);
    EXPECT_EQ(std::vector<double>(y.data().begin(), y.data().end()), (std::vector<double>{1, 1, 2, 5}));
    const Tensor<double> w({4}, {1, 2, 3, 4});
    g.backward(sum(g, mul(g, y, w)));
    for (std::size_t i = 0; i < 4; ++i) EXPECT_DOUBLE_EQ(x.grad()[i], w.at(i));
}

TEST(OpGradients, HardClipZeroesClippedGradient) {
    Tensor<double> x({3}, {-3, 2, 7}, true);
    Graph<double> g;
    g.backward(sum(g, clip_st(g, x, 1.0, 5.0, ClipGradient::hard)));
    EXPECT_EQ(x.grad()[0], 0.0);
    EXPECT_EQ(x.grad()[1], 1.0);
    EXPECT_EQ(x.grad()[2], 0.0);
}

TEST(Ops, SoftmaxRowsSumToOneAndMaskInfinity) {
    Tensor<double> z({2, 3}, {1, 2, -INFINITY, 0.5, 0.5, 0.5});
    Graph<double> g(false);
    const auto p = softmax_t(g, z, 0.7, 1);
    EXPECT_NEAR(p.at(0) + p.at(1) + p.at(2), 1.0, 1e-12);
    EXPECT_EQ(p.at(2), 0.0);
    EXPECT_NEAR(p.at(3), 1.0 / 3.0, 1e-12);
}

TEST(Ops, SoftmaxRejectsBadTemperatureAndFullyMaskedRows) {
    Tensor<double> z({1, 2}, {-INFINITY, -INFINITY});
    Graph<double> g(false);
    EXPECT_THROW(softmax_t(g, z, 1.0, 1), InvalidMaskError);
    Tensor<double> ok({1, 2}, {0, 1});
    EXPECT_THROW(softmax_t(g, ok, 0.0, 1), ParameterError);
    EXPECT_THROW(softmax_t(g, ok, -1.0, 1), ParameterError);
}

TEST(Ops, CrossEntropyOfUniformLogitsIsLogV) {
    Tensor<double> logits({2, 4}, std::vector<double>(8, 0.25));
    Graph<double> g(false);
    const std::vector<std::int32_t> targets{1, 3};
    EXPECT_NEAR(cross_entropy(g, logits, targets).item(), std::log(4.0), 1e-12);
}

TEST(Ops, RmsNormHasUnitRms) {
    Tensor<double> x({1, 4}, {1, -2, 3, 4});
    Tensor<double> gain({4}, {1, 1, 1, 1});
    Graph<double> g(false);
    const auto y = rms_norm(g, x, gain, 1e-12);
    double ms = 0;
    for (double v : y.data()) ms += v * v;
    EXPECT_NEAR(ms / 4.0, 1.0, 1e-9);
}

TEST(Ops, RopeAtPositionZeroIsIdentityAndPreservesNorm) {
    std::mt19937_64 rng(3);
    auto x = random_tensor<double>({1, 3, 2, 8}, rng, false);
    Graph<double> g(false);
    const std::vector<std::int32_t> pos{0, 5, 17};
    const auto y = rope_rotate(g, x, 10000.0, pos);
    for (std::size_t e = 0; e < 16; ++e) EXPECT_DOUBLE_EQ(y.at(e), x.at(e));
    for (std::size_t i = 0; i < 3; ++i) {
        double a = 0, b = 0;
        for (std::size_t e = 0; e < 16; ++e) {
            a += x.at(i * 16 + e) * x.at(i * 16 + e);
            b += y.at(i * 16 + e) * y.at(i * 16 + e);
        }
        EXPECT_NEAR(a, b, 1e-12);
    }
}

TEST(Ops, RopeScoresDependOnRelativeOffset) {
    std::mt19937_64 rng(5);
    auto q = random_tensor<double>({1, 1, 1, 8}, rng, false), k = random_tensor<double>({1, 1, 1, 8}, rng, false);
    auto score = [&](std::int32_t i, std::int32_t j) {
        Graph<double> g(false);
        const std::vector<std::int32_t> pi{i}, pj{j};
        const auto a = rope_rotate(g, q, 10000.0, pi), b = rope_rotate(g, k, 10000.0, pj);
        double s = 0;
        for (std::size_t e = 0; e < 8; ++e) s += a.at(e) * b.at(e);
        return s;
    };
    EXPECT_NEAR(score(7, 3), score(104, 100), 1e-9);
}

TEST(Ops, SequenceMeanModes) {
    Tensor<double> x({1, 4}, {1, 2, 3, 6});
    Graph<double> g(false);
    const auto full = sequence_mean(g, x, false);
    const auto prefix = sequence_mean(g, x, true);
    for (std::size_t i = 0; i < 4; ++i) EXPECT_DOUBLE_EQ(full.at(i), 3.0);
    EXPECT_DOUBLE_EQ(prefix.at(0), 1.0);
    EXPECT_DOUBLE_EQ(prefix.at(1), 1.5);
    EXPECT_DOUBLE_EQ(prefix.at(3), 3.0);
}

TEST(Ops, ShapeErrors) {
    Graph<double> g(false);
    Tensor<double> a({2, 3}), b({2, 3});
    EXPECT_THROW(matmul(g, a, b), DimensionError);
    EXPECT_THROW(add(g, a, Tensor<double>({3, 2})), DimensionError);
}
