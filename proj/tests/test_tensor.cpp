#include <gtest/gtest.h>

#include "focal/ops.hpp"
#include "focal/tensor.hpp"

using namespace focal;

TEST(Tensor, ShapeAndValues) {
    Tensor<double> t({2, 3}, {1, 2, 3, 4, 5, 6});
    EXPECT_EQ(t.numel(), 6u);
    EXPECT_EQ(t.dim(1), 3u);
    EXPECT_EQ(t.at(4), 5.0);
    EXPECT_THROW(Tensor<double>({2, 2}, {1, 2, 3}), DimensionError);
}

TEST(Tensor, CopiesShareStorageClonesDoNot) {
    Tensor<float> a({2}, {1, 2});
    Tensor<float> alias = a;
    Tensor<float> deep = a.clone();
    a.data()[0] = 9;
    EXPECT_EQ(alias.at(0), 9.0f);
    EXPECT_EQ(deep.at(0), 1.0f);
}

TEST(Tensor, GradRequiresTracking) {
    Tensor<double> t({2}, {1, 2});
    EXPECT_THROW(t.grad(), UsageError);
    t.set_requires_grad(true);
    EXPECT_EQ(t.grad().size(), 2u);
}

TEST(Graph, BackwardAccumulatesIntoLeavesOncePerCall) {
    Tensor<double> x({3}, {1, 2, 3}, true);
    for (int call = 1; call <= 2; ++call) {
        Graph<double> g;
        g.backward(sum(g, mul(g, x, x)));
        for (std::size_t i = 0; i < 3; ++i) EXPECT_DOUBLE_EQ(x.grad()[i], call * 2.0 * x.at(i));
    }
}

TEST(Graph, ReusedNodeSumsContributions) {
    Tensor<double> x({2}, {3, -1}, true);
    Graph<double> g;
    const auto y = add(g, x, x);
    g.backward(sum(g, mul(g, y, x)));  // d/dx 2x^2 = 4x
    EXPECT_DOUBLE_EQ(x.grad()[0], 12.0);
    EXPECT_DOUBLE_EQ(x.grad()[1], -4.0);
}

TEST(Graph, EvaluationModeRecordsNothing) {
    Tensor<double> x({2}, {1, 2}, true);
    Graph<double> g(false);
    const auto y = sum(g, x);
    EXPECT_EQ(g.size(), 0u);
    EXPECT_DOUBLE_EQ(y.item(), 3.0);
}

TEST(Graph, BackwardNeedsScalar) {
    Tensor<double> x({2}, {1, 2}, true);
    Graph<double> g;
    EXPECT_THROW(g.backward(scale(g, x, 2.0)), UsageError);
}
