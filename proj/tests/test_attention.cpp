#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "focal/attention.hpp"
#include "focal/diagnostics.hpp"
#include "reference_attention.hpp"

using namespace focal;
using namespace focal::testing;

namespace {

const std::vector<TemperaturePolicy> kPolicies{
    TemperaturePolicy::baseline(), TemperaturePolicy::focal_constant(0.4),
    TemperaturePolicy::focal_learned(5.0, 10.0, MeanMode::full_sequence),
    TemperaturePolicy::focal_learned(1.0, 11.31, MeanMode::causal_prefix)};

template <typename T>
double oracle_error(std::uint64_t seed, const TemperaturePolicy& policy) {
    std::mt19937_64 rng(seed);
    const std::size_t heads = uniform_size(rng, 1, 4), dh = 2 * uniform_size(rng, 1, 8), n = uniform_size(rng, 1, 40);
    const AttentionLayer<T> layer = random_layer<T>(rng, heads, dh, policy);
    const Tensor<T> x = random_input<T>(rng, n, heads * dh);
    Graph<T> g(false);
    const Tensor<T> out = attend(g, x, layer);
    const auto want = oracle::attention(oracle::from_library(layer), std::vector<double>(x.data().begin(), x.data().end()), n);
    double worst = 0;
    for (std::size_t i = 0; i < want.size(); ++i) {
        worst = std::max(worst, std::abs(static_cast<double>(out.at(i)) - want[i]) / std::max(1.0, std::abs(want[i])));
    }
    return worst;
}

}  // namespace

TEST(Attention, MatchesExplicitLoopOracleDouble) {
    for (std::uint64_t s = 0; s < 10; ++s) {
        for (const auto& p : kPolicies) EXPECT_LE(oracle_error<double>(100 + s, p), 1e-10) << p.describe();
    }
}

TEST(Attention, MatchesExplicitLoopOracleFloat) {
    for (std::uint64_t s = 0; s < 10; ++s) {
        for (const auto& p : kPolicies) EXPECT_LE(oracle_error<float>(200 + s, p), 1e-5) << p.describe();
    }
}

TEST(Attention, BatchedEqualsPerSequence) {
    std::mt19937_64 rng(7);
    const auto layer = random_layer<double>(rng, 2, 8, kPolicies[2]);
    const std::size_t batch = 3, n = 9, d = 16;
    const Tensor<double> x = random_input<double>(rng, batch * n, d);
    Graph<double> g(false);
    const auto all = attend(g, x, layer, batch, n);
    for (std::size_t b = 0; b < batch; ++b) {
        Tensor<double> xb({n, d}, std::vector<double>(x.data().begin() + b * n * d, x.data().begin() + (b + 1) * n * d));
        const auto one = attend(g, xb, layer);
        for (std::size_t i = 0; i < n * d; ++i) EXPECT_NEAR(one.at(i), all.at(b * n * d + i), 1e-13);
    }
}

TEST(Attention, ConstantPolicyAtOneIsBitIdenticalToBaseline) {
    for (std::uint64_t s = 0; s < 20; ++s) {
        std::mt19937_64 rng(300 + s);
        auto layer = random_layer<float>(rng, 4, 16, TemperaturePolicy::baseline());
        const auto x = random_input<float>(rng, 32, 64);
        Graph<float> g(false);
        const auto base = attend(g, x, layer);
        layer.policy = TemperaturePolicy::focal_constant(1.0);
        const auto focal = attend(g, x, layer);
        ASSERT_EQ(std::vector<float>(base.data().begin(), base.data().end()),
                  std::vector<float>(focal.data().begin(), focal.data().end()));
    }
}

TEST(Attention, CausalOutputsIgnoreFutureTokens) {
    std::mt19937_64 rng(11);
    for (const auto& p : {kPolicies[0], kPolicies[1], kPolicies[3]}) {
        const auto layer = random_layer<double>(rng, 2, 4, p);
        auto x = random_input<double>(rng, 10, 8);
        Graph<double> g(false);
        const auto before = attend(g, x, layer);
        for (std::size_t e = 6 * 8; e < 80; ++e) x.data()[e] += 3.0;
        const auto after = attend(g, x, layer);
        for (std::size_t e = 0; e < 6 * 8; ++e) EXPECT_NEAR(before.at(e), after.at(e), 1e-13) << p.describe();
    }
}

TEST(Attention, LearnedTauStaysWithinBounds) {
    std::mt19937_64 rng(13);
    for (int trial = 0; trial < 30; ++trial) {
        const double lo = uniform_real(rng, 0.5, 6), hi = lo + uniform_real(rng, 0.1, 6);
        const auto policy =
            TemperaturePolicy::focal_learned(lo, hi, trial % 2 ? MeanMode::causal_prefix : MeanMode::full_sequence);
        auto layer = random_layer<double>(rng, 2, 4, policy);
        for (double& w : layer.w_tau.data()) w *= uniform_real(rng, 0.1, 40.0);
        const auto x = random_input<double>(rng, 12, 8);
        AttentionCapture<double> cap;
        Graph<double> g(false);
        attend(g, x, layer, 1, 12, &cap);
        ASSERT_EQ(cap.tau.size(), 12u);
        for (double t : cap.tau) {
            EXPECT_GE(t, lo);
            EXPECT_LE(t, hi);
        }
    }
}

TEST(Attention, ZeroInitTauGetsStraightThroughGradient) {
    std::mt19937_64 rng(17);
    auto layer = random_layer<double>(rng, 2, 8, TemperaturePolicy::focal_learned());
    for (double& w : layer.w_tau.data()) w = 0.0;
    const auto x = random_input<double>(rng, 16, 16);
    const auto target = random_input<double>(rng, 16, 16);
    Graph<double> g;
    g.backward(sum(g, mul(g, attend(g, x, layer), target)));
    double norm = 0;
    for (double v : layer.w_tau.grad()) norm += v * v;
    EXPECT_GT(norm, 0.0);

    layer.policy.clip = ClipGradient::hard;
    layer.w_tau.zero_grad();
    Graph<double> g2;
    g2.backward(sum(g2, mul(g2, attend(g2, x, layer), target)));
    for (double v : layer.w_tau.grad()) EXPECT_EQ(v, 0.0);
}

TEST(Attention, LowerTemperatureLowersEveryRowEntropy) {
    std::mt19937_64 rng(19);
    auto layer = random_layer<double>(rng, 4, 8, TemperaturePolicy::baseline());
    const auto x = random_input<double>(rng, 24, 32);
    Graph<double> g(false);
    const auto base = attend_with_trace(g, x, layer, 1, 24).second;
    layer.policy = TemperaturePolicy::focal_constant(0.4);
    const auto sharp = attend_with_trace(g, x, layer, 1, 24).second;
    ASSERT_EQ(base.size(), sharp.size());
    for (std::size_t r = 0; r < base.size(); ++r) {
        double sum = 0;
        for (double p : base[r].probs) sum += p;
        EXPECT_NEAR(sum, 1.0, 1e-9);
        EXPECT_EQ(base[r].probs.size(), base[r].query + 1);
        if (base[r].query == 0) continue;  // a single logit is constant
        EXPECT_LT(entropy(sharp[r].probs), entropy(base[r].probs));
    }
}

TEST(Attention, PolicyValidation) {
    EXPECT_THROW(TemperaturePolicy::focal_constant(0.0).validate(), ConfigError);
    EXPECT_THROW(TemperaturePolicy::focal_constant(-0.5).validate(), ConfigError);
    EXPECT_THROW(TemperaturePolicy::focal_learned(5.0, 5.0).validate(), ConfigError);
    EXPECT_THROW(TemperaturePolicy::focal_learned(7.0, 3.0).validate(), ConfigError);
    EXPECT_NO_THROW(TemperaturePolicy::focal_learned(5.0, 10.0).validate());
}

TEST(Attention, RejectsOverlongSequence) {
    std::mt19937_64 rng(23);
    const auto layer = random_layer<double>(rng, 1, 4, TemperaturePolicy::baseline(), 8);
    const auto x = random_input<double>(rng, 9, 4);
    Graph<double> g(false);
    EXPECT_THROW(attend(g, x, layer), ConfigError);
}
