#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "focal/ops.hpp"
#include "focal/optim.hpp"
#include "adamw_reference.hpp"
#include "test_util.hpp"

using namespace focal;

namespace {

TrainConfig schedule(double peak, std::size_t warmup, std::size_t total) {
    TrainConfig c;
    c.peak_lr = peak;
    c.warmup_steps = warmup;
    c.total_steps = total;
    return c;
}

using focal::testing::ScalarAdamW;

}  // namespace

TEST(Schedule, EndpointsExact) {
    for (double peak : {3e-3, 4e-4, 1.0}) {
        const TrainConfig c = schedule(peak, 100, 2000);
        EXPECT_EQ(lr_at(0, c), 0.0);
        EXPECT_EQ(lr_at(100, c), peak);
        EXPECT_EQ(lr_at(2000, c), 0.1 * peak);
    }
}

TEST(Schedule, WarmupLinearThenCosineMonotone) {
    const TrainConfig c = schedule(1e-3, 50, 500);
    EXPECT_NEAR(lr_at(25, c), 5e-4, 1e-18);
    double previous = lr_at(50, c);
    for (std::size_t s = 51; s <= 500; ++s) {
        const double lr = lr_at(s, c);
        EXPECT_LE(lr, previous);
        EXPECT_GE(lr, 1e-4 - 1e-18);
        previous = lr;
    }
    const double mid = lr_at(275, c);  // halfway through the decay
    EXPECT_NEAR(mid, 1e-3 * (0.1 + 0.9 * 0.5), 1e-15);
}

TEST(AdamW, TenStepsMatchScalarReference) {
    TrainConfig c = schedule(0.05, 3, 10);
    std::mt19937_64 rng(9);
    const std::size_t n = 7;
    const auto init = focal::testing::normal_values(n, rng);
    const auto target = focal::testing::normal_values(n, rng);
    const auto curvature = focal::testing::normal_values(n, rng);

    Tensor<double> w({n}, init, true);
    Tensor<double> gain({n}, init, true);  // exempt from decay
    std::vector<NamedParam<double>> params{{"w", w, true}, {"gain", gain, false}};
    OptimizerState<double> state;
    std::vector<double> ref_w = init, ref_gain = init;
    std::vector<ScalarAdamW> ref_opt_w(n), ref_opt_gain(n);

    for (std::size_t step = 1; step <= 10; ++step) {
        // loss = sum a^2 (x - c)^2 for both tensors
        Graph<double> g;
        const Tensor<double> t({n}, target);
        std::vector<double> a2(n);
        for (std::size_t i = 0; i < n; ++i) a2[i] = curvature[i] * curvature[i];
        const Tensor<double> a({n}, a2);
        auto quad = [&](const Tensor<double>& x) {
            const auto diff = add(g, x, scale(g, t, -1.0));
            return sum(g, mul(g, a, mul(g, diff, diff)));
        };
        g.backward(add(g, quad(w), quad(gain)));
        const double lr = lr_at(step, c);
        for (std::size_t i = 0; i < n; ++i) {
            ref_w[i] = ref_opt_w[i].step(ref_w[i], 2 * a2[i] * (ref_w[i] - target[i]), lr, c, true);
            ref_gain[i] = ref_opt_gain[i].step(ref_gain[i], 2 * a2[i] * (ref_gain[i] - target[i]), lr, c, false);
        }
        adamw_step(params, state, lr, c);
        w.zero_grad();
        gain.zero_grad();
        for (std::size_t i = 0; i < n; ++i) {
            ASSERT_NEAR(w.at(i), ref_w[i], 1e-10) << "step " << step;
            ASSERT_NEAR(gain.at(i), ref_gain[i], 1e-10) << "step " << step;
        }
    }
    EXPECT_EQ(state.step, 10u);
}

TEST(AdamW, RejectsNonFiniteGradient) {
    Tensor<double> w({2}, {1, 2}, true);
    w.grad()[1] = NAN;
    OptimizerState<double> state;
    EXPECT_THROW(adamw_step<double>({{"w", w, true}}, state, 1e-3, TrainConfig{}), NumericalError);
}

TEST(ClipGradNorm, ScalesOnlyAboveThreshold) {
    Tensor<double> a({2}, {0, 0}, true), b({1}, {0}, true);
    a.grad()[0] = 3;
    a.grad()[1] = 0;
    b.grad()[0] = 4;
    std::vector<NamedParam<double>> params{{"a", a, true}, {"b", b, true}};
    EXPECT_DOUBLE_EQ(clip_grad_norm(params, 10.0), 5.0);
    EXPECT_DOUBLE_EQ(a.grad()[0], 3.0);
    EXPECT_DOUBLE_EQ(clip_grad_norm(params, 1.0), 5.0);
    EXPECT_NEAR(a.grad()[0], 0.6, 1e-15);
    EXPECT_NEAR(b.grad()[0], 0.8, 1e-15);
}

TEST(TrainPresets, ReferenceRecipe) {
    const std::pair<const char*, double> lrs[] = {{"400M", 4e-3}, {"777M", 2e-3}, {"1.3B", 1e-3},
                                                  {"2.7B", 5e-4}, {"6.7B", 4e-4}, {"9.5B", 4e-4}};
    for (const auto& [name, lr] : lrs) {
        const TrainPreset p = train_preset(name);
        EXPECT_EQ(p.peak_lr, lr) << name;
        EXPECT_EQ(p.total_steps, 100000u);
        EXPECT_EQ(p.warmup_steps, 2000u);
        const TrainConfig c = p.as_config(2048);
        EXPECT_EQ(c.batch_size * c.seq_len, p.batch_tokens);
        EXPECT_EQ(c.beta1, 0.9);
        EXPECT_EQ(c.beta2, 0.95);
        EXPECT_EQ(c.weight_decay, 0.05);
        EXPECT_EQ(c.grad_clip_norm, 1.0);
        EXPECT_EQ(c.final_lr_fraction, 0.1);
    }
}

TEST(TrainConfig, Validation) {
    TrainConfig c;
    c.warmup_steps = c.total_steps;
    EXPECT_THROW(c.validate(), ConfigError);
    c = TrainConfig{};
    c.peak_lr = 0;
    EXPECT_THROW(c.validate(), ConfigError);
}
