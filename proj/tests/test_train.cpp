#include <cmath>
#include <fstream>

#include <gtest/gtest.h>

#include "focal/checkpoint.hpp"
#include "focal/tasks.hpp"
#include "focal/train.hpp"
#include "test_util.hpp"

using namespace focal;
using focal::testing::TempDir;

namespace {

TrainConfig tiny_train(std::size_t steps) {
    TrainConfig c;
    c.peak_lr = 3e-3;
    c.warmup_steps = 5;
    c.total_steps = steps;
    c.batch_size = 4;
    c.seq_len = 32;
    c.eval_every = 10;
    c.seed = 11;
    return c;
}

ModelConfig tiny_model(const TemperaturePolicy& policy = TemperaturePolicy::baseline()) {
    ModelConfig c = model_preset("tiny");
    c.policy = policy;
    c.seed = 3;
    return c;
}

DataSplit tiny_data(const TrainConfig& c) {
    SyntheticMix mix;
    mix.documents = 60;
    mix.kv_context = 96;
    mix.kv_pairs_max = 2;
    return split_corpus(synthetic_corpus(mix, 5), c.seq_len, c.batch_size, 2, c.seed);
}

template <typename T>
std::vector<T> flat_params(const Model<T>& m) {
    std::vector<T> out;
    for (const auto& p : m.parameters()) out.insert(out.end(), p.tensor.data().begin(), p.tensor.data().end());
    return out;
}

}  // namespace

TEST(Train, LossDecreases) {
    const TrainConfig c = tiny_train(60);
    DataSplit data = tiny_data(c);
    TrainState<float> state{init_params<float>(tiny_model()), {}, 0, 0};
    const RunRecord r = train(state, data.train, data.validation, c);
    ASSERT_EQ(r.last_step, 60u);
    EXPECT_LT(r.validation.back().second, r.validation.front().second);
    EXPECT_LT(r.steps.back().train_loss, r.steps.front().train_loss);
    EXPECT_EQ(r.steps.front().lr, lr_at(1, c));
}

TEST(Train, DeterministicAndResumeExactAtDouble) {
    const TrainConfig c = tiny_train(20);
    const ModelConfig mc = tiny_model(TemperaturePolicy::focal_learned());

    DataSplit d1 = tiny_data(c);
    TrainState<double> straight{init_params<double>(mc), {}, 0, 0};
    const RunRecord full = train(straight, d1.train, d1.validation, c);

    DataSplit d2 = tiny_data(c);
    TrainState<double> again{init_params<double>(mc), {}, 0, 0};
    const RunRecord repeat = train(again, d2.train, d2.validation, c);
    EXPECT_EQ(flat_params(straight.model), flat_params(again.model));

    TempDir tmp("resume");
    DataSplit d3 = tiny_data(c);
    TrainState<double> first{init_params<double>(mc), {}, 0, 0};
    TrainOptions half;
    half.until_step = 9;
    train(first, d3.train, d3.validation, c, half);
    save_state(tmp.path() / "ck", first, c, 1234);

    TrainConfig stored;
    TrainState<double> resumed = load_state<double>(tmp.path() / "ck", &stored);
    EXPECT_EQ(stored, c);
    EXPECT_EQ(resumed.step, 9u);
    DataSplit d4 = tiny_data(c);
    const RunRecord tail = train(resumed, d4.train, d4.validation, c);
    EXPECT_EQ(flat_params(resumed.model), flat_params(straight.model));
    ASSERT_EQ(tail.steps.size(), 11u);
    for (std::size_t i = 0; i < tail.steps.size(); ++i) {
        EXPECT_EQ(tail.steps[i].train_loss, full.steps[9 + i].train_loss);
        EXPECT_EQ(tail.steps[i].grad_norm, full.steps[9 + i].grad_norm);
    }
    EXPECT_EQ(full.final_val_loss, repeat.final_val_loss);
}

TEST(Train, WritesStepLogAndCheckpoints) {
    TempDir tmp("train-out");
    TrainConfig c = tiny_train(12);
    c.checkpoint_every = 5;
    c.log_every = 3;
    DataSplit data = tiny_data(c);
    TrainState<float> state{init_params<float>(tiny_model(TemperaturePolicy::focal_learned())), {}, 0, 0};
    TrainOptions o;
    o.out_dir = tmp.path();
    train(state, data.train, data.validation, c, o);
    EXPECT_TRUE(std::filesystem::exists(checkpoint_dir(tmp.path(), 5) / "manifest.json"));
    EXPECT_TRUE(std::filesystem::exists(checkpoint_dir(tmp.path(), 10) / "tensors.bin"));
    std::ifstream in(tmp.path() / "steps.jsonl");
    std::vector<std::uint64_t> steps;
    for (std::string line; std::getline(in, line);) {
        const Json j = Json::parse(line);
        steps.push_back(j.at("step").get<std::uint64_t>());
        ASSERT_EQ(j.at("tau").size(), 2u);
        for (const auto& t : j.at("tau")) {
            EXPECT_GE(t.at("min").get<double>(), 5.0);
            EXPECT_LE(t.at("max").get<double>(), 10.0);
        }
    }
    EXPECT_EQ(steps, (std::vector<std::uint64_t>{3, 6, 9, 10, 12}));
}

TEST(Train, NonFiniteLossAbortsAfterSavingLastGoodState) {
    TempDir tmp("nan");
    const TrainConfig c = tiny_train(10);
    DataSplit data = tiny_data(c);
    TrainState<float> state{init_params<float>(tiny_model()), {}, 0, 0};
    TrainOptions o;
    o.out_dir = tmp.path();
    o.until_step = 3;
    train(state, data.train, data.validation, c, o);
    state.model.final_norm.data()[0] = NAN;
    o.until_step = 0;
    EXPECT_THROW(train(state, data.train, data.validation, c, o), NumericalError);
    EXPECT_TRUE(std::filesystem::exists(checkpoint_dir(tmp.path(), 3) / "manifest.json"));
    EXPECT_EQ(state.step, 3u);
}

TEST(Train, RejectsGeometryMismatch) {
    TrainConfig c = tiny_train(10);
    DataSplit data = tiny_data(c);
    TrainState<float> state{init_params<float>(tiny_model()), {}, 0, 0};
    c.batch_size = 8;
    EXPECT_THROW(train(state, data.train, data.validation, c), ConfigError);
}

TEST(EvaluateLoss, IgnoresPadTargets) {
    const auto m = init_params<double>(tiny_model());
    Batch b;
    b.batch_size = 1;
    b.seq_len = 4;
    b.inputs = {256, 1, 2, 257};
    b.targets = {1, 2, 257, token::kPad};
    Batch scored = b;
    scored.targets[3] = 5;
    const double with_pad = evaluate_loss(m, {b});
    Graph<double> g(false);
    const auto logits = m.forward(g, b.inputs, 1, 4);
    const std::vector<std::int32_t> first3{1, 2, 257};
    const Tensor<double> head({3, logits.dim(1)},
                              std::vector<double>(logits.data().begin(), logits.data().begin() + 3 * logits.dim(1)));
    EXPECT_NEAR(with_pad, cross_entropy(g, head, first3).item(), 1e-12);
    EXPECT_NE(with_pad, evaluate_loss(m, {scored}));
}

TEST(Checkpoint, RoundTripAndPrecisionConversion) {
    TempDir tmp("ckpt");
    const auto m = init_params<float>(tiny_model(TemperaturePolicy::focal_learned()));
    CheckpointMeta meta;
    meta.step = 7;
    meta.data_cursor = 9;
    meta.root_seed = 99;
    meta.train = tiny_train(20);
    save_checkpoint(tmp.path() / "a", m, static_cast<const OptimizerState<float>*>(nullptr), meta);
    EXPECT_EQ(checkpoint_dtype(tmp.path() / "a"), "f32");
    const auto back = load_checkpoint<float>(tmp.path() / "a");
    EXPECT_EQ(flat_params(back.model), flat_params(m));
    EXPECT_EQ(back.model.config(), m.config());
    EXPECT_EQ(back.meta.step, 7u);
    EXPECT_EQ(back.meta.train, meta.train);
    EXPECT_FALSE(back.optimizer.has_value());
    const auto wide = load_checkpoint<double>(tmp.path() / "a");
    const auto fw = flat_params(wide.model);
    const auto fm = flat_params(m);
    for (std::size_t i = 0; i < fm.size(); ++i) EXPECT_EQ(fw[i], static_cast<double>(fm[i]));
}

TEST(Checkpoint, CorruptOrMissingIsIoError) {
    TempDir tmp("bad");
    EXPECT_THROW(load_checkpoint<float>(tmp.path() / "nope"), IoError);
    std::filesystem::create_directories(tmp.path() / "bad");
    std::ofstream(tmp.path() / "bad" / "manifest.json") << "{ not json";
    EXPECT_THROW(load_checkpoint<float>(tmp.path() / "bad"), IoError);
}
