#include <fstream>

#include <gtest/gtest.h>

#include "focal/config.hpp"
#include "focal/error.hpp"
#include "test_util.hpp"

using namespace focal;
using focal::testing::TempDir;

namespace {

Json minimal() {
    return Json{{"run_name", "cfg"},
                {"seed", 7},
                {"model", {{"preset", "toy"}, {"max_context", 256}}},
                {"train", {{"total_steps", 20}, {"warmup_steps", 2}, {"batch_size", 2}, {"seq_len", 64}}}};
}

void expect_config_error(const Json& doc, const std::string& fragment) {
    try {
        parse_config(doc);
        ADD_FAILURE() << "accepted: " << doc.dump();
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find(fragment), std::string::npos) << e.what();
    }
}

}  // namespace

TEST(Config, MinimalDocumentParses) {
    const ExperimentConfig c = parse_config(minimal());
    EXPECT_EQ(c.run_name, "cfg");
    EXPECT_EQ(c.seed, 7u);
    EXPECT_EQ(c.train.total_steps, 20u);
    EXPECT_EQ(c.model.policy.kind, PolicyKind::baseline);
    EXPECT_EQ(c.model.seed, derive_seed(7, "init"));
    EXPECT_EQ(c.train.seed, derive_seed(7, "data"));
    EXPECT_EQ(c.probe.task.seed, derive_seed(7, "probe"));
}

TEST(Config, UnknownKeysRejectedAtEveryLevel) {
    Json d = minimal();
    d["learning_rate"] = 1;
    expect_config_error(d, "learning_rate");
    d = minimal();
    d["train"]["lr"] = 1;
    expect_config_error(d, "lr");
    d = minimal();
    d["policy"] = {{"kind", "focal_constant"}, {"temperature", 0.5}};
    expect_config_error(d, "temperature");
    d = minimal();
    d["tasks"] = Json::array({{{"kind", "kv_recall"}, {"n_distractors", 2}}});
    expect_config_error(d, "n_distractors");
}

TEST(Config, SubSeedsMayNotBeSetDirectly) {
    Json d = minimal();
    d["model"]["seed"] = 3;
    expect_config_error(d, "seed");
    d = minimal();
    d["train"]["seed"] = 3;
    expect_config_error(d, "seed");
}

TEST(Config, PolicyConstraints) {
    Json d = minimal();
    d["policy"] = {{"kind", "focal_constant"}, {"t", 0.0}};
    EXPECT_THROW(parse_config(d), ConfigError);
    d["policy"]["t"] = -1.0;
    EXPECT_THROW(parse_config(d), ConfigError);
    d["policy"] = {{"kind", "focal_learned"}, {"tau_min", 10.0}, {"tau_max", 5.0}};
    EXPECT_THROW(parse_config(d), ConfigError);
    d["policy"]["tau_max"] = 10.0;
    EXPECT_THROW(parse_config(d), ConfigError);
    d["policy"] = {{"kind", "focal_learned"}, {"tau_min", 5.0}, {"tau_max", 10.0}, {"mean_mode", "causal_prefix"}};
    const ExperimentConfig c = parse_config(d);
    EXPECT_EQ(c.model.policy.mean_mode, MeanMode::causal_prefix);
    d["policy"]["kind"] = "focal";
    EXPECT_THROW(parse_config(d), ConfigError);
    d = minimal();
    d["sweep"] = {{"t_values", {0.5, 0.0}}};
    EXPECT_THROW(parse_config(d), ConfigError);
}

TEST(Config, ContextLengthsBoundedByModel) {
    Json d = minimal();
    d["train"]["seq_len"] = 512;
    expect_config_error(d, "max_context");
    d = minimal();
    d["eval_contexts"] = {128, 1024};
    EXPECT_THROW(parse_config(d), ConfigError);
    d = minimal();
    d["tasks"] = Json::array({{{"kind", "copy"}, {"context_length", 300}}});
    expect_config_error(d, "max_context");
    d = minimal();
    d["data"] = {{"synthetic", {{"kv_context", 64}, {"kv_pairs_min", 1}, {"kv_pairs_max", 2}}}};
    expect_config_error(d, "kv_context");
    d["data"]["synthetic"]["kv_pairs_max"] = 1;
    EXPECT_NO_THROW(parse_config(d));
}

TEST(Config, TypeMismatchesRejected) {
    Json d = minimal();
    d["train"]["total_steps"] = -5;
    EXPECT_THROW(parse_config(d), ConfigError);
    d = minimal();
    d["train"]["peak_lr"] = "fast";
    EXPECT_THROW(parse_config(d), ConfigError);
    d = minimal();
    d["precision"] = "f16";
    EXPECT_THROW(parse_config(d), ConfigError);
    d = minimal();
    d["train"]["batch_tokens"] = 256;
    EXPECT_THROW(parse_config(d), ConfigError);  // batch_size given too
    d["train"].erase("batch_size");
    EXPECT_EQ(parse_config(d).train.batch_size, 4u);
    d["train"]["batch_tokens"] = 100;
    EXPECT_THROW(parse_config(d), ConfigError);
}

TEST(Config, RoundTripsThroughJson) {
    Json d = minimal();
    d["policy"] = {{"kind", "focal_learned"}, {"tau_min", 4.0}, {"tau_max", 9.0}, {"clip", "hard"}};
    d["tasks"] = Json::array({{{"kind", "icl_classify"}, {"context_length", 200}, {"n_labels", 3}, {"shots", 4}},
                              {{"kind", "needle_uuid"}, {"context_length", 256}, {"n_distractors", 1}}});
    d["sweep"] = {{"t_values", {0.5, 1.0}}, {"seeds", 2}, {"mode", "subprocess"}};
    d["precision"] = "f64";
    const ExperimentConfig a = parse_config(d);
    const Json j = to_json(a);
    const ExperimentConfig b = parse_config(j);
    EXPECT_EQ(to_json(b), j);
    EXPECT_EQ(b.model.seed, a.model.seed);
    EXPECT_EQ(b.tasks[1].seed, a.tasks[1].seed);
    EXPECT_TRUE(b.sweep.subprocess);
}

TEST(Config, ApplySeedRederivesEverySubSeed) {
    Json d = minimal();
    d["tasks"] = Json::array({{{"kind", "copy"}, {"context_length", 64}}});
    ExperimentConfig c = parse_config(d);
    c.apply_seed(99);
    EXPECT_EQ(c.seed, 99u);
    EXPECT_EQ(c.model.seed, derive_seed(99, "init"));
    EXPECT_EQ(c.train.seed, derive_seed(99, "data"));
    EXPECT_EQ(c.probe.task.seed, derive_seed(99, "probe"));
    EXPECT_EQ(c.tasks[0].seed, derive_seed(99, "eval-0"));
    EXPECT_NE(c.model.seed, c.train.seed);
}

TEST(Config, LoadReportsIoAndSyntaxErrors) {
    TempDir dir("cfg");
    EXPECT_THROW(load_config(dir.path() / "absent.json"), IoError);
    {
        std::ofstream(dir.path() / "bad.json") << "{\"run_name\": ";
    }
    EXPECT_THROW(load_config(dir.path() / "bad.json"), ConfigError);
    {
        std::ofstream(dir.path() / "good.json") << minimal().dump();
    }
    EXPECT_EQ(load_config(dir.path() / "good.json").run_name, "cfg");
}

TEST(Config, BundledExampleConfigsParse) {
    const std::filesystem::path dir = FOCAL_SOURCE_DIR "/configs";
    ASSERT_TRUE(std::filesystem::is_directory(dir));
    std::size_t n = 0;
    for (const auto& e : std::filesystem::directory_iterator(dir)) {
        if (e.path().extension() != ".json") continue;
        SCOPED_TRACE(e.path().string());
        EXPECT_NO_THROW(load_config(e.path()));
        ++n;
    }
    EXPECT_GT(n, 0u);
}
