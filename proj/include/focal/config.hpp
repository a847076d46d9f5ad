#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "focal/attention.hpp"
#include "focal/model.hpp"
#include "focal/optim.hpp"
#include "focal/tasks.hpp"

namespace focal {

using Json = nlohmann::ordered_json;

enum class Precision { f32, f64 };

struct DataSpec {
    std::string corpus_path;  // empty: synthetic mix only
    SyntheticMix synthetic;
    std::size_t val_batches = 32;

    bool operator==(const DataSpec&) const = default;
};

/// Probe set for attention diagnostics.
struct ProbeSpec {
    TaskSpec task{TaskKind::kv_recall, 256, 8, 0, 20, 0};
    bool final_row_only = false;
    std::size_t max_rows = 1u << 16;  // per probe
    std::size_t top_k = 8;
    TemperaturePolicy override_policy = TemperaturePolicy::focal_constant(0.4);
    TemperaturePolicy reference_policy = TemperaturePolicy::baseline();
};

struct AdaptSpec {
    TemperaturePolicy policy = TemperaturePolicy::focal_constant(0.4);
    double peak_lr = 5e-4;
    std::size_t steps = 200;
    std::size_t warmup_steps = 20;
};

struct SweepSpec {
    std::vector<double> t_values{0.3, 0.4, 0.5, 0.6, 1.0};
    std::vector<double> tau_min_values{1, 2, 3, 4, 5, 6, 7};
    std::vector<double> tau_max_values{10.0, 11.31};
    std::size_t seeds = 3;
    bool subprocess = false;
};

struct ExperimentConfig {
    std::string run_name = "run";
    std::uint64_t seed = 0;
    Precision precision = Precision::f32;
    std::string out_dir = "runs";
    ModelConfig model = model_preset("toy");
    TrainConfig train;
    DataSpec data;
    std::vector<TaskSpec> tasks;
    std::vector<std::size_t> eval_contexts{256};
    ProbeSpec probe;
    AdaptSpec adapt;
    SweepSpec sweep;

    /// Throws ConfigError on any inconsistency. Called before any compute.
    void validate() const;
    /// Re-derives model/train/probe sub-seeds from the root seed.
    void apply_seed(std::uint64_t root);
};

/// Parses a config document; unknown keys anywhere raise ConfigError.
ExperimentConfig parse_config(const Json& doc);
ExperimentConfig load_config(const std::filesystem::path& path);
Json to_json(const ExperimentConfig& config);

Json to_json(const TemperaturePolicy& policy);
TemperaturePolicy policy_from_json(const Json& j);
Json to_json(const ModelConfig& config);
/// Accepts {"preset": name, ...overrides} or a full explicit config.
ModelConfig model_config_from_json(const Json& j);
Json to_json(const TrainConfig& config);
TrainConfig train_config_from_json(const Json& j, TrainConfig base = {});
Json to_json(const TaskSpec& spec);
TaskSpec task_spec_from_json(const Json& j);

std::string to_string(Precision p);

}  // namespace focal
