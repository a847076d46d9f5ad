#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "focal/checkpoint.hpp"
#include "focal/data.hpp"
#include "focal/model.hpp"
#include "focal/optim.hpp"

namespace focal {

struct TauStats {
    double min = 0, max = 0, mean = 0;
};

struct StepLog {
    std::uint64_t step = 0;
    double lr = 0;
    double train_loss = 0;
    double grad_norm = 0;
    std::vector<TauStats> tau;  // per layer; empty unless learned
    std::optional<double> val_loss;
    double wall_time = 0;       // seconds since the run (or resume) started
};

Json to_json(const StepLog& log, bool include_time = true);

template <typename T>
struct TrainState {
    Model<T> model;
    OptimizerState<T> optimizer;
    std::uint64_t step = 0;
    std::uint64_t data_cursor = 0;
};

struct TrainOptions {
    std::filesystem::path out_dir;  // empty: no files written
    std::uint64_t until_step = 0;   // 0: config.total_steps
    std::uint64_t root_seed = 0;    // recorded in checkpoints
    Json checkpoint_extra = Json::object();
    std::function<void(const StepLog&)> on_step;
};

struct RunRecord {
    std::vector<StepLog> steps;  // every logged step
    std::vector<std::pair<std::uint64_t, double>> validation;
    double final_train_loss = 0;
    std::optional<double> final_val_loss;
    std::uint64_t last_step = 0;
    double wall_time = 0;
};

/// Runs optimizer steps state.step + 1 ... until_step. Per step: batch,
/// forward, masked cross-entropy, backward, clip, AdamW at lr_at(step).
/// Writes steps.jsonl and ckpt/step_N under out_dir when set. A non-finite
/// loss throws NumericalError after saving the last good state.
template <typename T>
RunRecord train(TrainState<T>& state, BatchIterator& data, const std::vector<Batch>& validation,
                const TrainConfig& config, const TrainOptions& options = {});

/// Token-weighted mean cross-entropy over the batches; PAD targets ignored.
template <typename T>
double evaluate_loss(const Model<T>& model, const std::vector<Batch>& batches);

template <typename T>
void save_state(const std::filesystem::path& dir, const TrainState<T>& state, const TrainConfig& config,
                std::uint64_t root_seed, const Json& extra = Json::object());

template <typename T>
TrainState<T> load_state(const std::filesystem::path& dir, TrainConfig* config = nullptr);

}  // namespace focal
