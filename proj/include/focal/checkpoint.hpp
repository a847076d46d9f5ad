#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "focal/config.hpp"
#include "focal/model.hpp"
#include "focal/optim.hpp"

namespace focal {

/// Everything besides tensors needed to resume a run.
struct CheckpointMeta {
    std::uint64_t step = 0;
    std::uint64_t data_cursor = 0;
    std::uint64_t root_seed = 0;
    TrainConfig train;
    Json extra = Json::object();
};

template <typename T>
struct Checkpoint {
    Model<T> model;
    std::optional<OptimizerState<T>> optimizer;
    CheckpointMeta meta;
};

/// Writes `dir`/manifest.json and `dir`/tensors.bin. The directory is staged
/// under a temporary name and renamed into place, so an existing checkpoint
/// is never left half-written. Throws IoError.
template <typename T>
void save_checkpoint(const std::filesystem::path& dir, const Model<T>& model, const OptimizerState<T>* optimizer,
                     const CheckpointMeta& meta);

/// Loads a checkpoint written at either precision; values are converted to T
/// when the stored dtype differs. Throws IoError or ConfigError.
template <typename T>
Checkpoint<T> load_checkpoint(const std::filesystem::path& dir);

/// "f32" or "f64" as recorded in the manifest.
std::string checkpoint_dtype(const std::filesystem::path& dir);

/// `root`/ckpt/step_N
std::filesystem::path checkpoint_dir(const std::filesystem::path& root, std::uint64_t step);

}  // namespace focal
