#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "focal/model.hpp"

namespace focal {

struct TrainConfig {
    double peak_lr = 3e-3;
    double final_lr_fraction = 0.10;
    std::size_t warmup_steps = 100;
    std::size_t total_steps = 2000;
    std::size_t batch_size = 16;
    std::size_t seq_len = 256;
    double beta1 = 0.9;
    double beta2 = 0.95;
    double eps = 1e-8;
    double weight_decay = 0.05;
    double grad_clip_norm = 1.0;
    std::size_t eval_every = 500;        // 0: only at the end
    std::size_t checkpoint_every = 0;    // 0: never
    std::size_t log_every = 1;
    std::uint64_t seed = 0;

    std::size_t batch_tokens() const { return batch_size * seq_len; }
    void validate() const;

    bool operator==(const TrainConfig&) const = default;
};

/// The reference training recipe for a size preset ("400M" ... "9.5B"):
/// batch, peak learning rate and step count per preset, shared AdamW settings.
struct TrainPreset {
    std::size_t batch_tokens = 0;
    double peak_lr = 0;
    std::size_t total_steps = 0;
    std::size_t warmup_steps = 0;
    TrainConfig as_config(std::size_t seq_len) const;
};
TrainPreset train_preset(const std::string& model_preset);

template <typename T>
struct OptimizerState {
    std::uint64_t step = 0;
    std::vector<std::vector<T>> first_moment;   // parallel to Model::parameters()
    std::vector<std::vector<T>> second_moment;
};

/// Linear warmup 0 -> peak, then peak * (f + (1 - f) * (1 + cos(pi * progress)) / 2).
double lr_at(std::size_t step, const TrainConfig& config);

/// Global-norm clipping; returns the norm before clipping.
template <typename T>
double clip_grad_norm(const std::vector<NamedParam<T>>& params, double max_norm);

/// One bias-corrected AdamW update with decoupled weight decay (applied to
/// parameters marked `decay`, scaled by lr). Throws NumericalError naming the
/// parameter when a gradient is not finite.
template <typename T>
void adamw_step(const std::vector<NamedParam<T>>& params, OptimizerState<T>& state, double lr,
                const TrainConfig& config);

}  // namespace focal
