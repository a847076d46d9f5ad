#include "focal/optim.hpp"

#include <cmath>
#include <numbers>

namespace focal {

void TrainConfig::validate() const {
    if (!(peak_lr > 0.0)) throw ConfigError("train config: peak_lr must be > 0");
    if (!(final_lr_fraction >= 0.0 && final_lr_fraction <= 1.0)) {
        throw ConfigError("train config: final_lr_fraction must be in [0, 1]");
    }
    if (total_steps == 0) throw ConfigError("train config: total_steps must be > 0");
    if (warmup_steps >= total_steps) throw ConfigError("train config: warmup_steps must be < total_steps");
    if (batch_size == 0 || seq_len == 0) throw ConfigError("train config: batch geometry must be positive");
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
        throw ConfigError("train config: betas must be in [0, 1)");
    }
    if (!(eps > 0.0)) throw ConfigError("train config: eps must be > 0");
    if (!(weight_decay >= 0.0)) throw ConfigError("train config: weight_decay must be >= 0");
    if (!(grad_clip_norm > 0.0)) throw ConfigError("train config: grad_clip_norm must be > 0");
    if (log_every == 0) throw ConfigError("train config: log_every must be > 0");
}

TrainConfig TrainPreset::as_config(std::size_t seq_len) const {
    TrainConfig c;
    c.peak_lr = peak_lr;
    c.total_steps = total_steps;
    c.warmup_steps = warmup_steps;
    c.seq_len = seq_len;
    c.batch_size = batch_tokens / seq_len;
    return c;
}

TrainPreset train_preset(const std::string& name) {
    constexpr std::size_t kBatchTokens = 262144;  // 0.26M = 128 x 2048
    constexpr std::size_t kSteps = 100000;
    constexpr std::size_t kWarmup = 2000;
    if (name == "400M") return {kBatchTokens, 4e-3, kSteps, kWarmup};
    if (name == "777M") return {kBatchTokens, 2e-3, kSteps, kWarmup};
    if (name == "1.3B") return {kBatchTokens, 1e-3, kSteps, kWarmup};
    if (name == "2.7B") return {kBatchTokens, 5e-4, kSteps, kWarmup};
    if (name == "6.7B") return {kBatchTokens, 4e-4, kSteps, kWarmup};
    if (name == "9.5B") return {kBatchTokens, 4e-4, kSteps, kWarmup};
    throw ConfigError("no training preset for '" + name + "'");
}

double lr_at(std::size_t step, const TrainConfig& c) {
    if (step <= c.warmup_steps) {
        if (c.warmup_steps == 0) return c.peak_lr;
        return c.peak_lr * static_cast<double>(step) / static_cast<double>(c.warmup_steps);
    }
    const double span = static_cast<double>(c.total_steps - c.warmup_steps);
    double progress = static_cast<double>(step - c.warmup_steps) / span;
    if (progress > 1.0) progress = 1.0;
    const double f = c.final_lr_fraction;
    return c.peak_lr * (f + (1.0 - f) * 0.5 * (1.0 + std::cos(std::numbers::pi * progress)));
}

template <typename T>
double clip_grad_norm(const std::vector<NamedParam<T>>& params, double max_norm) {
    double sq = 0;
    for (const auto& p : params) {
        if (!p.tensor.requires_grad()) continue;
        for (T g : p.tensor.grad()) sq += static_cast<double>(g) * static_cast<double>(g);
    }
    const double norm = std::sqrt(sq);
    if (norm > max_norm) {
        const T factor = static_cast<T>(max_norm / norm);
        for (const auto& p : params) {
            if (!p.tensor.requires_grad()) continue;
            Tensor<T> t = p.tensor;
            for (T& g : t.grad()) g *= factor;
        }
    }
    return norm;
}

template <typename T>
void adamw_step(const std::vector<NamedParam<T>>& params, OptimizerState<T>& state, double lr,
                const TrainConfig& config) {
    if (state.first_moment.empty()) {
        for (const auto& p : params) {
            state.first_moment.emplace_back(p.tensor.numel(), T(0));
            state.second_moment.emplace_back(p.tensor.numel(), T(0));
        }
    }
    if (state.first_moment.size() != params.size()) {
        throw UsageError("adamw_step: optimizer state tracks " + std::to_string(state.first_moment.size()) +
                         " parameters, model has " + std::to_string(params.size()));
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        for (T g : params[i].tensor.grad()) {
            if (!std::isfinite(g)) throw NumericalError("adamw_step: non-finite gradient in " + params[i].name);
        }
    }
    state.step += 1;
    const double t = static_cast<double>(state.step);
    const T b1 = static_cast<T>(config.beta1), b2 = static_cast<T>(config.beta2);
    const T bias1 = static_cast<T>(1.0 - std::pow(config.beta1, t));
    const T bias2 = static_cast<T>(1.0 - std::pow(config.beta2, t));
    const T step_lr = static_cast<T>(lr);
    const T eps = static_cast<T>(config.eps);
    for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor<T> tensor = params[i].tensor;
        auto w = tensor.data();
        auto g = tensor.grad();
        auto& m = state.first_moment[i];
        auto& v = state.second_moment[i];
        if (m.size() != w.size()) throw UsageError("adamw_step: moment shape mismatch for " + params[i].name);
        const T decay = params[i].decay ? static_cast<T>(1.0 - lr * config.weight_decay) : T(1);
        for (std::size_t j = 0; j < w.size(); ++j) {
            m[j] = b1 * m[j] + (T(1) - b1) * g[j];
            v[j] = b2 * v[j] + (T(1) - b2) * g[j] * g[j];
            const T m_hat = m[j] / bias1;
            const T v_hat = v[j] / bias2;
            w[j] = w[j] * decay - step_lr * m_hat / (std::sqrt(v_hat) + eps);
        }
    }
}

template double clip_grad_norm<float>(const std::vector<NamedParam<float>>&, double);
template double clip_grad_norm<double>(const std::vector<NamedParam<double>>&, double);
template void adamw_step<float>(const std::vector<NamedParam<float>>&, OptimizerState<float>&, double,
                                const TrainConfig&);
template void adamw_step<double>(const std::vector<NamedParam<double>>&, OptimizerState<double>&, double,
                                 const TrainConfig&);

}  // namespace focal
