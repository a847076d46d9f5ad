#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "focal/attention.hpp"
#include "focal/tensor.hpp"

namespace focal {

struct ModelConfig {
    std::string name = "custom";
    std::size_t n_layers = 2;
    std::size_t d_model = 64;
    std::size_t n_heads = 4;
    std::size_t d_ffn = 176;
    std::size_t vocab_size = 259;
    std::size_t max_context = 256;
    double rope_theta = 10000.0;
    double norm_eps = 1e-5;
    bool tie_embeddings = true;
    TemperaturePolicy policy;
    std::uint64_t seed = 0;

    std::size_t head_dim() const { return d_model / n_heads; }
    void validate() const;

    bool operator==(const ModelConfig&) const = default;
};

/// Architecture presets. "400M" ... "9.5B" follow the reference size table
/// (LLaMA vocabulary of 32000, 2048-token context); "toy" and "tiny" are
/// desk-scale configurations over the byte vocabulary.
ModelConfig model_preset(std::string_view name);
std::vector<std::string> model_preset_names();
/// The six large presets in ascending size order.
std::vector<std::string> size_preset_names();

/// Exact parameter count of a model built from `config`.
std::size_t count_params(const ModelConfig& config);

template <typename T>
struct Block {
    Tensor<T> attn_norm;
    AttentionLayer<T> attn;
    Tensor<T> ffn_norm;
    Tensor<T> w_gate, w_up, w_down;
};

template <typename T>
struct NamedParam {
    std::string name;
    Tensor<T> tensor;
    bool decay = true;  // subject to weight decay
};

/// Per-forward side outputs.
template <typename T>
struct ForwardCapture {
    bool keep_probs = false;
    TraceOptions trace;  // layer_index is filled in per layer
    std::vector<AttentionTrace> traces;
    std::vector<std::vector<T>> tau;  // per layer, [batch * seq]; learned layers only
};

template <typename T>
class Model {
public:
    Model() = default;
    explicit Model(ModelConfig config);  // parameters zero; see init_params

    const ModelConfig& config() const { return config_; }

    /// logits[batch * seq, vocab] for tokens laid out [batch, seq].
    Tensor<T> forward(Graph<T>& g, std::span<const std::int32_t> tokens, std::size_t batch, std::size_t seq,
                      ForwardCapture<T>* capture = nullptr) const;
    Tensor<T> forward(Graph<T>& g, std::span<const std::int32_t> tokens) const {
        return forward(g, tokens, 1, tokens.size());
    }

    /// Parameters in a fixed order with stable names.
    std::vector<NamedParam<T>> parameters() const;

    void zero_grad();

    /// Replaces every layer's temperature policy in place. Switching to the
    /// learned policy creates w_tau where missing; leaving it drops w_tau.
    void set_temperature(const TemperaturePolicy& policy);

    Tensor<T> embedding;
    std::vector<Block<T>> blocks;
    Tensor<T> final_norm;
    Tensor<T> output;  // [vocab, d_model]; undefined when tied

private:
    ModelConfig config_;
};

/// Weights ~ N(0, 0.02); W_o and W_down additionally scaled by
/// 1/sqrt(2 * n_layers); norm gains 1; w_tau per the policy's tau_init.
/// Deterministic in config.seed.
template <typename T>
Model<T> init_params(const ModelConfig& config);

/// Deep copy: Model copies share parameter storage, this does not.
template <typename T>
Model<T> clone_model(const Model<T>& model);

template <typename T>
void set_temperature(Model<T>& model, const TemperaturePolicy& policy) {
    model.set_temperature(policy);
}

}  // namespace focal
