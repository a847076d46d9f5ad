#pragma once

#include <cstddef>
#include <limits>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "focal/ops.hpp"
#include "focal/tensor.hpp"

namespace focal {

enum class PolicyKind { baseline, focal_constant, focal_learned };

/// How the learned temperature averages X w_tau over token positions.
enum class MeanMode {
    full_sequence,  // one tau per sequence, every position sees the whole sequence
    causal_prefix,  // position i averages positions 0..i only
};

enum class TauInit { zeros, small_random };

/// Divisor applied to attention logits before the softmax.
///
///   baseline        q.k / sqrt(head_dim)
///   focal_constant  q.k / (t * sqrt(head_dim))
///   focal_learned   q.k / tau,  tau = clip(mean(X w_tau), tau_min, tau_max)
///
/// The learned variant divides by tau alone. focal_constant with t == 1 runs
/// the same arithmetic as baseline.
struct TemperaturePolicy {
    PolicyKind kind = PolicyKind::baseline;
    double t = 1.0;
    double tau_min = 5.0;
    double tau_max = 10.0;
    MeanMode mean_mode = MeanMode::full_sequence;
    ClipGradient clip = ClipGradient::straight_through;
    TauInit tau_init = TauInit::zeros;

    static TemperaturePolicy baseline() { return {}; }
    static TemperaturePolicy focal_constant(double t);
    static TemperaturePolicy focal_learned(double tau_min = 5.0, double tau_max = 10.0,
                                           MeanMode mode = MeanMode::full_sequence);

    bool learned() const { return kind == PolicyKind::focal_learned; }
    /// Multiplier on sqrt(head_dim) for the fixed policies (1 for baseline).
    double scale() const { return kind == PolicyKind::focal_constant ? t : 1.0; }
    void validate() const;
    std::string describe() const;

    bool operator==(const TemperaturePolicy&) const = default;
};

std::string to_string(PolicyKind kind);
std::string to_string(MeanMode mode);

/// One recorded post-softmax attention row.
struct AttentionTrace {
    std::size_t layer = 0;
    std::size_t head = 0;
    std::size_t sequence = 0;
    std::size_t query = 0;
    std::vector<double> probs;  // length query + 1
};

template <typename T>
struct AttentionLayer {
    std::size_t heads = 1;
    std::size_t head_dim = 2;
    std::size_t max_context = 1;
    double rope_theta = 10000.0;
    double norm_eps = 1e-5;
    Tensor<T> wq, wk, wv, wo;   // [d_model, d_model]
    Tensor<T> q_norm, k_norm;   // [head_dim]
    Tensor<T> w_tau;            // [d_model], defined only for focal_learned
    TemperaturePolicy policy;

    std::size_t d_model() const { return heads * head_dim; }
    void validate() const;
};

/// Optional outputs of attend(): attention probabilities and the learned
/// temperatures actually used.
template <typename T>
struct AttentionCapture {
    bool keep_probs = false;
    std::shared_ptr<const std::vector<T>> probs;  // [batch, heads, n, n]
    std::vector<T> tau;                           // [batch * n] after clipping; empty unless learned
};

struct TraceOptions {
    std::size_t layer_index = 0;
    /// Keep only the last query row of each sequence and head.
    bool final_row_only = false;
    std::size_t max_rows = std::numeric_limits<std::size_t>::max();
};

/// clip(mean(X w_tau), tau_min, tau_max) per sequence (or per causal prefix),
/// as a [batch, n] tensor that participates in the gradient graph.
template <typename T>
Tensor<T> compute_tau(Graph<T>& g, const Tensor<T>& x, const AttentionLayer<T>& layer, std::size_t batch,
                      std::size_t seq);

/// Softmax denominators for every (sequence, query) under the layer's policy.
template <typename T>
Tensor<T> attention_denominators(Graph<T>& g, const Tensor<T>& x, const AttentionLayer<T>& layer,
                                 std::size_t batch, std::size_t seq);

/// Causal multi-head self-attention on x[batch * seq, d_model].
template <typename T>
Tensor<T> attend(Graph<T>& g, const Tensor<T>& x, const AttentionLayer<T>& layer, std::size_t batch,
                 std::size_t seq, AttentionCapture<T>* capture = nullptr);

/// Single-sequence form, x[n, d_model].
template <typename T>
Tensor<T> attend(Graph<T>& g, const Tensor<T>& x, const AttentionLayer<T>& layer) {
    return attend(g, x, layer, 1, x.dim(0));
}

template <typename T>
std::pair<Tensor<T>, std::vector<AttentionTrace>> attend_with_trace(Graph<T>& g, const Tensor<T>& x,
                                                                   const AttentionLayer<T>& layer,
                                                                   std::size_t batch, std::size_t seq,
                                                                   const TraceOptions& options = {});

/// Converts captured probabilities into trace rows.
template <typename T>
std::vector<AttentionTrace> traces_from_probs(const std::vector<T>& probs, std::size_t batch, std::size_t heads,
                                              std::size_t seq, const TraceOptions& options);

}  // namespace focal
