#include "focal/attention.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

namespace focal {

TemperaturePolicy TemperaturePolicy::focal_constant(double t) {
    TemperaturePolicy p;
    p.kind = PolicyKind::focal_constant;
    p.t = t;
    return p;
}

TemperaturePolicy TemperaturePolicy::focal_learned(double tau_min, double tau_max, MeanMode mode) {
    TemperaturePolicy p;
    p.kind = PolicyKind::focal_learned;
    p.tau_min = tau_min;
    p.tau_max = tau_max;
    p.mean_mode = mode;
    return p;
}

void TemperaturePolicy::validate() const {
    switch (kind) {
        case PolicyKind::baseline:
            break;
        case PolicyKind::focal_constant:
            if (!(t > 0.0) || !std::isfinite(t)) {
                throw ConfigError("focal_constant: t must be > 0, got " + std::to_string(t));
            }
            break;
        case PolicyKind::focal_learned:
            if (!(tau_min > 0.0) || !(tau_min < tau_max) || !std::isfinite(tau_max)) {
                throw ConfigError("focal_learned: need 0 < tau_min < tau_max, got tau_min=" + std::to_string(tau_min) +
                                  " tau_max=" + std::to_string(tau_max));
            }
            break;
    }
}

std::string to_string(PolicyKind kind) {
    switch (kind) {
        case PolicyKind::baseline:
            return "baseline";
        case PolicyKind::focal_constant:
            return "focal_constant";
        case PolicyKind::focal_learned:
            return "focal_learned";
    }
    return "?";
}

std::string to_string(MeanMode mode) {
    return mode == MeanMode::full_sequence ? "full_sequence" : "causal_prefix";
}

std::string TemperaturePolicy::describe() const {
    std::ostringstream os;
    os << to_string(kind);
    if (kind == PolicyKind::focal_constant) os << "(t=" << t << ")";
    if (kind == PolicyKind::focal_learned) {
        os << "(tau_min=" << tau_min << ", tau_max=" << tau_max << ", " << to_string(mean_mode) << ")";
    }
    return os.str();
}

template <typename T>
void AttentionLayer<T>::validate() const {
    if (head_dim % 2 != 0) throw ConfigError("attention: head_dim must be even for RoPE, got " + std::to_string(head_dim));
    const std::size_t d = d_model();
    for (const Tensor<T>* w : {&wq, &wk, &wv, &wo}) {
        if (!w->defined() || w->shape() != Shape{d, d}) throw DimensionError("attention: projection must be [d_model, d_model]");
    }
    if (q_norm.shape() != Shape{head_dim} || k_norm.shape() != Shape{head_dim}) {
        throw DimensionError("attention: qk-norm gains must be [head_dim]");
    }
    policy.validate();
    if (policy.learned() && (!w_tau.defined() || w_tau.shape() != Shape{d})) {
        throw DimensionError("attention: focal_learned needs w_tau of shape [d_model]");
    }
}

template <typename T>
Tensor<T> compute_tau(Graph<T>& g, const Tensor<T>& x, const AttentionLayer<T>& layer, std::size_t batch,
                      std::size_t seq) {
    const TemperaturePolicy& p = layer.policy;
    if (!p.learned()) throw UsageError("compute_tau: policy is not focal_learned");
    const std::size_t d = layer.d_model();
    if (x.shape() != Shape{batch * seq, d}) {
        throw DimensionError("compute_tau: input " + shape_str(x.shape()) + " is not [batch*seq, d_model]");
    }
    const Tensor<T> w = reshape(g, layer.w_tau, {d, 1});
    const Tensor<T> projected = reshape(g, matmul(g, x, w), {batch, seq});
    const Tensor<T> averaged = sequence_mean(g, projected, p.mean_mode == MeanMode::causal_prefix);
    return clip_st(g, averaged, p.tau_min, p.tau_max, p.clip);
}

template <typename T>
Tensor<T> attention_denominators(Graph<T>& g, const Tensor<T>& x, const AttentionLayer<T>& layer,
                                 std::size_t batch, std::size_t seq) {
    if (layer.policy.learned()) return compute_tau(g, x, layer, batch, seq);
    const T denom = static_cast<T>(layer.policy.scale() * std::sqrt(static_cast<double>(layer.head_dim)));
    return Tensor<T>({batch, seq}, std::vector<T>(batch * seq, denom));
}

template <typename T>
Tensor<T> attend(Graph<T>& g, const Tensor<T>& x, const AttentionLayer<T>& layer, std::size_t batch,
                 std::size_t seq, AttentionCapture<T>* capture) {
    const std::size_t d = layer.d_model(), heads = layer.heads, dh = layer.head_dim;
    if (seq == 0 || batch == 0) throw DimensionError("attend: empty input");
    if (seq > layer.max_context) {
        throw ConfigError("attend: sequence of " + std::to_string(seq) + " tokens exceeds context length " +
                          std::to_string(layer.max_context));
    }
    if (x.shape() != Shape{batch * seq, d}) {
        throw DimensionError("attend: input " + shape_str(x.shape()) + " is not [batch*seq, d_model]");
    }
    if (dh % 2 != 0) throw ConfigError("attend: head_dim must be even");

    std::vector<std::int32_t> positions(seq);
    std::iota(positions.begin(), positions.end(), 0);

    auto project = [&](const Tensor<T>& w, const Tensor<T>* gain) {
        Tensor<T> y = matmul(g, x, w);
        if (gain != nullptr) {
            y = reshape(g, y, {batch * seq * heads, dh});
            y = rms_norm(g, y, *gain, layer.norm_eps);
        }
        y = reshape(g, y, {batch, seq, heads, dh});
        if (gain != nullptr) y = rope_rotate(g, y, layer.rope_theta, positions);
        return y;
    };
    const Tensor<T> q = project(layer.wq, &layer.q_norm);
    const Tensor<T> k = project(layer.wk, &layer.k_norm);
    const Tensor<T> v = project(layer.wv, nullptr);

    const Tensor<T> denom = attention_denominators(g, x, layer, batch, seq);
    if (layer.policy.learned()) {
#ifndef NDEBUG
        for (T tau : denom.data()) {
            if (tau < static_cast<T>(layer.policy.tau_min) || tau > static_cast<T>(layer.policy.tau_max)) {
                throw NumericalError("attend: learned temperature left [tau_min, tau_max]");
            }
        }
#endif
        if (capture != nullptr) capture->tau.assign(denom.data().begin(), denom.data().end());
    }

    std::shared_ptr<const std::vector<T>> probs;
    const Tensor<T> mixed =
        causal_attention(g, q, k, v, denom, capture != nullptr && capture->keep_probs ? &probs : nullptr);
    if (capture != nullptr && capture->keep_probs) capture->probs = std::move(probs);
    return matmul(g, reshape(g, mixed, {batch * seq, d}), layer.wo);
}

template <typename T>
std::vector<AttentionTrace> traces_from_probs(const std::vector<T>& probs, std::size_t batch, std::size_t heads,
                                              std::size_t seq, const TraceOptions& options) {
    std::vector<AttentionTrace> rows;
    for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t h = 0; h < heads; ++h) {
            const std::size_t first = options.final_row_only ? seq - 1 : 0;
            for (std::size_t i = first; i < seq; ++i) {
                if (rows.size() >= options.max_rows) return rows;
                const T* pr = probs.data() + ((b * heads + h) * seq + i) * seq;
                AttentionTrace row;
                row.layer = options.layer_index;
                row.head = h;
                row.sequence = b;
                row.query = i;
                row.probs.assign(pr, pr + i + 1);
                rows.push_back(std::move(row));
            }
        }
    }
    return rows;
}

template <typename T>
std::pair<Tensor<T>, std::vector<AttentionTrace>> attend_with_trace(Graph<T>& g, const Tensor<T>& x,
                                                                   const AttentionLayer<T>& layer,
                                                                   std::size_t batch, std::size_t seq,
                                                                   const TraceOptions& options) {
    AttentionCapture<T> capture;
    capture.keep_probs = true;
    Tensor<T> out = attend(g, x, layer, batch, seq, &capture);
    return {std::move(out), traces_from_probs(*capture.probs, batch, layer.heads, seq, options)};
}

#define FOCAL_INSTANTIATE_ATTENTION(T)                                                                              \
    template struct AttentionLayer<T>;                                                                              \
    template Tensor<T> compute_tau(Graph<T>&, const Tensor<T>&, const AttentionLayer<T>&, std::size_t, std::size_t); \
    template Tensor<T> attention_denominators(Graph<T>&, const Tensor<T>&, const AttentionLayer<T>&, std::size_t,    \
                                              std::size_t);                                                         \
    template Tensor<T> attend(Graph<T>&, const Tensor<T>&, const AttentionLayer<T>&, std::size_t, std::size_t,       \
                              AttentionCapture<T>*);                                                                \
    template std::vector<AttentionTrace> traces_from_probs(const std::vector<T>&, std::size_t, std::size_t,         \
                                                           std::size_t, const TraceOptions&);                       \
    template std::pair<Tensor<T>, std::vector<AttentionTrace>> attend_with_trace(                                   \
        Graph<T>&, const Tensor<T>&, const AttentionLayer<T>&, std::size_t, std::size_t, const TraceOptions&);

FOCAL_INSTANTIATE_ATTENTION(float)
FOCAL_INSTANTIATE_ATTENTION(double)

#undef FOCAL_INSTANTIATE_ATTENTION

}  // namespace focal
