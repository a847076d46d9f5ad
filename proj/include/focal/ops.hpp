#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "focal/tensor.hpp"

// Differentiable operations. Each takes the graph that records it; a graph
// created with recording == false yields plain values.

namespace focal {

/// Target value excluded from cross_entropy's mean.
inline constexpr std::int32_t kNoIgnore = -1;

enum class ClipGradient {
    straight_through,  // backward passes the upstream gradient unchanged
    hard,              // zero gradient where the forward value was clipped
};

template <typename T>
Tensor<T> matmul(Graph<T>& g, const Tensor<T>& a, const Tensor<T>& b);

/// a[m,k] * b[n,k]^T
template <typename T>
Tensor<T> matmul_nt(Graph<T>& g, const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> reshape(Graph<T>& g, const Tensor<T>& x, Shape shape);

template <typename T>
Tensor<T> add(Graph<T>& g, const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> mul(Graph<T>& g, const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> scale(Graph<T>& g, const Tensor<T>& x, T factor);

template <typename T>
Tensor<T> sum(Graph<T>& g, const Tensor<T>& x);

template <typename T>
Tensor<T> mean(Graph<T>& g, const Tensor<T>& x);

/// softmax((z - max z) / t) along `axis`. Entries equal to -inf are masked.
template <typename T>
Tensor<T> softmax_t(Graph<T>& g, const Tensor<T>& z, double t, std::size_t axis);

/// x / sqrt(mean(x^2) + eps) * gain over the last axis.
template <typename T>
Tensor<T> rms_norm(Graph<T>& g, const Tensor<T>& x, const Tensor<T>& gain, double eps = 1e-5);

template <typename T>
Tensor<T> silu(Graph<T>& g, const Tensor<T>& x);

/// (silu(x W_gate) * (x W_up)) W_down for x[n, d], W_gate/W_up[d, f], W_down[f, d].
template <typename T>
Tensor<T> swiglu(Graph<T>& g, const Tensor<T>& x, const Tensor<T>& w_gate, const Tensor<T>& w_up,
                 const Tensor<T>& w_down);

/// Rotates consecutive feature pairs of x[n, heads, head_dim] or
/// x[batch, n, heads, head_dim] by position * theta^(-2p/head_dim).
template <typename T>
Tensor<T> rope_rotate(Graph<T>& g, const Tensor<T>& x, double theta, std::span<const std::int32_t> positions);

/// Mean negative log-likelihood of targets under softmax(logits[n, V]).
/// Rows whose target equals `ignore` are excluded from the mean.
template <typename T>
Tensor<T> cross_entropy(Graph<T>& g, const Tensor<T>& logits, std::span<const std::int32_t> targets,
                        std::int32_t ignore = kNoIgnore);

template <typename T>
Tensor<T> clip_st(Graph<T>& g, const Tensor<T>& x, double lo, double hi,
                  ClipGradient mode = ClipGradient::straight_through);

/// Rows of table[V, d] gathered by id.
template <typename T>
Tensor<T> embedding(Graph<T>& g, const Tensor<T>& table, std::span<const std::int32_t> ids);

/// x[batch, n] -> [batch, n]. Full mode broadcasts each row's mean to every
/// position; causal-prefix mode gives position i the mean of x[b, 0..i].
template <typename T>
Tensor<T> sequence_mean(Graph<T>& g, const Tensor<T>& x, bool causal_prefix);

/// Causal multi-head attention on q, k, v of shape [batch, n, heads, head_dim]
/// with one softmax denominator per (batch, query) in denom[batch, n].
/// When `probs` is non-null it receives the [batch, heads, n, n] probabilities.
template <typename T>
Tensor<T> causal_attention(Graph<T>& g, const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v,
                           const Tensor<T>& denom,
                           std::shared_ptr<const std::vector<T>>* probs = nullptr);

}  // namespace focal
