#pragma once

#include <cstddef>
#include <span>

// Dense kernels behind the differentiable ops.
//
// Every parallel kernel splits work over output rows (or attention
// batch x head slices) and keeps the summation order of each output element
// fixed, so results are bit-identical for any OpenMP thread count. The
// `reference` namespace holds naive serial loops with the same contracts; they
// are used by the kernel tests and the benchmark.

namespace focal::kernels {

/// c[m,n] (+)= a[m,k] * b[k,n]
template <typename T>
void gemm(std::size_t m, std::size_t k, std::size_t n, std::span<const T> a, std::span<const T> b, std::span<T> c,
          bool accumulate);

/// c[k,n] (+)= a[m,k]^T * b[m,n]
template <typename T>
void gemm_tn(std::size_t m, std::size_t k, std::size_t n, std::span<const T> a, std::span<const T> b,
             std::span<T> c, bool accumulate);

/// c[m,n] (+)= a[m,k] * b[n,k]^T
template <typename T>
void gemm_nt(std::size_t m, std::size_t k, std::size_t n, std::span<const T> a, std::span<const T> b,
             std::span<T> c, bool accumulate);

/// Layout of q/k/v/out: [batch, seq, heads, head_dim]. Probabilities:
/// [batch, heads, seq, seq], zero above the diagonal. Denominators: one per
/// (batch, query position).
struct AttentionDims {
    std::size_t batch = 1;
    std::size_t seq = 1;
    std::size_t heads = 1;
    std::size_t head_dim = 1;

    std::size_t activations() const { return batch * seq * heads * head_dim; }
    std::size_t probabilities() const { return batch * heads * seq * seq; }
};

/// Causal softmax(q k^T / denom) v per head.
template <typename T>
void attention_forward(const AttentionDims& dims, std::span<const T> q, std::span<const T> k, std::span<const T> v,
                       std::span<const T> denom, std::span<T> out, std::span<T> probs);

/// Accumulates into dq, dk, dv. When ddenom is non-empty it receives the
/// gradient with respect to each row denominator (accumulated).
template <typename T>
void attention_backward(const AttentionDims& dims, std::span<const T> q, std::span<const T> k,
                        std::span<const T> v, std::span<const T> denom, std::span<const T> probs,
                        std::span<const T> dout, std::span<T> dq, std::span<T> dk, std::span<T> dv,
                        std::span<T> ddenom);

/// exp of every element in place. The float path is a vectorizable
/// polynomial (relative error < 2e-7); double uses std::exp.
template <typename T>
void exp_inplace(std::span<T> x);

/// Numerically stable softmax of one row of logits divided by `temperature`.
/// Entries equal to -inf get probability 0. Returns false when no entry is
/// finite.
template <typename T>
bool softmax_row(std::span<const T> logits, double temperature, std::span<T> out);

namespace reference {

template <typename T>
void gemm(std::size_t m, std::size_t k, std::size_t n, std::span<const T> a, std::span<const T> b, std::span<T> c,
          bool accumulate);

template <typename T>
void gemm_tn(std::size_t m, std::size_t k, std::size_t n, std::span<const T> a, std::span<const T> b,
             std::span<T> c, bool accumulate);

template <typename T>
void gemm_nt(std::size_t m, std::size_t k, std::size_t n, std::span<const T> a, std::span<const T> b,
             std::span<T> c, bool accumulate);

template <typename T>
void attention_forward(const AttentionDims& dims, std::span<const T> q, std::span<const T> k, std::span<const T> v,
                       std::span<const T> denom, std::span<T> out, std::span<T> probs);

template <typename T>
void attention_backward(const AttentionDims& dims, std::span<const T> q, std::span<const T> k,
                        std::span<const T> v, std::span<const T> denom, std::span<const T> probs,
                        std::span<const T> dout, std::span<T> dq, std::span<T> dk, std::span<T> dv,
                        std::span<T> ddenom);

}  // namespace reference

}  // namespace focal::kernels
