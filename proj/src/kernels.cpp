#include "focal/kernels.hpp"

#include <algorithm>
#include <bit>
#include <cstdint>
#include <type_traits>
#include <cmath>
#include <limits>
#include <vector>

namespace focal::kernels {

namespace {

constexpr std::size_t kRowBlock = 6;
constexpr std::size_t kColBlock = 32;

// c[R, C] (+)= a[R, k] * b[k, C] with the tile held in registers. Each
// element sums over p in ascending order, as in every other gemm path.
template <typename T, std::size_t R, std::size_t C>
inline void tile_fixed(std::size_t k, std::size_t lda, std::size_t ldb, std::size_t ldc, const T* a, const T* b,
                       T* c, bool accumulate) {
    T acc[R][C] = {};
    if (accumulate) {
        for (std::size_t r = 0; r < R; ++r) {
            for (std::size_t j = 0; j < C; ++j) acc[r][j] = c[r * ldc + j];
        }
    }
    for (std::size_t p = 0; p < k; ++p) {
        const T* br = b + p * ldb;
        for (std::size_t r = 0; r < R; ++r) {
            const T x = a[r * lda + p];
#pragma omp simd
            for (std::size_t j = 0; j < C; ++j) acc[r][j] += x * br[j];
        }
    }
    for (std::size_t r = 0; r < R; ++r) {
        for (std::size_t j = 0; j < C; ++j) c[r * ldc + j] = acc[r][j];
    }
}

// Edge tile of rows <= kRowBlock, cols <= kColBlock.
template <typename T>
void tile_any(std::size_t rows, std::size_t cols, std::size_t k, std::size_t lda, std::size_t ldb, std::size_t ldc,
              const T* a, const T* b, T* c, bool accumulate) {
    T acc[kRowBlock][kColBlock];
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t j = 0; j < cols; ++j) acc[r][j] = accumulate ? c[r * ldc + j] : T(0);
    }
    for (std::size_t p = 0; p < k; ++p) {
        const T* br = b + p * ldb;
        for (std::size_t r = 0; r < rows; ++r) {
            const T x = a[r * lda + p];
            for (std::size_t j = 0; j < cols; ++j) acc[r][j] += x * br[j];
        }
    }
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t j = 0; j < cols; ++j) c[r * ldc + j] = acc[r][j];
    }
}

// One band of up to kRowBlock rows: c[rows, n] (+)= a[rows, k] * b[k, n]
// with explicit leading dimensions.
template <typename T>
void gemm_rows(std::size_t rows, std::size_t k, std::size_t n, const T* a, std::size_t lda, const T* b,
               std::size_t ldb, T* c, std::size_t ldc, bool accumulate) {
    std::size_t j = 0;
    if (rows == kRowBlock) {
        for (; j + kColBlock <= n; j += kColBlock) {
            tile_fixed<T, kRowBlock, kColBlock>(k, lda, ldb, ldc, a, b + j, c + j, accumulate);
        }
        if (j + kColBlock / 2 <= n) {
            tile_fixed<T, kRowBlock, kColBlock / 2>(k, lda, ldb, ldc, a, b + j, c + j, accumulate);
            j += kColBlock / 2;
        }
    }
    for (; j < n; j += kColBlock) {
        tile_any(rows, std::min(kColBlock, n - j), k, lda, ldb, ldc, a, b + j, c + j, accumulate);
    }
}

// Which part of a triangular product a band needs.
enum class Band {
    full,
    lower_cols,  // only columns j <= last row of the band (causal scores)
    lower_k,     // a is lower triangular: sum p <= last row of the band
    upper_k,     // a is upper triangular: sum p >= first row of the band
};

// Serial c[m, n] (+)= a[m, k] * b[k, n] for row-major operands with leading
// dimensions. Skipped terms are exact zeros, so results match the full sum.
template <typename T>
void gemm_serial(std::size_t m, std::size_t k, std::size_t n, const T* a, std::size_t lda, const T* b,
                 std::size_t ldb, T* c, std::size_t ldc, bool accumulate, Band band = Band::full) {
    for (std::size_t row0 = 0; row0 < m; row0 += kRowBlock) {
        const std::size_t rows = std::min(kRowBlock, m - row0);
        std::size_t k0 = 0, k1 = k, cols = n;
        if (band == Band::lower_cols) cols = std::min(n, row0 + rows);
        if (band == Band::lower_k) k1 = std::min(k, row0 + rows);
        if (band == Band::upper_k) k0 = std::min(k, row0);
        gemm_rows(rows, k1 - k0, cols, a + row0 * lda + k0, lda, b + k0 * ldb, ldb, c + row0 * ldc, ldc, accumulate);
    }
}

template <typename T>
void transpose(std::size_t rows, std::size_t cols, const T* src, T* dst) {
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) dst[c * rows + r] = src[r * cols + c];
    }
}

}  // namespace

template <typename T>
void gemm(std::size_t m, std::size_t k, std::size_t n, std::span<const T> a, std::span<const T> b, std::span<T> c,
          bool accumulate) {
    const std::size_t blocks = (m + kRowBlock - 1) / kRowBlock;
    const T* pa = a.data();
    const T* pb = b.data();
    T* pc = c.data();
#pragma omp parallel for schedule(static)
    for (std::size_t blk = 0; blk < blocks; ++blk) {
        const std::size_t row0 = blk * kRowBlock;
        gemm_rows(std::min(kRowBlock, m - row0), k, n, pa + row0 * k, k, pb, n, pc + row0 * n, n, accumulate);
    }
}

template <typename T>
void gemm_tn(std::size_t m, std::size_t k, std::size_t n, std::span<const T> a, std::span<const T> b,
             std::span<T> c, bool accumulate) {
    // c = at * b with at[k, m]; the explicit transpose keeps the inner loop
    // contiguous and the per-element summation order ascending in m.
    std::vector<T> at(m * k);
    transpose(m, k, a.data(), at.data());
    gemm<T>(k, m, n, at, b, c, accumulate);
}

template <typename T>
void gemm_nt(std::size_t m, std::size_t k, std::size_t n, std::span<const T> a, std::span<const T> b,
             std::span<T> c, bool accumulate) {
    std::vector<T> bt(n * k);
    transpose(n, k, b.data(), bt.data());
    gemm<T>(m, k, n, a, bt, c, accumulate);
}

namespace {

// Cephes-style single-precision exp: range reduction by ln 2, degree-6
// polynomial, exponent assembled from bits. Relative error below 2e-7;
// inputs under -87 map to 0. Branch-free so the loop vectorizes.
inline float exp_poly(float x) {
    constexpr float kRound = 12582912.0f;  // 1.5 * 2^23: adding it rounds to nearest
    float xc = x < -87.0f ? -87.0f : x;
    xc = xc > 88.0f ? 88.0f : xc;
    const float n = (xc * 1.44269504088896341f + kRound) - kRound;
    const float r = xc - n * 0.693359375f - n * -2.12194440e-4f;
    float p = 1.9875691500e-4f;
    p = p * r + 1.3981999507e-3f;
    p = p * r + 8.3334519073e-3f;
    p = p * r + 4.1665795894e-2f;
    p = p * r + 1.6666665459e-1f;
    p = p * r + 5.0000001201e-1f;
    const float y = p * r * r + r + 1.0f;
    const float scale = std::bit_cast<float>((static_cast<std::int32_t>(n) + 127) << 23);
    return x < -87.0f ? 0.0f : y * scale;
}

}  // namespace

template <typename T>
void exp_inplace(std::span<T> x) {
    T* p = x.data();
    const std::size_t len = x.size();
    if constexpr (std::is_same_v<T, float>) {
#pragma omp simd
        for (std::size_t j = 0; j < len; ++j) p[j] = exp_poly(p[j]);
    } else {
        for (std::size_t j = 0; j < len; ++j) p[j] = std::exp(p[j]);
    }
}

template <typename T>
bool softmax_row(std::span<const T> logits, double temperature, std::span<T> out) {
    const std::size_t len = logits.size();
    const T* z = logits.data();
    T* o = out.data();
    T hi = -std::numeric_limits<T>::infinity();
    for (std::size_t j = 0; j < len; ++j) hi = std::max(hi, z[j]);
    if (!std::isfinite(hi)) return false;
    // -inf entries stay -inf after the shift and exponentiate to 0.
    if (temperature == 1.0) {
#pragma omp simd
        for (std::size_t j = 0; j < len; ++j) o[j] = z[j] - hi;
    } else {
        const T t = static_cast<T>(temperature);
#pragma omp simd
        for (std::size_t j = 0; j < len; ++j) o[j] = (z[j] - hi) / t;
    }
    exp_inplace<T>(out.first(len));
    T total = 0;
    for (std::size_t j = 0; j < len; ++j) total += o[j];
#pragma omp simd
    for (std::size_t j = 0; j < len; ++j) o[j] /= total;
    return true;
}

namespace {

// Copies one (batch, head) slice of a [batch, seq, heads, dh] tensor into a
// contiguous [seq, dh] block, and optionally its transpose [dh, seq].
template <typename T>
void gather_slice(const T* src, std::size_t n, std::size_t row_stride, std::size_t dh, T* rows, T* cols) {
    for (std::size_t j = 0; j < n; ++j) {
        const T* s = src + j * row_stride;
        if (rows != nullptr) std::copy(s, s + dh, rows + j * dh);
        if (cols != nullptr) {
            for (std::size_t d = 0; d < dh; ++d) cols[d * n + j] = s[d];
        }
    }
}

}  // namespace

template <typename T>
void attention_forward(const AttentionDims& dims, std::span<const T> q, std::span<const T> k, std::span<const T> v,
                       std::span<const T> denom, std::span<T> out, std::span<T> probs) {
    const std::size_t n = dims.seq, heads = dims.heads, dh = dims.head_dim;
    const std::size_t row_stride = heads * dh;
    const std::size_t slices = dims.batch * heads;
#pragma omp parallel
    {
        std::vector<T> qs(n * dh), kt(dh * n), vs(n * dh), os(n * dh);
#pragma omp for schedule(static)
        for (std::size_t slice = 0; slice < slices; ++slice) {
            const std::size_t b = slice / heads, h = slice % heads;
            const std::size_t base = b * n * row_stride + h * dh;
            gather_slice(q.data() + base, n, row_stride, dh, qs.data(), static_cast<T*>(nullptr));
            gather_slice(k.data() + base, n, row_stride, dh, static_cast<T*>(nullptr), kt.data());
            gather_slice(v.data() + base, n, row_stride, dh, vs.data(), static_cast<T*>(nullptr));
            T* p = probs.data() + slice * n * n;
            gemm_serial(n, dh, n, qs.data(), dh, kt.data(), n, p, n, false, Band::lower_cols);
            for (std::size_t i = 0; i < n; ++i) {
                const std::size_t len = i + 1;
                T* row = p + i * n;
                const T den = denom[b * n + i];
                for (std::size_t j = 0; j < len; ++j) row[j] /= den;
                softmax_row<T>(std::span<const T>(row, len), 1.0, std::span<T>(row, len));
                std::fill(row + len, row + n, T(0));
            }
            gemm_serial(n, n, dh, p, n, vs.data(), dh, os.data(), dh, false, Band::lower_k);
            for (std::size_t i = 0; i < n; ++i) {
                std::copy(os.data() + i * dh, os.data() + (i + 1) * dh, out.data() + base + i * row_stride);
            }
        }
    }
}

template <typename T>
void attention_backward(const AttentionDims& dims, std::span<const T> q, std::span<const T> k,
                        std::span<const T> v, std::span<const T> denom, std::span<const T> probs,
                        std::span<const T> dout, std::span<T> dq, std::span<T> dk, std::span<T> dv,
                        std::span<T> ddenom) {
    const std::size_t n = dims.seq, heads = dims.heads, dh = dims.head_dim;
    const std::size_t row_stride = heads * dh;
    const std::size_t slices = dims.batch * heads;
    const bool want_denom = !ddenom.empty();
    // Per-head denominator partials, reduced serially below in head order.
    std::vector<T> denom_partial(want_denom ? slices * n : 0, T(0));
#pragma omp parallel
    {
        std::vector<T> qs(n * dh), qt(dh * n), ks(n * dh), kt(dh * n), vt(dh * n), go(n * dh), got(dh * n);
        std::vector<T> gq(n * dh), gkt(dh * n), gvt(dh * n);
        std::vector<T> grad_s(n * n), raw(want_denom ? n * n : 0);
#pragma omp for schedule(static)
        for (std::size_t slice = 0; slice < slices; ++slice) {
            const std::size_t b = slice / heads, h = slice % heads;
            const std::size_t base = b * n * row_stride + h * dh;
            gather_slice(q.data() + base, n, row_stride, dh, qs.data(), qt.data());
            gather_slice(k.data() + base, n, row_stride, dh, ks.data(), kt.data());
            gather_slice(v.data() + base, n, row_stride, dh, static_cast<T*>(nullptr), vt.data());
            gather_slice(dout.data() + base, n, row_stride, dh, go.data(), got.data());
            const T* p = probs.data() + slice * n * n;

            // dL/dP, then dL/d(scaled logits) divided by the row denominator.
            gemm_serial(n, dh, n, go.data(), dh, vt.data(), n, grad_s.data(), n, false, Band::lower_cols);
            if (want_denom) gemm_serial(n, dh, n, qs.data(), dh, kt.data(), n, raw.data(), n, false, Band::lower_cols);
            for (std::size_t i = 0; i < n; ++i) {
                const std::size_t len = i + 1;
                const T* pr = p + i * n;
                T* gr = grad_s.data() + i * n;
                T pdp = 0;
                for (std::size_t j = 0; j < len; ++j) pdp += pr[j] * gr[j];
                const T den = denom[b * n + i];
                for (std::size_t j = 0; j < len; ++j) gr[j] = pr[j] * (gr[j] - pdp);
                if (want_denom) {
                    const T* rr = raw.data() + i * n;
                    T acc = 0;
                    for (std::size_t j = 0; j < len; ++j) acc += gr[j] * (rr[j] / den);
                    denom_partial[slice * n + i] = -acc / den;
                }
                for (std::size_t j = 0; j < len; ++j) gr[j] /= den;
                std::fill(gr + len, gr + n, T(0));
            }
            gemm_serial(n, n, dh, grad_s.data(), n, ks.data(), dh, gq.data(), dh, false, Band::lower_k);
            // dK^T = Q^T G and dV^T = dO^T P keep the long reduction contiguous.
            gemm_serial(dh, n, n, qt.data(), n, grad_s.data(), n, gkt.data(), n, false);
            gemm_serial(dh, n, n, got.data(), n, p, n, gvt.data(), n, false);
            for (std::size_t j = 0; j < n; ++j) {
                const std::size_t dst = base + j * row_stride;
                for (std::size_t d = 0; d < dh; ++d) {
                    dq[dst + d] += gq[j * dh + d];
                    dk[dst + d] += gkt[d * n + j];
                    dv[dst + d] += gvt[d * n + j];
                }
            }
        }
    }
    if (want_denom) {
        for (std::size_t b = 0; b < dims.batch; ++b) {
            for (std::size_t h = 0; h < heads; ++h) {
                const T* part = denom_partial.data() + (b * heads + h) * n;
                for (std::size_t i = 0; i < n; ++i) ddenom[b * n + i] += part[i];
            }
        }
    }
}

namespace reference {

template <typename T>
void gemm(std::size_t m, std::size_t k, std::size_t n, std::span<const T> a, std::span<const T> b, std::span<T> c,
          bool accumulate) {
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            T acc = accumulate ? c[i * n + j] : T(0);
            for (std::size_t p = 0; p < k; ++p) acc += a[i * k + p] * b[p * n + j];
            c[i * n + j] = acc;
        }
    }
}

template <typename T>
void gemm_tn(std::size_t m, std::size_t k, std::size_t n, std::span<const T> a, std::span<const T> b,
             std::span<T> c, bool accumulate) {
    for (std::size_t p = 0; p < k; ++p) {
        for (std::size_t j = 0; j < n; ++j) {
            T acc = accumulate ? c[p * n + j] : T(0);
            for (std::size_t i = 0; i < m; ++i) acc += a[i * k + p] * b[i * n + j];
            c[p * n + j] = acc;
        }
    }
}

template <typename T>
void gemm_nt(std::size_t m, std::size_t k, std::size_t n, std::span<const T> a, std::span<const T> b,
             std::span<T> c, bool accumulate) {
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            T acc = accumulate ? c[i * n + j] : T(0);
            for (std::size_t p = 0; p < k; ++p) acc += a[i * k + p] * b[j * k + p];
            c[i * n + j] = acc;
        }
    }
}

template <typename T>
void attention_forward(const AttentionDims& dims, std::span<const T> q, std::span<const T> k, std::span<const T> v,
                       std::span<const T> denom, std::span<T> out, std::span<T> probs) {
    const std::size_t n = dims.seq, H = dims.heads, dh = dims.head_dim;
    auto at = [&](std::size_t b, std::size_t pos, std::size_t h, std::size_t d) {
        return ((b * n + pos) * H + h) * dh + d;
    };
    std::vector<T> scores(n);
    for (std::size_t b = 0; b < dims.batch; ++b) {
        for (std::size_t h = 0; h < H; ++h) {
            for (std::size_t i = 0; i < n; ++i) {
                for (std::size_t j = 0; j < n; ++j) {
                    if (j > i) {
                        scores[j] = -std::numeric_limits<T>::infinity();
                        continue;
                    }
                    T dot = 0;
                    for (std::size_t d = 0; d < dh; ++d) dot += q[at(b, i, h, d)] * k[at(b, j, h, d)];
                    scores[j] = dot / denom[b * n + i];
                }
                T* pr = probs.data() + ((b * H + h) * n + i) * n;
                T hi = scores[0];
                for (std::size_t j = 1; j <= i; ++j) hi = std::max(hi, scores[j]);
                T total = 0;
                for (std::size_t j = 0; j < n; ++j) {
                    pr[j] = j <= i ? std::exp(scores[j] - hi) : T(0);
                    total += pr[j];
                }
                for (std::size_t j = 0; j < n; ++j) pr[j] /= total;
                for (std::size_t d = 0; d < dh; ++d) {
                    T acc = 0;
                    for (std::size_t j = 0; j < n; ++j) acc += pr[j] * v[at(b, j, h, d)];
                    out[at(b, i, h, d)] = acc;
                }
            }
        }
    }
}

template <typename T>
void attention_backward(const AttentionDims& dims, std::span<const T> q, std::span<const T> k,
                        std::span<const T> v, std::span<const T> denom, std::span<const T> probs,
                        std::span<const T> dout, std::span<T> dq, std::span<T> dk, std::span<T> dv,
                        std::span<T> ddenom) {
    const std::size_t n = dims.seq, H = dims.heads, dh = dims.head_dim;
    auto at = [&](std::size_t b, std::size_t pos, std::size_t h, std::size_t d) {
        return ((b * n + pos) * H + h) * dh + d;
    };
    std::vector<T> dp(n), ds(n);
    for (std::size_t b = 0; b < dims.batch; ++b) {
        for (std::size_t h = 0; h < H; ++h) {
            for (std::size_t i = 0; i < n; ++i) {
                const T* pr = probs.data() + ((b * H + h) * n + i) * n;
                const T den = denom[b * n + i];
                T pdp = 0;
                for (std::size_t j = 0; j <= i; ++j) {
                    T acc = 0;
                    for (std::size_t d = 0; d < dh; ++d) acc += dout[at(b, i, h, d)] * v[at(b, j, h, d)];
                    dp[j] = acc;
                    pdp += pr[j] * acc;
                }
                T dden = 0;
                for (std::size_t j = 0; j <= i; ++j) {
                    ds[j] = pr[j] * (dp[j] - pdp);
                    T raw = 0;
                    for (std::size_t d = 0; d < dh; ++d) raw += q[at(b, i, h, d)] * k[at(b, j, h, d)];
                    dden -= ds[j] * raw / (den * den);
                    for (std::size_t d = 0; d < dh; ++d) {
                        dq[at(b, i, h, d)] += ds[j] / den * k[at(b, j, h, d)];
                        dk[at(b, j, h, d)] += ds[j] / den * q[at(b, i, h, d)];
                        dv[at(b, j, h, d)] += pr[j] * dout[at(b, i, h, d)];
                    }
                }
                if (!ddenom.empty()) ddenom[b * n + i] += dden;
            }
        }
    }
}

}  // namespace reference

#define FOCAL_INSTANTIATE_KERNELS(NS, T)                                                                          \
    template void NS::gemm<T>(std::size_t, std::size_t, std::size_t, std::span<const T>, std::span<const T>,     \
                              std::span<T>, bool);                                                               \
    template void NS::gemm_tn<T>(std::size_t, std::size_t, std::size_t, std::span<const T>, std::span<const T>,  \
                                 std::span<T>, bool);                                                            \
    template void NS::gemm_nt<T>(std::size_t, std::size_t, std::size_t, std::span<const T>, std::span<const T>,  \
                                 std::span<T>, bool);                                                            \
    template void NS::attention_forward<T>(const AttentionDims&, std::span<const T>, std::span<const T>,         \
                                           std::span<const T>, std::span<const T>, std::span<T>, std::span<T>);  \
    template void NS::attention_backward<T>(const AttentionDims&, std::span<const T>, std::span<const T>,        \
                                            std::span<const T>, std::span<const T>, std::span<const T>,          \
                                            std::span<const T>, std::span<T>, std::span<T>, std::span<T>,        \
                                            std::span<T>);

namespace parallel_ns = ::focal::kernels;
namespace reference_ns = ::focal::kernels::reference;
FOCAL_INSTANTIATE_KERNELS(parallel_ns, float)
FOCAL_INSTANTIATE_KERNELS(parallel_ns, double)
FOCAL_INSTANTIATE_KERNELS(reference_ns, float)
FOCAL_INSTANTIATE_KERNELS(reference_ns, double)

template bool softmax_row<float>(std::span<const float>, double, std::span<float>);
template bool softmax_row<double>(std::span<const double>, double, std::span<double>);
template void exp_inplace<float>(std::span<float>);
template void exp_inplace<double>(std::span<double>);

#undef FOCAL_INSTANTIATE_KERNELS

}  // namespace focal::kernels
