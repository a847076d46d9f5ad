#include "focal/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "focal/kernels.hpp"

namespace focal {

namespace {

template <typename T>
using NodePtr = std::shared_ptr<detail::Node<T>>;

// Gradient buffer of a parent, or nullptr when it does not track gradients.
template <typename T>
T* grad_of(const NodePtr<T>& node) {
    if (!node->requires_grad) return nullptr;
    node->ensure_grad();
    return node->grad.data();
}

template <typename T>
void require_rank(const Tensor<T>& x, std::size_t rank, const char* op) {
    if (x.rank() != rank) {
        throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                             shape_str(x.shape()));
    }
}

template <typename T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
    if (a.shape() != b.shape()) {
        throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                             shape_str(b.shape()));
    }
}

}  // namespace

template <typename T>
Tensor<T> matmul(Graph<T>& g, const Tensor<T>& a, const Tensor<T>& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
        throw DimensionError("matmul: cannot multiply " + shape_str(a.shape()) + " by " + shape_str(b.shape()));
    }
    const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    std::vector<T> out(m * n);
    kernels::gemm<T>(m, k, n, a.data(), b.data(), out, false);
    auto pa = a.node(), pb = b.node();
    return g.make({m, n}, std::move(out), {&a, &b}, [pa, pb, m, k, n](detail::Node<T>& self) {
        if (T* da = grad_of(pa)) {
            kernels::gemm_nt<T>(m, n, k, self.grad, pb->value, std::span<T>(da, m * k), true);
        }
        if (T* db = grad_of(pb)) {
            kernels::gemm_tn<T>(m, k, n, pa->value, self.grad, std::span<T>(db, k * n), true);
        }
    });
}

template <typename T>
Tensor<T> matmul_nt(Graph<T>& g, const Tensor<T>& a, const Tensor<T>& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(1)) {
        throw DimensionError("matmul_nt: cannot multiply " + shape_str(a.shape()) + " by transpose of " +
                             shape_str(b.shape()));
    }
    const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(0);
    std::vector<T> out(m * n);
    kernels::gemm_nt<T>(m, k, n, a.data(), b.data(), out, false);
    auto pa = a.node(), pb = b.node();
    return g.make({m, n}, std::move(out), {&a, &b}, [pa, pb, m, k, n](detail::Node<T>& self) {
        if (T* da = grad_of(pa)) {
            kernels::gemm<T>(m, n, k, self.grad, pb->value, std::span<T>(da, m * k), true);
        }
        if (T* db = grad_of(pb)) {
            kernels::gemm_tn<T>(m, n, k, self.grad, pa->value, std::span<T>(db, n * k), true);
        }
    });
}

template <typename T>
Tensor<T> reshape(Graph<T>& g, const Tensor<T>& x, Shape shape) {
    if (shape_numel(shape) != x.numel()) {
        throw DimensionError("reshape: " + shape_str(x.shape()) + " to " + shape_str(shape));
    }
    auto px = x.node();
    std::vector<T> out(x.data().begin(), x.data().end());
    return g.make(std::move(shape), std::move(out), {&x}, [px](detail::Node<T>& self) {
        T* dx = grad_of(px);
        for (std::size_t i = 0; i < self.grad.size(); ++i) dx[i] += self.grad[i];
    });
}

template <typename T>
Tensor<T> add(Graph<T>& g, const Tensor<T>& a, const Tensor<T>& b) {
    require_same_shape(a, b, "add");
    std::vector<T> out(a.numel());
    auto av = a.data(), bv = b.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
    auto pa = a.node(), pb = b.node();
    return g.make(a.shape(), std::move(out), {&a, &b}, [pa, pb](detail::Node<T>& self) {
        for (const auto& p : {pa, pb}) {
            if (T* d = grad_of(p)) {
                for (std::size_t i = 0; i < self.grad.size(); ++i) d[i] += self.grad[i];
            }
        }
    });
}

template <typename T>
Tensor<T> mul(Graph<T>& g, const Tensor<T>& a, const Tensor<T>& b) {
    require_same_shape(a, b, "mul");
    std::vector<T> out(a.numel());
    auto av = a.data(), bv = b.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
    auto pa = a.node(), pb = b.node();
    return g.make(a.shape(), std::move(out), {&a, &b}, [pa, pb](detail::Node<T>& self) {
        if (T* da = grad_of(pa)) {
            for (std::size_t i = 0; i < self.grad.size(); ++i) da[i] += self.grad[i] * pb->value[i];
        }
        if (T* db = grad_of(pb)) {
            for (std::size_t i = 0; i < self.grad.size(); ++i) db[i] += self.grad[i] * pa->value[i];
        }
    });
}

template <typename T>
Tensor<T> scale(Graph<T>& g, const Tensor<T>& x, T factor) {
    std::vector<T> out(x.data().begin(), x.data().end());
    for (T& v : out) v *= factor;
    auto px = x.node();
    return g.make(x.shape(), std::move(out), {&x}, [px, factor](detail::Node<T>& self) {
        T* dx = grad_of(px);
        for (std::size_t i = 0; i < self.grad.size(); ++i) dx[i] += self.grad[i] * factor;
    });
}

template <typename T>
Tensor<T> sum(Graph<T>& g, const Tensor<T>& x) {
    double total = 0;
    for (T v : x.data()) total += v;
    auto px = x.node();
    return g.make({1}, {static_cast<T>(total)}, {&x}, [px](detail::Node<T>& self) {
        T* dx = grad_of(px);
        for (std::size_t i = 0; i < px->value.size(); ++i) dx[i] += self.grad[0];
    });
}

template <typename T>
Tensor<T> mean(Graph<T>& g, const Tensor<T>& x) {
    const std::size_t count = x.numel();
    double total = 0;
    for (T v : x.data()) total += v;
    auto px = x.node();
    return g.make({1}, {static_cast<T>(total / static_cast<double>(count))}, {&x},
                  [px, count](detail::Node<T>& self) {
                      T* dx = grad_of(px);
                      const T share = self.grad[0] / static_cast<T>(count);
                      for (std::size_t i = 0; i < count; ++i) dx[i] += share;
                  });
}

template <typename T>
Tensor<T> softmax_t(Graph<T>& g, const Tensor<T>& z, double t, std::size_t axis) {
    if (!(t > 0.0) || !std::isfinite(t)) throw ParameterError("softmax_t: temperature must be > 0, got " + std::to_string(t));
    const Shape& shape = z.shape();
    if (axis >= shape.size()) throw DimensionError("softmax_t: axis out of range for " + shape_str(shape));
    std::size_t outer = 1, inner = 1;
    for (std::size_t i = 0; i < axis; ++i) outer *= shape[i];
    for (std::size_t i = axis + 1; i < shape.size(); ++i) inner *= shape[i];
    const std::size_t len = shape[axis];

    auto zv = z.data();
    std::vector<T> out(z.numel());
    std::vector<T> row(len), prow(len);
    for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t in = 0; in < inner; ++in) {
            const std::size_t base = o * len * inner + in;
            for (std::size_t j = 0; j < len; ++j) row[j] = zv[base + j * inner];
            if (!kernels::softmax_row<T>(row, t, prow)) {
                throw InvalidMaskError("softmax_t: row has no finite logit");
            }
            for (std::size_t j = 0; j < len; ++j) out[base + j * inner] = prow[j];
        }
    }
    auto pz = z.node();
    auto probs = std::make_shared<std::vector<T>>(out);
    return g.make(shape, std::move(out), {&z}, [pz, probs, outer, inner, len, t](detail::Node<T>& self) {
        T* dz = grad_of(pz);
        const T inv_t = static_cast<T>(1.0 / t);
        const std::vector<T>& p = *probs;
        for (std::size_t o = 0; o < outer; ++o) {
            for (std::size_t in = 0; in < inner; ++in) {
                const std::size_t base = o * len * inner + in;
                T dot = 0;
                for (std::size_t j = 0; j < len; ++j) dot += p[base + j * inner] * self.grad[base + j * inner];
                for (std::size_t j = 0; j < len; ++j) {
                    const std::size_t idx = base + j * inner;
                    dz[idx] += p[idx] * (self.grad[idx] - dot) * inv_t;
                }
            }
        }
    });
}

template <typename T>
Tensor<T> rms_norm(Graph<T>& g, const Tensor<T>& x, const Tensor<T>& gain, double eps) {
    if (!(eps > 0.0)) throw ParameterError("rms_norm: eps must be > 0");
    const std::size_t d = x.shape().back();
    if (gain.rank() != 1 || gain.dim(0) != d) {
        throw DimensionError("rms_norm: gain " + shape_str(gain.shape()) + " does not match input " +
                             shape_str(x.shape()));
    }
    const std::size_t rows = x.numel() / d;
    auto xv = x.data();
    auto gv = gain.data();
    std::vector<T> out(x.numel());
    auto inv_rms = std::make_shared<std::vector<T>>(rows);
#pragma omp parallel for schedule(static)
    for (std::size_t r = 0; r < rows; ++r) {
        const T* xr = xv.data() + r * d;
        T ms = 0;
        for (std::size_t j = 0; j < d; ++j) ms += xr[j] * xr[j];
        ms /= static_cast<T>(d);
        const T inv = T(1) / std::sqrt(ms + static_cast<T>(eps));
        (*inv_rms)[r] = inv;
        T* yr = out.data() + r * d;
        for (std::size_t j = 0; j < d; ++j) yr[j] = xr[j] * inv * gv[j];
    }
    auto px = x.node(), pg = gain.node();
    return g.make(x.shape(), std::move(out), {&x, &gain}, [px, pg, inv_rms, rows, d](detail::Node<T>& self) {
        const T* xv = px->value.data();
        const T* gv = pg->value.data();
        const T* gy = self.grad.data();
        if (T* dx = grad_of(px)) {
#pragma omp parallel for schedule(static)
            for (std::size_t r = 0; r < rows; ++r) {
                const T inv = (*inv_rms)[r];
                const T* xr = xv + r * d;
                const T* gr = gy + r * d;
                T dot = 0;
                for (std::size_t j = 0; j < d; ++j) dot += gr[j] * gv[j] * xr[j];
                const T coef = inv * inv * inv * dot / static_cast<T>(d);
                for (std::size_t j = 0; j < d; ++j) dx[r * d + j] += inv * gv[j] * gr[j] - coef * xr[j];
            }
        }
        if (T* dg = grad_of(pg)) {
            for (std::size_t r = 0; r < rows; ++r) {
                const T inv = (*inv_rms)[r];
                for (std::size_t j = 0; j < d; ++j) dg[j] += gy[r * d + j] * xv[r * d + j] * inv;
            }
        }
    });
}

template <typename T>
Tensor<T> silu(Graph<T>& g, const Tensor<T>& x) {
    auto xv = x.data();
    const std::size_t count = x.numel();
    auto sig = std::make_shared<std::vector<T>>(count);
    T* s = sig->data();
    for (std::size_t i = 0; i < count; ++i) s[i] = -xv[i];
    kernels::exp_inplace<T>(*sig);
    for (std::size_t i = 0; i < count; ++i) s[i] = T(1) / (T(1) + s[i]);
    std::vector<T> out(count);
    for (std::size_t i = 0; i < count; ++i) out[i] = xv[i] * s[i];
    auto px = x.node();
    return g.make(x.shape(), std::move(out), {&x}, [px, sig](detail::Node<T>& self) {
        T* dx = grad_of(px);
        const T* xv = px->value.data();
        const T* s = sig->data();
        for (std::size_t i = 0; i < self.grad.size(); ++i) {
            dx[i] += self.grad[i] * s[i] * (T(1) + xv[i] * (T(1) - s[i]));
        }
    });
}

template <typename T>
Tensor<T> swiglu(Graph<T>& g, const Tensor<T>& x, const Tensor<T>& w_gate, const Tensor<T>& w_up,
                 const Tensor<T>& w_down) {
    if (w_gate.shape() != w_up.shape() || w_down.rank() != 2 || w_gate.rank() != 2 ||
        w_down.dim(0) != w_gate.dim(1)) {
        throw DimensionError("swiglu: inconsistent weights gate " + shape_str(w_gate.shape()) + ", up " +
                             shape_str(w_up.shape()) + ", down " + shape_str(w_down.shape()));
    }
    const Tensor<T> gate = silu(g, matmul(g, x, w_gate));
    const Tensor<T> up = matmul(g, x, w_up);
    return matmul(g, mul(g, gate, up), w_down);
}

template <typename T>
Tensor<T> rope_rotate(Graph<T>& g, const Tensor<T>& x, double theta, std::span<const std::int32_t> positions) {
    if (x.rank() != 3 && x.rank() != 4) {
        throw DimensionError("rope_rotate: expected [n,h,d] or [b,n,h,d], got " + shape_str(x.shape()));
    }
    const Shape& s = x.shape();
    const std::size_t batch = x.rank() == 4 ? s[0] : 1;
    const std::size_t n = s[s.size() - 3], heads = s[s.size() - 2], dh = s.back();
    if (dh % 2 != 0) throw ConfigError("rope_rotate: head dimension must be even, got " + std::to_string(dh));
    if (positions.size() != n) {
        throw DimensionError("rope_rotate: " + std::to_string(positions.size()) + " positions for sequence of " +
                             std::to_string(n));
    }
    if (!(theta > 0.0)) throw ParameterError("rope_rotate: theta must be > 0");
    const std::size_t half = dh / 2;
    auto cos_t = std::make_shared<std::vector<T>>(n * half);
    auto sin_t = std::make_shared<std::vector<T>>(n * half);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t p = 0; p < half; ++p) {
            const double freq = std::pow(theta, -2.0 * static_cast<double>(p) / static_cast<double>(dh));
            const double angle = static_cast<double>(positions[i]) * freq;
            (*cos_t)[i * half + p] = static_cast<T>(std::cos(angle));
            (*sin_t)[i * half + p] = static_cast<T>(std::sin(angle));
        }
    }
    auto xv = x.data();
    std::vector<T> out(x.numel());
    for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t h = 0; h < heads; ++h) {
                const std::size_t base = ((b * n + i) * heads + h) * dh;
                for (std::size_t p = 0; p < half; ++p) {
                    const T c = (*cos_t)[i * half + p], sn = (*sin_t)[i * half + p];
                    const T x0 = xv[base + 2 * p], x1 = xv[base + 2 * p + 1];
                    out[base + 2 * p] = x0 * c - x1 * sn;
                    out[base + 2 * p + 1] = x0 * sn + x1 * c;
                }
            }
        }
    }
    auto px = x.node();
    return g.make(s, std::move(out), {&x}, [px, cos_t, sin_t, batch, n, heads, dh, half](detail::Node<T>& self) {
        T* dx = grad_of(px);
        for (std::size_t b = 0; b < batch; ++b) {
            for (std::size_t i = 0; i < n; ++i) {
                for (std::size_t h = 0; h < heads; ++h) {
                    const std::size_t base = ((b * n + i) * heads + h) * dh;
                    for (std::size_t p = 0; p < half; ++p) {
                        const T c = (*cos_t)[i * half + p], sn = (*sin_t)[i * half + p];
                        const T g0 = self.grad[base + 2 * p], g1 = self.grad[base + 2 * p + 1];
                        dx[base + 2 * p] += g0 * c + g1 * sn;
                        dx[base + 2 * p + 1] += -g0 * sn + g1 * c;
                    }
                }
            }
        }
    });
}

template <typename T>
Tensor<T> cross_entropy(Graph<T>& g, const Tensor<T>& logits, std::span<const std::int32_t> targets,
                        std::int32_t ignore) {
    require_rank(logits, 2, "cross_entropy");
    const std::size_t n = logits.dim(0), vocab = logits.dim(1);
    if (targets.size() != n) {
        throw DimensionError("cross_entropy: " + std::to_string(targets.size()) + " targets for logits " +
                             shape_str(logits.shape()));
    }
    std::size_t count = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const std::int32_t t = targets[i];
        if (t == ignore) continue;
        if (t < 0 || static_cast<std::size_t>(t) >= vocab) {
            throw DataError("cross_entropy: target " + std::to_string(t) + " outside [0, " + std::to_string(vocab) +
                            ")");
        }
        ++count;
    }
    auto lv = logits.data();
    auto probs = std::make_shared<std::vector<T>>(n * vocab, T(0));
    std::vector<double> row_loss(n, 0.0);
#pragma omp parallel for schedule(static)
    for (std::size_t i = 0; i < n; ++i) {
        if (targets[i] == ignore) continue;
        const T* zr = lv.data() + i * vocab;
        T* pr = probs->data() + i * vocab;
        kernels::softmax_row<T>(std::span<const T>(zr, vocab), 1.0, std::span<T>(pr, vocab));
        T hi = zr[0];
        for (std::size_t j = 1; j < vocab; ++j) hi = std::max(hi, zr[j]);
        double total = 0;
        for (std::size_t j = 0; j < vocab; ++j) total += std::exp(static_cast<double>(zr[j] - hi));
        row_loss[i] = std::log(total) + static_cast<double>(hi) - static_cast<double>(zr[targets[i]]);
    }
    double loss = 0;
    for (double l : row_loss) loss += l;
    if (count > 0) loss /= static_cast<double>(count);
    std::vector<std::int32_t> tgt(targets.begin(), targets.end());
    auto pl = logits.node();
    return g.make({1}, {static_cast<T>(loss)}, {&logits},
                  [pl, probs, tgt = std::move(tgt), n, vocab, count, ignore](detail::Node<T>& self) {
                      if (count == 0) return;
                      T* dz = grad_of(pl);
                      const T share = self.grad[0] / static_cast<T>(count);
                      for (std::size_t i = 0; i < n; ++i) {
                          if (tgt[i] == ignore) continue;
                          const T* pr = probs->data() + i * vocab;
                          T* dr = dz + i * vocab;
                          for (std::size_t j = 0; j < vocab; ++j) dr[j] += share * pr[j];
                          dr[tgt[i]] -= share;
                      }
                  });
}

template <typename T>
Tensor<T> clip_st(Graph<T>& g, const Tensor<T>& x, double lo, double hi, ClipGradient mode) {
    if (!(lo < hi)) throw ConfigError("clip_st: lower bound " + std::to_string(lo) + " not below upper " + std::to_string(hi));
    auto xv = x.data();
    std::vector<T> out(x.numel());
    const T tlo = static_cast<T>(lo), thi = static_cast<T>(hi);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::min(std::max(xv[i], tlo), thi);
    auto px = x.node();
    return g.make(x.shape(), std::move(out), {&x}, [px, tlo, thi, mode](detail::Node<T>& self) {
        T* dx = grad_of(px);
        for (std::size_t i = 0; i < self.grad.size(); ++i) {
            const T v = px->value[i];
            const bool inside = v >= tlo && v <= thi;
            if (mode == ClipGradient::straight_through || inside) dx[i] += self.grad[i];
        }
    });
}

template <typename T>
Tensor<T> embedding(Graph<T>& g, const Tensor<T>& table, std::span<const std::int32_t> ids) {
    require_rank(table, 2, "embedding");
    const std::size_t vocab = table.dim(0), d = table.dim(1);
    if (ids.empty()) throw DimensionError("embedding: empty id list");
    auto tv = table.data();
    std::vector<T> out(ids.size() * d);
    for (std::size_t i = 0; i < ids.size(); ++i) {
        const std::int32_t id = ids[i];
        if (id < 0 || static_cast<std::size_t>(id) >= vocab) {
            throw DataError("embedding: token id " + std::to_string(id) + " outside [0, " + std::to_string(vocab) + ")");
        }
        std::copy_n(tv.data() + static_cast<std::size_t>(id) * d, d, out.data() + i * d);
    }
    std::vector<std::int32_t> idv(ids.begin(), ids.end());
    auto pt = table.node();
    return g.make({ids.size(), d}, std::move(out), {&table}, [pt, idv = std::move(idv), d](detail::Node<T>& self) {
        T* dt = grad_of(pt);
        for (std::size_t i = 0; i < idv.size(); ++i) {
            T* dst = dt + static_cast<std::size_t>(idv[i]) * d;
            const T* src = self.grad.data() + i * d;
            for (std::size_t j = 0; j < d; ++j) dst[j] += src[j];
        }
    });
}

template <typename T>
Tensor<T> sequence_mean(Graph<T>& g, const Tensor<T>& x, bool causal_prefix) {
    require_rank(x, 2, "sequence_mean");
    const std::size_t batch = x.dim(0), n = x.dim(1);
    auto xv = x.data();
    std::vector<T> out(batch * n);
    for (std::size_t b = 0; b < batch; ++b) {
        T running = 0;
        for (std::size_t i = 0; i < n; ++i) {
            running += xv[b * n + i];
            if (causal_prefix) out[b * n + i] = running / static_cast<T>(i + 1);
        }
        if (!causal_prefix) std::fill_n(out.begin() + static_cast<std::ptrdiff_t>(b * n), n, running / static_cast<T>(n));
    }
    auto px = x.node();
    return g.make(x.shape(), std::move(out), {&x}, [px, batch, n, causal_prefix](detail::Node<T>& self) {
        T* dx = grad_of(px);
        for (std::size_t b = 0; b < batch; ++b) {
            const T* gr = self.grad.data() + b * n;
            if (causal_prefix) {
                T suffix = 0;
                for (std::size_t i = n; i-- > 0;) {
                    suffix += gr[i] / static_cast<T>(i + 1);
                    dx[b * n + i] += suffix;
                }
            } else {
                T total = 0;
                for (std::size_t i = 0; i < n; ++i) total += gr[i];
                const T share = total / static_cast<T>(n);
                for (std::size_t i = 0; i < n; ++i) dx[b * n + i] += share;
            }
        }
    });
}

template <typename T>
Tensor<T> causal_attention(Graph<T>& g, const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v,
                           const Tensor<T>& denom, std::shared_ptr<const std::vector<T>>* probs_out) {
    require_rank(q, 4, "causal_attention");
    require_same_shape(q, k, "causal_attention");
    require_same_shape(q, v, "causal_attention");
    const kernels::AttentionDims dims{q.dim(0), q.dim(1), q.dim(2), q.dim(3)};
    if (denom.shape() != Shape{dims.batch, dims.seq}) {
        throw DimensionError("causal_attention: denominators " + shape_str(denom.shape()) + " for activations " +
                             shape_str(q.shape()));
    }
    for (T d : denom.data()) {
        if (!(d > T(0)) || !std::isfinite(d)) throw ParameterError("causal_attention: softmax denominator must be > 0");
    }
    auto probs = std::make_shared<std::vector<T>>(dims.probabilities());
    std::vector<T> out(dims.activations());
    kernels::attention_forward<T>(dims, q.data(), k.data(), v.data(), denom.data(), out, *probs);
    if (probs_out != nullptr) *probs_out = probs;
    auto pq = q.node(), pk = k.node(), pv = v.node(), pd = denom.node();
    return g.make(q.shape(), std::move(out), {&q, &k, &v, &denom},
                  [pq, pk, pv, pd, probs, dims](detail::Node<T>& self) {
                      const std::size_t count = dims.activations();
                      std::vector<T> spare_q, spare_k, spare_v;
                      auto sink = [count](const NodePtr<T>& p, std::vector<T>& spare) -> std::span<T> {
                          if (T* d = grad_of(p)) return {d, count};
                          spare.assign(count, T(0));
                          return spare;
                      };
                      std::span<T> dq = sink(pq, spare_q);
                      std::span<T> dk = sink(pk, spare_k);
                      std::span<T> dv = sink(pv, spare_v);
                      std::span<T> dden;
                      if (T* d = grad_of(pd)) dden = {d, dims.batch * dims.seq};
                      kernels::attention_backward<T>(dims, pq->value, pk->value, pv->value, pd->value, *probs,
                                                     self.grad, dq, dk, dv, dden);
                  });
}

#define FOCAL_INSTANTIATE_OPS(T)                                                                                  \
    template Tensor<T> matmul(Graph<T>&, const Tensor<T>&, const Tensor<T>&);                                    \
    template Tensor<T> matmul_nt(Graph<T>&, const Tensor<T>&, const Tensor<T>&);                                 \
    template Tensor<T> reshape(Graph<T>&, const Tensor<T>&, Shape);                                              \
    template Tensor<T> add(Graph<T>&, const Tensor<T>&, const Tensor<T>&);                                       \
    template Tensor<T> mul(Graph<T>&, const Tensor<T>&, const Tensor<T>&);                                       \
    template Tensor<T> scale(Graph<T>&, const Tensor<T>&, T);                                                    \
    template Tensor<T> sum(Graph<T>&, const Tensor<T>&);                                                         \
    template Tensor<T> mean(Graph<T>&, const Tensor<T>&);                                                        \
    template Tensor<T> softmax_t(Graph<T>&, const Tensor<T>&, double, std::size_t);                              \
    template Tensor<T> rms_norm(Graph<T>&, const Tensor<T>&, const Tensor<T>&, double);                          \
    template Tensor<T> silu(Graph<T>&, const Tensor<T>&);                                                        \
    template Tensor<T> swiglu(Graph<T>&, const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, const Tensor<T>&); \
    template Tensor<T> rope_rotate(Graph<T>&, const Tensor<T>&, double, std::span<const std::int32_t>);          \
    template Tensor<T> cross_entropy(Graph<T>&, const Tensor<T>&, std::span<const std::int32_t>, std::int32_t);  \
    template Tensor<T> clip_st(Graph<T>&, const Tensor<T>&, double, double, ClipGradient);                      \
    template Tensor<T> embedding(Graph<T>&, const Tensor<T>&, std::span<const std::int32_t>);                    \
    template Tensor<T> sequence_mean(Graph<T>&, const Tensor<T>&, bool);                                         \
    template Tensor<T> causal_attention(Graph<T>&, const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,         \
                                        const Tensor<T>&, std::shared_ptr<const std::vector<T>>*);

FOCAL_INSTANTIATE_OPS(float)
FOCAL_INSTANTIATE_OPS(double)

#undef FOCAL_INSTANTIATE_OPS

}  // namespace focal
