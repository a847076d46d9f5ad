// Parallel kernels against their serial reference loops.
#include <random>
#include <vector>

#include <benchmark/benchmark.h>

#include "focal/kernels.hpp"

namespace {

using focal::kernels::AttentionDims;

std::vector<float> random_vector(std::size_t n, unsigned seed) {
    std::mt19937 rng(seed);
    std::normal_distribution<float> dist(0.0f, 1.0f);
    std::vector<float> v(n);
    for (float& x : v) x = dist(rng);
    return v;
}

template <bool Reference>
void BM_Gemm(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    const auto a = random_vector(n * n, 1), b = random_vector(n * n, 2);
    std::vector<float> c(n * n);
    for (auto _ : state) {
        if constexpr (Reference) {
            focal::kernels::reference::gemm<float>(n, n, n, a, b, c, false);
        } else {
            focal::kernels::gemm<float>(n, n, n, a, b, c, false);
        }
        benchmark::DoNotOptimize(c.data());
    }
    state.counters["GFLOPS"] = benchmark::Counter(2.0 * static_cast<double>(n * n * n),
                                                  benchmark::Counter::kIsIterationInvariantRate,
                                                  benchmark::Counter::kIs1000);
}

AttentionDims attention_dims(std::size_t seq) { return {4, seq, 4, 16}; }

template <bool Reference>
void BM_AttentionForward(benchmark::State& state) {
    const AttentionDims d = attention_dims(static_cast<std::size_t>(state.range(0)));
    const auto q = random_vector(d.activations(), 1), k = random_vector(d.activations(), 2),
               v = random_vector(d.activations(), 3);
    const std::vector<float> denom(d.batch * d.seq, 4.0f);
    std::vector<float> out(d.activations()), probs(d.probabilities());
    for (auto _ : state) {
        if constexpr (Reference) {
            focal::kernels::reference::attention_forward<float>(d, q, k, v, denom, out, probs);
        } else {
            focal::kernels::attention_forward<float>(d, q, k, v, denom, out, probs);
        }
        benchmark::DoNotOptimize(out.data());
    }
}

template <bool Reference>
void BM_AttentionBackward(benchmark::State& state) {
    const AttentionDims d = attention_dims(static_cast<std::size_t>(state.range(0)));
    const auto q = random_vector(d.activations(), 1), k = random_vector(d.activations(), 2),
               v = random_vector(d.activations(), 3), dout = random_vector(d.activations(), 4);
    const std::vector<float> denom(d.batch * d.seq, 4.0f);
    std::vector<float> out(d.activations()), probs(d.probabilities());
    focal::kernels::reference::attention_forward<float>(d, q, k, v, denom, out, probs);
    std::vector<float> dq(d.activations()), dk(d.activations()), dv(d.activations()), dden(d.batch * d.seq);
    for (auto _ : state) {
        if constexpr (Reference) {
            focal::kernels::reference::attention_backward<float>(d, q, k, v, denom, probs, dout, dq, dk, dv, dden);
        } else {
            focal::kernels::attention_backward<float>(d, q, k, v, denom, probs, dout, dq, dk, dv, dden);
        }
        benchmark::DoNotOptimize(dq.data());
    }
}

}  // namespace

BENCHMARK(BM_Gemm<false>)->Name("gemm/parallel")->Arg(64)->Arg(256)->Arg(512);
BENCHMARK(BM_Gemm<true>)->Name("gemm/reference")->Arg(64)->Arg(256)->Arg(512);
BENCHMARK(BM_AttentionForward<false>)->Name("attention_forward/parallel")->Arg(128)->Arg(256);
BENCHMARK(BM_AttentionForward<true>)->Name("attention_forward/reference")->Arg(128)->Arg(256);
BENCHMARK(BM_AttentionBackward<false>)->Name("attention_backward/parallel")->Arg(128)->Arg(256);
BENCHMARK(BM_AttentionBackward<true>)->Name("attention_backward/reference")->Arg(128)->Arg(256);

BENCHMARK_MAIN();
