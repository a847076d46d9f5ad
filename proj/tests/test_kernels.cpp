#include <omp.h>

#include <cmath>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "focal/kernels.hpp"
#include "test_util.hpp"

using namespace focal;
namespace k = focal::kernels;

namespace {

template <typename T>
std::vector<T> randv(std::size_t n, std::mt19937_64& rng) {
    const auto v = focal::testing::normal_values(n, rng);
    return {v.begin(), v.end()};
}

template <typename T>
void expect_close(const std::vector<T>& a, const std::vector<T>& b, double tol) {
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        ASSERT_NEAR(static_cast<double>(a[i]), static_cast<double>(b[i]),
                    tol * std::max(1.0, std::abs(static_cast<double>(b[i]))))
            << "index " << i;
    }
}

struct Dims {
    std::size_t m, k, n;
};

const std::vector<Dims> kGemmDims{{1, 1, 1}, {7, 5, 3}, {6, 32, 32}, {13, 17, 49}, {64, 16, 256}, {100, 70, 33}};

}  // namespace

TEST(Kernels, GemmVariantsMatchReference) {
    std::mt19937_64 rng(1);
    for (const Dims& d : kGemmDims) {
        for (bool acc : {false, true}) {
            const auto a = randv<double>(d.m * d.k, rng), b = randv<double>(d.k * d.n, rng);
            auto c = randv<double>(d.m * d.n, rng);
            auto ref = c;
            k::gemm<double>(d.m, d.k, d.n, a, b, c, acc);
            k::reference::gemm<double>(d.m, d.k, d.n, a, b, ref, acc);
            expect_close(c, ref, 1e-12);

            const auto at = randv<double>(d.m * d.k, rng), bm = randv<double>(d.m * d.n, rng);
            std::vector<double> ctn(d.k * d.n, 0.5), rtn = ctn;
            k::gemm_tn<double>(d.m, d.k, d.n, at, bm, ctn, acc);
            k::reference::gemm_tn<double>(d.m, d.k, d.n, at, bm, rtn, acc);
            expect_close(ctn, rtn, 1e-12);

            const auto bn = randv<double>(d.n * d.k, rng);
            std::vector<double> cnt(d.m * d.n, -0.25), rnt = cnt;
            k::gemm_nt<double>(d.m, d.k, d.n, a, bn, cnt, acc);
            k::reference::gemm_nt<double>(d.m, d.k, d.n, a, bn, rnt, acc);
            expect_close(cnt, rnt, 1e-12);
        }
    }
}

TEST(Kernels, FloatGemmMatchesReference) {
    std::mt19937_64 rng(2);
    const Dims d{37, 64, 80};
    const auto a = randv<float>(d.m * d.k, rng), b = randv<float>(d.k * d.n, rng);
    std::vector<float> c(d.m * d.n), ref(d.m * d.n);
    k::gemm<float>(d.m, d.k, d.n, a, b, c, false);
    k::reference::gemm<float>(d.m, d.k, d.n, a, b, ref, false);
    expect_close(c, ref, 1e-5);
}

namespace {

template <typename T>
struct AttentionCase {
    k::AttentionDims dims;
    std::vector<T> q, kk, v, denom, dout;
};

template <typename T>
AttentionCase<T> attention_case(const k::AttentionDims& dims, std::mt19937_64& rng) {
    AttentionCase<T> c{dims, randv<T>(dims.activations(), rng), randv<T>(dims.activations(), rng),
                       randv<T>(dims.activations(), rng), {}, randv<T>(dims.activations(), rng)};
    for (std::size_t i = 0; i < dims.batch * dims.seq; ++i) {
        c.denom.push_back(static_cast<T>(focal::testing::uniform_real(rng, 0.5, 6.0)));
    }
    return c;
}

const std::vector<k::AttentionDims> kAttentionDims{{1, 1, 1, 2}, {2, 7, 3, 4}, {1, 33, 2, 16}, {3, 64, 4, 16}};

}  // namespace

TEST(Kernels, AttentionForwardAndBackwardMatchReference) {
    std::mt19937_64 rng(3);
    for (const auto& dims : kAttentionDims) {
        const auto c = attention_case<double>(dims, rng);
        std::vector<double> out(dims.activations()), probs(dims.probabilities());
        std::vector<double> rout(dims.activations()), rprobs(dims.probabilities());
        k::attention_forward<double>(dims, c.q, c.kk, c.v, c.denom, out, probs);
        k::reference::attention_forward<double>(dims, c.q, c.kk, c.v, c.denom, rout, rprobs);
        expect_close(out, rout, 1e-12);
        expect_close(probs, rprobs, 1e-12);

        const std::size_t n = dims.activations();
        std::vector<double> dq(n, 0.1), dk(n, 0.2), dv(n, 0.3), dd(dims.batch * dims.seq, 0.4);
        auto rq = dq, rk = dk, rv = dv, rd = dd;
        k::attention_backward<double>(dims, c.q, c.kk, c.v, c.denom, probs, c.dout, dq, dk, dv, dd);
        k::reference::attention_backward<double>(dims, c.q, c.kk, c.v, c.denom, rprobs, c.dout, rq, rk, rv, rd);
        expect_close(dq, rq, 1e-11);
        expect_close(dk, rk, 1e-11);
        expect_close(dv, rv, 1e-11);
        expect_close(dd, rd, 1e-11);
    }
}

TEST(Kernels, FloatAttentionMatchesReference) {
    std::mt19937_64 rng(4);
    const k::AttentionDims dims{2, 96, 4, 16};
    const auto c = attention_case<float>(dims, rng);
    std::vector<float> out(dims.activations()), probs(dims.probabilities());
    std::vector<float> rout(dims.activations()), rprobs(dims.probabilities());
    k::attention_forward<float>(dims, c.q, c.kk, c.v, c.denom, out, probs);
    k::reference::attention_forward<float>(dims, c.q, c.kk, c.v, c.denom, rout, rprobs);
    expect_close(out, rout, 2e-5);
    expect_close(probs, rprobs, 2e-5);
}

TEST(Kernels, ResultsIndependentOfThreadCount) {
    std::mt19937_64 rng(5);
    const k::AttentionDims dims{3, 50, 4, 8};
    const auto c = attention_case<float>(dims, rng);
    const auto a = randv<float>(77 * 45, rng), b = randv<float>(45 * 61, rng);
    auto run = [&](int threads) {
        omp_set_num_threads(threads);
        std::vector<float> out(dims.activations()), probs(dims.probabilities()), gemm_out(77 * 61);
        std::vector<float> dq(dims.activations()), dk(dims.activations()), dv(dims.activations()),
            dd(dims.batch * dims.seq);
        k::attention_forward<float>(dims, c.q, c.kk, c.v, c.denom, out, probs);
        k::attention_backward<float>(dims, c.q, c.kk, c.v, c.denom, probs, c.dout, dq, dk, dv, dd);
        k::gemm<float>(77, 45, 61, a, b, gemm_out, false);
        out.insert(out.end(), dq.begin(), dq.end());
        out.insert(out.end(), dk.begin(), dk.end());
        out.insert(out.end(), dd.begin(), dd.end());
        out.insert(out.end(), gemm_out.begin(), gemm_out.end());
        return out;
    };
    const auto one = run(1);
    const auto four = run(4);
    omp_set_num_threads(omp_get_num_procs());
    EXPECT_EQ(one, four);
}

TEST(Kernels, FloatExpIsAccurate) {
    std::vector<float> xs;
    for (float x = -90.0f; x <= 88.0f; x += 0.0137f) xs.push_back(x);
    std::vector<float> ys = xs;
    k::exp_inplace<float>(ys);
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const double want = std::exp(static_cast<double>(xs[i]));
        if (want < 1e-37) {
            // Results near the bottom of the normal range may flush to zero.
            EXPECT_GE(ys[i], 0.0f);
            EXPECT_LE(ys[i], 1e-37f) << "x=" << xs[i];
            continue;
        }
        EXPECT_LE(std::abs(ys[i] - want) / want, 2e-7) << "x=" << xs[i];
    }
}

TEST(Kernels, SoftmaxRowHandlesMaskAndTemperature) {
    const std::vector<double> z{1.0, -INFINITY, 3.0};
    std::vector<double> p(3);
    ASSERT_TRUE(k::softmax_row<double>(z, 2.0, p));
    EXPECT_EQ(p[1], 0.0);
    EXPECT_NEAR(p[2] / p[0], std::exp(1.0), 1e-12);
    const std::vector<double> masked{-INFINITY, -INFINITY};
    std::vector<double> q(2);
    EXPECT_FALSE(k::softmax_row<double>(masked, 1.0, q));
}
