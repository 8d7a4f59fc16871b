#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <vector>

#include "loralab/kernels.hpp"
#include "loralab/rng.hpp"

using loralab::Rng;
namespace k = loralab::kernels;

namespace {

std::vector<double> random_vec(std::size_t n, Rng& rng) {
    std::vector<double> v(n);
    for (auto& x : v) x = rng.gaussian(0.0, 1.0);
    return v;
}

// Plain triple loop, the hand oracle for both kernel paths.
std::vector<double> naive_nn(std::size_t p, std::size_t q, std::size_t s,
                             const std::vector<double>& a,
                             const std::vector<double>& b) {
    std::vector<double> c(p * s, 0.0);
    for (std::size_t i = 0; i < p; ++i) {
        for (std::size_t j = 0; j < s; ++j) {
            double acc = 0.0;
            for (std::size_t t = 0; t < q; ++t) acc += a[i * q + t] * b[t * s + j];
            c[i * s + j] = acc;
        }
    }
    return c;
}

}  // namespace

TEST_CASE("parallel gemm paths match the serial reference bitwise") {
    Rng rng(11);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t p = 1 + rng.below(65);
        const std::size_t q = 1 + rng.below(65);
        const std::size_t s = 1 + rng.below(65);
        const auto a = random_vec(p * q, rng);
        const auto b_nn = random_vec(q * s, rng);
        const auto b_nt = random_vec(s * q, rng);
        const auto b_tn = random_vec(p * s, rng);

        std::vector<double> c0(p * s), c1(p * s);
        k::serial::gemm_nn(p, q, s, a.data(), b_nn.data(), c0.data(), false);
        k::gemm_nn(p, q, s, a.data(), b_nn.data(), c1.data(), false);
        CHECK(c0 == c1);

        std::vector<double> d0(p * s), d1(p * s);
        k::serial::gemm_nt(p, q, s, a.data(), b_nt.data(), d0.data(), false);
        k::gemm_nt(p, q, s, a.data(), b_nt.data(), d1.data(), false);
        CHECK(d0 == d1);

        std::vector<double> e0(q * s, 0.5), e1(q * s, 0.5);
        k::serial::gemm_tn(p, q, s, a.data(), b_tn.data(), e0.data(), true);
        k::gemm_tn(p, q, s, a.data(), b_tn.data(), e1.data(), true);
        CHECK(e0 == e1);
    }
}

TEST_CASE("gemm_nn matches the triple-loop oracle") {
    Rng rng(5);
    const std::size_t p = 7, q = 13, s = 9;
    const auto a = random_vec(p * q, rng);
    const auto b = random_vec(q * s, rng);
    const auto want = naive_nn(p, q, s, a, b);
    std::vector<double> got(p * s);
    k::gemm_nn(p, q, s, a.data(), b.data(), got.data(), false);
    for (std::size_t i = 0; i < want.size(); ++i) {
        CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-12));
    }
}

TEST_CASE("gemm_nt and gemm_tn agree with transposed nn oracles") {
    Rng rng(6);
    const std::size_t p = 6, q = 11, s = 8;
    const auto a = random_vec(p * q, rng);
    const auto b = random_vec(s * q, rng);
    std::vector<double> bt(q * s);
    for (std::size_t i = 0; i < s; ++i) {
        for (std::size_t j = 0; j < q; ++j) bt[j * s + i] = b[i * q + j];
    }
    const auto want_nt = naive_nn(p, q, s, a, bt);
    std::vector<double> got_nt(p * s);
    k::gemm_nt(p, q, s, a.data(), b.data(), got_nt.data(), false);
    for (std::size_t i = 0; i < want_nt.size(); ++i) {
        CHECK(got_nt[i] == doctest::Approx(want_nt[i]).epsilon(1e-12));
    }

    const auto g = random_vec(p * s, rng);
    std::vector<double> at(q * p);
    for (std::size_t i = 0; i < p; ++i) {
        for (std::size_t j = 0; j < q; ++j) at[j * p + i] = a[i * q + j];
    }
    const auto want_tn = naive_nn(q, p, s, at, g);
    std::vector<double> got_tn(q * s);
    k::gemm_tn(p, q, s, a.data(), g.data(), got_tn.data(), false);
    for (std::size_t i = 0; i < want_tn.size(); ++i) {
        CHECK(got_tn[i] == doctest::Approx(want_tn[i]).epsilon(1e-12));
    }
}

TEST_CASE("accumulate flag adds on top of existing values") {
    Rng rng(7);
    const std::size_t n = 5;
    const auto a = random_vec(n * n, rng), b = random_vec(n * n, rng);
    std::vector<double> base(n * n, 1.0), once(n * n);
    k::gemm_nn(n, n, n, a.data(), b.data(), once.data(), false);
    k::gemm_nn(n, n, n, a.data(), b.data(), base.data(), true);
    for (std::size_t i = 0; i < base.size(); ++i) {
        CHECK(base[i] == doctest::Approx(1.0 + once[i]));
    }
}

TEST_CASE("row kernels match serial bitwise and keep their contracts") {
    Rng rng(13);
    const std::size_t rows = 37, cols = 29;
    const auto x = random_vec(rows * cols, rng);
    const auto gain = random_vec(cols, rng);
    const auto bias = random_vec(cols, rng);

    std::vector<double> y0(rows * cols), y1(rows * cols);
    std::vector<double> m0(rows), m1(rows), i0(rows), i1(rows);
    k::serial::layer_norm_forward(rows, cols, x.data(), gain.data(), bias.data(),
                                  1e-5, y0.data(), m0.data(), i0.data());
    k::layer_norm_forward(rows, cols, x.data(), gain.data(), bias.data(), 1e-5,
                          y1.data(), m1.data(), i1.data());
    CHECK(y0 == y1);
    CHECK(m0 == m1);
    CHECK(i0 == i1);

    const std::size_t t = 33;
    const auto scores = random_vec(t * t, rng);
    std::vector<double> p0(t * t), p1(t * t);
    k::serial::causal_softmax_forward(t, scores.data(), p0.data());
    k::causal_softmax_forward(t, scores.data(), p1.data());
    CHECK(p0 == p1);
    for (std::size_t r = 0; r < t; ++r) {
        double sum = 0.0;
        for (std::size_t c = 0; c <= r; ++c) sum += p0[r * t + c];
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
        for (std::size_t c = r + 1; c < t; ++c) CHECK(p0[r * t + c] == 0.0);
    }

    std::vector<double> l0(rows * cols), l1(rows * cols);
    k::serial::log_softmax_forward(rows, cols, x.data(), l0.data());
    k::log_softmax_forward(rows, cols, x.data(), l1.data());
    CHECK(l0 == l1);
    for (std::size_t r = 0; r < rows; ++r) {
        double sum = 0.0;
        for (std::size_t c = 0; c < cols; ++c) sum += std::exp(l0[r * cols + c]);
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
    }
}
