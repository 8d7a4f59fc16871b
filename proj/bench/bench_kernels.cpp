// Compares the OpenMP kernels against the serial reference at training-like
// shapes. Run with --benchmark_min_time=0.2s for quick numbers.

#include <benchmark/benchmark.h>

#include <vector>

#include "loralab/kernels.hpp"
#include "loralab/rng.hpp"

namespace {

using loralab::Rng;
namespace k = loralab::kernels;

std::vector<double> random_vec(std::size_t n, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<double> v(n);
    for (auto& x : v) x = rng.gaussian(0.0, 1.0);
    return v;
}

void bench_gemm_nn_serial(benchmark::State& state) {
    const std::size_t n = static_cast<std::size_t>(state.range(0));
    const auto a = random_vec(n * n, 1), b = random_vec(n * n, 2);
    std::vector<double> c(n * n);
    for (auto _ : state) {
        k::serial::gemm_nn(n, n, n, a.data(), b.data(), c.data(), false);
        benchmark::DoNotOptimize(c.data());
    }
    state.SetItemsProcessed(state.iterations() * 2 * n * n * n);
}

void bench_gemm_nn_omp(benchmark::State& state) {
    const std::size_t n = static_cast<std::size_t>(state.range(0));
    const auto a = random_vec(n * n, 1), b = random_vec(n * n, 2);
    std::vector<double> c(n * n);
    for (auto _ : state) {
        k::gemm_nn(n, n, n, a.data(), b.data(), c.data(), false);
        benchmark::DoNotOptimize(c.data());
    }
    state.SetItemsProcessed(state.iterations() * 2 * n * n * n);
}

void bench_gemm_nt_serial(benchmark::State& state) {
    const std::size_t n = static_cast<std::size_t>(state.range(0));
    const auto a = random_vec(n * n, 1), b = random_vec(n * n, 2);
    std::vector<double> c(n * n);
    for (auto _ : state) {
        k::serial::gemm_nt(n, n, n, a.data(), b.data(), c.data(), false);
        benchmark::DoNotOptimize(c.data());
    }
    state.SetItemsProcessed(state.iterations() * 2 * n * n * n);
}

void bench_gemm_nt_omp(benchmark::State& state) {
    const std::size_t n = static_cast<std::size_t>(state.range(0));
    const auto a = random_vec(n * n, 1), b = random_vec(n * n, 2);
    std::vector<double> c(n * n);
    for (auto _ : state) {
        k::gemm_nt(n, n, n, a.data(), b.data(), c.data(), false);
        benchmark::DoNotOptimize(c.data());
    }
    state.SetItemsProcessed(state.iterations() * 2 * n * n * n);
}

void bench_causal_softmax_serial(benchmark::State& state) {
    const std::size_t t = static_cast<std::size_t>(state.range(0));
    const auto s = random_vec(t * t, 3);
    std::vector<double> p(t * t);
    for (auto _ : state) {
        k::serial::causal_softmax_forward(t, s.data(), p.data());
        benchmark::DoNotOptimize(p.data());
    }
}

void bench_causal_softmax_omp(benchmark::State& state) {
    const std::size_t t = static_cast<std::size_t>(state.range(0));
    const auto s = random_vec(t * t, 3);
    std::vector<double> p(t * t);
    for (auto _ : state) {
        k::causal_softmax_forward(t, s.data(), p.data());
        benchmark::DoNotOptimize(p.data());
    }
}

void bench_layer_norm_serial(benchmark::State& state) {
    const std::size_t rows = static_cast<std::size_t>(state.range(0));
    const std::size_t cols = 64;
    const auto x = random_vec(rows * cols, 4);
    const auto g = random_vec(cols, 5), b = random_vec(cols, 6);
    std::vector<double> y(rows * cols), mean(rows), inv(rows);
    for (auto _ : state) {
        k::serial::layer_norm_forward(rows, cols, x.data(), g.data(), b.data(),
                                      1e-5, y.data(), mean.data(), inv.data());
        benchmark::DoNotOptimize(y.data());
    }
}

void bench_layer_norm_omp(benchmark::State& state) {
    const std::size_t rows = static_cast<std::size_t>(state.range(0));
    const std::size_t cols = 64;
    const auto x = random_vec(rows * cols, 4);
    const auto g = random_vec(cols, 5), b = random_vec(cols, 6);
    std::vector<double> y(rows * cols), mean(rows), inv(rows);
    for (auto _ : state) {
        k::layer_norm_forward(rows, cols, x.data(), g.data(), b.data(), 1e-5,
                              y.data(), mean.data(), inv.data());
        benchmark::DoNotOptimize(y.data());
    }
}

}  // namespace

BENCHMARK(bench_gemm_nn_serial)->Arg(64)->Arg(128)->Arg(256);
BENCHMARK(bench_gemm_nn_omp)->Arg(64)->Arg(128)->Arg(256);
BENCHMARK(bench_gemm_nt_serial)->Arg(64)->Arg(128)->Arg(256);
BENCHMARK(bench_gemm_nt_omp)->Arg(64)->Arg(128)->Arg(256);
BENCHMARK(bench_causal_softmax_serial)->Arg(128)->Arg(256);
BENCHMARK(bench_causal_softmax_omp)->Arg(128)->Arg(256);
BENCHMARK(bench_layer_norm_serial)->Arg(64)->Arg(256);
BENCHMARK(bench_layer_norm_omp)->Arg(64)->Arg(256);

BENCHMARK_MAIN();
