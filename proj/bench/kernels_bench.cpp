// Serial reference vs OpenMP kernels at head-training and index-lookup sizes.

#include <random>
#include <vector>

#include <benchmark/benchmark.h>

#include "clarify/kernels/dense.hpp"

namespace k = clarify::kernels;

namespace {

std::vector<double> random_doubles(std::size_t n, unsigned seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::vector<double> v(n);
    for (auto& x : v) x = u(rng);
    return v;
}

template <bool Parallel>
void BM_affine_rows(benchmark::State& state) {
    const std::size_t n = 256, in = static_cast<std::size_t>(state.range(0)), out = in / 2;
    const auto x = random_doubles(n * in, 1), w = random_doubles(out * in, 2), b = random_doubles(out, 3);
    std::vector<double> y(n * out);
    for (auto _ : state) {
        if constexpr (Parallel) k::affine_rows(x, n, in, w, b, out, y);
        else k::reference::affine_rows(x, n, in, w, b, out, y);
        benchmark::DoNotOptimize(y.data());
    }
    state.SetItemsProcessed(static_cast<int64_t>(state.iterations() * n * in * out));
}

template <bool Parallel>
void BM_cosine_scores(benchmark::State& state) {
    const std::size_t m = static_cast<std::size_t>(state.range(0)), dim = 384;
    const auto q = random_doubles(dim, 4);
    const auto rd = random_doubles(m * dim, 5);
    const std::vector<float> rows(rd.begin(), rd.end());
    std::vector<double> scores(m);
    for (auto _ : state) {
        if constexpr (Parallel) k::cosine_scores(q, rows, m, scores);
        else k::reference::cosine_scores(q, rows, m, scores);
        benchmark::DoNotOptimize(scores.data());
    }
    state.SetItemsProcessed(static_cast<int64_t>(state.iterations() * m));
}

}  // namespace

BENCHMARK(BM_affine_rows<false>)->Arg(64)->Arg(512)->Arg(1024);
BENCHMARK(BM_affine_rows<true>)->Arg(64)->Arg(512)->Arg(1024);
BENCHMARK(BM_cosine_scores<false>)->Arg(1000)->Arg(50000);
BENCHMARK(BM_cosine_scores<true>)->Arg(1000)->Arg(50000);

BENCHMARK_MAIN();
