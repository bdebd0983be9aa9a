#include <algorithm>
#include <cmath>
#include <cstdint>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "clarify/kernels/dense.hpp"

namespace clarify::kernels {

namespace {
// Below this many multiply-adds the fork/join overhead dominates.
constexpr std::size_t kParallelWork = 1 << 14;
}  // namespace

int max_threads() {
#ifdef _OPENMP
    return omp_get_max_threads();
#else
    return 1;
#endif
}

void affine_rows(std::span<const double> x, std::size_t n, std::size_t in,
                 std::span<const double> w, std::span<const double> b, std::size_t out,
                 std::span<double> y) {
    const auto rows = static_cast<std::int64_t>(n);
#pragma omp parallel for schedule(static) if (n * in * out >= kParallelWork)
    for (std::int64_t r = 0; r < rows; ++r) {
        const double* xr = x.data() + r * in;
        double* yr = y.data() + r * out;
        for (std::size_t o = 0; o < out; ++o) {
            const double* wo = w.data() + o * in;
            double acc = b[o];
            for (std::size_t i = 0; i < in; ++i) acc += wo[i] * xr[i];
            yr[o] = acc;
        }
    }
}

void accumulate_outer(std::span<const double> delta, std::size_t n, std::size_t out,
                      std::span<const double> act, std::size_t in, std::span<double> grad) {
    const auto outs = static_cast<std::int64_t>(out);
#pragma omp parallel for schedule(static) if (n * in * out >= kParallelWork)
    for (std::int64_t o = 0; o < outs; ++o) {
        double* go = grad.data() + o * in;
        for (std::size_t i = 0; i < in; ++i) {
            double acc = go[i];
            for (std::size_t r = 0; r < n; ++r) acc += delta[r * out + o] * act[r * in + i];
            go[i] = acc;
        }
    }
}

void accumulate_column_sums(std::span<const double> m, std::size_t n, std::size_t cols,
                            std::span<double> sums) {
    const auto cs = static_cast<std::int64_t>(cols);
#pragma omp parallel for schedule(static) if (n * cols >= kParallelWork)
    for (std::int64_t c = 0; c < cs; ++c) {
        double acc = sums[c];
        for (std::size_t r = 0; r < n; ++r) acc += m[r * cols + c];
        sums[c] = acc;
    }
}

void backprop_rows(std::span<const double> delta, std::size_t n, std::size_t out,
                   std::span<const double> w, std::size_t in, std::span<double> back) {
    const auto rows = static_cast<std::int64_t>(n);
#pragma omp parallel for schedule(static) if (n * in * out >= kParallelWork)
    for (std::int64_t r = 0; r < rows; ++r) {
        const double* dr = delta.data() + r * out;
        double* br = back.data() + r * in;
        for (std::size_t i = 0; i < in; ++i) {
            double acc = 0.0;
            for (std::size_t o = 0; o < out; ++o) acc += dr[o] * w[o * in + i];
            br[i] = acc;
        }
    }
}

void cosine_scores(std::span<const double> query, std::span<const float> rows, std::size_t m,
                   std::span<double> scores) {
    const std::size_t d = query.size();
    double qq = 0.0;
    for (double v : query) qq += v * v;
    const auto count = static_cast<std::int64_t>(m);
#pragma omp parallel for schedule(static) if (m * d >= kParallelWork)
    for (std::int64_t r = 0; r < count; ++r) {
        const float* row = rows.data() + r * d;
        double dot = 0.0;
        double rr = 0.0;
        for (std::size_t i = 0; i < d; ++i) {
            const double v = row[i];
            dot += v * query[i];
            rr += v * v;
        }
        scores[r] = (qq == 0.0 || rr == 0.0) ? 0.0 : std::clamp(dot / std::sqrt(qq * rr), -1.0, 1.0);
    }
}

}  // namespace clarify::kernels
