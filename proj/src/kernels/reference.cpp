#include <algorithm>
#include <cmath>

#include "clarify/kernels/dense.hpp"

namespace clarify::kernels::reference {

void affine_rows(std::span<const double> x, std::size_t n, std::size_t in,
                 std::span<const double> w, std::span<const double> b, std::size_t out,
                 std::span<double> y) {
    for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t o = 0; o < out; ++o) {
            double acc = b[o];
            for (std::size_t i = 0; i < in; ++i) acc += w[o * in + i] * x[r * in + i];
            y[r * out + o] = acc;
        }
    }
}

void accumulate_outer(std::span<const double> delta, std::size_t n, std::size_t out,
                      std::span<const double> act, std::size_t in, std::span<double> grad) {
    for (std::size_t o = 0; o < out; ++o) {
        for (std::size_t i = 0; i < in; ++i) {
            double acc = grad[o * in + i];
            for (std::size_t r = 0; r < n; ++r) acc += delta[r * out + o] * act[r * in + i];
            grad[o * in + i] = acc;
        }
    }
}

void accumulate_column_sums(std::span<const double> m, std::size_t n, std::size_t cols,
                            std::span<double> sums) {
    for (std::size_t c = 0; c < cols; ++c) {
        double acc = sums[c];
        for (std::size_t r = 0; r < n; ++r) acc += m[r * cols + c];
        sums[c] = acc;
    }
}

void backprop_rows(std::span<const double> delta, std::size_t n, std::size_t out,
                   std::span<const double> w, std::size_t in, std::span<double> back) {
    for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t i = 0; i < in; ++i) {
            double acc = 0.0;
            for (std::size_t o = 0; o < out; ++o) acc += delta[r * out + o] * w[o * in + i];
            back[r * in + i] = acc;
        }
    }
}

void cosine_scores(std::span<const double> query, std::span<const float> rows, std::size_t m,
                   std::span<double> scores) {
    const std::size_t d = query.size();
    double qq = 0.0;
    for (double v : query) qq += v * v;
    for (std::size_t r = 0; r < m; ++r) {
        double dot = 0.0;
        double rr = 0.0;
        for (std::size_t i = 0; i < d; ++i) {
            const double v = rows[r * d + i];
            dot += v * query[i];
            rr += v * v;
        }
        scores[r] = (qq == 0.0 || rr == 0.0) ? 0.0 : std::clamp(dot / std::sqrt(qq * rr), -1.0, 1.0);
    }
}

}  // namespace clarify::kernels::reference
