#pragma once

// Dense kernels behind the classifier head and the embedding index.
//
// Every kernel exists twice: `clarify::kernels::reference` is the plain
// serial loop nest kept for testing, `clarify::kernels` is the OpenMP
// version. Each parallel kernel partitions OUTPUT elements across threads and
// accumulates every element in the same order as the reference, so the two
// agree bit-for-bit regardless of thread count.
//
// All matrices are row-major and passed as flat spans with explicit extents.

#include <cstddef>
#include <span>

namespace clarify::kernels {

/// y[n×out] = x[n×in] · wᵀ + b, where w is out×in.
void affine_rows(std::span<const double> x, std::size_t n, std::size_t in,
                 std::span<const double> w, std::span<const double> b, std::size_t out,
                 std::span<double> y);

/// grad[out×in] += deltaᵀ · act, with delta n×out and act n×in.
void accumulate_outer(std::span<const double> delta, std::size_t n, std::size_t out,
                      std::span<const double> act, std::size_t in, std::span<double> grad);

/// sums[cols] += column sums of m[n×cols].
void accumulate_column_sums(std::span<const double> m, std::size_t n, std::size_t cols,
                            std::span<double> sums);

/// back[n×in] = delta[n×out] · w[out×in].
void backprop_rows(std::span<const double> delta, std::size_t n, std::size_t out,
                   std::span<const double> w, std::size_t in, std::span<double> back);

/// scores[i] = cos(query, rows[i]) for m rows of width query.size(). Rows or
/// queries with zero norm score 0; callers that care reject them upstream.
void cosine_scores(std::span<const double> query, std::span<const float> rows, std::size_t m,
                   std::span<double> scores);

namespace reference {

void affine_rows(std::span<const double> x, std::size_t n, std::size_t in,
                 std::span<const double> w, std::span<const double> b, std::size_t out,
                 std::span<double> y);
void accumulate_outer(std::span<const double> delta, std::size_t n, std::size_t out,
                      std::span<const double> act, std::size_t in, std::span<double> grad);
void accumulate_column_sums(std::span<const double> m, std::size_t n, std::size_t cols,
                            std::span<double> sums);
void backprop_rows(std::span<const double> delta, std::size_t n, std::size_t out,
                   std::span<const double> w, std::size_t in, std::span<double> back);
void cosine_scores(std::span<const double> query, std::span<const float> rows, std::size_t m,
                   std::span<double> scores);

}  // namespace reference

/// Number of threads the parallel kernels will use (1 without OpenMP).
int max_threads();

}  // namespace clarify::kernels
