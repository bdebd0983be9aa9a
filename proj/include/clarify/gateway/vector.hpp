#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace clarify::gateway {

/// A d-dimensional embedding produced by a backbone or a text embedder.
/// Always non-empty and finite; construction enforces both.
class EmbeddingVector {
public:
    explicit EmbeddingVector(std::vector<double> values);

    std::size_t dim() const noexcept { return values_.size(); }
    std::span<const double> values() const noexcept { return values_; }
    double operator[](std::size_t i) const { return values_[i]; }
    double norm() const;

    friend bool operator==(const EmbeddingVector&, const EmbeddingVector&) = default;

private:
    std::vector<double> values_;
};

/// (a·b)/(‖a‖‖b‖), clamped to [-1, 1].
/// Throws DimensionMismatch on unequal dims and DegenerateVector when either
/// input has zero norm.
double cosine_similarity(const EmbeddingVector& a, const EmbeddingVector& b);

}  // namespace clarify::gateway
