#include "clarify/gateway/vector.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>

#include "clarify/error.hpp"

namespace clarify::gateway {

EmbeddingVector::EmbeddingVector(std::vector<double> values) : values_(std::move(values)) {
    require(!values_.empty(), ErrorCode::InvalidInput, "embedding must have dim > 0");
    for (std::size_t i = 0; i < values_.size(); ++i) {
        require(std::isfinite(values_[i]), ErrorCode::InvalidInput,
                "embedding entry " + std::to_string(i) + " is not finite");
    }
}

double EmbeddingVector::norm() const {
    double s = 0.0;
    for (double v : values_) s += v * v;
    return std::sqrt(s);
}

double cosine_similarity(const EmbeddingVector& a, const EmbeddingVector& b) {
    if (a.dim() != b.dim()) {
        fail(ErrorCode::DimensionMismatch,
             "cosine of dim " + std::to_string(a.dim()) + " vs " + std::to_string(b.dim()));
    }
    double dot = 0.0;
    double aa = 0.0;
    double bb = 0.0;
    for (std::size_t i = 0; i < a.dim(); ++i) {
        dot += a[i] * b[i];
        aa += a[i] * a[i];
        bb += b[i] * b[i];
    }
    require(aa > 0.0 && bb > 0.0, ErrorCode::DegenerateVector, "cosine of a zero-norm vector");
    // sqrt(aa*bb) rather than sqrt(aa)*sqrt(bb): identical inputs then give exactly 1.
    const double denom = std::sqrt(aa * bb);
    if (!std::isfinite(denom) || denom == 0.0) {
        const double scaled = (dot / std::sqrt(aa)) / std::sqrt(bb);
        return std::clamp(scaled, -1.0, 1.0);
    }
    return std::clamp(dot / denom, -1.0, 1.0);
}

}  // namespace clarify::gateway
