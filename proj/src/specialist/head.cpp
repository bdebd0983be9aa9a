#include "clarify/specialist/head.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <set>
#include <utility>

#include "clarify/error.hpp"
#include "clarify/kernels/dense.hpp"

namespace clarify::specialist {

std::string_view to_string(Activation a) { return a == Activation::Relu ? "relu" : "gelu"; }

Activation activation_from_string(std::string_view s) {
    if (s == "relu") return Activation::Relu;
    if (s == "gelu") return Activation::Gelu;
    fail(ErrorCode::InvalidArgument, "unknown activation '" + std::string(s) + "'");
}

namespace {

bool all_finite(std::span<const double> v) {
    return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

}  // namespace

ClassifierHead::ClassifierHead(HeadParameters params, Activation activation,
                               std::vector<std::string> class_names)
    : params_(std::move(params)), activation_(activation), class_names_(std::move(class_names)) {
    const auto& p = params_;
    require(p.w1.rows > 0 && p.w1.cols > 0, ErrorCode::InvalidArgument, "w1 must be non-empty");
    require(p.w1.data.size() == p.w1.rows * p.w1.cols && p.w2.data.size() == p.w2.rows * p.w2.cols,
            ErrorCode::InvalidArgument, "matrix storage does not match its shape");
    require(p.b1.size() == p.w1.rows, ErrorCode::InvalidArgument, "b1 length != hidden dim");
    require(p.w2.cols == p.w1.rows, ErrorCode::InvalidArgument, "w2 columns != hidden dim");
    require(p.b2.size() == p.w2.rows, ErrorCode::InvalidArgument, "b2 length != class count");
    require(class_names_.size() == p.w2.rows, ErrorCode::InvalidArgument,
            "class_names length != class count");
    require(class_names_.size() >= 2, ErrorCode::InvalidArgument, "a head needs at least 2 classes");
    require(std::set<std::string>(class_names_.begin(), class_names_.end()).size()
                == class_names_.size(),
            ErrorCode::InvalidArgument, "class names must be unique");
    require(all_finite(p.w1.data) && all_finite(p.b1) && all_finite(p.w2.data) && all_finite(p.b2),
            ErrorCode::InvalidArgument, "head weights must be finite");
}

ClassifierHead ClassifierHead::glorot(std::size_t input_dim, std::size_t hidden_dim,
                                      std::vector<std::string> class_names, Activation activation,
                                      std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    auto fill = [&rng](Matrix& m) {
        const double limit = std::sqrt(6.0 / static_cast<double>(m.rows + m.cols));
        for (auto& v : m.data) {
            // 53 random bits -> [0, 1), then mapped to [-limit, limit).
            const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
            v = (2.0 * u - 1.0) * limit;
        }
    };
    HeadParameters p;
    p.w1 = Matrix(hidden_dim, input_dim);
    p.b1.assign(hidden_dim, 0.0);
    p.w2 = Matrix(class_names.size(), hidden_dim);
    p.b2.assign(class_names.size(), 0.0);
    fill(p.w1);
    fill(p.w2);
    return ClassifierHead(std::move(p), activation, std::move(class_names));
}

constexpr double kInvSqrt2 = 0.70710678118654752440;

double activate(Activation a, double x) {
    if (a == Activation::Relu) return x > 0.0 ? x : 0.0;
    return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2));
}

double activate_derivative(Activation a, double x) {
    if (a == Activation::Relu) return x > 0.0 ? 1.0 : 0.0;
    const double cdf = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
    const double pdf = std::exp(-0.5 * x * x) * (std::numbers::inv_sqrtpi * kInvSqrt2);
    return cdf + x * pdf;
}

std::vector<double> forward_batch(const ClassifierHead& head, std::span<const double> z,
                                  std::size_t n) {
    const auto& p = head.params();
    const std::size_t d = head.input_dim();
    const std::size_t h = head.hidden_dim();
    const std::size_t k = head.num_classes();
    require(z.size() == n * d, ErrorCode::DimensionMismatch, "batch size does not match input dim");

    std::vector<double> hidden(n * h);
    kernels::affine_rows(z, n, d, p.w1.data, p.b1, h, hidden);
    for (auto& v : hidden) v = activate(head.activation(), v);
    std::vector<double> logits(n * k);
    kernels::affine_rows(hidden, n, h, p.w2.data, p.b2, k, logits);
    return logits;
}

LogitVector forward(const ClassifierHead& head, const gateway::EmbeddingVector& z) {
    if (z.dim() != head.input_dim()) {
        fail(ErrorCode::DimensionMismatch, "embedding dim " + std::to_string(z.dim())
                                               + " != head input dim "
                                               + std::to_string(head.input_dim()));
    }
    return LogitVector{forward_batch(head, z.values(), 1)};
}

ProbabilityVector softmax(const LogitVector& y) {
    require(!y.values.empty(), ErrorCode::InvalidArgument, "softmax of empty logits");
    require(all_finite(y.values), ErrorCode::InvalidArgument, "softmax of non-finite logits");
    const double mx = *std::max_element(y.values.begin(), y.values.end());
    ProbabilityVector p;
    p.values.resize(y.values.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < y.values.size(); ++i) {
        p.values[i] = std::exp(y.values[i] - mx);
        sum += p.values[i];
    }
    for (auto& v : p.values) v /= sum;
    return p;
}

std::size_t argmax(std::span<const double> values) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < values.size(); ++i) {
        if (values[i] > values[best]) best = i;
    }
    return best;
}

Prediction predict(const ClassifierHead& head, const gateway::EmbeddingVector& z) {
    Prediction out;
    out.probs = softmax(forward(head, z));
    out.class_index = argmax(out.probs.values);
    out.class_name = head.class_names()[out.class_index];
    out.confidence = out.probs.values[out.class_index];
    return out;
}

std::size_t default_hidden_dim(std::size_t input_dim) { return (input_dim + 1) / 2; }

}  // namespace clarify::specialist
