#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "clarify/gateway/vector.hpp"

namespace clarify::specialist {

enum class Activation { Relu, Gelu };

std::string_view to_string(Activation a);
Activation activation_from_string(std::string_view s);

/// Row-major dense matrix.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

    double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

    friend bool operator==(const Matrix&, const Matrix&) = default;
};

/// Raw weights of the two-layer head: logits = w2 · act(w1 · z + b1) + b2.
struct HeadParameters {
    Matrix w1;               // hidden × d
    std::vector<double> b1;  // hidden
    Matrix w2;               // k × hidden
    std::vector<double> b2;  // k

    std::size_t count() const { return w1.data.size() + b1.size() + w2.data.size() + b2.size(); }

    friend bool operator==(const HeadParameters&, const HeadParameters&) = default;
};

/// Validated classification head. Immutable once built; share it freely.
class ClassifierHead {
public:
    ClassifierHead(HeadParameters params, Activation activation, std::vector<std::string> class_names);

    /// Glorot-uniform weights in ±sqrt(6/(fan_in+fan_out)), zero biases.
    static ClassifierHead glorot(std::size_t input_dim, std::size_t hidden_dim,
                                 std::vector<std::string> class_names, Activation activation,
                                 std::uint64_t seed);

    std::size_t input_dim() const noexcept { return params_.w1.cols; }
    std::size_t hidden_dim() const noexcept { return params_.w1.rows; }
    std::size_t num_classes() const noexcept { return params_.w2.rows; }
    Activation activation() const noexcept { return activation_; }
    const std::vector<std::string>& class_names() const noexcept { return class_names_; }
    const HeadParameters& params() const noexcept { return params_; }

    friend bool operator==(const ClassifierHead&, const ClassifierHead&) = default;

private:
    HeadParameters params_;
    Activation activation_;
    std::vector<std::string> class_names_;
};

struct LogitVector {
    std::vector<double> values;
};

struct ProbabilityVector {
    std::vector<double> values;
};

struct Prediction {
    std::string class_name;
    std::size_t class_index = 0;
    double confidence = 0.0;
    ProbabilityVector probs;
};

double activate(Activation a, double x);
double activate_derivative(Activation a, double x);

/// Throws DimensionMismatch when z.dim() differs from the head's input dim.
LogitVector forward(const ClassifierHead& head, const gateway::EmbeddingVector& z);

/// Batched forward over n row-major embeddings; returns n×k logits.
std::vector<double> forward_batch(const ClassifierHead& head, std::span<const double> z,
                                  std::size_t n);

/// Max-subtracted softmax; throws InvalidArgument on non-finite logits.
ProbabilityVector softmax(const LogitVector& y);

/// Index of the largest value, lowest index on ties.
std::size_t argmax(std::span<const double> values);

Prediction predict(const ClassifierHead& head, const gateway::EmbeddingVector& z);

/// Smallest default hidden width: ceil(d / 2).
std::size_t default_hidden_dim(std::size_t input_dim);

}  // namespace clarify::specialist
