#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "clarify/gateway/vector.hpp"
#include "clarify/specialist/head.hpp"

namespace clarify::specialist {

/// Two-stage schedule: stage 1 trains at lr_stage1 until the post-epoch
/// training accuracy first reaches stage_switch_accuracy, then the rest of
/// the run uses lr_stage2.
struct TrainingConfig {
    double lr_stage1 = 1e-3;
    double lr_stage2 = 1e-5;
    double stage_switch_accuracy = 0.60;
    double weight_decay = 1e-4;
    int max_epochs = 100;
    int batch_size = 32;
    std::uint64_t seed = 0;
    std::size_t hidden_dim = 0;  // 0 = ceil(d / 2)
    Activation activation = Activation::Relu;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_epsilon = 1e-8;

    /// Throws ConfigError.
    void validate() const;

    static TrainingConfig from_json(const nlohmann::json& j);
    nlohmann::json to_json() const;
};

/// Embeddings with integer labels into class_names.
struct LabeledEmbeddingSet {
    std::vector<std::string> class_names;
    std::vector<gateway::EmbeddingVector> embeddings;
    std::vector<std::size_t> labels;

    std::size_t size() const noexcept { return labels.size(); }
    std::size_t dim() const { return embeddings.empty() ? 0 : embeddings.front().dim(); }

    /// Shared dim and in-range labels; throws InvalidArgument.
    void validate() const;

    /// Row-major copy of the embeddings selected by `rows`.
    std::vector<double> gather(const std::vector<std::size_t>& rows) const;
};

struct EpochRecord {
    int epoch = 0;  // 1-based
    double loss = 0.0;            // mean cross-entropy over the epoch's mini-batches
    double train_accuracy = 0.0;  // full pass after the epoch's updates
    int stage = 1;                // stage in effect while training this epoch
    bool stage_switched = false;  // this epoch's accuracy triggered the switch to stage 2

    friend bool operator==(const EpochRecord&, const EpochRecord&) = default;
};

struct TrainingResult {
    ClassifierHead head;
    std::vector<EpochRecord> history;
};

/// Trains a fresh Glorot-initialized head with Adam and decoupled weight
/// decay. Deterministic for a given (data, cfg).
/// Errors: DegenerateDataset when fewer than two classes occur,
/// DivergedTraining on a non-finite loss.
TrainingResult train(const LabeledEmbeddingSet& data, const TrainingConfig& cfg);

/// Continues training from `initial` (same schedule semantics).
TrainingResult train_from(ClassifierHead initial, const LabeledEmbeddingSet& data,
                          const TrainingConfig& cfg);

struct LossGradient {
    double loss = 0.0;
    HeadParameters grad;
};

/// Mean cross-entropy over the batch and its exact gradient.
LossGradient loss_and_gradient(const ClassifierHead& head, std::span<const double> z,
                               std::span<const std::size_t> labels);

/// Mean cross-entropy only.
double cross_entropy(const ClassifierHead& head, std::span<const double> z,
                     std::span<const std::size_t> labels);

/// Fraction of rows whose argmax matches the label.
double accuracy(const ClassifierHead& head, const LabeledEmbeddingSet& data);

/// Max over all parameters of |analytic − numeric| / max(|analytic|, |numeric|, 1),
/// numeric being the central difference with step epsilon in (0, 1e-2].
double grad_check(const ClassifierHead& head, const LabeledEmbeddingSet& batch, double epsilon);

}  // namespace clarify::specialist
