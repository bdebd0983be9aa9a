#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "clarify/gateway/clients.hpp"
#include "clarify/gateway/types.hpp"

namespace clarify::pruning {

/// A generator whose transformer layers can be skipped one by one.
/// Layer indices are 1-based. Implementations must be thread-safe and
/// deterministic (greedy decoding).
class AblatableModel {
public:
    virtual ~AblatableModel() = default;

    virtual std::string generate(const std::string& input, const std::set<int>& skip_layers) const = 0;
    virtual int layer_count() const = 0;
    /// Billions of parameters.
    virtual double params_total() const = 0;
    virtual double params_per_layer() const = 0;
    virtual std::string name() const = 0;
};

// ---------------------------------------------------------------------------
// Toy model

enum class LayerOp { Identity, Negate, Swap, Rotate, Scale };

/// One toy layer acting on the 8-component state.
///   Identity: no-op; Negate: v = -v; Swap: exchange v[i] and v[j];
///   Rotate: Givens rotation of (v[i], v[j]) by `angle` radians;
///   Scale: v *= factor (factor > 0).
struct LayerSpec {
    LayerOp op = LayerOp::Identity;
    int i = 0;
    int j = 1;
    double angle = 0.0;
    double factor = 1.0;

    static LayerSpec identity() { return {}; }
    static LayerSpec negate() { return {LayerOp::Negate}; }
    static LayerSpec swap(int i, int j) { return {LayerOp::Swap, i, j}; }
    static LayerSpec rotate(int i, int j, double angle) { return {LayerOp::Rotate, i, j, angle}; }
    static LayerSpec scale(double factor) { return {LayerOp::Scale, 0, 1, 0.0, factor}; }
};

/// Desk-scale stand-in for a VLM decoder stack. The input text seeds an
/// 8-component state (every component has magnitude in [0.5, 1.5]); the
/// non-skipped layers are applied in order; the state is rendered as
/// round(8·|v_c|) copies (at most 64) of the token "f<c>", written "-f<c>"
/// when v_c < 0. Under HashTextEmbedder a negated state renders to the
/// exact negation of the original embedding.
class ToyLayeredModel final : public AblatableModel {
public:
    static constexpr std::size_t kStateDim = 8;

    explicit ToyLayeredModel(std::vector<LayerSpec> layers, double params_total = 0.0,
                             double params_per_layer = 0.0, std::string name = "toy");

    std::string generate(const std::string& input, const std::set<int>& skip_layers) const override;
    int layer_count() const override { return static_cast<int>(layers_.size()); }
    double params_total() const override { return params_total_; }
    double params_per_layer() const override { return params_per_layer_; }
    std::string name() const override { return name_; }

    const std::vector<LayerSpec>& layers() const noexcept { return layers_; }

    std::vector<double> initial_state(const std::string& input) const;
    std::vector<double> run(const std::string& input, const std::set<int>& skip_layers) const;
    static std::string render(const std::vector<double>& state);

    /// Random model of norm-preserving layers, deterministic in `seed`.
    static ToyLayeredModel random(int layer_count, std::uint64_t seed);

private:
    std::vector<LayerSpec> layers_;
    double params_total_;
    double params_per_layer_;
    std::string name_;
};

/// Remote ablatable model: POST {base}/v1/generate with
/// {"prompt", "skip_layers": [...], "max_tokens": 64, "temperature": 0}
/// and reads {"text": ...}. Layer count and sizes come from the profile.
class HttpAblatableModel final : public AblatableModel {
public:
    HttpAblatableModel(gateway::EndpointConfig cfg, int layer_count, double params_total,
                       double params_per_layer);

    std::string generate(const std::string& input, const std::set<int>& skip_layers) const override;
    int layer_count() const override { return layer_count_; }
    double params_total() const override { return params_total_; }
    double params_per_layer() const override { return params_per_layer_; }
    std::string name() const override { return cfg_.model_name; }

private:
    gateway::EndpointConfig cfg_;
    int layer_count_;
    double params_total_;
    double params_per_layer_;
};

// ---------------------------------------------------------------------------
// Scoring and planning

struct CalibrationSet {
    std::vector<std::string> samples;

    void validate() const;  // InvalidArgument when empty or a sample is blank
    /// One sample per non-blank line.
    static CalibrationSet from_file(const std::string& path);
};

struct LayerImportanceScore {
    int layer = 0;
    double s_avg = 0.0;
    std::vector<double> per_sample;

    friend bool operator==(const LayerImportanceScore&, const LayerImportanceScore&) = default;
};

struct PruningConstraints {
    std::set<int> protected_layers;

    /// {1, 2, layer_count}.
    static PruningConstraints defaults(int layer_count);
    /// InvalidArgument unless every protected index is in [1, layer_count].
    void validate(int layer_count) const;
    std::vector<int> candidates(int layer_count) const;
};

enum class Strategy { OneShot, GreedyIterative };

std::string to_string(Strategy s);
Strategy strategy_from_string(const std::string& s);

struct PruningPlan {
    std::string model;
    Strategy strategy = Strategy::OneShot;
    std::set<int> protected_layers;
    std::vector<LayerImportanceScore> scores;
    std::vector<int> removal_order;
    int target_removals = 0;

    friend bool operator==(const PruningPlan&, const PruningPlan&) = default;
};

/// Single-layer ablation score. Each sample x gives
/// S = cos(g(generate(x, skip ∪ {layer})), g(generate(x, ∅))).
/// `already_removed` lets greedy planning measure cumulative drift.
LayerImportanceScore layer_importance(const AblatableModel& model, int layer,
                                      const CalibrationSet& cal,
                                      const gateway::TextEmbedder& embedder,
                                      const std::set<int>& already_removed = {});

/// One score per non-protected layer, ascending layer index. Original outputs
/// are generated and embedded once; layers are scored concurrently.
std::vector<LayerImportanceScore> score_all_layers(const AblatableModel& model,
                                                   const CalibrationSet& cal,
                                                   const PruningConstraints& constraints,
                                                   const gateway::TextEmbedder& embedder);

/// One-shot plan: the target_removals highest s_avg (most similar output
/// when skipped = least important), ties by lower index. Throws
/// InvalidTarget when the target exceeds the candidate count.
PruningPlan make_plan(const std::vector<LayerImportanceScore>& scores,
                      const PruningConstraints& constraints, int target_removals,
                      const std::string& model_name = {});

/// Greedy plan: after each permanent removal every remaining candidate is
/// re-scored against the unpruned outputs with the removed set also skipped.
/// `scores` in the result are the initial single-layer scores.
PruningPlan make_greedy_plan(const AblatableModel& model, const CalibrationSet& cal,
                             const PruningConstraints& constraints,
                             const gateway::TextEmbedder& embedder, int target_removals);

struct CompressionReport {
    double params_after = 0.0;
    double compression_pct = 0.0;
    long compression_pct_rounded = 0;
};

CompressionReport compression_report(double params_total, double params_per_layer,
                                     std::size_t removed);
CompressionReport compression_report(const AblatableModel& model, const PruningPlan& plan);

/// "3.211B (14%)".
std::string format_report(const CompressionReport& r);

nlohmann::json plan_to_json(const PruningPlan& plan);
/// FormatError on missing/mistyped fields; ValidationError when the plan
/// removes a protected layer or is internally inconsistent.
PruningPlan plan_from_json(const nlohmann::json& j);
void export_plan(const PruningPlan& plan, const std::string& path);
PruningPlan import_plan(const std::string& path);

// ---------------------------------------------------------------------------
// Model profiles

/// One measured configuration of a pruned model (reference data).
struct ReferenceRow {
    int layers_removed = 0;
    double params_b = 0.0;
    double compression_pct = 0.0;
    std::optional<double> vram_gb;
    std::optional<double> latency_ms_per_token;
    nlohmann::json judge_scores = nlohmann::json::object();
};

struct ModelProfile {
    std::string name;
    int layer_count = 0;
    double params_total = 0.0;
    double params_per_layer = 0.0;
    std::vector<ReferenceRow> reference;

    static ModelProfile from_json(const nlohmann::json& j);
    nlohmann::json to_json() const;
};

/// Least-squares slope of params_total − params_b against layers_removed,
/// with the intercept pinned at params_total.
double derive_params_per_layer(double params_total, const std::vector<ReferenceRow>& rows);

/// Missing params_per_layer is derived from the reference rows.
ModelProfile load_profile(const std::string& path);

}  // namespace clarify::pruning
