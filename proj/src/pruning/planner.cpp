#include <algorithm>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <numeric>

#include "clarify/error.hpp"
#include "clarify/pruning/pruning.hpp"

namespace clarify::pruning {

namespace {

std::vector<gateway::EmbeddingVector> embed_outputs(const std::vector<std::string>& outputs,
                                                    const gateway::TextEmbedder& embedder) {
    for (std::size_t i = 0; i < outputs.size(); ++i) {
        if (outputs[i].find_first_not_of(" \t\r\n") == std::string::npos)
            fail(ErrorCode::DegenerateVector,
                 "calibration sample " + std::to_string(i) + " produced empty output");
    }
    return embedder.embed(outputs);
}

std::vector<gateway::EmbeddingVector> original_embeddings(const AblatableModel& model,
                                                          const CalibrationSet& cal,
                                                          const gateway::TextEmbedder& embedder) {
    std::vector<std::string> outputs;
    outputs.reserve(cal.samples.size());
    for (const auto& x : cal.samples) outputs.push_back(model.generate(x, {}));
    return embed_outputs(outputs, embedder);
}

LayerImportanceScore score_against(const AblatableModel& model, int layer,
                                   const CalibrationSet& cal, const gateway::TextEmbedder& embedder,
                                   const std::set<int>& removed,
                                   const std::vector<gateway::EmbeddingVector>& originals) {
    std::set<int> skip = removed;
    skip.insert(layer);
    std::vector<std::string> outputs;
    outputs.reserve(cal.samples.size());
    for (const auto& x : cal.samples) outputs.push_back(model.generate(x, skip));
    const auto pruned = embed_outputs(outputs, embedder);

    LayerImportanceScore score;
    score.layer = layer;
    score.per_sample.reserve(pruned.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < pruned.size(); ++i) {
        double s = 0.0;
        try {
            s = gateway::cosine_similarity(pruned[i], originals[i]);
        } catch (const Error& e) {
            if (e.code() != ErrorCode::DegenerateVector) throw;
            fail(ErrorCode::DegenerateVector, "zero-norm embedding for calibration sample "
                                                  + std::to_string(i) + " (layer "
                                                  + std::to_string(layer) + ")");
        }
        score.per_sample.push_back(s);
        sum += s;
    }
    score.s_avg = sum / static_cast<double>(pruned.size());
    return score;
}

// Scores `layers` concurrently. The first failure in layer order is rethrown
// so the reported error does not depend on scheduling.
std::vector<LayerImportanceScore> score_layers(const AblatableModel& model,
                                               const std::vector<int>& layers,
                                               const CalibrationSet& cal,
                                               const gateway::TextEmbedder& embedder,
                                               const std::set<int>& removed,
                                               const std::vector<gateway::EmbeddingVector>& originals) {
    std::vector<LayerImportanceScore> out(layers.size());
    std::vector<std::exception_ptr> errors(layers.size());
    const auto n = static_cast<long>(layers.size());
#pragma omp parallel for schedule(dynamic)
    for (long k = 0; k < n; ++k) {
        try {
            out[k] = score_against(model, layers[k], cal, embedder, removed, originals);
        } catch (...) {
            errors[k] = std::current_exception();
        }
    }
    for (const auto& e : errors)
        if (e) std::rethrow_exception(e);
    return out;
}

void check_layer(const AblatableModel& model, int layer) {
    require(layer >= 1 && layer <= model.layer_count(), ErrorCode::InvalidArgument,
            "layer " + std::to_string(layer) + " outside [1, " + std::to_string(model.layer_count())
                + "]");
}

}  // namespace

void CalibrationSet::validate() const {
    require(!samples.empty(), ErrorCode::InvalidArgument, "calibration set is empty");
    for (std::size_t i = 0; i < samples.size(); ++i) {
        require(samples[i].find_first_not_of(" \t\r\n") != std::string::npos,
                ErrorCode::InvalidArgument, "calibration sample " + std::to_string(i) + " is blank");
    }
}

CalibrationSet CalibrationSet::from_file(const std::string& path) {
    std::ifstream in(path);
    require(in.good(), ErrorCode::NotFound, "cannot open calibration file " + path);
    CalibrationSet cal;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.find_first_not_of(" \t") != std::string::npos) cal.samples.push_back(line);
    }
    cal.validate();
    return cal;
}

PruningConstraints PruningConstraints::defaults(int layer_count) {
    require(layer_count >= 1, ErrorCode::InvalidArgument, "layer_count must be positive");
    PruningConstraints c;
    c.protected_layers = {1, std::min(2, layer_count), layer_count};
    return c;
}

void PruningConstraints::validate(int layer_count) const {
    for (int l : protected_layers) {
        require(l >= 1 && l <= layer_count, ErrorCode::InvalidArgument,
                "protected layer " + std::to_string(l) + " outside [1, "
                    + std::to_string(layer_count) + "]");
    }
}

std::vector<int> PruningConstraints::candidates(int layer_count) const {
    std::vector<int> out;
    for (int l = 1; l <= layer_count; ++l)
        if (!protected_layers.count(l)) out.push_back(l);
    return out;
}

std::string to_string(Strategy s) {
    return s == Strategy::OneShot ? "one_shot" : "greedy_iterative";
}

Strategy strategy_from_string(const std::string& s) {
    if (s == "one_shot") return Strategy::OneShot;
    if (s == "greedy_iterative") return Strategy::GreedyIterative;
    fail(ErrorCode::InvalidArgument, "unknown strategy '" + s + "'");
}

LayerImportanceScore layer_importance(const AblatableModel& model, int layer,
                                      const CalibrationSet& cal,
                                      const gateway::TextEmbedder& embedder,
                                      const std::set<int>& already_removed) {
    cal.validate();
    check_layer(model, layer);
    require(!already_removed.count(layer), ErrorCode::InvalidArgument,
            "layer " + std::to_string(layer) + " is already removed");
    return score_against(model, layer, cal, embedder, already_removed,
                         original_embeddings(model, cal, embedder));
}

std::vector<LayerImportanceScore> score_all_layers(const AblatableModel& model,
                                                   const CalibrationSet& cal,
                                                   const PruningConstraints& constraints,
                                                   const gateway::TextEmbedder& embedder) {
    cal.validate();
    constraints.validate(model.layer_count());
    const auto originals = original_embeddings(model, cal, embedder);
    return score_layers(model, constraints.candidates(model.layer_count()), cal, embedder, {},
                        originals);
}

PruningPlan make_plan(const std::vector<LayerImportanceScore>& scores,
                      const PruningConstraints& constraints, int target_removals,
                      const std::string& model_name) {
    std::vector<const LayerImportanceScore*> pool;
    for (const auto& s : scores)
        if (!constraints.protected_layers.count(s.layer)) pool.push_back(&s);
    if (target_removals < 0 || static_cast<std::size_t>(target_removals) > pool.size()) {
        fail(ErrorCode::InvalidTarget, "target_removals " + std::to_string(target_removals)
                                           + " not in [0, " + std::to_string(pool.size()) + "]");
    }
    std::stable_sort(pool.begin(), pool.end(), [](const auto* a, const auto* b) {
        if (a->s_avg != b->s_avg) return a->s_avg > b->s_avg;
        return a->layer < b->layer;
    });

    PruningPlan plan;
    plan.model = model_name;
    plan.strategy = Strategy::OneShot;
    plan.protected_layers = constraints.protected_layers;
    plan.scores = scores;
    plan.target_removals = target_removals;
    for (int k = 0; k < target_removals; ++k) plan.removal_order.push_back(pool[k]->layer);
    return plan;
}

PruningPlan make_greedy_plan(const AblatableModel& model, const CalibrationSet& cal,
                             const PruningConstraints& constraints,
                             const gateway::TextEmbedder& embedder, int target_removals) {
    cal.validate();
    constraints.validate(model.layer_count());
    auto remaining = constraints.candidates(model.layer_count());
    if (target_removals < 0 || static_cast<std::size_t>(target_removals) > remaining.size()) {
        fail(ErrorCode::InvalidTarget, "target_removals " + std::to_string(target_removals)
                                           + " not in [0, " + std::to_string(remaining.size()) + "]");
    }
    const auto originals = original_embeddings(model, cal, embedder);

    PruningPlan plan;
    plan.model = model.name();
    plan.strategy = Strategy::GreedyIterative;
    plan.protected_layers = constraints.protected_layers;
    plan.target_removals = target_removals;
    plan.scores = score_layers(model, remaining, cal, embedder, {}, originals);

    std::set<int> removed;
    auto round = plan.scores;
    for (int step = 0; step < target_removals; ++step) {
        if (step > 0) round = score_layers(model, remaining, cal, embedder, removed, originals);
        std::size_t best = 0;
        for (std::size_t k = 1; k < round.size(); ++k) {
            if (round[k].s_avg > round[best].s_avg) best = k;  // strict: lower index wins ties
        }
        const int layer = round[best].layer;
        plan.removal_order.push_back(layer);
        removed.insert(layer);
        remaining.erase(std::find(remaining.begin(), remaining.end(), layer));
    }
    return plan;
}

CompressionReport compression_report(double params_total, double params_per_layer,
                                     std::size_t removed) {
    require(params_total > 0.0 && params_per_layer > 0.0, ErrorCode::InvalidArgument,
            "parameter sizes must be positive");
    CompressionReport r;
    r.params_after = params_total - static_cast<double>(removed) * params_per_layer;
    r.compression_pct = 100.0 * (params_total - r.params_after) / params_total;
    r.compression_pct_rounded = std::lround(r.compression_pct);
    return r;
}

CompressionReport compression_report(const AblatableModel& model, const PruningPlan& plan) {
    return compression_report(model.params_total(), model.params_per_layer(),
                              plan.removal_order.size());
}

std::string format_report(const CompressionReport& r) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.3fB (%ld%%)", r.params_after, r.compression_pct_rounded);
    return buf;
}

}  // namespace clarify::pruning
