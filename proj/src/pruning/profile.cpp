#include <fstream>
#include <sstream>

#include "clarify/error.hpp"
#include "clarify/pruning/pruning.hpp"

namespace clarify::pruning {

namespace {

using nlohmann::json;

// JSON shape errors in plan files surface as FormatError naming the field.
template <typename T>
T field(const json& j, const char* key) {
    if (!j.is_object() || !j.contains(key)) throw FormatError(0, std::string("missing field '") + key + "'");
    try {
        return j.at(key).get<T>();
    } catch (const json::exception&) {
        throw FormatError(0, std::string("field '") + key + "' has the wrong type");
    }
}

json parse_file(const std::string& path, const char* what) {
    std::ifstream in(path);
    require(in.good(), ErrorCode::NotFound, std::string("cannot open ") + what + " " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    try {
        return json::parse(ss.str());
    } catch (const json::parse_error& e) {
        throw FormatError(e.byte, std::string(what) + " " + path + ": " + e.what());
    }
}

}  // namespace

json plan_to_json(const PruningPlan& plan) {
    json scores = json::array();
    for (const auto& s : plan.scores)
        scores.push_back({{"layer", s.layer}, {"s_avg", s.s_avg}, {"per_sample", s.per_sample}});
    return {{"model", plan.model},
            {"strategy", to_string(plan.strategy)},
            {"protected", std::vector<int>(plan.protected_layers.begin(), plan.protected_layers.end())},
            {"scores", scores},
            {"removal_order", plan.removal_order},
            {"target_removals", plan.target_removals}};
}

PruningPlan plan_from_json(const json& j) {
    PruningPlan plan;
    plan.model = field<std::string>(j, "model");
    try {
        plan.strategy = strategy_from_string(field<std::string>(j, "strategy"));
    } catch (const FormatError&) {
        throw;
    } catch (const Error& e) {
        throw FormatError(0, e.what());
    }
    const auto prot = field<std::vector<int>>(j, "protected");
    plan.protected_layers = {prot.begin(), prot.end()};
    const auto scores = field<json>(j, "scores");
    if (!scores.is_array()) throw FormatError(0, "field 'scores' must be an array");
    for (const auto& s : scores) {
        LayerImportanceScore r;
        r.layer = field<int>(s, "layer");
        r.s_avg = field<double>(s, "s_avg");
        if (s.contains("per_sample")) r.per_sample = field<std::vector<double>>(s, "per_sample");
        plan.scores.push_back(std::move(r));
    }
    plan.removal_order = field<std::vector<int>>(j, "removal_order");
    plan.target_removals = field<int>(j, "target_removals");

    std::vector<std::size_t> none;
    for (int l : plan.protected_layers)
        if (l < 1) throw ValidationError(none, "protected layer " + std::to_string(l) + " is not 1-based");
    std::set<int> seen;
    for (int l : plan.removal_order) {
        if (plan.protected_layers.count(l))
            throw ValidationError(none, "plan removes protected layer " + std::to_string(l));
        if (l < 1 || !seen.insert(l).second)
            throw ValidationError(none, "removal_order has an invalid or repeated layer " + std::to_string(l));
    }
    if (plan.target_removals < 0
        || static_cast<std::size_t>(plan.target_removals) != plan.removal_order.size())
        throw ValidationError(none, "target_removals does not match removal_order");
    for (const auto& s : plan.scores) {
        if (!(s.s_avg >= -1.0 && s.s_avg <= 1.0))
            throw ValidationError(none, "score for layer " + std::to_string(s.layer) + " outside [-1, 1]");
    }
    return plan;
}

void export_plan(const PruningPlan& plan, const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    require(out.good(), ErrorCode::IoError, "cannot write " + path);
    out << plan_to_json(plan).dump(2) << '\n';
    require(out.good(), ErrorCode::IoError, "write failed for " + path);
}

PruningPlan import_plan(const std::string& path) { return plan_from_json(parse_file(path, "plan")); }

double derive_params_per_layer(double params_total, const std::vector<ReferenceRow>& rows) {
    double num = 0.0;
    double den = 0.0;
    for (const auto& r : rows) {
        num += r.layers_removed * (params_total - r.params_b);
        den += static_cast<double>(r.layers_removed) * r.layers_removed;
    }
    require(den > 0.0, ErrorCode::ConfigError, "need a reference row with layers removed");
    return num / den;
}

ModelProfile ModelProfile::from_json(const json& j) {
    ModelProfile p;
    try {
        p.name = j.at("name").get<std::string>();
        p.layer_count = j.at("layer_count").get<int>();
        p.params_total = j.at("params_total").get<double>();
        p.params_per_layer = j.value("params_per_layer", 0.0);
        for (const auto& r : j.value("reference", json::array())) {
            ReferenceRow row;
            row.layers_removed = r.at("layers_removed").get<int>();
            row.params_b = r.at("params_b").get<double>();
            row.compression_pct = r.at("compression_pct").get<double>();
            if (r.contains("vram_gb")) row.vram_gb = r["vram_gb"].get<double>();
            if (r.contains("latency_ms_per_token"))
                row.latency_ms_per_token = r["latency_ms_per_token"].get<double>();
            row.judge_scores = r.value("judge_scores", json::object());
            p.reference.push_back(std::move(row));
        }
    } catch (const json::exception& e) {
        fail(ErrorCode::ConfigError, std::string("model profile: ") + e.what());
    }
    require(p.layer_count >= 1 && p.params_total > 0.0, ErrorCode::ConfigError,
            "model profile needs positive layer_count and params_total");
    if (p.params_per_layer <= 0.0) p.params_per_layer = derive_params_per_layer(p.params_total, p.reference);
    return p;
}

json ModelProfile::to_json() const {
    json rows = json::array();
    for (const auto& r : reference) {
        json row{{"layers_removed", r.layers_removed},
                 {"params_b", r.params_b},
                 {"compression_pct", r.compression_pct},
                 {"judge_scores", r.judge_scores}};
        if (r.vram_gb) row["vram_gb"] = *r.vram_gb;
        if (r.latency_ms_per_token) row["latency_ms_per_token"] = *r.latency_ms_per_token;
        rows.push_back(std::move(row));
    }
    return {{"name", name},
            {"layer_count", layer_count},
            {"params_total", params_total},
            {"params_per_layer", params_per_layer},
            {"reference", rows}};
}

ModelProfile load_profile(const std::string& path) {
    std::ifstream in(path);
    require(in.good(), ErrorCode::NotFound, "cannot open model profile " + path);
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        fail(ErrorCode::ConfigError, "model profile " + path + ": " + e.what());
    }
    return ModelProfile::from_json(j);
}

}  // namespace clarify::pruning
