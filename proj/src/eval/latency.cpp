#include <algorithm>
#include <cmath>

#include "clarify/error.hpp"
#include "clarify/eval/eval.hpp"

namespace clarify::eval {

double nearest_rank(std::vector<double> values, double p) {
    require(!values.empty(), ErrorCode::InvalidArgument, "percentile of an empty sample");
    require(p > 0.0 && p <= 100.0, ErrorCode::InvalidArgument, "percentile must be in (0, 100]");
    std::sort(values.begin(), values.end());
    const auto n = values.size();
    auto rank = static_cast<std::size_t>(std::ceil(p / 100.0 * static_cast<double>(n) - 1e-9));
    rank = std::clamp<std::size_t>(rank, 1, n);
    return values[rank - 1];
}

std::map<std::string, StageLatency> latency_report(const std::vector<std::map<std::string, double>>& samples) {
    require(!samples.empty(), ErrorCode::InvalidArgument, "latency report needs at least one sample");
    std::map<std::string, std::vector<double>> by_stage;
    for (const auto& s : samples)
        for (const auto& [stage, ms] : s) by_stage[stage].push_back(ms);

    std::map<std::string, StageLatency> out;
    for (const auto& [stage, values] : by_stage) {
        StageLatency l;
        l.count = values.size();
        double sum = 0.0;
        for (double v : values) sum += v;
        l.mean = sum / static_cast<double>(values.size());
        l.p50 = nearest_rank(values, 50.0);
        l.p95 = nearest_rank(values, 95.0);
        out.emplace(stage, l);
    }
    return out;
}

std::map<std::string, StageLatency> latency_report(const std::vector<pipeline::PipelineResponse>& samples) {
    std::vector<std::map<std::string, double>> timings;
    timings.reserve(samples.size());
    for (const auto& s : samples) timings.push_back(s.timings);
    return latency_report(timings);
}

nlohmann::json latency_to_json(const std::map<std::string, StageLatency>& report) {
    nlohmann::json j = nlohmann::json::object();
    for (const auto& [stage, l] : report)
        j[stage] = {{"mean_ms", l.mean}, {"p50_ms", l.p50}, {"p95_ms", l.p95}, {"count", l.count}};
    return j;
}

}  // namespace clarify::eval
