#include "clarify/error.hpp"
#include "clarify/gateway/transport.hpp"
#include "clarify/pruning/pruning.hpp"

namespace clarify::pruning {

HttpAblatableModel::HttpAblatableModel(gateway::EndpointConfig cfg, int layer_count,
                                       double params_total, double params_per_layer)
    : cfg_(std::move(cfg)),
      layer_count_(layer_count),
      params_total_(params_total),
      params_per_layer_(params_per_layer) {
    cfg_.validate();
    require(layer_count_ >= 1 && params_total_ > 0.0 && params_per_layer_ > 0.0,
            ErrorCode::ConfigError, "model profile needs positive layer_count and parameter sizes");
}

std::string HttpAblatableModel::generate(const std::string& input,
                                         const std::set<int>& skip_layers) const {
    // Calibration runs decode greedily with a fixed length so scores are reproducible.
    const nlohmann::json body{{"prompt", input},
                              {"skip_layers", std::vector<int>(skip_layers.begin(), skip_layers.end())},
                              {"max_tokens", 64},
                              {"temperature", 0}};
    const auto reply = gateway::post_json(cfg_, "/v1/generate", body);
    if (!reply.is_object() || !reply.contains("text") || !reply["text"].is_string())
        fail(ErrorCode::ProtocolViolation, "generate reply lacks a string 'text' field");
    return reply["text"].get<std::string>();
}

}  // namespace clarify::pruning
