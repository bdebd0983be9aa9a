#include <filesystem>
#include <fstream>

#include "clarify/error.hpp"
#include "clarify/gateway/stubs.hpp"
#include "clarify/pipeline/pipeline.hpp"
#include "clarify/specialist/io.hpp"

namespace clarify::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string resolve(const std::string& base_dir, const std::string& path) {
    if (path.empty() || fs::path(path).is_absolute()) return path;
    return (fs::path(base_dir) / path).lexically_normal().string();
}

// An endpoint slot is a JSON object; after the environment override it is
// remote when base_url is set and falls back to the offline stub otherwise.
gateway::EndpointConfig endpoint(const json& slot, const char* url_var, int timeout_ms) {
    gateway::EndpointConfig cfg;
    if (slot.is_object()) cfg = gateway::EndpointConfig::from_json(slot);
    if (timeout_ms > 0 && !(slot.is_object() && slot.contains("timeout_ms"))) cfg.timeout_ms = timeout_ms;
    return gateway::with_env_overrides(cfg, url_var);
}

std::size_t stub_dim(const json& slot, std::size_t fallback) {
    return slot.is_object() ? slot.value("stub_dim", fallback) : fallback;
}

}  // namespace

ServiceConfig ServiceConfig::from_json(const json& j, const std::string& base_dir) {
    ServiceConfig c;
    c.base_dir = base_dir;
    try {
        if (j.contains("bind")) {
            c.host = j["bind"].value("host", c.host);
            c.port = j["bind"].value("port", c.port);
        }
        if (j.contains("api_key") && !j["api_key"].is_null()) c.api_key = j["api_key"].get<std::string>();
        c.data_dir = resolve(base_dir, j.value("data_dir", std::string{}));
        c.components = j.value("components", json::object());
    } catch (const json::exception& e) {
        fail(ErrorCode::ConfigError, std::string("service config: ") + e.what());
    }
    c.pipeline = PipelineConfig::from_json(j.value("pipeline", json::object()));
    require(c.port >= 0 && c.port <= 65535, ErrorCode::ConfigError, "port out of range");
    return c;
}

ServiceConfig ServiceConfig::load(const std::string& path) {
    std::ifstream in(path);
    require(in.good(), ErrorCode::NotFound, "cannot open config " + path);
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        fail(ErrorCode::ConfigError, "config " + path + ": " + e.what());
    }
    const auto dir = fs::path(path).parent_path().string();
    return from_json(j, dir.empty() ? "." : dir);
}

Components build_components(const ServiceConfig& cfg) {
    const json& comp = cfg.components;
    Components out;

    const json spec = comp.value("specialist", json{{"mode", "mock"}});
    const auto mode = spec.value("mode", std::string("local_head"));
    if (mode == "local_head") {
        const auto head_path = resolve(cfg.base_dir, spec.value("head", std::string{}));
        require(!head_path.empty(), ErrorCode::ConfigError, "specialist.head is required for local_head mode");
        auto head = std::make_shared<const specialist::ClassifierHead>(specialist::load_head(head_path));
        const json backbone_slot = spec.value("backbone", json::object());
        const auto bcfg = endpoint(backbone_slot, "CLARIFY_BACKBONE_URL", cfg.pipeline.specialist_timeout_ms);
        std::shared_ptr<const gateway::ImageEmbedder> backbone;
        if (bcfg.base_url.empty()) {
            backbone = std::make_shared<gateway::HashImageEmbedder>(stub_dim(backbone_slot, head->input_dim()));
        } else {
            backbone = std::make_shared<gateway::HttpImageEmbedder>(bcfg);
        }
        out.diagnoser = std::make_shared<LocalHeadDiagnoser>(backbone, head);
    } else if (mode == "external") {
        out.diagnoser = std::make_shared<HttpDiagnoser>(
            endpoint(spec.value("endpoint", json::object()), "CLARIFY_CLASSIFIER_URL", cfg.pipeline.specialist_timeout_ms));
    } else if (mode == "mock") {
        out.diagnoser = std::make_shared<MockDiagnoser>(spec.value("class", std::string("Rosacea")),
                                                        spec.value("confidence", 0.9));
    } else {
        fail(ErrorCode::ConfigError, "unknown specialist mode '" + mode + "'");
    }

    const json embed_slot = comp.value("embedder", json::object());
    const auto ecfg = endpoint(embed_slot, "CLARIFY_EMBED_URL", 0);
    if (ecfg.base_url.empty()) {
        out.embedder = std::make_shared<gateway::HashTextEmbedder>(stub_dim(embed_slot, 384));
    } else {
        out.embedder = std::make_shared<gateway::HttpTextEmbedder>(ecfg);
    }

    const auto graph_path = resolve(cfg.base_dir, comp.value("graph", std::string{}));
    out.graph = std::make_shared<const kg::KnowledgeGraph>(graph_path.empty() ? kg::KnowledgeGraph{}
                                                                              : kg::load_graph(graph_path));
    if (!out.graph->entities().empty()) {
        require(out.graph->has_index(), ErrorCode::ConfigError, "graph " + graph_path + " has no embedding index");
        require(out.graph->index().embedder == out.embedder->identity(), ErrorCode::ConfigError,
                "graph was indexed with '" + out.graph->index().embedder + "' but the pipeline embedder is '"
                    + out.embedder->identity() + "'");
    }

    const auto gcfg = endpoint(comp.value("generalist", json::object()), "CLARIFY_CHAT_URL",
                               cfg.pipeline.generalist_timeout_ms);
    if (gcfg.base_url.empty()) {
        out.generalist = std::make_shared<gateway::EchoChatModel>();
    } else {
        out.generalist = std::make_shared<gateway::HttpChatModel>(gcfg);
    }

    const auto template_path = resolve(cfg.base_dir, comp.value("prompt_template", std::string{}));
    if (!template_path.empty()) out.prompt_template = prompt::load_template(template_path);

    out.validate();
    return out;
}

}  // namespace clarify::pipeline
