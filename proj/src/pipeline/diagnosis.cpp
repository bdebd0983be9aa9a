#include <algorithm>
#include <cmath>

#include "clarify/error.hpp"
#include "clarify/gateway/transport.hpp"
#include "clarify/pipeline/pipeline.hpp"

namespace clarify::pipeline {

std::string to_string(DiagnosisSource s) {
    switch (s) {
        case DiagnosisSource::LocalHead: return "local_head";
        case DiagnosisSource::ExternalClassifier: return "external_classifier";
        case DiagnosisSource::Mock: return "mock";
    }
    return "mock";
}

DiagnosisSource source_from_string(const std::string& s) {
    if (s == "local_head") return DiagnosisSource::LocalHead;
    if (s == "external_classifier") return DiagnosisSource::ExternalClassifier;
    if (s == "mock") return DiagnosisSource::Mock;
    fail(ErrorCode::InvalidArgument, "unknown diagnosis source '" + s + "'");
}

std::optional<prompt::Candidate> DiagnosisResult::runner_up() const {
    if (probs.size() < 2 || probs.size() != class_names.size()) return std::nullopt;
    std::size_t best = 0;
    for (std::size_t i = 1; i < probs.size(); ++i)
        if (probs[i] > probs[best]) best = i;
    std::optional<std::size_t> second;
    for (std::size_t i = 0; i < probs.size(); ++i) {
        if (i == best) continue;
        if (!second || probs[i] > probs[*second]) second = i;
    }
    return prompt::Candidate{class_names[*second], probs[*second]};
}

nlohmann::json DiagnosisResult::to_json() const {
    nlohmann::json j{{"class_name", class_name}, {"confidence", confidence}, {"source", to_string(source)}};
    if (!probs.empty()) {
        j["class_names"] = class_names;
        j["probs"] = probs;
    }
    return j;
}

DiagnosisResult DiagnosisResult::from_json(const nlohmann::json& j) {
    DiagnosisResult d;
    d.class_name = j.at("class_name").get<std::string>();
    d.confidence = j.at("confidence").get<double>();
    d.source = source_from_string(j.at("source").get<std::string>());
    if (j.contains("probs")) {
        d.probs = j.at("probs").get<std::vector<double>>();
        d.class_names = j.at("class_names").get<std::vector<std::string>>();
    }
    return d;
}

LocalHeadDiagnoser::LocalHeadDiagnoser(std::shared_ptr<const gateway::ImageEmbedder> backbone,
                                       std::shared_ptr<const specialist::ClassifierHead> head)
    : backbone_(std::move(backbone)), head_(std::move(head)) {
    require(backbone_ && head_, ErrorCode::ConfigError, "local head diagnoser needs a backbone and a head");
}

DiagnosisResult LocalHeadDiagnoser::diagnose(const gateway::ImageInput& image) const {
    const auto z = backbone_->embed(image);
    const auto p = specialist::predict(*head_, z);
    DiagnosisResult d;
    d.class_name = p.class_name;
    d.confidence = p.confidence;
    d.class_names = head_->class_names();
    d.probs = p.probs.values;
    d.source = DiagnosisSource::LocalHead;
    return d;
}

std::string LocalHeadDiagnoser::name() const { return "local_head(" + backbone_->identity() + ")"; }

HttpDiagnoser::HttpDiagnoser(gateway::EndpointConfig cfg) : cfg_(std::move(cfg)) { cfg_.validate(); }

std::string HttpDiagnoser::name() const { return "http:" + cfg_.base_url + "#" + cfg_.model_name; }

DiagnosisResult HttpDiagnoser::diagnose(const gateway::ImageInput& image) const {
    image.validate();
    const auto reply = gateway::post_json(
        cfg_, "/classify", {{"model", cfg_.model_name}, {"image", gateway::data_uri(image)}});
    DiagnosisResult d;
    d.source = DiagnosisSource::ExternalClassifier;
    try {
        d.class_name = reply.at("class").get<std::string>();
        d.confidence = reply.at("confidence").get<double>();
        if (reply.contains("probs")) {
            for (const auto& [name, p] : reply["probs"].items()) {
                d.class_names.push_back(name);
                d.probs.push_back(p.get<double>());
            }
        }
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::ProtocolViolation, std::string("classifier reply: ") + e.what());
    }
    if (d.class_name.empty() || !(d.confidence >= 0.0 && d.confidence <= 1.0))
        fail(ErrorCode::ProtocolViolation, "classifier reply has an empty class or bad confidence");
    return d;
}

MockDiagnoser::MockDiagnoser(Fn fn) : fn_(std::move(fn)) {
    require(static_cast<bool>(fn_), ErrorCode::ConfigError, "mock diagnoser needs a callback");
}

MockDiagnoser::MockDiagnoser(std::string class_name, double confidence)
    : fn_([class_name = std::move(class_name), confidence](const gateway::ImageInput&) {
          DiagnosisResult d;
          d.class_name = class_name;
          d.confidence = confidence;
          d.source = DiagnosisSource::Mock;
          return d;
      }) {}

DiagnosisResult MockDiagnoser::diagnose(const gateway::ImageInput& image) const {
    image.validate();
    return fn_(image);
}

}  // namespace clarify::pipeline
