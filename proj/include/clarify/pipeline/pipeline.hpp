#pragma once

#include <chrono>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "clarify/gateway/clients.hpp"
#include "clarify/gateway/types.hpp"
#include "clarify/kg/graph.hpp"
#include "clarify/prompt/prompt.hpp"
#include "clarify/specialist/head.hpp"

namespace clarify::pipeline {

enum class DiagnosisSource { LocalHead, ExternalClassifier, Mock };

std::string to_string(DiagnosisSource s);
DiagnosisSource source_from_string(const std::string& s);

struct DiagnosisResult {
    std::string class_name;
    double confidence = 0.0;
    /// Parallel arrays; both empty when the source reports no distribution.
    std::vector<std::string> class_names;
    std::vector<double> probs;
    DiagnosisSource source = DiagnosisSource::Mock;

    /// Second most likely class, if a distribution is present.
    std::optional<prompt::Candidate> runner_up() const;

    nlohmann::json to_json() const;
    static DiagnosisResult from_json(const nlohmann::json& j);

    friend bool operator==(const DiagnosisResult&, const DiagnosisResult&) = default;
};

/// Image → diagnosis. Implementations are immutable and thread-safe.
class Diagnoser {
public:
    virtual ~Diagnoser() = default;
    virtual DiagnosisResult diagnose(const gateway::ImageInput& image) const = 0;
    virtual std::string name() const = 0;
};

/// Backbone embedding followed by the local classifier head.
class LocalHeadDiagnoser final : public Diagnoser {
public:
    LocalHeadDiagnoser(std::shared_ptr<const gateway::ImageEmbedder> backbone,
                       std::shared_ptr<const specialist::ClassifierHead> head);

    DiagnosisResult diagnose(const gateway::ImageInput& image) const override;
    std::string name() const override;

    const specialist::ClassifierHead& head() const { return *head_; }
    const gateway::ImageEmbedder& backbone() const { return *backbone_; }

private:
    std::shared_ptr<const gateway::ImageEmbedder> backbone_;
    std::shared_ptr<const specialist::ClassifierHead> head_;
};

/// Remote classifier: POST {base}/classify with {"model", "image": data URI};
/// reply {"class": str, "confidence": num, "probs": {class: p, ...}?}.
class HttpDiagnoser final : public Diagnoser {
public:
    explicit HttpDiagnoser(gateway::EndpointConfig cfg);

    DiagnosisResult diagnose(const gateway::ImageInput& image) const override;
    std::string name() const override;

private:
    gateway::EndpointConfig cfg_;
};

/// Test double driven by a callback.
class MockDiagnoser final : public Diagnoser {
public:
    using Fn = std::function<DiagnosisResult(const gateway::ImageInput&)>;
    explicit MockDiagnoser(Fn fn);
    /// Always answers (class_name, confidence).
    MockDiagnoser(std::string class_name, double confidence);

    DiagnosisResult diagnose(const gateway::ImageInput& image) const override;
    std::string name() const override { return "mock"; }

private:
    Fn fn_;
};

struct PipelineConfig {
    double similarity_threshold = 0.35;
    int hop_depth = 2;
    std::size_t max_facts = 12;
    std::size_t char_budget = 6000;
    /// Below this confidence the prompt also names the runner-up class.
    double low_confidence_threshold = 0.30;
    int specialist_timeout_ms = 5000;
    int retrieval_timeout_ms = 1000;
    int generalist_timeout_ms = 60000;

    void validate() const;
    static PipelineConfig from_json(const nlohmann::json& j);
    nlohmann::json to_json() const;
};

/// Immutable set of shared components. The pipeline swaps whole snapshots.
struct Components {
    std::shared_ptr<const Diagnoser> diagnoser;
    std::shared_ptr<const kg::KnowledgeGraph> graph;
    std::shared_ptr<const gateway::TextEmbedder> embedder;
    std::shared_ptr<const gateway::ChatModel> generalist;
    prompt::PromptTemplate prompt_template = prompt::default_template();

    void validate() const;
};

struct PipelineResponse {
    std::string session_id;
    std::string answer;
    DiagnosisResult diagnosis;
    std::optional<kg::ContextPack> context_used;
    std::string prompt_version;
    /// Milliseconds per stage: specialist, retrieval, prompt, generalist.
    std::map<std::string, double> timings;

    nlohmann::json to_json() const;
    static PipelineResponse from_json(const nlohmann::json& j);
};

nlohmann::json context_to_json(const kg::ContextPack& pack);
kg::ContextPack context_from_json(const nlohmann::json& j);

struct Turn {
    std::string query;
    bool had_image = false;
    std::string timestamp;  // ISO-8601 UTC
    PipelineResponse response;

    nlohmann::json to_json() const;
    static Turn from_json(const nlohmann::json& j);
};

struct Session {
    std::string id;
    std::vector<Turn> turns;

    /// Diagnosis of the latest turn that carried an image.
    std::optional<DiagnosisResult> sticky_diagnosis() const;
    nlohmann::json to_json() const;
};

/// Append-only session transcripts, one JSONL file per session under
/// data_dir (in memory only when data_dir is empty). Turns within one
/// session are serialized through lock().
class SessionStore {
public:
    explicit SessionStore(std::string data_dir = {});

    /// Fresh unique id (32 hex chars).
    std::string create();
    bool exists(const std::string& id) const;
    /// NotFound when the id is unknown or malformed.
    Session load(const std::string& id) const;
    /// Persists one turn; the session must exist.
    void append(const std::string& id, const Turn& turn);

    std::unique_lock<std::mutex> lock(const std::string& id);

    const std::string& data_dir() const noexcept { return data_dir_; }

private:
    std::string path_for(const std::string& id) const;

    std::string data_dir_;
    mutable std::mutex mu_;
    mutable std::map<std::string, std::vector<Turn>> sessions_;  // cache of loaded transcripts
    std::map<std::string, std::shared_ptr<std::mutex>> locks_;
};

/// Sink for structured log records (one JSON object per stage).
using LogSink = std::function<void(const nlohmann::json&)>;
/// Writes each record as one line to stderr.
LogSink stderr_log_sink();

struct AskRequest {
    std::string query;
    std::optional<gateway::ImageInput> image;
    std::optional<std::string> session_id;
};

/// Specialist → retrieval → prompt → generalist orchestration.
class Pipeline {
public:
    Pipeline(Components components, PipelineConfig config, std::shared_ptr<SessionStore> sessions,
             LogSink log = stderr_log_sink());

    /// Errors: InvalidRequest (blank query, first turn without image),
    /// InvalidInput (bad image), NotFound (unknown session), StageError.
    PipelineResponse ask(const AskRequest& request);

    /// InvalidInput for a bad image; StageError("specialist") otherwise.
    DiagnosisResult diagnose(const gateway::ImageInput& image) const;

    Session session(const std::string& id) const { return sessions_->load(id); }

    std::shared_ptr<const Components> snapshot() const;
    void swap_components(Components next);

    const PipelineConfig& config() const noexcept { return config_; }

private:
    std::optional<kg::ContextPack> retrieve(const Components& c, const std::string& diagnosis) const;
    void log_stage(const std::string& session_id, const std::string& stage, double ms,
                   const std::string& template_version) const;

    mutable std::mutex snapshot_mu_;
    std::shared_ptr<const Components> components_;
    PipelineConfig config_;
    std::shared_ptr<SessionStore> sessions_;
    LogSink log_;
};

// ---------------------------------------------------------------------------
// Service

struct ServiceConfig {
    std::string host = "127.0.0.1";
    int port = 8080;
    std::optional<std::string> api_key;
    std::string data_dir;
    PipelineConfig pipeline;
    /// Raw component section; see build_components().
    nlohmann::json components = nlohmann::json::object();
    /// Directory relative paths are resolved against.
    std::string base_dir = ".";

    static ServiceConfig from_json(const nlohmann::json& j, const std::string& base_dir = ".");
    static ServiceConfig load(const std::string& path);
};

/// Instantiates the component snapshot described by cfg.components:
///   specialist: {"mode": "local_head", "head": path, "backbone": endpoint?}
///             | {"mode": "external", "endpoint": {...}}
///             | {"mode": "mock", "class": str, "confidence": num}
///   graph: path (optional; absent = empty graph)
///   embedder: endpoint | {"stub_dim": n}   (default stub, dim 384)
///   generalist: endpoint | "echo"
///   prompt_template: path (optional)
/// CLARIFY_* environment variables override endpoint URLs and the API key.
Components build_components(const ServiceConfig& cfg);

/// HTTP front end: POST /v1/ask, POST /v1/diagnose, GET /v1/session/{id},
/// GET /health.
class Service {
public:
    Service(std::shared_ptr<Pipeline> pipeline, std::optional<std::string> api_key = std::nullopt);
    ~Service();

    Service(const Service&) = delete;
    Service& operator=(const Service&) = delete;

    /// Binds; port 0 picks a free port. Throws IoError with a clear message
    /// when the address is unavailable. Returns the bound port.
    int bind(const std::string& host, int port);
    /// Serves on a background thread.
    void start();
    /// Serves on the calling thread until stop().
    void run();
    /// Stops accepting and waits for in-flight requests.
    void stop();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace clarify::pipeline
