#include "clarify/pipeline/pipeline.hpp"

#include <cstdio>
#include <ctime>
#include <iostream>
#include <limits>

#include "clarify/error.hpp"

namespace clarify::pipeline {

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point start) {
    return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

std::string now_iso8601() {
    const auto now = std::chrono::system_clock::now();
    const auto secs = std::chrono::system_clock::to_time_t(now);
    const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count() % 1000;
    std::tm tm{};
    gmtime_r(&secs, &tm);
    char buf[96];
    std::snprintf(buf, sizeof buf, "%04d-%02d-%02dT%02d:%02d:%02d.%03dZ", tm.tm_year + 1900, tm.tm_mon + 1,
                  tm.tm_mday, tm.tm_hour, tm.tm_min, tm.tm_sec, static_cast<int>(ms));
    return buf;
}

bool blank(const std::string& s) { return s.find_first_not_of(" \t\r\n") == std::string::npos; }

// Runs one stage, converting any failure into a StageError tagged with the
// stage name, and enforcing the stage's time limit.
template <typename F>
auto run_stage(const std::string& stage, int timeout_ms, double& elapsed_ms, F&& fn) {
    const auto start = Clock::now();
    try {
        auto result = fn();
        elapsed_ms = ms_since(start);
        if (elapsed_ms > timeout_ms) {
            throw StageError(stage, ErrorCode::Timeout,
                             stage + " stage took " + std::to_string(static_cast<long>(elapsed_ms))
                                 + " ms (limit " + std::to_string(timeout_ms) + " ms)");
        }
        return result;
    } catch (const StageError&) {
        throw;
    } catch (const Error& e) {
        throw StageError(stage, e.code(), e.what());
    } catch (const std::exception& e) {
        throw StageError(stage, ErrorCode::UpstreamError, e.what());
    }
}

}  // namespace

void PipelineConfig::validate() const {
    require(similarity_threshold >= -1.0 && similarity_threshold <= 1.0, ErrorCode::ConfigError,
            "similarity_threshold must be in [-1, 1]");
    require(hop_depth >= 1, ErrorCode::ConfigError, "hop_depth must be >= 1");
    require(max_facts >= 1, ErrorCode::ConfigError, "max_facts must be >= 1");
    require(char_budget >= 1, ErrorCode::ConfigError, "char_budget must be >= 1");
    require(low_confidence_threshold >= 0.0 && low_confidence_threshold <= 1.0, ErrorCode::ConfigError,
            "low_confidence_threshold must be in [0, 1]");
    require(specialist_timeout_ms > 0 && retrieval_timeout_ms > 0 && generalist_timeout_ms > 0,
            ErrorCode::ConfigError, "stage timeouts must be positive");
}

PipelineConfig PipelineConfig::from_json(const nlohmann::json& j) {
    PipelineConfig c;
    try {
        c.similarity_threshold = j.value("similarity_threshold", c.similarity_threshold);
        c.hop_depth = j.value("hop_depth", c.hop_depth);
        c.max_facts = j.value("max_facts", c.max_facts);
        c.char_budget = j.value("char_budget", c.char_budget);
        c.low_confidence_threshold = j.value("low_confidence_threshold", c.low_confidence_threshold);
        if (j.contains("timeouts_ms")) {
            const auto& t = j["timeouts_ms"];
            c.specialist_timeout_ms = t.value("specialist", c.specialist_timeout_ms);
            c.retrieval_timeout_ms = t.value("retrieval", c.retrieval_timeout_ms);
            c.generalist_timeout_ms = t.value("generalist", c.generalist_timeout_ms);
        }
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::ConfigError, std::string("pipeline config: ") + e.what());
    }
    c.validate();
    return c;
}

nlohmann::json PipelineConfig::to_json() const {
    return {{"similarity_threshold", similarity_threshold},
            {"hop_depth", hop_depth},
            {"max_facts", max_facts},
            {"char_budget", char_budget},
            {"low_confidence_threshold", low_confidence_threshold},
            {"timeouts_ms",
             {{"specialist", specialist_timeout_ms},
              {"retrieval", retrieval_timeout_ms},
              {"generalist", generalist_timeout_ms}}}};
}

void Components::validate() const {
    require(diagnoser && embedder && generalist, ErrorCode::ConfigError,
            "pipeline needs a diagnoser, a text embedder and a generalist");
    prompt_template.validate();
}

LogSink stderr_log_sink() {
    auto mu = std::make_shared<std::mutex>();
    return [mu](const nlohmann::json& record) {
        std::lock_guard<std::mutex> g(*mu);
        std::cerr << record.dump() << '\n';
    };
}

Pipeline::Pipeline(Components components, PipelineConfig config, std::shared_ptr<SessionStore> sessions,
                   LogSink log)
    : config_(config), sessions_(std::move(sessions)), log_(std::move(log)) {
    components.validate();
    config_.validate();
    require(static_cast<bool>(sessions_), ErrorCode::ConfigError, "pipeline needs a session store");
    components_ = std::make_shared<const Components>(std::move(components));
}

std::shared_ptr<const Components> Pipeline::snapshot() const {
    std::lock_guard<std::mutex> g(snapshot_mu_);
    return components_;
}

void Pipeline::swap_components(Components next) {
    next.validate();
    auto fresh = std::make_shared<const Components>(std::move(next));
    std::lock_guard<std::mutex> g(snapshot_mu_);
    components_ = std::move(fresh);
}

void Pipeline::log_stage(const std::string& session_id, const std::string& stage, double ms,
                         const std::string& template_version) const {
    if (!log_) return;
    const auto mono_us =
        std::chrono::duration_cast<std::chrono::microseconds>(Clock::now().time_since_epoch()).count();
    log_({{"time", now_iso8601()},
          {"mono_us", mono_us},
          {"session_id", session_id},
          {"stage", stage},
          {"duration_ms", ms},
          {"template_version", template_version}});
}

std::optional<kg::ContextPack> Pipeline::retrieve(const Components& c, const std::string& diagnosis) const {
    if (!c.graph || c.graph->entities().empty() || !c.graph->has_index()) return std::nullopt;
    const auto matches = kg::semantic_lookup(*c.graph, *c.embedder, diagnosis, 1);
    if (matches.empty() || matches.front().similarity < config_.similarity_threshold) return std::nullopt;
    return kg::neighborhood(*c.graph, matches.front().entity.id, config_.hop_depth, config_.max_facts);
}

DiagnosisResult Pipeline::diagnose(const gateway::ImageInput& image) const {
    image.validate();
    const auto c = snapshot();
    double ms = 0.0;
    return run_stage("specialist", config_.specialist_timeout_ms, ms, [&] { return c->diagnoser->diagnose(image); });
}

PipelineResponse Pipeline::ask(const AskRequest& request) {
    require(!blank(request.query), ErrorCode::InvalidRequest, "query must be non-empty");
    if (request.image) request.image->validate();
    const auto c = snapshot();

    std::string id;
    if (request.session_id) {
        id = *request.session_id;
        require(sessions_->exists(id), ErrorCode::NotFound, "unknown session '" + id + "'");
    } else {
        require(request.image.has_value(), ErrorCode::InvalidRequest,
                "the first turn of a session needs an image");
        id = sessions_->create();
    }
    const auto session_lock = sessions_->lock(id);
    const Session session = sessions_->load(id);

    PipelineResponse resp;
    resp.session_id = id;
    resp.prompt_version = c->prompt_template.version;

    double ms = 0.0;
    if (request.image) {
        resp.diagnosis = run_stage("specialist", config_.specialist_timeout_ms, ms,
                                   [&] { return c->diagnoser->diagnose(*request.image); });
    } else {
        const auto sticky = session.sticky_diagnosis();
        require(sticky.has_value(), ErrorCode::InvalidRequest,
                "session has no diagnosis yet; attach an image");
        const auto start = Clock::now();
        resp.diagnosis = *sticky;
        ms = ms_since(start);
    }
    resp.timings["specialist"] = ms;
    log_stage(id, "specialist", ms, resp.prompt_version);

    resp.context_used = run_stage("retrieval", config_.retrieval_timeout_ms, ms,
                                  [&] { return retrieve(*c, resp.diagnosis.class_name); });
    resp.timings["retrieval"] = ms;
    log_stage(id, "retrieval", ms, resp.prompt_version);

    prompt::PromptOptions options;
    options.char_budget = config_.char_budget;
    if (resp.diagnosis.confidence < config_.low_confidence_threshold) options.alternative = resp.diagnosis.runner_up();
    prompt::GuidedPrompt guided;
    try {
        guided = run_stage("prompt", std::numeric_limits<int>::max(), ms, [&] {
            return prompt::build_prompt(resp.diagnosis.class_name, resp.diagnosis.confidence, resp.context_used,
                                        request.query, options, c->prompt_template);
        });
    } catch (const StageError& e) {
        if (e.cause() == ErrorCode::PromptBudgetExceeded)
            fail(ErrorCode::InvalidRequest, std::string("query too long: ") + e.what());
        throw;
    }
    resp.context_used = guided.context;
    resp.timings["prompt"] = ms;
    log_stage(id, "prompt", ms, resp.prompt_version);

    const auto reply = run_stage("generalist", config_.generalist_timeout_ms, ms, [&] {
        return c->generalist->chat(prompt::render_messages(guided, request.image));
    });
    resp.answer = reply.text;
    resp.timings["generalist"] = ms;
    log_stage(id, "generalist", ms, resp.prompt_version);

    sessions_->append(id, Turn{request.query, request.image.has_value(), now_iso8601(), resp});
    return resp;
}

}  // namespace clarify::pipeline
