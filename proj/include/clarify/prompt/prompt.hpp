#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "clarify/gateway/types.hpp"
#include "clarify/kg/graph.hpp"

namespace clarify::prompt {

/// The fixed wording of a guided prompt. The user text is laid out as
///
///   {condition_prefix}{diagnosis} (confidence {c:.2f truncated})
///   [{alternative_prefix}{name} (confidence {c})]
///   {facts_header}
///   {fact_bullet}{fact line}      (one per fact, or the fallback line)
///   {question_prefix}{query}
///
/// Only the wording is configurable; the line order is not.
struct PromptTemplate {
    std::string version;
    std::string system_text;
    std::string condition_prefix;
    std::string alternative_prefix;
    std::string facts_header;
    std::string fact_bullet;
    std::string fallback_line;
    std::string question_prefix;

    /// Throws ConfigError when a field is empty or spans lines.
    void validate() const;

    static PromptTemplate from_json(const nlohmann::json& j);
    nlohmann::json to_json() const;

    friend bool operator==(const PromptTemplate&, const PromptTemplate&) = default;
};

/// Template "v1", compiled in.
const PromptTemplate& default_template();
PromptTemplate load_template(const std::string& path);

struct Candidate {
    std::string class_name;
    double confidence = 0.0;
};

struct PromptOptions {
    /// Maximum length of user_text in Unicode code points.
    std::size_t char_budget = 6000;
    /// Runner-up class shown when the classifier is unsure.
    std::optional<Candidate> alternative;
};

struct GuidedPrompt {
    std::string system_text;
    std::string user_text;
    std::string diagnosis;
    double confidence = 0.0;
    /// The facts that actually made it into user_text (after truncation).
    std::optional<kg::ContextPack> context;
    std::string original_query;
    std::string template_version;
};

/// Deterministic prompt assembly. Facts are dropped tail-first until
/// user_text fits the budget; the condition line and the question are
/// never dropped. Throws InvalidArgument on bad inputs and
/// PromptBudgetExceeded when even the fact-free prompt is too long.
GuidedPrompt build_prompt(const std::string& diagnosis, double confidence,
                          const std::optional<kg::ContextPack>& context, const std::string& query,
                          const PromptOptions& options = {},
                          const PromptTemplate& tmpl = default_template());

gateway::ChatRequest render_messages(const GuidedPrompt& p,
                                     const std::optional<gateway::ImageInput>& image);

/// Confidence as rendered in the prompt: two decimals, truncated.
std::string format_confidence(double confidence);

/// Number of UTF-8 code points.
std::size_t count_chars(const std::string& text);

struct ParsedPrompt {
    std::string diagnosis;
    std::string confidence_text;
    std::optional<Candidate> alternative;
    std::vector<kg::Fact> facts;
    bool fallback = false;
    std::string query;
};

/// Inverse of the user-text layout. Throws ParseError when `user_text` was not
/// produced by `tmpl`.
ParsedPrompt parse_prompt(const std::string& user_text,
                          const PromptTemplate& tmpl = default_template());

}  // namespace clarify::prompt
