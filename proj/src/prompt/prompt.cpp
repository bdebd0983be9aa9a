#include "clarify/prompt/prompt.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "clarify/error.hpp"

namespace clarify::prompt {

namespace {

bool single_line(const std::string& s) { return s.find_first_of("\r\n") == std::string::npos; }

bool starts_with(std::string_view s, std::string_view prefix) {
    return s.substr(0, prefix.size()) == prefix;
}

std::string condition_line(const std::string& name, double confidence) {
    return kg::escape_field(name) + " (confidence " + format_confidence(confidence) + ")";
}

// Splits "<escaped name> (confidence d.dd)" at the LAST " (confidence ".
Candidate split_condition(std::string_view body, std::string& confidence_text) {
    const std::string_view marker = " (confidence ";
    const auto at = body.rfind(marker);
    if (at == std::string_view::npos || body.empty() || body.back() != ')')
        throw ParseError(1, "condition line lacks a confidence suffix");
    confidence_text = std::string(body.substr(at + marker.size(),
                                              body.size() - at - marker.size() - 1));
    Candidate c;
    c.class_name = kg::unescape_field(body.substr(0, at));
    try {
        std::size_t used = 0;
        c.confidence = std::stod(confidence_text, &used);
        if (used != confidence_text.size()) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
        throw ParseError(1, "bad confidence '" + confidence_text + "'");
    }
    return c;
}

}  // namespace

void PromptTemplate::validate() const {
    const std::pair<const char*, const std::string*> fields[] = {
        {"version", &version},
        {"system", &system_text},
        {"condition_prefix", &condition_prefix},
        {"alternative_prefix", &alternative_prefix},
        {"facts_header", &facts_header},
        {"fact_bullet", &fact_bullet},
        {"fallback_line", &fallback_line},
        {"question_prefix", &question_prefix}};
    for (const auto& [name, value] : fields) {
        require(!value->empty(), ErrorCode::ConfigError, std::string("template field '") + name + "' is empty");
        if (value != &system_text)
            require(single_line(*value), ErrorCode::ConfigError,
                    std::string("template field '") + name + "' must be a single line");
    }
    require(!starts_with(fact_bullet, question_prefix) && !starts_with(fallback_line, question_prefix)
                && !starts_with(facts_header, alternative_prefix),
            ErrorCode::ConfigError, "template lines are ambiguous");
}

PromptTemplate PromptTemplate::from_json(const nlohmann::json& j) {
    PromptTemplate t;
    try {
        t.version = j.at("version").get<std::string>();
        t.system_text = j.at("system").get<std::string>();
        t.condition_prefix = j.at("condition_prefix").get<std::string>();
        t.alternative_prefix = j.at("alternative_prefix").get<std::string>();
        t.facts_header = j.at("facts_header").get<std::string>();
        t.fact_bullet = j.at("fact_bullet").get<std::string>();
        t.fallback_line = j.at("fallback_line").get<std::string>();
        t.question_prefix = j.at("question_prefix").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::ConfigError, std::string("prompt template: ") + e.what());
    }
    t.validate();
    return t;
}

nlohmann::json PromptTemplate::to_json() const {
    return {{"version", version},
            {"system", system_text},
            {"condition_prefix", condition_prefix},
            {"alternative_prefix", alternative_prefix},
            {"facts_header", facts_header},
            {"fact_bullet", fact_bullet},
            {"fallback_line", fallback_line},
            {"question_prefix", question_prefix}};
}

const PromptTemplate& default_template() {
    static const PromptTemplate t{
        "v1",
        "You are a careful dermatology assistant. Use the detected condition and the provided "
        "facts. If facts are insufficient, say so. Do not invent diagnoses.",
        "Detected condition: ",
        "Alternative candidate: ",
        "Knowledge-base facts:",
        "- ",
        "No grounded knowledge-base facts were retrieved.",
        "Patient question: "};
    return t;
}

PromptTemplate load_template(const std::string& path) {
    std::ifstream in(path);
    require(in.good(), ErrorCode::NotFound, "cannot open prompt template " + path);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        fail(ErrorCode::ConfigError, "prompt template " + path + ": " + e.what());
    }
    return PromptTemplate::from_json(j);
}

std::string format_confidence(double confidence) {
    // The epsilon keeps values such as 0.29 (stored as 0.28999...) from
    // truncating one step low.
    const auto hundredths = static_cast<long long>(std::floor(confidence * 100.0 + 1e-9));
    char buf[32];
    std::snprintf(buf, sizeof buf, "%lld.%02lld", hundredths / 100, hundredths % 100);
    return buf;
}

std::size_t count_chars(const std::string& text) {
    std::size_t n = 0;
    for (unsigned char c : text)
        if ((c & 0xC0) != 0x80) ++n;
    return n;
}

GuidedPrompt build_prompt(const std::string& diagnosis, double confidence,
                          const std::optional<kg::ContextPack>& context, const std::string& query,
                          const PromptOptions& options, const PromptTemplate& tmpl) {
    require(!diagnosis.empty(), ErrorCode::InvalidArgument, "diagnosis must be non-empty");
    require(query.find_first_not_of(" \t\r\n") != std::string::npos, ErrorCode::InvalidArgument,
            "query must be non-empty");
    require(std::isfinite(confidence) && confidence >= 0.0 && confidence <= 1.0,
            ErrorCode::InvalidArgument, "confidence must be in [0, 1]");
    if (options.alternative) {
        const auto& a = *options.alternative;
        require(!a.class_name.empty() && a.confidence >= 0.0 && a.confidence <= 1.0,
                ErrorCode::InvalidArgument, "alternative candidate is invalid");
    }

    std::string head = tmpl.condition_prefix + condition_line(diagnosis, confidence) + "\n";
    if (options.alternative) {
        head += tmpl.alternative_prefix
                + condition_line(options.alternative->class_name, options.alternative->confidence)
                + "\n";
    }
    head += tmpl.facts_header + "\n";
    const std::string tail = tmpl.question_prefix + query;

    std::vector<std::string> lines;
    if (context) {
        for (const auto& f : context->facts) lines.push_back(tmpl.fact_bullet + kg::render_fact_line(f));
    }

    // Longest fact prefix that fits. Each kept line costs its length plus a newline.
    const std::size_t fixed = count_chars(head) + count_chars(tail);
    std::size_t used = fixed;
    std::size_t keep = 0;
    for (; keep < lines.size(); ++keep) {
        const std::size_t cost = count_chars(lines[keep]) + 1;
        if (used + cost > options.char_budget) break;
        used += cost;
    }
    if (keep == 0 && fixed + count_chars(tmpl.fallback_line) + 1 > options.char_budget) {
        fail(ErrorCode::PromptBudgetExceeded,
             "prompt needs " + std::to_string(fixed + count_chars(tmpl.fallback_line) + 1)
                 + " characters without facts; budget is " + std::to_string(options.char_budget));
    }

    std::string body;
    for (std::size_t i = 0; i < keep; ++i) body += lines[i] + "\n";
    if (keep == 0) body = tmpl.fallback_line + "\n";

    GuidedPrompt p;
    p.system_text = tmpl.system_text;
    p.user_text = head + body + tail;
    p.diagnosis = diagnosis;
    p.confidence = confidence;
    p.original_query = query;
    p.template_version = tmpl.version;
    if (context) {
        kg::ContextPack kept = *context;
        kept.facts.resize(keep);
        kept.rendered_text = kg::escape_field(kept.anchor.label);
        for (const auto& f : kept.facts) kept.rendered_text += "\n" + kg::render_fact_line(f);
        p.context = std::move(kept);
    }
    return p;
}

gateway::ChatRequest render_messages(const GuidedPrompt& p,
                                     const std::optional<gateway::ImageInput>& image) {
    gateway::ChatRequest req;
    req.system_text = p.system_text;
    req.user_text = p.user_text;
    req.image = image;
    return req;
}

ParsedPrompt parse_prompt(const std::string& user_text, const PromptTemplate& tmpl) {
    ParsedPrompt out;
    std::size_t pos = 0;
    std::size_t line_no = 0;
    auto next_line = [&]() -> std::string_view {
        const auto end = user_text.find('\n', pos);
        if (end == std::string::npos) throw ParseError(line_no + 1, "prompt ended early");
        std::string_view line(user_text.data() + pos, end - pos);
        pos = end + 1;
        ++line_no;
        return line;
    };

    auto line = next_line();
    if (!starts_with(line, tmpl.condition_prefix)) throw ParseError(line_no, "missing condition line");
    const auto diag = split_condition(line.substr(tmpl.condition_prefix.size()), out.confidence_text);
    out.diagnosis = diag.class_name;

    line = next_line();
    if (starts_with(line, tmpl.alternative_prefix)) {
        std::string ignored;
        out.alternative = split_condition(line.substr(tmpl.alternative_prefix.size()), ignored);
        line = next_line();
    }
    if (line != tmpl.facts_header) throw ParseError(line_no, "missing facts header");

    for (;;) {
        if (starts_with(std::string_view(user_text).substr(pos), tmpl.question_prefix)) {
            out.query = user_text.substr(pos + tmpl.question_prefix.size());
            break;
        }
        line = next_line();
        if (line == tmpl.fallback_line && out.facts.empty() && !out.fallback) {
            out.fallback = true;
            continue;
        }
        if (out.fallback || !starts_with(line, tmpl.fact_bullet))
            throw ParseError(line_no, "unexpected line in facts block");
        auto fact = kg::parse_fact_line(line.substr(tmpl.fact_bullet.size()));
        if (!fact) throw ParseError(line_no, "malformed fact line");
        out.facts.push_back(std::move(*fact));
    }
    if (!out.fallback && out.facts.empty()) throw ParseError(line_no, "facts block is empty");
    return out;
}

}  // namespace clarify::prompt
