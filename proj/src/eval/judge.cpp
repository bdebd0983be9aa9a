#include <charconv>
#include <fstream>

#include "clarify/error.hpp"
#include "clarify/eval/eval.hpp"

namespace clarify::eval {

namespace {

std::string_view trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

bool is_number(std::string_view s) {
    std::size_t i = 0;
    std::size_t digits = 0;
    while (i < s.size() && s[i] >= '0' && s[i] <= '9') ++i, ++digits;
    if (digits == 0) return false;
    if (i < s.size() && s[i] == '.') {
        ++i;
        std::size_t frac = 0;
        while (i < s.size() && s[i] >= '0' && s[i] <= '9') ++i, ++frac;
        if (frac == 0) return false;
    }
    return i == s.size();
}

// One pass over the template so slot values are never re-expanded.
std::string fill(const std::string& tmpl, const std::map<std::string, std::string>& slots) {
    std::string out;
    for (std::size_t i = 0; i < tmpl.size();) {
        if (tmpl[i] == '{') {
            const auto close = tmpl.find('}', i);
            if (close != std::string::npos) {
                const auto it = slots.find(tmpl.substr(i + 1, close - i - 1));
                if (it != slots.end()) {
                    out += it->second;
                    i = close + 1;
                    continue;
                }
            }
        }
        out += tmpl[i++];
    }
    return out;
}

}  // namespace

JudgeVerdict parse_judge_reply(const std::string& raw, const std::string& judge_model) {
    constexpr std::string_view kScore = "SCORE:";
    constexpr std::string_view kRationale = "RATIONALE:";

    std::vector<std::string_view> lines;
    for (std::size_t start = 0; start <= raw.size();) {
        auto end = raw.find('\n', start);
        if (end == std::string::npos) end = raw.size();
        lines.push_back(std::string_view(raw).substr(start, end - start));
        start = end + 1;
    }

    std::optional<std::size_t> score_line;
    for (std::size_t i = 0; i < lines.size(); ++i) {
        if (!trim(lines[i]).starts_with(kScore)) continue;
        if (score_line) throw JudgeParseError(raw, "judge reply has more than one SCORE line");
        score_line = i;
    }
    if (!score_line) throw JudgeParseError(raw, "judge reply has no SCORE line");

    const auto value = trim(trim(lines[*score_line]).substr(kScore.size()));
    if (!is_number(value)) throw JudgeParseError(raw, "SCORE value '" + std::string(value) + "' is not a number");
    double score = 0.0;
    const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), score);
    if (ec != std::errc() || ptr != value.data() + value.size())
        throw JudgeParseError(raw, "SCORE value '" + std::string(value) + "' is not a number");
    if (!(score >= 0.0 && score <= 100.0))
        throw JudgeParseError(raw, "SCORE " + std::string(value) + " outside [0, 100]");

    JudgeVerdict v;
    v.score = score;
    v.judge_model = judge_model;
    std::string rationale;
    bool in_rationale = false;
    for (std::size_t i = 0; i < lines.size(); ++i) {
        if (i == *score_line) continue;
        auto line = trim(lines[i]);
        if (!in_rationale && line.starts_with(kRationale)) {
            in_rationale = true;
            rationale.clear();
            line = trim(line.substr(kRationale.size()));
        }
        if (line.empty() && rationale.empty()) continue;
        if (!rationale.empty()) rationale += '\n';
        rationale += line;
    }
    v.rationale = std::string(trim(rationale));
    return v;
}

JudgeRubric JudgeRubric::from_json(const nlohmann::json& j) {
    JudgeRubric r;
    try {
        r.version = j.at("version").get<std::string>();
        r.system_text = j.at("system").get<std::string>();
        r.user_template = j.at("user").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::ConfigError, std::string("judge rubric: ") + e.what());
    }
    for (const char* slot : {"{question}", "{ground_truth}", "{candidate}"}) {
        require(r.user_template.find(slot) != std::string::npos, ErrorCode::ConfigError,
                std::string("judge rubric lacks slot ") + slot);
    }
    return r;
}

const JudgeRubric& default_rubric() {
    static const JudgeRubric r{
        "judge-v1",
        "You are an impartial medical evaluator. Compare the candidate answer with the ground-truth "
        "answer for factual agreement and completeness. Ignore style and length. Reply with exactly "
        "one line \"SCORE: n\" where n is an integer from 0 to 100, then one line starting with "
        "\"RATIONALE:\" that briefly justifies the score.",
        "Question:\n{question}\n\nGround-truth answer:\n{ground_truth}\n\nCandidate answer:\n{candidate}"};
    return r;
}

JudgeRubric load_rubric(const std::string& path) {
    std::ifstream in(path);
    require(in.good(), ErrorCode::NotFound, "cannot open judge rubric " + path);
    try {
        return JudgeRubric::from_json(nlohmann::json::parse(in));
    } catch (const nlohmann::json::parse_error& e) {
        fail(ErrorCode::ConfigError, "judge rubric " + path + ": " + e.what());
    }
}

gateway::ChatRequest judge_request(const std::string& candidate, const std::string& ground_truth,
                                   const std::string& question, const JudgeRubric& rubric) {
    for (const auto* s : {&candidate, &ground_truth, &question}) {
        require(s->find_first_not_of(" \t\r\n") != std::string::npos, ErrorCode::InvalidArgument,
                "judge inputs must be non-empty");
    }
    gateway::ChatRequest req;
    req.system_text = rubric.system_text;
    req.user_text = fill(rubric.user_template,
                         {{"question", question}, {"ground_truth", ground_truth}, {"candidate", candidate}});
    req.max_tokens = 256;
    req.temperature = 0.0;
    return req;
}

JudgeVerdict judge_response(const std::string& candidate, const std::string& ground_truth,
                            const std::string& question, const gateway::ChatModel& judge,
                            const JudgeRubric& rubric) {
    const auto reply = judge.chat(judge_request(candidate, ground_truth, question, rubric));
    return parse_judge_reply(reply.text, judge.identity());
}

JudgeVerdict judge_response(const std::string& candidate, const std::string& ground_truth,
                            const std::string& question, const gateway::EndpointConfig& judge_cfg,
                            const JudgeRubric& rubric) {
    const gateway::HttpChatModel judge(judge_cfg);
    auto v = judge_response(candidate, ground_truth, question, judge, rubric);
    v.judge_model = judge_cfg.model_name;
    return v;
}

}  // namespace clarify::eval
