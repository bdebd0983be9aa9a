#include <cstdio>
#include <exception>

#include "clarify/error.hpp"
#include "clarify/eval/eval.hpp"
#include "clarify/kernels/dense.hpp"

namespace clarify::eval {

namespace {

struct EntryResult {
    bool missing = false;
    std::string note;
    std::size_t answer_failures = 0;
    // [judge][qa]
    std::vector<std::vector<std::optional<double>>> scores;
};

}  // namespace

ConversationalReport eval_conversational(const DatasetManifest& manifest, const AnswerFn& answer,
                                         const std::vector<Judge>& judges, const RunOptions& options,
                                         const JudgeRubric& rubric) {
    require(!manifest.entries.empty(), ErrorCode::InvalidArgument, "manifest is empty");
    require(static_cast<bool>(answer), ErrorCode::InvalidArgument, "answer function is required");
    require(!judges.empty(), ErrorCode::InvalidArgument, "at least one judge is required");
    for (const auto& j : judges)
        require(j.model != nullptr && !j.name.empty(), ErrorCode::InvalidArgument, "judge needs a name and a model");

    const auto load = options.image_loader
                          ? options.image_loader
                          : ImageLoader([](const std::string& p) { return gateway::ImageInput::from_file(p); });
    const auto n = manifest.entries.size();
    std::vector<EntryResult> results(n);
    std::vector<std::exception_ptr> errors(n);
    const int workers = options.workers > 0 ? options.workers : kernels::max_threads();
    const auto count = static_cast<long>(n);

    // Parallel across entries; the questions of one entry run in order.
#pragma omp parallel for schedule(dynamic) num_threads(workers)
    for (long k = 0; k < count; ++k) {
        const auto& e = manifest.entries[k];
        auto& r = results[k];
        r.scores.assign(judges.size(), std::vector<std::optional<double>>(e.qa.size()));
        try {
            gateway::ImageInput image;
            try {
                image = load(e.image);
            } catch (const Error& err) {
                if (err.code() != ErrorCode::NotFound) throw;
                r.missing = true;
                r.note = err.what();
                continue;
            }
            for (std::size_t q = 0; q < e.qa.size(); ++q) {
                std::string candidate;
                try {
                    candidate = answer(static_cast<std::size_t>(k), e, image, q);
                } catch (const Error&) {
                    ++r.answer_failures;
                    continue;
                }
                if (candidate.find_first_not_of(" \t\r\n") == std::string::npos) {
                    ++r.answer_failures;
                    continue;
                }
                for (std::size_t j = 0; j < judges.size(); ++j) {
                    try {
                        r.scores[j][q] =
                            judge_response(candidate, e.qa[q].answer, e.qa[q].question, *judges[j].model, rubric)
                                .score;
                    } catch (const Error&) {
                    }
                }
            }
        } catch (...) {
            errors[k] = std::current_exception();
        }
    }
    for (const auto& e : errors)
        if (e) std::rethrow_exception(e);

    std::string missing;
    std::size_t n_missing = 0;
    for (std::size_t k = 0; k < n; ++k) {
        if (!results[k].missing) continue;
        ++n_missing;
        missing += "\n  entry " + std::to_string(k + 1) + ": " + results[k].note;
    }
    if (n_missing > 0 && !options.skip_missing)
        fail(ErrorCode::NotFound, std::to_string(n_missing) + " image(s) missing:" + missing);

    ConversationalReport rep;
    rep.scores.assign(judges.size(), {});
    for (std::size_t j = 0; j < judges.size(); ++j) {
        JudgeSummary s;
        s.judge = judges[j].name;
        double sum = 0.0;
        std::map<std::string, std::pair<double, std::size_t>> per_class;
        for (std::size_t k = 0; k < n; ++k) {
            if (results[k].missing) continue;
            for (const auto& v : results[k].scores[j]) {
                rep.scores[j].push_back(v);
                if (!v) {
                    ++s.failures;
                    continue;
                }
                sum += *v;
                ++s.scored;
                auto& pc = per_class[manifest.entries[k].class_name];
                pc.first += *v;
                ++pc.second;
            }
        }
        s.mean = s.scored ? sum / static_cast<double>(s.scored) : 0.0;
        for (const auto& [c, acc] : per_class) s.per_class_mean[c] = acc.first / static_cast<double>(acc.second);
        rep.judges.push_back(std::move(s));
    }
    for (std::size_t k = 0; k < n; ++k) {
        if (results[k].missing) continue;
        rep.questions += manifest.entries[k].qa.size();
        rep.answer_failures += results[k].answer_failures;
    }
    return rep;
}

nlohmann::json ConversationalReport::to_json() const {
    nlohmann::json js = nlohmann::json::array();
    for (std::size_t j = 0; j < judges.size(); ++j) {
        const auto& s = judges[j];
        nlohmann::json sc = nlohmann::json::array();
        for (const auto& v : scores[j]) sc.push_back(v ? nlohmann::json(*v) : nlohmann::json());
        js.push_back({{"judge", s.judge},
                      {"mean", s.mean},
                      {"scored", s.scored},
                      {"failures", s.failures},
                      {"per_class_mean", s.per_class_mean},
                      {"scores", sc}});
    }
    return {{"questions", questions}, {"answer_failures", answer_failures}, {"judges", js}};
}

std::string ConversationalReport::to_table() const {
    char buf[256];
    std::snprintf(buf, sizeof buf, "questions: %zu (answer failures: %zu)\n", questions, answer_failures);
    std::string s = buf;
    for (const auto& j : judges) {
        std::snprintf(buf, sizeof buf, "  %-24s mean %6.2f  scored %zu  failures %zu\n", j.judge.c_str(), j.mean,
                      j.scored, j.failures);
        s += buf;
    }
    return s;
}

}  // namespace clarify::eval
