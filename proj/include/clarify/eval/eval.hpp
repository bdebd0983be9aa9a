#pragma once

#include <cstddef>
#include <functional>
#include <istream>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "clarify/gateway/clients.hpp"
#include "clarify/gateway/types.hpp"
#include "clarify/pipeline/pipeline.hpp"

namespace clarify::eval {

// ---------------------------------------------------------------------------
// Manifests

enum class Split { Train, Test };

std::string to_string(Split s);
Split split_from_string(const std::string& s);

struct QaPair {
    std::string question;
    std::string answer;

    friend bool operator==(const QaPair&, const QaPair&) = default;
};

struct ManifestEntry {
    std::string image;  // resolved path
    std::string class_name;
    std::vector<QaPair> qa;

    friend bool operator==(const ManifestEntry&, const ManifestEntry&) = default;
};

struct DatasetManifest {
    std::vector<ManifestEntry> entries;
    Split split = Split::Test;

    std::map<std::string, std::size_t> class_counts() const;
    std::size_t qa_count() const;
};

/// JSONL lines {"image": path, "class": str, "qa": [{"q": str, "a": str}]}.
/// Relative image paths are resolved against base_dir. ParseError carries
/// the line number.
DatasetManifest read_manifest(std::istream& in, Split split = Split::Test,
                              const std::string& base_dir = {});
DatasetManifest load_manifest(const std::string& path, Split split = Split::Test);

/// The eight disease classes of the reference dataset.
const std::vector<std::string>& paper_class_vocabulary();

/// ValidationError listing the (1-based) entries whose class is outside
/// `vocabulary`.
void check_vocabulary(const DatasetManifest& m, const std::vector<std::string>& vocabulary);

// ---------------------------------------------------------------------------
// Accuracy

using ImageLoader = std::function<gateway::ImageInput(const std::string& path)>;
using DiagnoseFn = std::function<std::string(const gateway::ImageInput&)>;

struct RunOptions {
    /// Entries whose image is missing are dropped instead of failing the run.
    bool skip_missing = false;
    /// Defaults to ImageInput::from_file.
    ImageLoader image_loader;
    /// Concurrent entries; 0 = OpenMP default.
    int workers = 0;
};

struct EntryOutcome {
    std::size_t index = 0;
    std::string expected;
    std::string predicted;
    bool correct = false;
    bool skipped = false;
    std::string note;
};

struct AccuracyReport {
    double accuracy_pct = 0.0;
    std::size_t correct = 0;
    std::size_t evaluated = 0;
    std::size_t skipped = 0;
    /// Sorted union of expected and predicted labels; confusion rows are
    /// the expected class, columns the predicted one.
    std::vector<std::string> classes;
    std::vector<std::vector<std::size_t>> confusion;
    std::vector<EntryOutcome> outcomes;

    nlohmann::json to_json() const;
    std::string to_table() const;
};

/// Errors: InvalidArgument (empty manifest), NotFound listing every missing
/// image unless skip_missing. Failures of diagnose_fn propagate.
AccuracyReport eval_accuracy(const DatasetManifest& manifest, const DiagnoseFn& diagnose,
                             const RunOptions& options = {});

// ---------------------------------------------------------------------------
// LLM-as-judge

struct JudgeVerdict {
    double score = 0.0;
    std::string judge_model;
    std::string rationale;
};

/// Accepts exactly one line of the form "SCORE: <n>" (n a decimal number in
/// [0, 100], surrounding blanks allowed). Anything else, including a second
/// SCORE line, throws JudgeParseError carrying the raw reply.
JudgeVerdict parse_judge_reply(const std::string& raw, const std::string& judge_model = {});

struct JudgeRubric {
    std::string version;
    std::string system_text;
    /// Slots: {question}, {ground_truth}, {candidate}.
    std::string user_template;

    static JudgeRubric from_json(const nlohmann::json& j);
};

const JudgeRubric& default_rubric();
JudgeRubric load_rubric(const std::string& path);

gateway::ChatRequest judge_request(const std::string& candidate, const std::string& ground_truth,
                                   const std::string& question,
                                   const JudgeRubric& rubric = default_rubric());

JudgeVerdict judge_response(const std::string& candidate, const std::string& ground_truth,
                            const std::string& question, const gateway::ChatModel& judge,
                            const JudgeRubric& rubric = default_rubric());
JudgeVerdict judge_response(const std::string& candidate, const std::string& ground_truth,
                            const std::string& question, const gateway::EndpointConfig& judge_cfg,
                            const JudgeRubric& rubric = default_rubric());

struct Judge {
    std::string name;
    std::shared_ptr<const gateway::ChatModel> model;
};

/// Answers one question about one manifest entry. QA pairs of an entry are
/// asked in order, so implementations may keep a session per entry.
using AnswerFn = std::function<std::string(std::size_t entry_index, const ManifestEntry& entry,
                                           const gateway::ImageInput& image, std::size_t qa_index)>;

struct JudgeSummary {
    std::string judge;
    double mean = 0.0;  // over successful verdicts; 0 when there are none
    std::size_t scored = 0;
    std::size_t failures = 0;
    std::map<std::string, double> per_class_mean;
};

struct ConversationalReport {
    std::vector<JudgeSummary> judges;
    std::size_t questions = 0;
    std::size_t answer_failures = 0;
    /// Scores per question in manifest order; nullopt marks a failure.
    std::vector<std::vector<std::optional<double>>> scores;  // [judge][question]

    nlohmann::json to_json() const;
    std::string to_table() const;
};

ConversationalReport eval_conversational(const DatasetManifest& manifest, const AnswerFn& answer,
                                         const std::vector<Judge>& judges,
                                         const RunOptions& options = {},
                                         const JudgeRubric& rubric = default_rubric());

// ---------------------------------------------------------------------------
// Latency

struct StageLatency {
    double mean = 0.0;
    double p50 = 0.0;
    double p95 = 0.0;
    std::size_t count = 0;
};

/// Nearest-rank percentile of unsorted values: the ceil(p/100·n)-th smallest.
double nearest_rank(std::vector<double> values, double p);

std::map<std::string, StageLatency> latency_report(const std::vector<std::map<std::string, double>>& samples);
std::map<std::string, StageLatency> latency_report(const std::vector<pipeline::PipelineResponse>& samples);

nlohmann::json latency_to_json(const std::map<std::string, StageLatency>& report);

}  // namespace clarify::eval
