#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <mutex>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "clarify/error.hpp"
#include "clarify/eval/eval.hpp"
#include "clarify/gateway/stubs.hpp"
#include "support/test_support.hpp"

using namespace clarify;
using namespace clarify::eval;
using clarify::testing::error_code_of;
using clarify::testing::png;
using nlohmann::json;

namespace {

std::string resource(const std::string& rel) { return std::string(CLARIFY_RESOURCE_DIR) + "/" + rel; }

DatasetManifest skeleton() { return load_manifest(resource("manifests/test_skeleton.jsonl")); }

// Images are synthesized from their path so no files are needed.
RunOptions in_memory() {
    RunOptions o;
    o.image_loader = [](const std::string& path) { return png(path); };
    return o;
}

std::string path_of(const gateway::ImageInput& img) { return std::string(img.bytes.begin() + 8, img.bytes.end()); }

// Correct for the first `n_correct` entries, a fixed wrong class after.
DiagnoseFn first_n_correct(const DatasetManifest& m, std::size_t n_correct) {
    std::map<std::string, std::pair<std::size_t, std::string>> by_path;
    for (std::size_t i = 0; i < m.entries.size(); ++i) by_path[m.entries[i].image] = {i, m.entries[i].class_name};
    return [by_path, n_correct](const gateway::ImageInput& img) -> std::string {
        const auto& [index, cls] = by_path.at(path_of(img));
        if (index < n_correct) return cls;
        return cls == "Melanoma" ? "Rosacea" : "Melanoma";
    };
}

DatasetManifest qa_manifest(std::size_t entries, std::size_t qa_each) {
    DatasetManifest m;
    const auto& vocab = paper_class_vocabulary();
    for (std::size_t i = 0; i < entries; ++i) {
        ManifestEntry e;
        e.image = "img" + std::to_string(i) + ".png";
        e.class_name = vocab[i % vocab.size()];
        for (std::size_t q = 0; q < qa_each; ++q)
            e.qa.push_back({"question " + std::to_string(i) + "." + std::to_string(q), "reference answer"});
        m.entries.push_back(std::move(e));
    }
    return m;
}

std::shared_ptr<const gateway::ChatModel> judge_scoring(std::function<std::string(const gateway::ChatRequest&)> fn) {
    return std::make_shared<gateway::ScriptedChatModel>(std::move(fn), "judge");
}

}  // namespace

TEST(Manifest, SkeletonMatchesTableOne) {
    const auto m = skeleton();
    ASSERT_EQ(m.entries.size(), 39u);
    std::ifstream in(resource("manifests/test_skeleton.jsonl"));
    std::size_t qa_expected = 0;
    std::string line;
    while (std::getline(in, line))
        if (!line.empty()) qa_expected += json::parse(line).at("qa_expected").get<std::size_t>();
    EXPECT_EQ(qa_expected, 324u);

    std::ifstream t(resource("manifests/table1_distribution.json"));
    const auto table = json::parse(t);
    std::size_t train_images = 0, train_qa = 0, test_images = 0, test_qa = 0;
    const auto counts = m.class_counts();
    for (const auto& row : table["classes"]) {
        train_images += row["train_images"].get<std::size_t>();
        train_qa += row["train_qa"].get<std::size_t>();
        test_images += row["test_images"].get<std::size_t>();
        test_qa += row["test_qa"].get<std::size_t>();
        EXPECT_EQ(counts.at(row["class"].get<std::string>()), row["test_images"].get<std::size_t>());
    }
    EXPECT_EQ(train_images, 1737u);
    EXPECT_EQ(train_qa, 14169u);
    EXPECT_EQ(test_images, 39u);
    EXPECT_EQ(test_qa, 324u);
    EXPECT_NO_THROW(check_vocabulary(m, paper_class_vocabulary()));
}

TEST(Manifest, ParsingAndVocabulary) {
    std::istringstream in(R"({"image": "a.png", "class": "Rosacea", "qa": [{"q": "Q?", "a": "A."}]}

{"image": "/abs/b.png", "class": "Acne"})");
    const auto m = read_manifest(in, Split::Train, "/data");
    ASSERT_EQ(m.entries.size(), 2u);
    EXPECT_EQ(m.entries[0].image, "/data/a.png");
    EXPECT_EQ(m.entries[1].image, "/abs/b.png");
    EXPECT_EQ(m.qa_count(), 1u);
    try {
        check_vocabulary(m, paper_class_vocabulary());
        FAIL() << "expected ValidationError";
    } catch (const ValidationError& e) {
        EXPECT_EQ(e.lines(), (std::vector<std::size_t>{2}));
    }

    std::istringstream bad("{\"image\": \"a.png\", \"class\": \"X\"}\n{\"image\": 3}\n");
    try {
        read_manifest(bad);
        FAIL() << "expected ParseError";
    } catch (const ParseError& e) {
        EXPECT_EQ(e.line(), 2u);
    }
    EXPECT_EQ(error_code_of([] { load_manifest("/nonexistent.jsonl"); }), ErrorCode::NotFound);
}

TEST(Accuracy, ReferenceArithmetic) {
    const auto m = skeleton();
    const auto hi = eval_accuracy(m, first_n_correct(m, 32), in_memory());
    EXPECT_EQ(hi.correct, 32u);
    EXPECT_NEAR(hi.accuracy_pct, 82.05, 0.005);
    EXPECT_NEAR(std::round(hi.accuracy_pct * 10) / 10, 82.1, 1e-9);
    const auto lo = eval_accuracy(m, first_n_correct(m, 25), in_memory());
    EXPECT_NEAR(lo.accuracy_pct, 64.10, 0.005);
}

TEST(Accuracy, AllCorrectGivesDiagonalConfusion) {
    const auto m = skeleton();
    const auto r = eval_accuracy(m, first_n_correct(m, 39), in_memory());
    EXPECT_DOUBLE_EQ(r.accuracy_pct, 100.0);
    const auto counts = m.class_counts();
    for (std::size_t i = 0; i < r.classes.size(); ++i)
        for (std::size_t j = 0; j < r.classes.size(); ++j)
            EXPECT_EQ(r.confusion[i][j], i == j ? counts.at(r.classes[i]) : 0u);
}

TEST(Accuracy, InvariantUnderPermutation) {
    auto m = skeleton();
    std::mt19937 rng(3);
    for (int trial = 0; trial < 10; ++trial) {
        std::map<std::string, std::string> predictions;
        const auto& vocab = paper_class_vocabulary();
        for (const auto& e : m.entries) predictions[e.image] = vocab[rng() % vocab.size()];
        const DiagnoseFn fn = [&](const gateway::ImageInput& img) { return predictions.at(path_of(img)); };
        const auto a = eval_accuracy(m, fn, in_memory());
        auto shuffled = m;
        std::shuffle(shuffled.entries.begin(), shuffled.entries.end(), rng);
        const auto b = eval_accuracy(shuffled, fn, in_memory());
        EXPECT_EQ(a.correct, b.correct);
        EXPECT_EQ(a.confusion, b.confusion);
        std::size_t total = 0;
        for (const auto& row : a.confusion)
            for (auto v : row) total += v;
        EXPECT_EQ(total, a.evaluated);
    }
}

TEST(Accuracy, MissingImages) {
    const auto m = skeleton();
    RunOptions opts;  // default loader reads files that do not exist
    EXPECT_EQ(error_code_of([&] { eval_accuracy(m, first_n_correct(m, 39), opts); }), ErrorCode::NotFound);

    opts = in_memory();
    opts.skip_missing = true;
    const auto inner = opts.image_loader;
    opts.image_loader = [&](const std::string& path) {
        if (path.find("/001.jpg") != std::string::npos) throw Error(ErrorCode::NotFound, "no " + path);
        return inner(path);
    };
    const auto r = eval_accuracy(m, first_n_correct(m, 39), opts);
    EXPECT_EQ(r.skipped, 8u);
    EXPECT_EQ(r.evaluated, 31u);
    EXPECT_DOUBLE_EQ(r.accuracy_pct, 100.0);
    EXPECT_EQ(error_code_of([] { eval_accuracy(DatasetManifest{}, [](const auto&) { return std::string(); }); }),
              ErrorCode::InvalidArgument);
}

TEST(Accuracy, ReportRendering) {
    const auto m = skeleton();
    const auto r = eval_accuracy(m, first_n_correct(m, 32), in_memory());
    EXPECT_EQ(r.to_table().rfind("accuracy: 82.05% (32/39, 0 skipped)", 0), 0u);
    const auto j = r.to_json();
    EXPECT_EQ(j["entries"].size(), 39u);
    EXPECT_EQ(j["correct"], 32);
}

TEST(JudgeParser, Examples) {
    const auto v = parse_judge_reply("SCORE: 84\nRATIONALE: accurate and safe", "gpt-oss-20b");
    EXPECT_DOUBLE_EQ(v.score, 84.0);
    EXPECT_EQ(v.rationale, "accurate and safe");
    EXPECT_EQ(v.judge_model, "gpt-oss-20b");
    EXPECT_DOUBLE_EQ(parse_judge_reply("  SCORE: 72.5  ").score, 72.5);
    EXPECT_DOUBLE_EQ(parse_judge_reply("Looks fine.\nSCORE: 0").score, 0.0);
    EXPECT_DOUBLE_EQ(parse_judge_reply("SCORE: 100").score, 100.0);
    for (const char* bad : {"SCORE: eighty", "SCORE: 120", "SCORE: -3", "SCORE: 80\nSCORE: 90", "no score here",
                            "", "SCORE:", "SCORE: 8e1", "SCORE: 80 points"}) {
        try {
            parse_judge_reply(bad);
            ADD_FAILURE() << "accepted: " << bad;
        } catch (const JudgeParseError& e) {
            EXPECT_EQ(e.raw(), bad);
        }
    }
}

TEST(JudgeParser, FuzzIsTotal) {
    std::mt19937_64 rng(11);
    const std::string alphabet = "SCORE: RATIONLE0123456789.-+\n \tabcxyz";
    std::size_t accepted = 0;
    for (int i = 0; i < 10000; ++i) {
        std::string s = (rng() % 3 == 0) ? "SCORE: " : "";
        const auto n = rng() % 40;
        for (std::size_t k = 0; k < n; ++k) s += alphabet[rng() % alphabet.size()];
        try {
            const auto v = parse_judge_reply(s);
            EXPECT_GE(v.score, 0.0);
            EXPECT_LE(v.score, 100.0);
            ++accepted;
        } catch (const JudgeParseError&) {
        }
    }
    EXPECT_GT(accepted, 0u);
}

TEST(Judge, RubricAndRequest) {
    std::ifstream in(resource("judge/judge_v1.json"));
    const auto j = json::parse(in);
    const auto loaded = JudgeRubric::from_json(j);
    EXPECT_EQ(loaded.version, default_rubric().version);
    EXPECT_EQ(loaded.system_text, default_rubric().system_text);
    EXPECT_EQ(loaded.user_template, default_rubric().user_template);

    const auto req = judge_request("Use sunscreen {daily}.", "Sunscreen.", "How to prevent it?");
    EXPECT_NE(req.user_text.find("Use sunscreen {daily}."), std::string::npos);
    EXPECT_NE(req.user_text.find("How to prevent it?"), std::string::npos);
    EXPECT_EQ(req.temperature, 0.0);
    EXPECT_EQ(error_code_of([] { judge_request(" ", "a", "q"); }), ErrorCode::InvalidArgument);
    EXPECT_EQ(error_code_of([] { JudgeRubric::from_json({{"version", "x"}, {"system", "s"}, {"user", "{question}"}}); }),
              ErrorCode::ConfigError);
}

TEST(Conversational, MeanOfJudgeScores) {
    const auto m = qa_manifest(3, 1);
    std::map<std::string, int> score{{"question 0.0", 70}, {"question 1.0", 80}, {"question 2.0", 90}};
    auto judge = judge_scoring([&](const gateway::ChatRequest& r) {
        for (const auto& [q, s] : score)
            if (r.user_text.find(q) != std::string::npos) return "SCORE: " + std::to_string(s);
        return std::string("SCORE: 0");
    });
    const AnswerFn answer = [](std::size_t, const ManifestEntry&, const gateway::ImageInput&, std::size_t) {
        return std::string("an answer");
    };
    const auto r = eval_conversational(m, answer, {{"j1", judge}}, in_memory());
    ASSERT_EQ(r.judges.size(), 1u);
    EXPECT_DOUBLE_EQ(r.judges[0].mean, 80.0);
    EXPECT_EQ(r.judges[0].scored, 3u);
    EXPECT_EQ(r.questions, 3u);
    EXPECT_EQ(r.scores[0], (std::vector<std::optional<double>>{70.0, 80.0, 90.0}));
}

TEST(Conversational, FailuresAreCountedNotAveraged) {
    const auto m = qa_manifest(3, 1);
    auto judge = judge_scoring([](const gateway::ChatRequest& r) -> std::string {
        if (r.user_text.find("question 1.0") != std::string::npos) return "I refuse to grade this.";
        return r.user_text.find("question 0.0") != std::string::npos ? "SCORE: 60" : "SCORE: 90";
    });
    const AnswerFn answer = [](std::size_t, const ManifestEntry&, const gateway::ImageInput&, std::size_t) {
        return std::string("an answer");
    };
    const auto r = eval_conversational(m, answer, {{"j1", judge}}, in_memory());
    EXPECT_DOUBLE_EQ(r.judges[0].mean, 75.0);
    EXPECT_EQ(r.judges[0].scored, 2u);
    EXPECT_EQ(r.judges[0].failures, 1u);
    EXPECT_FALSE(r.scores[0][1].has_value());

    const AnswerFn flaky = [](std::size_t i, const ManifestEntry&, const gateway::ImageInput&, std::size_t) {
        if (i == 2) throw UpstreamError(500, "generalist down");
        return std::string("an answer");
    };
    const auto f = eval_conversational(m, flaky, {{"j1", judge}}, in_memory());
    EXPECT_EQ(f.answer_failures, 1u);
    EXPECT_DOUBLE_EQ(f.judges[0].mean, 60.0);
}

TEST(Conversational, DeterministicAndOrdered) {
    const auto m = qa_manifest(9, 3);
    auto judge = judge_scoring([](const gateway::ChatRequest& r) {
        return "SCORE: " + std::to_string(r.user_text.size() % 101);
    });
    std::vector<std::vector<std::size_t>> asked(m.entries.size());
    std::mutex mu;
    const AnswerFn answer = [&](std::size_t i, const ManifestEntry& e, const gateway::ImageInput&, std::size_t q) {
        {
            std::lock_guard<std::mutex> g(mu);
            asked[i].push_back(q);
        }
        return "answer about " + e.class_name;
    };
    const auto a = eval_conversational(m, answer, {{"j1", judge}, {"j2", judge}}, in_memory());
    const auto b = eval_conversational(m, answer, {{"j1", judge}, {"j2", judge}}, in_memory());
    EXPECT_EQ(a.scores, b.scores);
    EXPECT_EQ(a.to_json(), b.to_json());
    EXPECT_EQ(a.judges[0].per_class_mean, a.judges[1].per_class_mean);
    for (const auto& order : asked) EXPECT_EQ(order, (std::vector<std::size_t>{0, 1, 2, 0, 1, 2}));
}

TEST(Latency, NearestRank) {
    const auto r = latency_report(std::vector<std::map<std::string, double>>{{{"g", 30}}, {{"g", 10}}, {{"g", 20}}});
    EXPECT_DOUBLE_EQ(r.at("g").mean, 20.0);
    EXPECT_DOUBLE_EQ(r.at("g").p50, 20.0);
    EXPECT_DOUBLE_EQ(r.at("g").p95, 30.0);
    EXPECT_EQ(r.at("g").count, 3u);

    const auto one = latency_report(std::vector<std::map<std::string, double>>{{{"s", 7.5}}});
    EXPECT_DOUBLE_EQ(one.at("s").p50, 7.5);
    EXPECT_DOUBLE_EQ(one.at("s").p95, 7.5);

    std::mt19937 rng(8);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<double> v(1 + rng() % 200);
        for (auto& x : v) x = static_cast<double>(rng() % 10000) / 10.0;
        auto sorted = v;
        std::sort(sorted.begin(), sorted.end());
        const auto k = static_cast<std::size_t>(std::ceil(0.95 * static_cast<double>(v.size())));
        EXPECT_DOUBLE_EQ(nearest_rank(v, 95.0), sorted[std::max<std::size_t>(k, 1) - 1]);
    }
    EXPECT_EQ(error_code_of([] { nearest_rank({}, 50.0); }), ErrorCode::InvalidArgument);
    EXPECT_EQ(error_code_of([] { nearest_rank({1.0}, 0.0); }), ErrorCode::InvalidArgument);
}
