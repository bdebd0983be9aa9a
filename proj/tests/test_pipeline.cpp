#include <atomic>
#include <fstream>
#include <mutex>
#include <random>
#include <set>
#include <sstream>
#include <thread>

#include <gtest/gtest.h>
#include <httplib.h>

#include "clarify/error.hpp"
#include "clarify/gateway/stubs.hpp"
#include "clarify/kg/graph.hpp"
#include "clarify/pipeline/pipeline.hpp"
#include "clarify/prompt/prompt.hpp"
#include "clarify/specialist/head.hpp"
#include "support/test_support.hpp"

using namespace clarify;
using namespace clarify::pipeline;
using clarify::testing::error_code_of;
using clarify::testing::png;
using clarify::testing::TempDir;
using nlohmann::json;

namespace {

std::shared_ptr<const gateway::TextEmbedder> embedder() {
    static const auto e = std::make_shared<gateway::HashTextEmbedder>();
    return e;
}

std::shared_ptr<const kg::KnowledgeGraph> graph_from(const std::string& jsonl) {
    std::istringstream in(jsonl);
    return std::make_shared<const kg::KnowledgeGraph>(kg::build_index(kg::ingest(in), *embedder()));
}

std::shared_ptr<const kg::KnowledgeGraph> bcc_graph() {
    return graph_from(
        R"({"s": "bcc", "s_label": "Basal cell carcinoma", "s_kind": "disease", "p": "treated_by", "o": "mohs", "o_label": "Mohs surgery", "o_kind": "treatment"})");
}

Components components(std::shared_ptr<const Diagnoser> diagnoser,
                      std::shared_ptr<const gateway::ChatModel> generalist = std::make_shared<gateway::EchoChatModel>()) {
    Components c;
    c.diagnoser = std::move(diagnoser);
    c.graph = bcc_graph();
    c.embedder = embedder();
    c.generalist = std::move(generalist);
    return c;
}

struct Harness {
    explicit Harness(Components c, PipelineConfig cfg = {}, std::string data_dir = {})
        : store(std::make_shared<SessionStore>(std::move(data_dir))),
          pipeline(std::move(c), cfg, store, [this](const json& r) {
              std::lock_guard<std::mutex> g(mu);
              logs.push_back(r);
          }) {}

    std::shared_ptr<SessionStore> store;
    std::mutex mu;
    std::vector<json> logs;
    Pipeline pipeline;
};

std::string b64_of(const gateway::ImageInput& img) {
    const auto uri = gateway::data_uri(img);
    return uri.substr(uri.find("base64,") + 7);
}

}  // namespace

TEST(Pipeline, GuidedPromptCarriesDiagnosisFactsAndQuery) {
    Harness h(components(std::make_shared<MockDiagnoser>("Basal cell carcinoma", 0.88)));
    const auto r = h.pipeline.ask({"What are the treatment options?", png(), std::nullopt});
    EXPECT_EQ(r.diagnosis.class_name, "Basal cell carcinoma");
    ASSERT_TRUE(r.context_used.has_value());
    EXPECT_EQ(r.context_used->facts.size(), 1u);
    EXPECT_EQ(r.answer,
              "Detected condition: Basal cell carcinoma (confidence 0.88)\n"
              "Knowledge-base facts:\n"
              "- Basal cell carcinoma —treated_by→ Mohs surgery\n"
              "Patient question: What are the treatment options?");
    EXPECT_EQ(r.prompt_version, "v1");
    EXPECT_EQ(r.session_id.size(), 32u);
}

TEST(Pipeline, UnmatchedDiagnosisFallsBack) {
    Harness h(components(std::make_shared<MockDiagnoser>("Melanoma", 0.7)));
    const auto r = h.pipeline.ask({"Is it serious?", png(), std::nullopt});
    EXPECT_FALSE(r.context_used.has_value());
    EXPECT_TRUE(prompt::parse_prompt(r.answer).fallback);
}

TEST(Pipeline, LowConfidenceNamesRunnerUp) {
    auto diag = std::make_shared<MockDiagnoser>([](const gateway::ImageInput&) {
        DiagnosisResult d;
        d.class_name = "Psoriasis";
        d.confidence = 0.25;
        d.class_names = {"Dermatitis", "Psoriasis", "Rosacea"};
        d.probs = {0.24, 0.25, 0.51 - 1e-9};
        return d;
    });
    Harness h(components(diag));
    const auto parsed = prompt::parse_prompt(h.pipeline.ask({"Is it contagious?", png(), std::nullopt}).answer);
    ASSERT_TRUE(parsed.alternative.has_value());
}

TEST(Pipeline, FollowUpsReuseStickyDiagnosis) {
    std::atomic<int> calls{0};
    auto diag = std::make_shared<MockDiagnoser>([&](const gateway::ImageInput&) {
        ++calls;
        DiagnosisResult d;
        d.class_name = "Basal cell carcinoma";
        d.confidence = 0.88;
        return d;
    });
    Harness h(components(diag));
    const auto first = h.pipeline.ask({"What is it?", png(), std::nullopt});
    const auto second = h.pipeline.ask({"How is it treated?", std::nullopt, first.session_id});
    EXPECT_EQ(calls.load(), 1);
    EXPECT_EQ(second.diagnosis, first.diagnosis);
    EXPECT_EQ(second.session_id, first.session_id);
    const auto s = h.pipeline.session(first.session_id);
    ASSERT_EQ(s.turns.size(), 2u);
    EXPECT_TRUE(s.turns[0].had_image);
    EXPECT_FALSE(s.turns[1].had_image);
    EXPECT_EQ(prompt::parse_prompt(s.turns[1].response.answer).query, "How is it treated?");
}

TEST(Pipeline, RequestErrors) {
    Harness h(components(std::make_shared<MockDiagnoser>("Rosacea", 0.9)));
    EXPECT_EQ(error_code_of([&] { h.pipeline.ask({"  ", png(), std::nullopt}); }), ErrorCode::InvalidRequest);
    EXPECT_EQ(error_code_of([&] { h.pipeline.ask({"hello", std::nullopt, std::nullopt}); }),
              ErrorCode::InvalidRequest);
    EXPECT_EQ(error_code_of([&] { h.pipeline.ask({"hello", std::nullopt, std::string("deadbeef")}); }),
              ErrorCode::NotFound);
    gateway::ImageInput bad;
    bad.bytes = {1, 2, 3};
    EXPECT_EQ(error_code_of([&] { h.pipeline.ask({"hello", bad, std::nullopt}); }), ErrorCode::InvalidInput);
    PipelineConfig tiny;
    tiny.char_budget = 40;
    Harness t(components(std::make_shared<MockDiagnoser>("Rosacea", 0.9)), tiny);
    EXPECT_EQ(error_code_of([&] { t.pipeline.ask({std::string(200, 'q'), png(), std::nullopt}); }),
              ErrorCode::InvalidRequest);
}

TEST(Pipeline, StagesAreLoggedInOrder) {
    Harness h(components(std::make_shared<MockDiagnoser>("Basal cell carcinoma", 0.88)));
    const auto r = h.pipeline.ask({"Treatment?", png(), std::nullopt});
    ASSERT_EQ(h.logs.size(), 4u);
    const std::vector<std::string> order{"specialist", "retrieval", "prompt", "generalist"};
    for (std::size_t i = 0; i < 4; ++i) {
        EXPECT_EQ(h.logs[i]["stage"], order[i]);
        EXPECT_EQ(h.logs[i]["session_id"], r.session_id);
        EXPECT_EQ(h.logs[i]["template_version"], "v1");
        EXPECT_GE(h.logs[i]["duration_ms"].get<double>(), 0.0);
        if (i > 0) {
            EXPECT_LE(h.logs[i - 1]["mono_us"].get<long>(), h.logs[i]["mono_us"].get<long>());
        }
        EXPECT_TRUE(r.timings.count(order[i]));
    }
    EXPECT_EQ(r.timings.size(), 4u);
}

TEST(Pipeline, FailingGeneralistPersistsNoTurn) {
    Harness h(components(std::make_shared<MockDiagnoser>("Basal cell carcinoma", 0.88)));
    const auto first = h.pipeline.ask({"What is it?", png(), std::nullopt});
    auto broken = components(std::make_shared<MockDiagnoser>("Basal cell carcinoma", 0.88),
                             std::make_shared<gateway::ScriptedChatModel>([](const gateway::ChatRequest&) -> std::string {
                                 throw UpstreamError(503, "generalist is down");
                             }));
    h.pipeline.swap_components(std::move(broken));
    try {
        h.pipeline.ask({"And now?", std::nullopt, first.session_id});
        FAIL() << "expected StageError";
    } catch (const StageError& e) {
        EXPECT_EQ(e.stage(), "generalist");
        EXPECT_EQ(e.cause(), ErrorCode::UpstreamError);
    }
    EXPECT_EQ(h.pipeline.session(first.session_id).turns.size(), 1u);
}

TEST(Pipeline, SlowSpecialistTimesOut) {
    PipelineConfig cfg;
    cfg.specialist_timeout_ms = 5;
    auto slow = std::make_shared<MockDiagnoser>([](const gateway::ImageInput&) {
        std::this_thread::sleep_for(std::chrono::milliseconds(30));
        DiagnosisResult d;
        d.class_name = "Rosacea";
        d.confidence = 0.9;
        return d;
    });
    Harness h(components(slow), cfg);
    try {
        h.pipeline.ask({"Hi", png(), std::nullopt});
        FAIL() << "expected StageError";
    } catch (const StageError& e) {
        EXPECT_EQ(e.stage(), "specialist");
        EXPECT_EQ(e.cause(), ErrorCode::Timeout);
    }
}

TEST(Pipeline, RandomizedEndToEnd) {
    std::mt19937 rng(2024);
    const std::vector<std::string> classes{"Rosacea", "Psoriasis", "Melanoma", "Lichen planus"};
    for (int trial = 0; trial < 20; ++trial) {
        const auto cls = classes[rng() % classes.size()];
        std::string triples;
        const int n = 1 + static_cast<int>(rng() % 5);
        for (int f = 0; f < n; ++f) {
            triples += json{{"s", "d"}, {"s_label", cls}, {"p", "has_symptom"}, {"o", "o" + std::to_string(f)},
                            {"o_label", "finding " + std::to_string(rng() % 1000)}}
                           .dump()
                       + "\n";
        }
        auto c = components(std::make_shared<MockDiagnoser>(cls, 0.5 + 0.01 * (rng() % 50)));
        c.graph = graph_from(triples);
        Harness h(std::move(c));
        const auto query = "question " + std::to_string(rng()) + " about my skin?";
        const auto r = h.pipeline.ask({query, png(std::to_string(trial)), std::nullopt});
        ASSERT_TRUE(r.context_used.has_value());
        const auto parsed = prompt::parse_prompt(r.answer);
        EXPECT_EQ(parsed.diagnosis, cls);
        EXPECT_EQ(parsed.query, query);
        ASSERT_EQ(parsed.facts.size(), r.context_used->facts.size());
        for (const auto& fact : r.context_used->facts)
            EXPECT_NE(r.answer.find(kg::render_fact_line(fact)), std::string::npos);
    }
}

TEST(Pipeline, LocalHeadMatchesDirectPrediction) {
    auto backbone = std::make_shared<gateway::HashImageEmbedder>(32);
    auto head = std::make_shared<specialist::ClassifierHead>(specialist::ClassifierHead::glorot(
        32, 16, {"Actinic keratosis", "Seborrheic keratosis", "Melanoma", "Lichen planus", "Rosacea", "Psoriasis",
                 "Basal cell carcinoma", "Dermatitis"},
        specialist::Activation::Relu, 7));
    const LocalHeadDiagnoser diag(backbone, head);
    for (int i = 0; i < 39; ++i) {
        const auto img = png("entry" + std::to_string(i));
        const auto expected = specialist::predict(*head, backbone->embed(img));
        const auto got = diag.diagnose(img);
        EXPECT_EQ(got.class_name, expected.class_name);
        EXPECT_DOUBLE_EQ(got.confidence, expected.confidence);
        EXPECT_EQ(got.probs, expected.probs.values);
        EXPECT_EQ(got.source, DiagnosisSource::LocalHead);
    }
}

TEST(SessionStore, PersistsAndIgnoresTornLine) {
    TempDir dir;
    std::string id;
    {
        Harness h(components(std::make_shared<MockDiagnoser>("Basal cell carcinoma", 0.88)), {}, dir.file("s"));
        id = h.pipeline.ask({"first", png(), std::nullopt}).session_id;
        h.pipeline.ask({"second", std::nullopt, id});
    }
    {
        std::ofstream torn(dir.file("s/" + id + ".jsonl"), std::ios::app);
        torn << R"({"query": "third", "had_im)";
    }
    SessionStore reloaded(dir.file("s"));
    EXPECT_TRUE(reloaded.exists(id));
    const auto s = reloaded.load(id);
    ASSERT_EQ(s.turns.size(), 2u);
    EXPECT_EQ(s.turns[0].query, "first");
    EXPECT_EQ(s.turns[1].query, "second");
    EXPECT_EQ(s.sticky_diagnosis()->class_name, "Basal cell carcinoma");
    EXPECT_EQ(error_code_of([&] { reloaded.load("../etc"); }), ErrorCode::NotFound);
    EXPECT_FALSE(reloaded.exists("ffff"));
}

TEST(Config, PipelineValidation) {
    EXPECT_EQ(error_code_of([] { PipelineConfig::from_json({{"hop_depth", 0}}); }), ErrorCode::ConfigError);
    EXPECT_EQ(error_code_of([] { PipelineConfig::from_json({{"similarity_threshold", 2.0}}); }),
              ErrorCode::ConfigError);
    EXPECT_EQ(error_code_of([] { PipelineConfig::from_json({{"timeouts_ms", {{"generalist", 0}}}}); }),
              ErrorCode::ConfigError);
    const auto c = PipelineConfig::from_json({{"max_facts", 3}});
    EXPECT_EQ(PipelineConfig::from_json(c.to_json()).to_json(), c.to_json());
}

TEST(Config, ExampleConfigBuilds) {
    const auto cfg = ServiceConfig::load(std::string(CLARIFY_RESOURCE_DIR) + "/config/clarify.example.json");
    EXPECT_EQ(cfg.port, 8080);
    EXPECT_FALSE(cfg.api_key.has_value());
    const auto c = build_components(cfg);
    EXPECT_EQ(c.diagnoser->name(), "mock");
    EXPECT_EQ(c.embedder->identity(), gateway::HashTextEmbedder(384).identity());
    EXPECT_EQ(c.prompt_template.version, "v1");
    EXPECT_TRUE(c.graph->entities().empty());
}

TEST(Config, GraphMustMatchEmbedder) {
    TempDir dir;
    kg::save_graph(*bcc_graph(), dir.file("g.ckg"));
    auto cfg = ServiceConfig::from_json({{"components", {{"graph", "g.ckg"}, {"embedder", {{"stub_dim", 64}}}}}},
                                        dir.path().string());
    EXPECT_EQ(build_components(cfg).graph->entities().size(), 2u);
    cfg.components["embedder"]["stub_dim"] = 384;
    EXPECT_EQ(error_code_of([&] { build_components(cfg); }), ErrorCode::ConfigError);
}

class ServiceTest : public ::testing::Test {
protected:
    void start(std::optional<std::string> key = std::nullopt) {
        auto store = std::make_shared<SessionStore>();
        pipeline_ = std::make_shared<Pipeline>(
            components(std::make_shared<MockDiagnoser>("Basal cell carcinoma", 0.88)), PipelineConfig{}, store,
            LogSink{});
        service_ = std::make_unique<Service>(pipeline_, std::move(key));
        port_ = service_->bind("127.0.0.1", 0);
        service_->start();
    }
    httplib::Client client() const {
        httplib::Client c("127.0.0.1", port_);
        c.set_read_timeout(10, 0);
        return c;
    }
    static std::string ask_body(const std::string& query, bool image, const std::string& session = {}) {
        json j{{"query", query}};
        if (image) j["image_b64"] = b64_of(png("service"));
        if (!session.empty()) j["session_id"] = session;
        return j.dump();
    }

    std::shared_ptr<Pipeline> pipeline_;
    std::unique_ptr<Service> service_;
    int port_ = 0;
};

TEST_F(ServiceTest, HealthReportsComponents) {
    start();
    auto res = client().Get("/health");
    ASSERT_TRUE(res);
    EXPECT_EQ(res->status, 200);
    const auto j = json::parse(res->body);
    EXPECT_EQ(j["status"], "ok");
    EXPECT_EQ(j["components"]["graph"]["entities"], 2);
    EXPECT_EQ(j["components"]["prompt_version"], "v1");
}

TEST_F(ServiceTest, AskAndFetchSession) {
    start();
    auto c = client();
    auto res = c.Post("/v1/ask", ask_body("Treatment?", true), "application/json");
    ASSERT_TRUE(res);
    ASSERT_EQ(res->status, 200) << res->body;
    const auto first = json::parse(res->body);
    EXPECT_EQ(first["diagnosis"]["class_name"], "Basal cell carcinoma");
    const std::string id = first["session_id"];

    res = c.Post("/v1/ask", ask_body("Is it curable?", false, id), "application/json");
    ASSERT_EQ(res->status, 200) << res->body;

    res = c.Get("/v1/session/" + id);
    ASSERT_EQ(res->status, 200);
    const auto s = json::parse(res->body);
    EXPECT_EQ(s["turns"].size(), 2u);
    EXPECT_EQ(s["sticky_diagnosis"]["class_name"], "Basal cell carcinoma");

    EXPECT_EQ(c.Get("/v1/session/0123456789abcdef")->status, 404);
}

TEST_F(ServiceTest, MultipartUpload) {
    start();
    const auto img = png("multipart");
    httplib::MultipartFormDataItems items{
        {"query", "What is this?", "", ""},
        {"image", std::string(img.bytes.begin(), img.bytes.end()), "lesion.png", "image/png"}};
    auto res = client().Post("/v1/ask", items);
    ASSERT_TRUE(res);
    EXPECT_EQ(res->status, 200) << res->body;
}

TEST_F(ServiceTest, BadRequests) {
    start();
    auto c = client();
    auto res = c.Post("/v1/ask", R"({"image_b64": ")" + b64_of(png()) + R"("})", "application/json");
    EXPECT_EQ(res->status, 400);
    EXPECT_EQ(json::parse(res->body)["error"]["code"], "InvalidRequest");
    EXPECT_EQ(c.Post("/v1/ask", "{not json", "application/json")->status, 400);
    EXPECT_EQ(c.Post("/v1/ask", ask_body("No image", false), "application/json")->status, 400);
    EXPECT_EQ(c.Post("/v1/ask", ask_body("Hi", false, "unknownsession"), "application/json")->status, 404);
}

TEST_F(ServiceTest, ConcurrentRequestsGetDistinctSessions) {
    start();
    std::vector<std::string> ids(32);
    std::vector<int> status(32, 0);
    std::vector<std::thread> threads;
    for (int i = 0; i < 32; ++i) {
        threads.emplace_back([&, i] {
            auto res = client().Post("/v1/ask", ask_body("Question " + std::to_string(i), true), "application/json");
            if (!res) return;
            status[i] = res->status;
            if (res->status == 200) ids[i] = json::parse(res->body)["session_id"];
        });
    }
    for (auto& t : threads) t.join();
    for (int s : status) EXPECT_EQ(s, 200);
    EXPECT_EQ(std::set<std::string>(ids.begin(), ids.end()).size(), 32u);
}

TEST_F(ServiceTest, ApiKeyIsEnforced) {
    start("sekret");
    auto c = client();
    EXPECT_EQ(c.Get("/health")->status, 200);
    EXPECT_EQ(c.Post("/v1/ask", ask_body("Hi", true), "application/json")->status, 401);
    httplib::Headers auth{{"Authorization", "Bearer sekret"}};
    EXPECT_EQ(c.Post("/v1/ask", auth, ask_body("Hi", true), "application/json")->status, 200);
}

TEST_F(ServiceTest, BindingATakenPortFails) {
    start();
    Service other(pipeline_);
    EXPECT_EQ(error_code_of([&] { other.bind("127.0.0.1", port_); }), ErrorCode::IoError);
}
