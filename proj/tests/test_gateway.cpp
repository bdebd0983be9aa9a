#include <atomic>
#include <cmath>
#include <condition_variable>
#include <cstdlib>
#include <mutex>
#include <random>

#include <gtest/gtest.h>

#include "clarify/gateway/clients.hpp"
#include "clarify/gateway/stubs.hpp"
#include "clarify/gateway/transport.hpp"
#include "clarify/gateway/vector.hpp"
#include "support/test_support.hpp"

using namespace clarify;
using namespace clarify::gateway;
using clarify::testing::error_code_of;
using clarify::testing::MockServer;
using clarify::testing::png;

namespace {

EmbeddingVector vec(std::vector<double> v) { return EmbeddingVector(std::move(v)); }

EndpointConfig local(const MockServer& s, int timeout_ms = 2000, int retries = 0) {
    EndpointConfig cfg;
    cfg.base_url = s.url();
    cfg.model_name = "mock";
    cfg.timeout_ms = timeout_ms;
    cfg.max_retries = retries;
    cfg.backoff_initial_ms = 1;
    return cfg;
}

std::string chat_reply(const std::string& content) {
    return nlohmann::json{{"choices", {{{"message", {{"role", "assistant"}, {"content", content}}}}}},
                          {"usage", {{"completion_tokens", 3}}}}
        .dump();
}

}  // namespace

TEST(Cosine, Examples) {
    EXPECT_EQ(cosine_similarity(vec({1, 0}), vec({1, 0})), 1.0);
    EXPECT_EQ(cosine_similarity(vec({1, 0}), vec({0, 1})), 0.0);
    EXPECT_NEAR(cosine_similarity(vec({1, 1}), vec({1, 0})), 0.70710678118654752, 1e-9);
}

TEST(Cosine, Errors) {
    EXPECT_EQ(error_code_of([] { cosine_similarity(vec({1, 0}), vec({1, 0, 0})); }), ErrorCode::DimensionMismatch);
    EXPECT_EQ(error_code_of([] { cosine_similarity(vec({0, 0}), vec({1, 0})); }), ErrorCode::DegenerateVector);
    EXPECT_EQ(error_code_of([] { vec({}); }), ErrorCode::InvalidInput);
    EXPECT_EQ(error_code_of([] { vec({1.0, NAN}); }), ErrorCode::InvalidInput);
}

TEST(Cosine, SymmetryScaleInvarianceAndBounds) {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(-10, 10);
    std::uniform_real_distribution<double> pos(1e-3, 1e3);
    for (int t = 0; t < 500; ++t) {
        const std::size_t d = 1 + rng() % 32;
        std::vector<double> a(d), b(d);
        for (auto& x : a) x = u(rng);
        for (auto& x : b) x = u(rng);
        const double ab = cosine_similarity(vec(a), vec(b));
        EXPECT_LT(std::abs(ab - cosine_similarity(vec(b), vec(a))), 1e-12);
        const double lambda = pos(rng);
        auto la = a;
        for (auto& x : la) x *= lambda;
        EXPECT_NEAR(cosine_similarity(vec(la), vec(b)), ab, 1e-9);
        EXPECT_GE(ab, -1.0);
        EXPECT_LE(ab, 1.0);
        EXPECT_EQ(cosine_similarity(vec(a), vec(a)), 1.0);
        auto na = a;
        for (auto& x : na) x = -x;
        EXPECT_EQ(cosine_similarity(vec(a), vec(na)), -1.0);
    }
}

TEST(HashTextEmbedder, Examples) {
    const HashTextEmbedder e(48);
    const auto one = e.embed({"rosacea"});
    ASSERT_EQ(one.size(), 1u);
    EXPECT_EQ(one[0].dim(), 48u);
    EXPECT_EQ(e.embed({"rosacea"})[0], one[0]);
    const auto abc = e.embed({"a", "b", "a"});
    EXPECT_EQ(abc[0], abc[2]);
    EXPECT_NE(abc[0], abc[1]);
    EXPECT_EQ(error_code_of([&] { e.embed({}); }), ErrorCode::InvalidArgument);
    EXPECT_EQ(error_code_of([&] { e.embed({"ok", "  "}); }), ErrorCode::InvalidArgument);
}

TEST(HashTextEmbedder, NegatedTokensNegateExactly) {
    const HashTextEmbedder e;
    const auto a = e.vector_for("f0 f0 f3 f7 f7 f7");
    const auto b = e.vector_for("-f0 -f0 -f3 -f7 -f7 -f7");
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i], -b[i]);
    EXPECT_EQ(cosine_similarity(vec(a), vec(b)), -1.0);
    const auto cancel = e.vector_for("f1 -f1");
    for (double x : cancel) EXPECT_EQ(x, 0.0);
}

TEST(HashTextEmbedder, CaseInsensitiveAndPunctuationSplit) {
    const HashTextEmbedder e;
    EXPECT_EQ(e.vector_for("Basal Cell"), e.vector_for("basal cell"));
    EXPECT_EQ(e.vector_for("stuck-on"), e.vector_for("stuck on"));
}

TEST(HashImageEmbedder, Examples) {
    const HashImageEmbedder e(16);
    const auto img = png("fixture");
    const auto v = e.embed(img);
    EXPECT_EQ(v.dim(), 16u);
    EXPECT_EQ(e.embed(img), v);
    EXPECT_NE(e.embed(png("other")), v);

    // Independent recomputation of the documented hash-to-vector mapping.
    auto splitmix = [](std::uint64_t x) {
        x += 0x9E3779B97F4A7C15ULL;
        x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
        x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
        return x ^ (x >> 31);
    };
    const auto key = stable_hash(img.bytes.data(), img.bytes.size(), 0xd1);
    for (std::size_t i = 0; i < 16; ++i) {
        const auto bits = splitmix(key + 0x632BE59BD9B4E019ULL * (i + 1));
        EXPECT_EQ(v[i], static_cast<double>(static_cast<std::int64_t>(bits >> 51) - 4096) / 4096.0);
    }

    ImageInput empty;
    EXPECT_EQ(error_code_of([&] { e.embed(empty); }), ErrorCode::InvalidInput);
    ImageInput corrupt;
    corrupt.bytes = {1, 2, 3, 4};
    EXPECT_EQ(error_code_of([&] { e.embed(corrupt); }), ErrorCode::InvalidInput);
    auto mismatch = png();
    mismatch.media_type = "image/jpeg";
    EXPECT_EQ(error_code_of([&] { e.embed(mismatch); }), ErrorCode::InvalidInput);
}

TEST(ImageInput, Base64RoundTrip) {
    const auto img = png("round trip");
    const auto back = ImageInput::from_base64(base64_encode(img.bytes));
    EXPECT_EQ(back.bytes, img.bytes);
    EXPECT_EQ(back.media_type, "image/png");
    EXPECT_EQ(data_uri(img).rfind("data:image/png;base64,", 0), 0u);
}

TEST(EchoChatModel, ReturnsUserTextVerbatim) {
    const EchoChatModel m;
    ChatRequest req;
    req.system_text = "sys";
    req.user_text = "Detected condition: Rosacea\nline two";
    const auto r = m.chat(req);
    EXPECT_EQ(r.text, req.user_text);
    EXPECT_EQ(r.token_count, 5);
    ChatRequest empty;
    EXPECT_EQ(error_code_of([&] { m.chat(empty); }), ErrorCode::InvalidArgument);
}

TEST(ChatBody, WireFormat) {
    ChatRequest req;
    req.system_text = "sys";
    req.user_text = "hello";
    req.image = png();
    const auto body = chat_request_body(req, "gen");
    EXPECT_EQ(body["model"], "gen");
    ASSERT_EQ(body["messages"].size(), 2u);
    EXPECT_EQ(body["messages"][0]["role"], "system");
    EXPECT_EQ(body["messages"][1]["role"], "user");
    const auto dumped = body["messages"][1].dump();
    EXPECT_NE(dumped.find("data:image/png;base64,"), std::string::npos);
    EXPECT_NE(dumped.find("hello"), std::string::npos);
}

TEST(BaseUrl, Parsing) {
    const auto u = parse_base_url("http://example.org:8123/v1/");
    EXPECT_EQ(u.host, "example.org");
    EXPECT_EQ(u.port, 8123);
    EXPECT_EQ(u.path_prefix, "/v1");
    EXPECT_EQ(parse_base_url("http://h").port, 80);
    EXPECT_EQ(error_code_of([] { parse_base_url("ftp://h"); }), ErrorCode::ConfigError);
}

TEST(EnvOverrides, UrlAndKey) {
    EndpointConfig cfg;
    cfg.base_url = "http://a";
    ::setenv("CLARIFY_TEST_URL", "http://b:9", 1);
    ::setenv("CLARIFY_API_KEY", "sekret", 1);
    const auto out = with_env_overrides(cfg, "CLARIFY_TEST_URL");
    ::unsetenv("CLARIFY_TEST_URL");
    ::unsetenv("CLARIFY_API_KEY");
    EXPECT_EQ(out.base_url, "http://b:9");
    EXPECT_EQ(out.api_key, "sekret");
    EXPECT_EQ(with_env_overrides(cfg, "CLARIFY_TEST_URL").base_url, "http://a");
}

TEST(HttpClients, ChatAndEmbeddingsAgainstMockServer) {
    MockServer s;
    std::string seen_auth;
    s.server().Post("/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
        seen_auth = req.get_header_value("Authorization");
        const auto body = nlohmann::json::parse(req.body);
        res.set_content(chat_reply("echo: " + body["messages"].back()["content"].dump()), "application/json");
    });
    s.server().Post("/embeddings", [](const httplib::Request& req, httplib::Response& res) {
        const auto body = nlohmann::json::parse(req.body);
        nlohmann::json data = nlohmann::json::array();
        for (std::size_t i = 0; i < body["input"].size(); ++i)
            data.push_back({{"embedding", {1.0 + static_cast<double>(i), 0.5}}});
        res.set_content(nlohmann::json{{"data", data}}.dump(), "application/json");
    });
    s.start();

    auto cfg = local(s);
    cfg.api_key = "k1";
    ChatRequest req;
    req.user_text = "hi";
    const auto r = chat(req, cfg);
    EXPECT_NE(r.text.find("hi"), std::string::npos);
    EXPECT_EQ(r.token_count, 3);
    EXPECT_EQ(seen_auth, "Bearer k1");

    const auto v = embed_text({"a", "b"}, cfg);
    ASSERT_EQ(v.size(), 2u);
    EXPECT_EQ(v[1][0], 2.0);
    EXPECT_EQ(embed_image(png(), cfg).dim(), 2u);
}

TEST(HttpClients, ServerErrorBecomesUpstreamError) {
    MockServer s;
    std::atomic<int> calls{0};
    s.server().Post("/chat/completions", [&](const httplib::Request&, httplib::Response& res) {
        ++calls;
        res.status = 500;
        res.set_content("{}", "application/json");
    });
    s.start();
    ChatRequest req;
    req.user_text = "hi";
    try {
        chat(req, local(s, 2000, 2));
        FAIL() << "expected UpstreamError";
    } catch (const UpstreamError& e) {
        EXPECT_EQ(e.status(), 500);
    }
    EXPECT_EQ(calls.load(), 3);  // one attempt plus two retries
}

TEST(HttpClients, ClientErrorIsNotRetried) {
    MockServer s;
    std::atomic<int> calls{0};
    s.server().Post("/chat/completions", [&](const httplib::Request&, httplib::Response& res) {
        ++calls;
        res.status = 400;
    });
    s.start();
    ChatRequest req;
    req.user_text = "hi";
    EXPECT_EQ(error_code_of([&] { chat(req, local(s, 2000, 3)); }), ErrorCode::UpstreamError);
    EXPECT_EQ(calls.load(), 1);
}

TEST(HttpClients, RetryRecoversAfterTransientFailure) {
    MockServer s;
    std::atomic<int> calls{0};
    s.server().Post("/chat/completions", [&](const httplib::Request&, httplib::Response& res) {
        if (++calls < 3) {
            res.status = 503;
            return;
        }
        res.set_content(chat_reply("ok"), "application/json");
    });
    s.start();
    ChatRequest req;
    req.user_text = "hi";
    EXPECT_EQ(chat(req, local(s, 2000, 2)).text, "ok");
}

TEST(HttpClients, SlowServerTimesOut) {
    MockServer s;
    std::mutex mu;
    std::condition_variable cv;
    bool release = false;
    s.server().Post("/chat/completions", [&](const httplib::Request&, httplib::Response& res) {
        std::unique_lock lock(mu);
        cv.wait_for(lock, std::chrono::seconds(10), [&] { return release; });
        res.set_content(chat_reply("late"), "application/json");
    });
    s.start();
    ChatRequest req;
    req.user_text = "hi";
    const auto t0 = std::chrono::steady_clock::now();
    EXPECT_EQ(error_code_of([&] { chat(req, local(s, 100, 0)); }), ErrorCode::Timeout);
    EXPECT_LT(std::chrono::steady_clock::now() - t0, std::chrono::seconds(5));
    {
        std::lock_guard lock(mu);
        release = true;
    }
    cv.notify_all();
}

TEST(HttpClients, ProtocolViolations) {
    MockServer s;
    s.server().Post("/chat/completions", [](const httplib::Request&, httplib::Response& res) {
        res.set_content("not json", "text/plain");
    });
    s.server().Post("/embeddings", [](const httplib::Request&, httplib::Response& res) {
        res.set_content(R"({"data": [{"embedding": [1, 2]}, {"embedding": [1, 2, 3]}]})", "application/json");
    });
    s.start();
    ChatRequest req;
    req.user_text = "hi";
    EXPECT_EQ(error_code_of([&] { chat(req, local(s)); }), ErrorCode::ProtocolViolation);
    // Wrong count, then mixed dims: no partial result either way.
    EXPECT_EQ(error_code_of([&] { embed_text({"a"}, local(s)); }), ErrorCode::ProtocolViolation);
    EXPECT_EQ(error_code_of([&] { embed_text({"a", "b"}, local(s)); }), ErrorCode::ProtocolViolation);
}

TEST(HttpClients, UnreachableHostExhaustsRetries) {
    EndpointConfig cfg;
    cfg.base_url = "http://127.0.0.1:1";
    cfg.timeout_ms = 200;
    cfg.max_retries = 1;
    cfg.backoff_initial_ms = 1;
    ChatRequest req;
    req.user_text = "hi";
    const auto code = error_code_of([&] { chat(req, cfg); });
    EXPECT_TRUE(code == ErrorCode::RetryExhausted || code == ErrorCode::Timeout);
}
