#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "clarify/gateway/vector.hpp"
#include "clarify/kg/graph.hpp"
#include "support/graphs.hpp"
#include "support/test_support.hpp"

using namespace clarify;
using namespace clarify::kg;
using clarify::testing::error_code_of;

namespace {

const char* kThreeLines =
    R"({"s": "rosacea", "s_label": "Rosacea", "s_kind": "disease", "p": "has_symptom", "o": "facial_redness", "o_label": "Facial redness"})"
    "\n"
    R"({"s": "rosacea", "p": "treated_by", "o": "topical_metronidazole", "o_label": "Topical metronidazole", "o_kind": "treatment"})"
    "\n"
    R"({"s": "rosacea", "s_label": "Rosacea", "p": "has_symptom", "o": "facial_redness"})"
    "\n";

KnowledgeGraph from_text(const std::string& text, IngestOptions opts = {}) {
    std::istringstream in(text);
    return ingest(in, opts);
}

KnowledgeGraph star() {
    return KnowledgeGraph({{"rosacea", "Rosacea", EntityKind::Disease},
                           {"a", "Facial redness", EntityKind::Symptom},
                           {"b", "Flushing", EntityKind::Symptom},
                           {"c", "Metronidazole", EntityKind::Treatment},
                           {"d", "Sun exposure", EntityKind::RiskFactor}},
                          {{"rosacea", "treated_by", "c"},
                           {"rosacea", "has_symptom", "b"},
                           {"d", "aggravates", "rosacea"},
                           {"rosacea", "has_symptom", "a"}});
}

std::vector<double> brute_scores(const KnowledgeGraph& g, const gateway::TextEmbedder& e, const std::string& q) {
    const auto qv = e.embed({q})[0];
    std::vector<double> out;
    for (std::size_t i = 0; i < g.entities().size(); ++i) {
        const auto& idx = g.index();
        std::vector<double> row(idx.entity_rows.begin() + i * idx.dim, idx.entity_rows.begin() + (i + 1) * idx.dim);
        out.push_back(gateway::cosine_similarity(qv, gateway::EmbeddingVector(row)));
    }
    return out;
}

}  // namespace

TEST(Ingest, ThreeLineFixtureDeduplicates) {
    const auto g = from_text(kThreeLines);
    EXPECT_EQ(g.entities().size(), 3u);
    EXPECT_EQ(g.relations().size(), 2u);
    EXPECT_EQ(g.find("rosacea")->kind, EntityKind::Disease);
    EXPECT_EQ(g.find("facial_redness")->label, "Facial redness");
    EXPECT_EQ(g.find("topical_metronidazole")->kind, EntityKind::Treatment);

    std::ifstream f(std::string(CLARIFY_RESOURCE_DIR) + "/fixtures/kg_three_lines.jsonl");
    const auto fixture = ingest(f);
    EXPECT_EQ(fixture.entities().size(), 3u);
    EXPECT_EQ(fixture.relations().size(), 2u);
}

TEST(Ingest, EmptyStreamIsValidEmptyGraph) {
    const auto g = from_text("");
    EXPECT_TRUE(g.entities().empty());
    EXPECT_TRUE(g.relations().empty());
}

TEST(Ingest, StrictModeRejectsUndeclaredIds) {
    const std::string text = R"({"entity": "a", "label": "A"})"
                             "\n"
                             R"({"s": "a", "p": "x", "o": "b"})"
                             "\n"
                             R"({"s": "c", "p": "x", "o": "a"})"
                             "\n";
    try {
        from_text(text, {true});
        FAIL();
    } catch (const ValidationError& e) {
        EXPECT_EQ(e.lines(), (std::vector<std::size_t>{2, 3}));
    }
    EXPECT_EQ(from_text(text).entities().size(), 3u);
}

TEST(Ingest, MalformedLineReportsLineNumber) {
    try {
        from_text(std::string(kThreeLines) + "{\"s\": \"a\", \"p\": \"x\"}\n");
        FAIL();
    } catch (const ParseError& e) {
        EXPECT_EQ(e.line(), 4u);
    }
    EXPECT_EQ(error_code_of([] { from_text("[1, 2]\n"); }), ErrorCode::ParseError);
    EXPECT_EQ(error_code_of([] { ingest_file("/nonexistent/triples.jsonl"); }), ErrorCode::NotFound);
}

TEST(Ingest, Idempotent) {
    const auto once = from_text(kThreeLines);
    const auto twice = from_text(std::string(kThreeLines) + kThreeLines);
    EXPECT_EQ(once, twice);
}

TEST(Graph, ConstructorValidates) {
    EXPECT_EQ(error_code_of([] { KnowledgeGraph({{"a", "A"}, {"a", "B"}}, {}); }), ErrorCode::ValidationError);
    EXPECT_EQ(error_code_of([] { KnowledgeGraph({{"a", ""}}, {}); }), ErrorCode::ValidationError);
    EXPECT_EQ(error_code_of([] { KnowledgeGraph({{"a", "A"}}, {{"a", "p", "zz"}}); }), ErrorCode::ValidationError);
    EXPECT_EQ(error_code_of([] { KnowledgeGraph({{"a", "A"}}, {{"a", "p", "a"}, {"a", "p", "a"}}); }),
              ErrorCode::ValidationError);
}

TEST(Index, TwoEntityGraph) {
    const KnowledgeGraph g({{"a", "Rosacea"}, {"b", "Flushing"}}, {{"a", "has_symptom", "b"}});
    const gateway::HashTextEmbedder e(32);
    const auto indexed = build_index(g, e);
    ASSERT_TRUE(indexed.has_index());
    EXPECT_EQ(indexed.index().dim, 32u);
    EXPECT_EQ(indexed.index().entity_rows.size(), 2u * 32u);
    EXPECT_EQ(indexed.index().predicate_rows.size(), 1u * 32u);
    EXPECT_EQ(indexed.index().embedder, e.identity());
    EXPECT_EQ(build_index(g, e).index(), indexed.index());
}

TEST(Index, BatchCountMatchesCeiling) {
    const auto g = clarify::testing::random_graph(1000, 10, 1);
    clarify::testing::CountingEmbedder e(16);
    build_index(g, e, 64);
    const std::size_t entity_batches = (1000 + 63) / 64;
    const std::size_t predicate_batches = (g.predicates().size() + 63) / 64;
    EXPECT_EQ(e.calls(), entity_batches + predicate_batches);
}

TEST(Index, RejectsZeroNormLabel) {
    const KnowledgeGraph g({{"a", "Rosacea"}, {"b", "f1 -f1"}}, {});
    EXPECT_EQ(error_code_of([&] { build_index(g, gateway::HashTextEmbedder(8)); }), ErrorCode::DegenerateVector);
}

TEST(Lookup, ExactLabelRanksFirstWithSimilarityOne) {
    const auto g = build_index(star(), gateway::HashTextEmbedder(64));
    const gateway::HashTextEmbedder e(64);
    const auto m = semantic_lookup(g, e, "Metronidazole", 2);
    ASSERT_EQ(m.size(), 2u);
    EXPECT_EQ(m[0].entity.id, "c");
    EXPECT_EQ(m[0].similarity, 1.0);
    EXPECT_EQ(semantic_lookup(g, e, "rosacea", 50).size(), 5u);
}

TEST(Lookup, Errors) {
    const gateway::HashTextEmbedder e(64);
    EXPECT_EQ(error_code_of([&] { semantic_lookup(build_index(KnowledgeGraph{}, e), e, "x", 3); }),
              ErrorCode::EmptyGraph);
    const auto g = build_index(star(), e);
    EXPECT_EQ(error_code_of([&] { semantic_lookup(g, gateway::EmbeddingVector({1.0, 2.0}), 3); }),
              ErrorCode::DimensionMismatch);
    EXPECT_EQ(error_code_of([&] { semantic_lookup(g, e, "x", 0); }), ErrorCode::InvalidArgument);
    EXPECT_EQ(error_code_of([&] { semantic_lookup(g, gateway::HashTextEmbedder(64, 99), "x", 3); }),
              ErrorCode::ConfigError);
}

TEST(Lookup, MatchesBruteForceRanking) {
    const gateway::HashTextEmbedder e(48);
    const auto g = build_index(clarify::testing::random_graph(20, 30, 5), e);
    std::mt19937_64 rng(2);
    const char* words[] = {"red", "scaly", "patch", "lesion", "nodule", "itchy", "dome", "crust"};
    for (int t = 0; t < 30; ++t) {
        const std::string q = std::string(words[rng() % 8]) + " " + words[rng() % 8];
        const auto scores = brute_scores(g, e, q);
        std::vector<std::size_t> order(scores.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            if (scores[a] != scores[b]) return scores[a] > scores[b];
            return g.entities()[a].id < g.entities()[b].id;
        });
        const std::size_t n = 1 + rng() % 25;
        const auto m = semantic_lookup(g, e, q, n);
        ASSERT_EQ(m.size(), std::min<std::size_t>(n, 20));
        for (std::size_t i = 0; i < m.size(); ++i) {
            EXPECT_EQ(m[i].entity.id, g.entities()[order[i]].id);
            EXPECT_NEAR(m[i].similarity, scores[order[i]], 1e-12);
        }
    }
}

TEST(Neighborhood, StarOneHopInPredicateOrder) {
    const auto p = neighborhood(star(), "rosacea", 1, 10);
    ASSERT_EQ(p.facts.size(), 4u);
    EXPECT_EQ(p.facts[0].predicate, "aggravates");
    EXPECT_EQ(p.facts[1].object_label, "Facial redness");
    EXPECT_EQ(p.facts[2].object_label, "Flushing");
    EXPECT_EQ(p.facts[3].predicate, "treated_by");
    EXPECT_EQ(p.anchor.id, "rosacea");
    EXPECT_EQ(neighborhood(star(), "rosacea", 1, 2).facts.size(), 2u);
}

TEST(Neighborhood, ChainTwoHops) {
    const KnowledgeGraph g({{"a", "A"}, {"b", "B"}, {"c", "C"}}, {{"a", "next", "b"}, {"b", "next", "c"}});
    EXPECT_EQ(neighborhood(g, "a", 1, 10).facts.size(), 1u);
    const auto p = neighborhood(g, "a", 2, 10);
    ASSERT_EQ(p.facts.size(), 2u);
    EXPECT_EQ(p.facts[0], (Fact{"A", "next", "B", 1}));
    EXPECT_EQ(p.facts[1], (Fact{"B", "next", "C", 2}));
}

TEST(Neighborhood, Errors) {
    EXPECT_EQ(error_code_of([] { neighborhood(star(), "nope", 1, 5); }), ErrorCode::NotFound);
    EXPECT_EQ(error_code_of([] { neighborhood(star(), "rosacea", 0, 5); }), ErrorCode::InvalidArgument);
    EXPECT_EQ(error_code_of([] { neighborhood(star(), "rosacea", 1, 0); }), ErrorCode::InvalidArgument);
}

TEST(Neighborhood, MatchesBfsOracleAndIsMonotone) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const auto g = clarify::testing::random_graph(30, 40, seed);
        const std::string anchor = "e" + std::to_string(seed % 30);
        std::vector<Fact> prev;
        for (int h = 1; h <= 4; ++h) {
            const auto p = neighborhood(g, anchor, h, 10000);
            EXPECT_EQ(p.facts, clarify::testing::oracle_neighborhood(g, anchor, h)) << "seed " << seed << " h " << h;
            for (const auto& f : prev) {
                const bool found = std::any_of(p.facts.begin(), p.facts.end(), [&](const Fact& x) {
                    return x.subject_label == f.subject_label && x.predicate == f.predicate
                           && x.object_label == f.object_label;
                });
                EXPECT_TRUE(found);
            }
            prev = p.facts;
        }
    }
}

TEST(Render, FactLineRoundTripWithEscapes) {
    const std::vector<Fact> facts{{"Rosacea", "has_symptom", "Facial redness", 1},
                                  {"A —x→ B", "odd\npredicate", "back\\slash", 1},
                                  {"—", "→", "\\n", 1}};
    for (const auto& f : facts) {
        const auto line = render_fact_line(f);
        EXPECT_EQ(line.find('\n'), std::string::npos);
        EXPECT_EQ(parse_fact_line(line), f);
    }
    EXPECT_EQ(render_fact_line(facts[0]), "Rosacea —has_symptom→ Facial redness");
    EXPECT_FALSE(parse_fact_line("no separators here").has_value());
    EXPECT_EQ(unescape_field(escape_field("a\\b—c→d\ne")), "a\\b—c→d\ne");
}

TEST(Render, ContextTextRoundTrips) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const auto g = clarify::testing::random_graph(25, 35, seed);
        const auto p = neighborhood(g, "e0", 2, 12);
        const auto parsed = parse_context_text(p.rendered_text);
        EXPECT_EQ(parsed.anchor_label, p.anchor.label);
        ASSERT_EQ(parsed.facts.size(), p.facts.size());
        for (std::size_t i = 0; i < p.facts.size(); ++i) {
            auto f = p.facts[i];
            f.hop = 1;
            EXPECT_EQ(parsed.facts[i], f);
        }
    }
}

TEST(GraphIo, RoundTripAndCorruption) {
    const gateway::HashTextEmbedder e(16);
    const auto g = build_index(clarify::testing::random_graph(40, 60, 3), e);
    EXPECT_EQ(decode_graph(encode_graph(g)), g);

    const auto plain = star();
    const auto back = decode_graph(encode_graph(plain));
    EXPECT_EQ(back, plain);
    EXPECT_FALSE(back.has_index());

    clarify::testing::TempDir tmp;
    save_graph(g, tmp.file("g.ckg1"));
    EXPECT_EQ(load_graph(tmp.file("g.ckg1")), g);

    auto bytes = encode_graph(g);
    auto magic = bytes;
    magic[0] = 'X';
    EXPECT_EQ(error_code_of([&] { decode_graph(magic); }), ErrorCode::FormatError);
    auto cut = bytes;
    cut.resize(cut.size() / 2);
    EXPECT_EQ(error_code_of([&] { decode_graph(cut); }), ErrorCode::FormatError);
    EXPECT_EQ(error_code_of([&] { load_graph(tmp.file("missing")); }), ErrorCode::NotFound);
}
