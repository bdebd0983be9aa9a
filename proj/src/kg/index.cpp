#include <algorithm>
#include <numeric>

#include "clarify/error.hpp"
#include "clarify/kernels/dense.hpp"
#include "clarify/kg/graph.hpp"

namespace clarify::kg {

namespace {

void embed_rows(const std::vector<std::string>& texts, const gateway::TextEmbedder& embedder,
                std::size_t batch_size, std::size_t& dim, std::vector<float>& rows) {
    rows.clear();
    rows.reserve(texts.size() * std::max<std::size_t>(dim, 1));
    for (std::size_t start = 0; start < texts.size(); start += batch_size) {
        const std::size_t end = std::min(texts.size(), start + batch_size);
        const std::vector<std::string> batch(texts.begin() + static_cast<std::ptrdiff_t>(start),
                                             texts.begin() + static_cast<std::ptrdiff_t>(end));
        const auto vectors = embedder.embed(batch);
        for (std::size_t i = 0; i < vectors.size(); ++i) {
            const auto& v = vectors[i];
            if (dim == 0) dim = v.dim();
            if (v.dim() != dim)
                fail(ErrorCode::ProtocolViolation, "embedder returned mixed dims across batches");
            if (v.norm() == 0.0)
                fail(ErrorCode::DegenerateVector, "zero-norm embedding for '" + batch[i] + "'");
            for (double x : v.values()) rows.push_back(static_cast<float>(x));
        }
    }
}

}  // namespace

KnowledgeGraph build_index(const KnowledgeGraph& g, const gateway::TextEmbedder& embedder,
                           std::size_t batch_size) {
    require(batch_size > 0, ErrorCode::InvalidArgument, "batch_size must be positive");
    EmbeddingIndex index;
    index.embedder = embedder.identity();

    std::vector<std::string> labels;
    labels.reserve(g.entities().size());
    for (const auto& e : g.entities()) labels.push_back(e.label);
    embed_rows(labels, embedder, batch_size, index.dim, index.entity_rows);
    embed_rows(g.predicates(), embedder, batch_size, index.dim, index.predicate_rows);
    if (index.dim == 0) index.dim = 1;  // empty graph: nothing was embedded
    return g.with_index(std::move(index));
}

std::vector<EntityMatch> semantic_lookup(const KnowledgeGraph& g,
                                         const gateway::EmbeddingVector& query, std::size_t top_n) {
    require(top_n >= 1, ErrorCode::InvalidArgument, "top_n must be >= 1");
    require(!g.entities().empty(), ErrorCode::EmptyGraph, "semantic lookup on an empty graph");
    const auto& index = g.index();
    require(query.dim() == index.dim, ErrorCode::DimensionMismatch,
            "query dim " + std::to_string(query.dim()) + " != index dim "
                + std::to_string(index.dim));
    require(query.norm() > 0.0, ErrorCode::DegenerateVector, "query embedding has zero norm");

    const std::size_t m = g.entities().size();
    std::vector<double> scores(m);
    kernels::cosine_scores(query.values(), index.entity_rows, m, scores);

    std::vector<std::size_t> order(m);
    std::iota(order.begin(), order.end(), 0);
    const std::size_t n = std::min(top_n, m);
    const auto& entities = g.entities();
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n), order.end(),
                      [&](std::size_t a, std::size_t b) {
                          if (scores[a] != scores[b]) return scores[a] > scores[b];
                          return entities[a].id < entities[b].id;
                      });
    std::vector<EntityMatch> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) out.push_back({entities[order[i]], scores[order[i]]});
    return out;
}

std::vector<EntityMatch> semantic_lookup(const KnowledgeGraph& g,
                                         const gateway::TextEmbedder& embedder,
                                         const std::string& query, std::size_t top_n) {
    require(!g.entities().empty(), ErrorCode::EmptyGraph, "semantic lookup on an empty graph");
    const auto& index = g.index();
    if (!index.embedder.empty() && index.embedder != embedder.identity()) {
        fail(ErrorCode::ConfigError, "graph was indexed with '" + index.embedder
                                         + "' but queried with '" + embedder.identity() + "'");
    }
    return semantic_lookup(g, embedder.embed({query}).front(), top_n);
}

}  // namespace clarify::kg
