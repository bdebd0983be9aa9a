#include "clarify/kg/graph.hpp"

#include <algorithm>
#include <deque>
#include <set>
#include <tuple>

#include "clarify/error.hpp"

namespace clarify::kg {

std::string_view to_string(EntityKind kind) {
    switch (kind) {
        case EntityKind::Disease: return "disease";
        case EntityKind::Symptom: return "symptom";
        case EntityKind::Treatment: return "treatment";
        case EntityKind::RiskFactor: return "risk_factor";
        case EntityKind::Description: return "description";
        case EntityKind::Other: return "other";
    }
    return "other";
}

EntityKind kind_from_string(std::string_view s) {
    for (auto k : {EntityKind::Disease, EntityKind::Symptom, EntityKind::Treatment,
                   EntityKind::RiskFactor, EntityKind::Description}) {
        if (s == to_string(k)) return k;
    }
    return EntityKind::Other;
}

KnowledgeGraph::KnowledgeGraph(std::vector<Entity> entities, std::vector<Relation> relations,
                               std::optional<EmbeddingIndex> index)
    : entities_(std::move(entities)), relations_(std::move(relations)) {
    by_id_.reserve(entities_.size());
    for (std::size_t i = 0; i < entities_.size(); ++i) {
        if (entities_[i].label.empty())
            throw ValidationError({}, "entity '" + entities_[i].id + "' has an empty label");
        if (!by_id_.emplace(entities_[i].id, i).second)
            throw ValidationError({}, "duplicate entity id '" + entities_[i].id + "'");
    }
    adjacency_.assign(entities_.size(), {});
    std::set<std::tuple<std::string, std::string, std::string>> seen;
    std::set<std::string> preds;
    for (std::size_t r = 0; r < relations_.size(); ++r) {
        const auto& rel = relations_[r];
        const auto s = by_id_.find(rel.subject_id);
        const auto o = by_id_.find(rel.object_id);
        if (s == by_id_.end() || o == by_id_.end())
            throw ValidationError({}, "relation " + std::to_string(r) + " references an unknown entity");
        if (rel.predicate.empty())
            throw ValidationError({}, "relation " + std::to_string(r) + " has an empty predicate");
        if (!seen.emplace(rel.subject_id, rel.predicate, rel.object_id).second)
            throw ValidationError({}, "duplicate relation " + rel.subject_id + " " + rel.predicate
                                          + " " + rel.object_id);
        adjacency_[s->second].push_back(r);
        if (o->second != s->second) adjacency_[o->second].push_back(r);
        preds.insert(rel.predicate);
    }
    predicates_.assign(preds.begin(), preds.end());

    if (index) {
        const std::size_t d = index->dim;
        if (d == 0 || index->entity_rows.size() != entities_.size() * d
            || index->predicate_rows.size() != predicates_.size() * d)
            throw ValidationError({}, "embedding index does not match the graph");
        index_ = std::move(index);
    }
}

std::optional<std::size_t> KnowledgeGraph::index_of(std::string_view id) const {
    const auto it = by_id_.find(std::string(id));
    if (it == by_id_.end()) return std::nullopt;
    return it->second;
}

const Entity* KnowledgeGraph::find(std::string_view id) const {
    const auto i = index_of(id);
    return i ? &entities_[*i] : nullptr;
}

std::span<const std::size_t> KnowledgeGraph::incident(std::size_t entity_index) const {
    return adjacency_.at(entity_index);
}

const EmbeddingIndex& KnowledgeGraph::index() const {
    require(index_.has_value(), ErrorCode::InvalidArgument, "graph has no embedding index");
    return *index_;
}

KnowledgeGraph KnowledgeGraph::with_index(EmbeddingIndex index) const {
    return KnowledgeGraph(entities_, relations_, std::move(index));
}

ContextPack neighborhood(const KnowledgeGraph& g, const std::string& anchor_id, int hop_depth,
                         std::size_t max_facts) {
    require(hop_depth >= 1, ErrorCode::InvalidArgument, "hop_depth must be >= 1");
    require(max_facts >= 1, ErrorCode::InvalidArgument, "max_facts must be >= 1");
    const auto anchor = g.index_of(anchor_id);
    require(anchor.has_value(), ErrorCode::NotFound, "unknown entity '" + anchor_id + "'");

    const auto& entities = g.entities();
    const auto& relations = g.relations();
    std::vector<int> dist(entities.size(), -1);
    std::vector<int> rel_hop(relations.size(), -1);
    std::deque<std::size_t> queue{*anchor};
    dist[*anchor] = 0;
    while (!queue.empty()) {
        const std::size_t u = queue.front();
        queue.pop_front();
        if (dist[u] >= hop_depth) continue;
        for (std::size_t r : g.incident(u)) {
            if (rel_hop[r] < 0) rel_hop[r] = dist[u] + 1;
            const auto& rel = relations[r];
            const std::size_t other =
                *g.index_of(rel.subject_id == entities[u].id ? rel.object_id : rel.subject_id);
            if (dist[other] < 0) {
                dist[other] = dist[u] + 1;
                queue.push_back(other);
            }
        }
    }

    struct Candidate {
        Fact fact;
        std::size_t relation;
    };
    std::vector<Candidate> found;
    for (std::size_t r = 0; r < relations.size(); ++r) {
        if (rel_hop[r] < 0) continue;
        const auto& rel = relations[r];
        found.push_back({Fact{g.find(rel.subject_id)->label, rel.predicate,
                              g.find(rel.object_id)->label, rel_hop[r]},
                         r});
    }
    std::sort(found.begin(), found.end(), [](const Candidate& a, const Candidate& b) {
        return std::tie(a.fact.hop, a.fact.predicate, a.fact.object_label, a.fact.subject_label,
                        a.relation)
               < std::tie(b.fact.hop, b.fact.predicate, b.fact.object_label, b.fact.subject_label,
                          b.relation);
    });
    if (found.size() > max_facts) found.resize(max_facts);

    ContextPack pack;
    pack.anchor = entities[*anchor];
    pack.hop_depth = hop_depth;
    pack.rendered_text = escape_field(pack.anchor.label);
    for (auto& c : found) {
        pack.rendered_text += "\n" + render_fact_line(c.fact);
        pack.facts.push_back(std::move(c.fact));
    }
    return pack;
}

}  // namespace clarify::kg
