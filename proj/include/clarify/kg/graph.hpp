#pragma once

#include <cstddef>
#include <istream>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "clarify/gateway/clients.hpp"

namespace clarify::kg {

enum class EntityKind { Disease, Symptom, Treatment, RiskFactor, Description, Other };

std::string_view to_string(EntityKind kind);
/// Unknown or empty strings map to Other.
EntityKind kind_from_string(std::string_view s);

struct Entity {
    std::string id;
    std::string label;
    EntityKind kind = EntityKind::Other;

    friend bool operator==(const Entity&, const Entity&) = default;
};

struct Relation {
    std::string subject_id;
    std::string predicate;
    std::string object_id;

    friend bool operator==(const Relation&, const Relation&) = default;
};

/// Dense embeddings for every entity label and every distinct predicate,
/// stored as f32 rows in entity / predicates() order.
struct EmbeddingIndex {
    std::size_t dim = 0;
    std::string embedder;  // TextEmbedder::identity() of the producer
    std::vector<float> entity_rows;
    std::vector<float> predicate_rows;

    friend bool operator==(const EmbeddingIndex&, const EmbeddingIndex&) = default;
};

/// Immutable entity/relation store with an incident-relation adjacency.
/// Produce new graphs with ingest() or build_index(); never mutate a
/// published one.
class KnowledgeGraph {
public:
    KnowledgeGraph() = default;

    /// Validates unique ids, non-empty labels, resolvable endpoints and unique
    /// triples; throws ValidationError.
    KnowledgeGraph(std::vector<Entity> entities, std::vector<Relation> relations,
                   std::optional<EmbeddingIndex> index = std::nullopt);

    const std::vector<Entity>& entities() const noexcept { return entities_; }
    const std::vector<Relation>& relations() const noexcept { return relations_; }
    /// Distinct predicates in ascending order.
    const std::vector<std::string>& predicates() const noexcept { return predicates_; }

    std::optional<std::size_t> index_of(std::string_view id) const;
    const Entity* find(std::string_view id) const;

    /// Relation indices incident to entity `entity_index` (as subject or
    /// object), ascending.
    std::span<const std::size_t> incident(std::size_t entity_index) const;

    bool has_index() const noexcept { return index_.has_value(); }
    const EmbeddingIndex& index() const;
    const std::optional<EmbeddingIndex>& maybe_index() const noexcept { return index_; }

    KnowledgeGraph with_index(EmbeddingIndex index) const;

    friend bool operator==(const KnowledgeGraph& a, const KnowledgeGraph& b) {
        return a.entities_ == b.entities_ && a.relations_ == b.relations_ && a.index_ == b.index_;
    }

private:
    std::vector<Entity> entities_;
    std::vector<Relation> relations_;
    std::vector<std::string> predicates_;
    std::unordered_map<std::string, std::size_t> by_id_;
    std::vector<std::vector<std::size_t>> adjacency_;
    std::optional<EmbeddingIndex> index_;
};

struct IngestOptions {
    /// Strict mode: every id used by a triple must be declared with a label,
    /// either by an {"entity": id, "label": ...} line or by s_label/o_label.
    bool strict = false;
};

/// Reads triple JSONL:
///   {"s": id, "s_label": ..., "s_kind": ..., "p": predicate, "o": id, "o_label": ..., "o_kind": ...}
/// and optional declarations {"entity": id, "label": ..., "kind": ...}.
/// Entities and relations are deduplicated; the first label and the first
/// non-"other" kind win. Errors: ParseError (malformed line) and
/// ValidationError (dangling ids in strict mode, all offending lines listed).
KnowledgeGraph ingest(std::istream& triples, const IngestOptions& options = {});
KnowledgeGraph ingest_file(const std::string& path, const IngestOptions& options = {});

/// Embeds every entity label, then every predicate, in batches. Rejects
/// mixed dims (ProtocolViolation) and zero-norm rows (DegenerateVector).
KnowledgeGraph build_index(const KnowledgeGraph& g, const gateway::TextEmbedder& embedder,
                           std::size_t batch_size = 64);

struct EntityMatch {
    Entity entity;
    double similarity = 0.0;
};

/// Exact top-n by cosine similarity, descending, ties by id ascending.
std::vector<EntityMatch> semantic_lookup(const KnowledgeGraph& g,
                                         const gateway::EmbeddingVector& query, std::size_t top_n);
std::vector<EntityMatch> semantic_lookup(const KnowledgeGraph& g,
                                         const gateway::TextEmbedder& embedder,
                                         const std::string& query, std::size_t top_n);

struct Fact {
    std::string subject_label;
    std::string predicate;
    std::string object_label;
    int hop = 1;

    friend bool operator==(const Fact&, const Fact&) = default;
};

struct ContextPack {
    Entity anchor;
    std::vector<Fact> facts;
    int hop_depth = 1;
    std::string rendered_text;
};

/// Breadth-first traversal over incident relations (both directions). A
/// relation is a fact at hop h when the nearer endpoint is h-1 steps from the
/// anchor; facts with h <= hop_depth are kept, ordered by (hop, predicate,
/// object label, subject label) and truncated to max_facts.
ContextPack neighborhood(const KnowledgeGraph& g, const std::string& anchor_id, int hop_depth,
                         std::size_t max_facts);

/// "subject —predicate→ object", with '\\', newlines and the two separator
/// glyphs backslash-escaped inside each field.
std::string render_fact_line(const Fact& fact);
/// Inverse of render_fact_line (hop is not encoded and comes back as 1).
std::optional<Fact> parse_fact_line(std::string_view line);
std::string escape_field(std::string_view text);
std::string unescape_field(std::string_view text);

/// Recovers the anchor label and facts from ContextPack::rendered_text.
struct ParsedContext {
    std::string anchor_label;
    std::vector<Fact> facts;
};
ParsedContext parse_context_text(std::string_view rendered);

// Graph file layout (little-endian):
//   "CKG1" | u32 header_len | header JSON {version, entities, predicates,
//   relations, dim, indexed, embedder}
//   | entities: (str id, str label, u8 kind)* | predicates: str*
//   | relations: (u32 subject, u32 predicate, u32 object)*
//   | if indexed: f32 rows, entities then predicates
// where str = u32 length + UTF-8 bytes.
std::vector<std::uint8_t> encode_graph(const KnowledgeGraph& g);
KnowledgeGraph decode_graph(const std::vector<std::uint8_t>& bytes);
void save_graph(const KnowledgeGraph& g, const std::string& path);
KnowledgeGraph load_graph(const std::string& path);

}  // namespace clarify::kg
