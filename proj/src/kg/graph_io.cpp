#include <algorithm>

#include <nlohmann/json.hpp>

#include "clarify/detail/bytes.hpp"
#include "clarify/kg/graph.hpp"

namespace clarify::kg {

namespace {
constexpr std::string_view kMagic = "CKG1";
constexpr int kGraphFormatVersion = 1;
}  // namespace

std::vector<std::uint8_t> encode_graph(const KnowledgeGraph& g) {
    const auto& preds = g.predicates();
    nlohmann::json header{{"version", kGraphFormatVersion},
                          {"entities", g.entities().size()},
                          {"predicates", preds.size()},
                          {"relations", g.relations().size()},
                          {"dim", g.has_index() ? g.index().dim : 0},
                          {"indexed", g.has_index()},
                          {"embedder", g.has_index() ? g.index().embedder : ""}};

    detail::ByteWriter w;
    w.raw(kMagic);
    w.str(header.dump());
    for (const auto& e : g.entities()) {
        w.str(e.id);
        w.str(e.label);
        w.u8(static_cast<std::uint8_t>(e.kind));
    }
    for (const auto& p : preds) w.str(p);
    for (const auto& r : g.relations()) {
        w.u32(static_cast<std::uint32_t>(*g.index_of(r.subject_id)));
        const auto p = std::lower_bound(preds.begin(), preds.end(), r.predicate) - preds.begin();
        w.u32(static_cast<std::uint32_t>(p));
        w.u32(static_cast<std::uint32_t>(*g.index_of(r.object_id)));
    }
    if (g.has_index()) {
        for (float v : g.index().entity_rows) w.f32(v);
        for (float v : g.index().predicate_rows) w.f32(v);
    }
    return w.take();
}

KnowledgeGraph decode_graph(const std::vector<std::uint8_t>& bytes) {
    detail::ByteReader r(bytes);
    if (r.raw(std::min<std::size_t>(4, bytes.size()), "magic") != kMagic)
        throw FormatError(0, "not a graph file (bad magic)");

    const std::size_t header_at = r.offset();
    std::size_t n_entities = 0, n_preds = 0, n_rel = 0, dim = 0;
    bool indexed = false;
    std::string embedder;
    try {
        const auto header = nlohmann::json::parse(r.str("header"));
        if (header.at("version").get<int>() != kGraphFormatVersion)
            throw FormatError(header_at, "unsupported_version");
        n_entities = header.at("entities").get<std::size_t>();
        n_preds = header.at("predicates").get<std::size_t>();
        n_rel = header.at("relations").get<std::size_t>();
        dim = header.at("dim").get<std::size_t>();
        indexed = header.at("indexed").get<bool>();
        embedder = header.value("embedder", std::string{});
    } catch (const FormatError&) {
        throw;
    } catch (const std::exception& e) {
        throw FormatError(header_at, std::string("bad header: ") + e.what());
    }
    // Every record needs at least this many bytes; reject absurd counts early.
    if (n_entities > r.remaining() / 9 || n_preds > r.remaining() / 4 || n_rel > r.remaining() / 12)
        throw FormatError(r.offset(), "header counts exceed file size");

    std::vector<Entity> entities(n_entities);
    for (auto& e : entities) {
        e.id = r.str("entity id");
        e.label = r.str("entity label");
        const auto kind_at = r.offset();
        const auto kind = r.u8("entity kind");
        if (kind > static_cast<std::uint8_t>(EntityKind::Other))
            throw FormatError(kind_at, "invalid entity kind");
        e.kind = static_cast<EntityKind>(kind);
    }
    std::vector<std::string> preds(n_preds);
    for (auto& p : preds) p = r.str("predicate");

    std::vector<Relation> relations(n_rel);
    for (auto& rel : relations) {
        const auto at = r.offset();
        const auto s = r.u32("relation subject");
        const auto p = r.u32("relation predicate");
        const auto o = r.u32("relation object");
        if (s >= n_entities || o >= n_entities || p >= n_preds)
            throw FormatError(at, "relation index out of range");
        rel = {entities[s].id, preds[p], entities[o].id};
    }

    std::optional<EmbeddingIndex> index;
    if (indexed) {
        EmbeddingIndex idx;
        idx.dim = dim;
        idx.embedder = embedder;
        if (dim == 0 || (n_entities + n_preds) > r.remaining() / (4 * dim))
            throw FormatError(r.offset(), "embedding block truncated");
        idx.entity_rows.resize(n_entities * dim);
        for (auto& v : idx.entity_rows) v = r.f32("entity embedding");
        idx.predicate_rows.resize(n_preds * dim);
        for (auto& v : idx.predicate_rows) v = r.f32("predicate embedding");
        index = std::move(idx);
    }
    r.expect_end();

    const auto end = r.offset();
    try {
        KnowledgeGraph g(std::move(entities), std::move(relations), std::move(index));
        if (g.predicates() != preds) throw FormatError(end, "predicate table is not canonical");
        return g;
    } catch (const FormatError&) {
        throw;
    } catch (const Error& e) {
        throw FormatError(end, std::string("inconsistent graph: ") + e.what());
    }
}

void save_graph(const KnowledgeGraph& g, const std::string& path) {
    detail::write_file_bytes(path, encode_graph(g));
}

KnowledgeGraph load_graph(const std::string& path) { return decode_graph(detail::read_file_bytes(path)); }

}  // namespace clarify::kg
