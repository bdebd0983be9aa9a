#include <fstream>
#include <map>
#include <set>
#include <tuple>

#include <nlohmann/json.hpp>

#include "clarify/error.hpp"
#include "clarify/kg/graph.hpp"

namespace clarify::kg {

namespace {

std::string required_string(const nlohmann::json& j, const char* key, std::size_t line) {
    if (!j.contains(key) || !j[key].is_string() || j[key].get<std::string>().empty())
        throw ParseError(line, std::string("missing or empty string field '") + key + "'");
    return j[key].get<std::string>();
}

std::string optional_string(const nlohmann::json& j, const char* key, std::size_t line) {
    if (!j.contains(key) || j[key].is_null()) return {};
    if (!j[key].is_string()) throw ParseError(line, std::string("field '") + key + "' must be a string");
    return j[key].get<std::string>();
}

struct Builder {
    std::vector<Entity> entities;
    std::map<std::string, std::size_t> by_id;
    std::set<std::string> declared;  // ids that came with a label
    std::vector<Relation> relations;
    std::set<std::tuple<std::string, std::string, std::string>> seen;

    void touch(const std::string& id, const std::string& label, const std::string& kind) {
        if (!label.empty()) declared.insert(id);
        const auto k = kind_from_string(kind);
        const auto it = by_id.find(id);
        if (it == by_id.end()) {
            by_id.emplace(id, entities.size());
            entities.push_back({id, label, k});
            return;
        }
        auto& e = entities[it->second];
        if (e.label.empty()) e.label = label;
        if (e.kind == EntityKind::Other) e.kind = k;
    }
};

}  // namespace

KnowledgeGraph ingest(std::istream& triples, const IngestOptions& options) {
    Builder b;
    std::vector<std::pair<std::size_t, std::pair<std::string, std::string>>> uses;  // line, (s, o)
    std::string text;
    std::size_t line = 0;
    while (std::getline(triples, text)) {
        ++line;
        if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(text);
        } catch (const nlohmann::json::parse_error& e) {
            throw ParseError(line, e.what());
        }
        if (!j.is_object()) throw ParseError(line, "expected a JSON object");

        if (j.contains("entity")) {
            const auto id = required_string(j, "entity", line);
            b.touch(id, optional_string(j, "label", line), optional_string(j, "kind", line));
            continue;
        }
        const auto s = required_string(j, "s", line);
        const auto p = required_string(j, "p", line);
        const auto o = required_string(j, "o", line);
        b.touch(s, optional_string(j, "s_label", line), optional_string(j, "s_kind", line));
        b.touch(o, optional_string(j, "o_label", line), optional_string(j, "o_kind", line));
        uses.push_back({line, {s, o}});
        if (b.seen.emplace(s, p, o).second) b.relations.push_back({s, p, o});
    }

    if (options.strict) {
        std::vector<std::size_t> offending;
        for (const auto& [ln, ends] : uses) {
            if (!b.declared.count(ends.first) || !b.declared.count(ends.second))
                offending.push_back(ln);
        }
        if (!offending.empty()) {
            std::string msg = "undeclared entity ids on line(s)";
            for (auto ln : offending) msg += " " + std::to_string(ln);
            throw ValidationError(std::move(offending), msg);
        }
    }
    for (auto& e : b.entities) {
        if (e.label.empty()) e.label = e.id;
    }
    return KnowledgeGraph(std::move(b.entities), std::move(b.relations));
}

KnowledgeGraph ingest_file(const std::string& path, const IngestOptions& options) {
    std::ifstream in(path);
    require(in.good(), ErrorCode::NotFound, "cannot open triples file " + path);
    return ingest(in, options);
}

}  // namespace clarify::kg
