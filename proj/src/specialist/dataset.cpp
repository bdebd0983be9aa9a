#include <algorithm>
#include <fstream>
#include <map>
#include <set>

#include <nlohmann/json.hpp>

#include "clarify/error.hpp"
#include "clarify/specialist/io.hpp"

namespace clarify::specialist {

LabeledEmbeddingSet read_training_jsonl(std::istream& in,
                                        const std::vector<std::string>& class_names) {
    struct Row {
        std::vector<double> embedding;
        std::string label;
        std::size_t line;
    };
    std::vector<Row> rows;
    std::string text;
    std::size_t line_no = 0;
    while (std::getline(in, text)) {
        ++line_no;
        if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(text);
        } catch (const nlohmann::json::parse_error& e) {
            throw ParseError(line_no, e.what());
        }
        if (!j.is_object() || !j.contains("embedding") || !j.contains("label")
            || !j["embedding"].is_array() || !j["label"].is_string()) {
            throw ParseError(line_no, "expected {\"embedding\": [...], \"label\": \"...\"}");
        }
        Row row{{}, j["label"].get<std::string>(), line_no};
        for (const auto& v : j["embedding"]) {
            if (!v.is_number()) throw ParseError(line_no, "embedding entries must be numbers");
            row.embedding.push_back(v.get<double>());
        }
        if (row.embedding.empty()) throw ParseError(line_no, "embedding is empty");
        if (!rows.empty() && row.embedding.size() != rows.front().embedding.size())
            throw ParseError(line_no, "embedding dim differs from line " + std::to_string(rows.front().line));
        rows.push_back(std::move(row));
    }

    LabeledEmbeddingSet set;
    if (class_names.empty()) {
        std::set<std::string> names;
        for (const auto& r : rows) names.insert(r.label);
        set.class_names.assign(names.begin(), names.end());
    } else {
        set.class_names = class_names;
    }
    std::map<std::string, std::size_t> index;
    for (std::size_t i = 0; i < set.class_names.size(); ++i) index[set.class_names[i]] = i;

    for (auto& r : rows) {
        const auto it = index.find(r.label);
        if (it == index.end()) throw ParseError(r.line, "unknown class '" + r.label + "'");
        try {
            set.embeddings.emplace_back(std::move(r.embedding));
        } catch (const Error& e) {
            throw ParseError(r.line, e.what());
        }
        set.labels.push_back(it->second);
    }
    return set;
}

LabeledEmbeddingSet load_training_jsonl(const std::string& path,
                                        const std::vector<std::string>& class_names) {
    std::ifstream in(path);
    require(in.good(), ErrorCode::NotFound, "cannot open training data " + path);
    return read_training_jsonl(in, class_names);
}

}  // namespace clarify::specialist
