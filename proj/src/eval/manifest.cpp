#include <algorithm>
#include <filesystem>
#include <fstream>

#include "clarify/error.hpp"
#include "clarify/eval/eval.hpp"

namespace clarify::eval {

namespace fs = std::filesystem;
using nlohmann::json;

std::string to_string(Split s) { return s == Split::Train ? "train" : "test"; }

Split split_from_string(const std::string& s) {
    if (s == "train") return Split::Train;
    if (s == "test") return Split::Test;
    fail(ErrorCode::InvalidArgument, "unknown split '" + s + "'");
}

std::map<std::string, std::size_t> DatasetManifest::class_counts() const {
    std::map<std::string, std::size_t> counts;
    for (const auto& e : entries) ++counts[e.class_name];
    return counts;
}

std::size_t DatasetManifest::qa_count() const {
    std::size_t n = 0;
    for (const auto& e : entries) n += e.qa.size();
    return n;
}

DatasetManifest read_manifest(std::istream& in, Split split, const std::string& base_dir) {
    DatasetManifest m;
    m.split = split;
    std::string text;
    std::size_t line = 0;
    while (std::getline(in, text)) {
        ++line;
        if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
        json j;
        try {
            j = json::parse(text);
        } catch (const json::parse_error& e) {
            throw ParseError(line, e.what());
        }
        ManifestEntry entry;
        try {
            entry.image = j.at("image").get<std::string>();
            entry.class_name = j.at("class").get<std::string>();
            for (const auto& qa : j.value("qa", json::array()))
                entry.qa.push_back({qa.at("q").get<std::string>(), qa.at("a").get<std::string>()});
        } catch (const json::exception& e) {
            throw ParseError(line, e.what());
        }
        if (entry.image.empty() || entry.class_name.empty())
            throw ParseError(line, "'image' and 'class' must be non-empty");
        if (!base_dir.empty() && fs::path(entry.image).is_relative())
            entry.image = (fs::path(base_dir) / entry.image).lexically_normal().string();
        m.entries.push_back(std::move(entry));
    }
    return m;
}

DatasetManifest load_manifest(const std::string& path, Split split) {
    std::ifstream in(path);
    require(in.good(), ErrorCode::NotFound, "cannot open manifest " + path);
    const auto dir = fs::path(path).parent_path().string();
    return read_manifest(in, split, dir.empty() ? "." : dir);
}

const std::vector<std::string>& paper_class_vocabulary() {
    static const std::vector<std::string> v{"Actinic keratosis", "Seborrheic keratosis", "Melanoma",
                                            "Lichen planus",     "Rosacea",              "Psoriasis",
                                            "Basal cell carcinoma", "Dermatitis"};
    return v;
}

void check_vocabulary(const DatasetManifest& m, const std::vector<std::string>& vocabulary) {
    std::vector<std::size_t> bad;
    for (std::size_t i = 0; i < m.entries.size(); ++i) {
        if (std::find(vocabulary.begin(), vocabulary.end(), m.entries[i].class_name) == vocabulary.end())
            bad.push_back(i + 1);
    }
    if (!bad.empty()) {
        std::string msg = "class outside the vocabulary in entries";
        for (auto b : bad) msg += " " + std::to_string(b);
        throw ValidationError(std::move(bad), msg);
    }
}

}  // namespace clarify::eval
