#include "clarify/gateway/stubs.hpp"

#include <cctype>
#include <utility>

#include "clarify/error.hpp"

namespace clarify::gateway {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

// Adds sign × hash-vector(key) into acc. Components are k / 4096 for
// k in [-4096, 4096).
void accumulate_hash_vector(std::uint64_t key, double sign, std::vector<double>& acc) {
    for (std::size_t i = 0; i < acc.size(); ++i) {
        const std::uint64_t bits = splitmix64(key + 0x632BE59BD9B4E019ULL * (i + 1));
        const auto k = static_cast<std::int64_t>(bits >> 51) - 4096;
        acc[i] += sign * static_cast<double>(k) / 4096.0;
    }
}

bool is_piece_char(unsigned char c) { return c >= 0x80 || std::isalnum(c) != 0; }

}  // namespace

std::uint64_t stable_hash(const void* data, std::size_t size, std::uint64_t seed) {
    std::uint64_t h = 0xCBF29CE484222325ULL ^ splitmix64(seed);
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < size; ++i) {
        h ^= p[i];
        h *= 0x100000001B3ULL;
    }
    return splitmix64(h);
}

std::int64_t count_words(const std::string& text) {
    std::int64_t n = 0;
    bool in_word = false;
    for (unsigned char c : text) {
        const bool space = std::isspace(c) != 0;
        if (!space && !in_word) ++n;
        in_word = !space;
    }
    return n;
}

HashTextEmbedder::HashTextEmbedder(std::size_t dim, std::uint64_t seed) : dim_(dim), seed_(seed) {
    require(dim > 0, ErrorCode::ConfigError, "stub embedder dim must be positive");
}

std::string HashTextEmbedder::identity() const {
    return "stub:hash-text-v1/" + std::to_string(dim_) + "/" + std::to_string(seed_);
}

std::vector<double> HashTextEmbedder::vector_for(const std::string& text) const {
    std::vector<double> acc(dim_, 0.0);
    std::size_t i = 0;
    const std::size_t n = text.size();
    while (i < n) {
        while (i < n && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
        std::size_t end = i;
        while (end < n && !std::isspace(static_cast<unsigned char>(text[end]))) ++end;
        if (i == end) break;

        std::string word;
        word.reserve(end - i);
        for (std::size_t j = i; j < end; ++j)
            word += static_cast<char>(std::tolower(static_cast<unsigned char>(text[j])));
        i = end;

        double sign = 1.0;
        std::size_t start = 0;
        if (word.size() > 1 && word[0] == '-' && word[1] != '-') {
            sign = -1.0;
            start = 1;
        }
        std::size_t p = start;
        while (p < word.size()) {
            while (p < word.size() && !is_piece_char(static_cast<unsigned char>(word[p]))) ++p;
            std::size_t q = p;
            while (q < word.size() && is_piece_char(static_cast<unsigned char>(word[q]))) ++q;
            if (q > p) accumulate_hash_vector(stable_hash(word.data() + p, q - p, seed_), sign, acc);
            p = q;
        }
    }
    return acc;
}

std::vector<EmbeddingVector> HashTextEmbedder::do_embed(const std::vector<std::string>& texts) const {
    std::vector<EmbeddingVector> out;
    out.reserve(texts.size());
    for (const auto& t : texts) out.emplace_back(vector_for(t));
    return out;
}

HashImageEmbedder::HashImageEmbedder(std::size_t dim, std::uint64_t seed) : dim_(dim), seed_(seed) {
    require(dim > 0, ErrorCode::ConfigError, "stub backbone dim must be positive");
}

std::string HashImageEmbedder::identity() const {
    return "stub:hash-image-v1/" + std::to_string(dim_) + "/" + std::to_string(seed_);
}

EmbeddingVector HashImageEmbedder::do_embed(const ImageInput& image) const {
    std::vector<double> acc(dim_, 0.0);
    accumulate_hash_vector(stable_hash(image.bytes.data(), image.bytes.size(), seed_), 1.0, acc);
    return EmbeddingVector(std::move(acc));
}

ChatModel::Reply EchoChatModel::do_chat(const ChatRequest& req) const {
    return Reply{req.user_text, -1};
}

ScriptedChatModel::ScriptedChatModel(Script script, std::string name)
    : script_(std::move(script)), name_(std::move(name)) {}

ChatModel::Reply ScriptedChatModel::do_chat(const ChatRequest& req) const {
    return Reply{script_(req), -1};
}

}  // namespace clarify::gateway
