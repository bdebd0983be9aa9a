#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "clarify/gateway/clients.hpp"

namespace clarify::gateway {

/// Deterministic offline text embedder.
///
/// Text is lowercased and split on whitespace into words; a word with a
/// leading '-' carries sign -1. Each word is further split on ASCII
/// punctuation and every piece adds (sign × its seeded hash vector) to the
/// result. "x" and "-x" therefore cancel, and negating every word of a text
/// negates its embedding exactly.
///
/// Hash components are multiples of 2^-12 in [-1, 1], so sums stay exactly
/// representable in both float and double.
class HashTextEmbedder : public TextEmbedder {
public:
    explicit HashTextEmbedder(std::size_t dim = 64, std::uint64_t seed = 0x5eed);

    std::size_t dim() const noexcept { return dim_; }
    std::string identity() const override;

    /// Embedding of one text without batch validation.
    std::vector<double> vector_for(const std::string& text) const;

protected:
    std::vector<EmbeddingVector> do_embed(const std::vector<std::string>& texts) const override;

private:
    std::size_t dim_;
    std::uint64_t seed_;
};

/// Deterministic offline backbone: a seeded hash of the raw image bytes.
class HashImageEmbedder final : public ImageEmbedder {
public:
    explicit HashImageEmbedder(std::size_t dim = 32, std::uint64_t seed = 0xd1);

    std::size_t dim() const noexcept { return dim_; }
    std::string identity() const override;

protected:
    EmbeddingVector do_embed(const ImageInput& image) const override;

private:
    std::size_t dim_;
    std::uint64_t seed_;
};

/// Generalist stand-in that answers with the prompt's user text verbatim.
class EchoChatModel final : public ChatModel {
public:
    std::string identity() const override { return "stub:echo"; }

protected:
    Reply do_chat(const ChatRequest& req) const override;
};

/// Chat model whose reply is produced by a callback.
class ScriptedChatModel final : public ChatModel {
public:
    using Script = std::function<std::string(const ChatRequest&)>;
    explicit ScriptedChatModel(Script script, std::string name = "stub:scripted");

    std::string identity() const override { return name_; }

protected:
    Reply do_chat(const ChatRequest& req) const override;

private:
    Script script_;
    std::string name_;
};

/// Seeded 64-bit hash used by the stubs (FNV-1a followed by a splitmix64 finalizer).
std::uint64_t stable_hash(const void* data, std::size_t size, std::uint64_t seed);

/// Word count used when a service does not report token usage.
std::int64_t count_words(const std::string& text);

}  // namespace clarify::gateway
