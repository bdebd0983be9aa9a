#pragma once

#include <string>
#include <vector>

#include "clarify/gateway/types.hpp"
#include "clarify/gateway/vector.hpp"

namespace clarify::gateway {

// The three service roles the engine talks to. Public entry points are
// non-virtual and enforce the pre/postconditions; implementations override
// the do_* hooks. Every implementation must be safe for concurrent calls.

class TextEmbedder {
public:
    virtual ~TextEmbedder() = default;

    /// One vector per input, same order, identical dims. Rejects an empty
    /// batch and blank strings with InvalidArgument.
    std::vector<EmbeddingVector> embed(const std::vector<std::string>& texts) const;

    /// Identifies the embedding space; vectors from different ids are not comparable.
    virtual std::string identity() const = 0;

protected:
    virtual std::vector<EmbeddingVector> do_embed(const std::vector<std::string>& texts) const = 0;
};

class ImageEmbedder {
public:
    virtual ~ImageEmbedder() = default;

    EmbeddingVector embed(const ImageInput& image) const;

    virtual std::string identity() const = 0;

protected:
    virtual EmbeddingVector do_embed(const ImageInput& image) const = 0;
};

class ChatModel {
public:
    virtual ~ChatModel() = default;

    /// Validates the request, times the call, and rejects empty replies.
    ChatResponse chat(const ChatRequest& req) const;

    virtual std::string identity() const = 0;

protected:
    struct Reply {
        std::string text;
        std::int64_t token_count = -1;  // -1: count whitespace-separated words
    };
    virtual Reply do_chat(const ChatRequest& req) const = 0;
};

/// POST {base}/embeddings with {"model", "input": [...]} and reads
/// {"data": [{"embedding": [...]}, ...]}.
class HttpTextEmbedder final : public TextEmbedder {
public:
    explicit HttpTextEmbedder(EndpointConfig cfg);
    std::string identity() const override;

protected:
    std::vector<EmbeddingVector> do_embed(const std::vector<std::string>& texts) const override;

private:
    EndpointConfig cfg_;
};

/// Same wire schema as the text embedder; the single input is a
/// "data:<media>;base64,<payload>" URI.
class HttpImageEmbedder final : public ImageEmbedder {
public:
    explicit HttpImageEmbedder(EndpointConfig cfg);
    std::string identity() const override;

protected:
    EmbeddingVector do_embed(const ImageInput& image) const override;

private:
    EndpointConfig cfg_;
};

/// Chat-completions client: POST {base}/chat/completions.
class HttpChatModel final : public ChatModel {
public:
    explicit HttpChatModel(EndpointConfig cfg);
    std::string identity() const override;

protected:
    Reply do_chat(const ChatRequest& req) const override;

private:
    EndpointConfig cfg_;
};

// Free-function forms of the operations.
std::vector<EmbeddingVector> embed_text(const std::vector<std::string>& texts,
                                        const EndpointConfig& cfg);
EmbeddingVector embed_image(const ImageInput& image, const EndpointConfig& cfg);
ChatResponse chat(const ChatRequest& req, const EndpointConfig& cfg);

/// Serialized chat-completions body; exposed for wire-format tests.
nlohmann::json chat_request_body(const ChatRequest& req, const std::string& model);

}  // namespace clarify::gateway
