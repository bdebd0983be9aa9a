#include "clarify/gateway/clients.hpp"

#include <chrono>
#include <utility>

#include "clarify/error.hpp"
#include "clarify/gateway/stubs.hpp"
#include "clarify/gateway/transport.hpp"

namespace clarify::gateway {

namespace {

bool is_blank(const std::string& s) {
    return s.find_first_not_of(" \t\r\n\f\v") == std::string::npos;
}

std::vector<double> parse_vector(const nlohmann::json& j) {
    if (!j.is_array()) fail(ErrorCode::ProtocolViolation, "embedding is not an array");
    std::vector<double> values;
    values.reserve(j.size());
    for (const auto& v : j) {
        if (!v.is_number()) fail(ErrorCode::ProtocolViolation, "embedding entry is not a number");
        values.push_back(v.get<double>());
    }
    return values;
}

std::vector<EmbeddingVector> parse_embedding_reply(const nlohmann::json& reply,
                                                   std::size_t expected) {
    if (!reply.is_object() || !reply.contains("data") || !reply["data"].is_array())
        fail(ErrorCode::ProtocolViolation, "embedding reply lacks a data array");
    const auto& data = reply["data"];
    if (data.size() != expected) {
        fail(ErrorCode::ProtocolViolation, "embedding reply has " + std::to_string(data.size())
                                               + " items, expected " + std::to_string(expected));
    }
    std::vector<EmbeddingVector> out;
    out.reserve(expected);
    for (const auto& item : data) {
        if (!item.is_object() || !item.contains("embedding"))
            fail(ErrorCode::ProtocolViolation, "embedding item lacks 'embedding'");
        try {
            out.emplace_back(parse_vector(item["embedding"]));
        } catch (const Error& e) {
            if (e.code() == ErrorCode::InvalidInput) fail(ErrorCode::ProtocolViolation, e.what());
            throw;
        }
    }
    return out;
}

}  // namespace

std::vector<EmbeddingVector> TextEmbedder::embed(const std::vector<std::string>& texts) const {
    require(!texts.empty(), ErrorCode::InvalidArgument, "embed_text needs a non-empty batch");
    for (std::size_t i = 0; i < texts.size(); ++i) {
        require(!is_blank(texts[i]), ErrorCode::InvalidArgument,
                "embed_text input " + std::to_string(i) + " is blank");
    }
    auto out = do_embed(texts);
    if (out.size() != texts.size())
        fail(ErrorCode::ProtocolViolation, "embedder returned the wrong number of vectors");
    for (const auto& v : out) {
        if (v.dim() != out.front().dim())
            fail(ErrorCode::ProtocolViolation, "embedder returned mixed dimensions in one batch");
    }
    return out;
}

EmbeddingVector ImageEmbedder::embed(const ImageInput& image) const {
    image.validate();
    return do_embed(image);
}

ChatResponse ChatModel::chat(const ChatRequest& req) const {
    req.validate();
    const auto started = std::chrono::steady_clock::now();
    Reply reply = do_chat(req);
    const auto elapsed = std::chrono::steady_clock::now() - started;
    if (reply.text.empty()) fail(ErrorCode::ProtocolViolation, "chat model returned empty text");
    ChatResponse resp;
    resp.token_count = reply.token_count >= 0 ? reply.token_count : count_words(reply.text);
    resp.text = std::move(reply.text);
    resp.latency_ms = std::chrono::duration<double, std::milli>(elapsed).count();
    return resp;
}

HttpTextEmbedder::HttpTextEmbedder(EndpointConfig cfg) : cfg_(std::move(cfg)) { cfg_.validate(); }

std::string HttpTextEmbedder::identity() const { return "http:" + cfg_.base_url + "#" + cfg_.model_name; }

std::vector<EmbeddingVector> HttpTextEmbedder::do_embed(const std::vector<std::string>& texts) const {
    nlohmann::json body{{"input", texts}};
    if (!cfg_.model_name.empty()) body["model"] = cfg_.model_name;
    return parse_embedding_reply(post_json(cfg_, "/embeddings", body), texts.size());
}

HttpImageEmbedder::HttpImageEmbedder(EndpointConfig cfg) : cfg_(std::move(cfg)) { cfg_.validate(); }

std::string HttpImageEmbedder::identity() const {
    return "http:" + cfg_.base_url + "#" + cfg_.model_name;
}

EmbeddingVector HttpImageEmbedder::do_embed(const ImageInput& image) const {
    nlohmann::json body{{"input", nlohmann::json::array({data_uri(image)})}};
    if (!cfg_.model_name.empty()) body["model"] = cfg_.model_name;
    nlohmann::json reply;
    try {
        reply = post_json(cfg_, "/embeddings", body);
    } catch (const UpstreamError& e) {
        if (e.status() == 415) fail(ErrorCode::InvalidInput, "backbone rejected the media type");
        throw;
    }
    return std::move(parse_embedding_reply(reply, 1).front());
}

nlohmann::json chat_request_body(const ChatRequest& req, const std::string& model) {
    nlohmann::json messages = nlohmann::json::array();
    if (!req.system_text.empty())
        messages.push_back({{"role", "system"}, {"content", req.system_text}});
    if (req.image) {
        messages.push_back(
            {{"role", "user"},
             {"content", nlohmann::json::array(
                             {{{"type", "text"}, {"text", req.user_text}},
                              {{"type", "image_url"}, {"image_url", {{"url", data_uri(*req.image)}}}}})}});
    } else {
        messages.push_back({{"role", "user"}, {"content", req.user_text}});
    }
    nlohmann::json body{{"messages", messages},
                        {"max_tokens", req.max_tokens},
                        {"temperature", req.temperature},
                        {"stream", false}};
    if (!model.empty()) body["model"] = model;
    return body;
}

HttpChatModel::HttpChatModel(EndpointConfig cfg) : cfg_(std::move(cfg)) { cfg_.validate(); }

std::string HttpChatModel::identity() const { return "http:" + cfg_.base_url + "#" + cfg_.model_name; }

ChatModel::Reply HttpChatModel::do_chat(const ChatRequest& req) const {
    const auto reply = post_json(cfg_, "/chat/completions", chat_request_body(req, cfg_.model_name));
    try {
        const auto& content = reply.at("choices").at(0).at("message").at("content");
        Reply out;
        out.text = content.get<std::string>();
        if (reply.contains("usage") && reply["usage"].contains("completion_tokens"))
            out.token_count = reply["usage"]["completion_tokens"].get<std::int64_t>();
        return out;
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::ProtocolViolation, std::string("malformed chat reply: ") + e.what());
    }
}

std::vector<EmbeddingVector> embed_text(const std::vector<std::string>& texts,
                                        const EndpointConfig& cfg) {
    return HttpTextEmbedder(cfg).embed(texts);
}

EmbeddingVector embed_image(const ImageInput& image, const EndpointConfig& cfg) {
    return HttpImageEmbedder(cfg).embed(image);
}

ChatResponse chat(const ChatRequest& req, const EndpointConfig& cfg) {
    return HttpChatModel(cfg).chat(req);
}

}  // namespace clarify::gateway
