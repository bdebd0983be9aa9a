#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace clarify::gateway {

/// Opaque image payload. Only a small set of raster formats is accepted and
/// the payload's magic bytes must agree with the declared media type.
struct ImageInput {
    std::vector<std::uint8_t> bytes;
    std::string media_type;
    std::optional<int> height;
    std::optional<int> width;
    std::optional<int> channels;

    /// Throws InvalidInput when empty, unsupported, or corrupt.
    void validate() const;

    static ImageInput from_file(const std::string& path);
    static ImageInput from_base64(std::string_view b64, std::string media_type = {});
};

/// Media type implied by the leading magic bytes, or nullopt.
std::optional<std::string> sniff_media_type(const std::vector<std::uint8_t>& bytes);
bool is_supported_media_type(std::string_view media_type);

struct ChatRequest {
    std::string system_text;
    std::string user_text;
    std::optional<ImageInput> image;
    int max_tokens = 512;
    double temperature = 0.0;

    void validate() const;
};

struct ChatResponse {
    std::string text;
    std::int64_t token_count = 0;
    double latency_ms = 0.0;
};

struct EndpointConfig {
    std::string base_url;
    std::optional<std::string> api_key;
    std::string model_name;
    int timeout_ms = 30000;
    int max_retries = 2;
    // First retry delay; each further retry doubles it.
    int backoff_initial_ms = 100;

    void validate() const;

    static EndpointConfig from_json(const nlohmann::json& j);
    nlohmann::json to_json() const;
};

/// Applies `url_var` (e.g. CLARIFY_CHAT_URL) and CLARIFY_API_KEY from the
/// environment on top of `cfg`. Unset variables leave fields untouched.
EndpointConfig with_env_overrides(EndpointConfig cfg, const char* url_var);

/// "data:<media>;base64,<payload>", sniffing the media type when unset.
std::string data_uri(const ImageInput& image);

std::string base64_encode(const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> base64_decode(std::string_view text);

}  // namespace clarify::gateway
