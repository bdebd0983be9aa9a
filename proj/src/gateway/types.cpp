#include "clarify/gateway/types.hpp"

#include <array>
#include <cctype>
#include <cstdlib>
#include <fstream>
#include <iterator>

#include "clarify/error.hpp"

namespace clarify::gateway {

namespace {

constexpr std::array<std::string_view, 4> kSupportedMedia = {"image/jpeg", "image/png",
                                                             "image/webp", "image/bmp"};

bool starts_with(const std::vector<std::uint8_t>& b, std::initializer_list<int> magic,
                 std::size_t at = 0) {
    if (b.size() < at + magic.size()) return false;
    std::size_t i = at;
    for (int m : magic) {
        if (b[i++] != static_cast<std::uint8_t>(m)) return false;
    }
    return true;
}

std::string media_from_extension(const std::string& path) {
    const auto dot = path.find_last_of('.');
    if (dot == std::string::npos) return {};
    std::string ext = path.substr(dot + 1);
    for (auto& c : ext) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    if (ext == "jpg" || ext == "jpeg") return "image/jpeg";
    if (ext == "png") return "image/png";
    if (ext == "webp") return "image/webp";
    if (ext == "bmp") return "image/bmp";
    return {};
}

}  // namespace

std::optional<std::string> sniff_media_type(const std::vector<std::uint8_t>& bytes) {
    if (starts_with(bytes, {0xFF, 0xD8, 0xFF})) return "image/jpeg";
    if (starts_with(bytes, {0x89, 'P', 'N', 'G', 0x0D, 0x0A, 0x1A, 0x0A})) return "image/png";
    if (starts_with(bytes, {'R', 'I', 'F', 'F'}) && starts_with(bytes, {'W', 'E', 'B', 'P'}, 8))
        return "image/webp";
    if (starts_with(bytes, {'B', 'M'})) return "image/bmp";
    return std::nullopt;
}

bool is_supported_media_type(std::string_view media_type) {
    for (auto m : kSupportedMedia) {
        if (m == media_type) return true;
    }
    return false;
}

void ImageInput::validate() const {
    require(!bytes.empty(), ErrorCode::InvalidInput, "image bytes are empty");
    if (!media_type.empty()) {
        require(is_supported_media_type(media_type), ErrorCode::InvalidInput,
                "unsupported media type '" + media_type + "'");
    }
    const auto sniffed = sniff_media_type(bytes);
    require(sniffed.has_value(), ErrorCode::InvalidInput,
            "image bytes do not match any supported format");
    require(media_type.empty() || *sniffed == media_type, ErrorCode::InvalidInput,
            "image bytes look like " + *sniffed + " but media type is " + media_type);
    for (const auto& dim : {height, width, channels}) {
        require(!dim || *dim > 0, ErrorCode::InvalidInput, "image dimensions must be positive");
    }
}

ImageInput ImageInput::from_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    require(in.good(), ErrorCode::NotFound, "cannot open image " + path);
    ImageInput img;
    img.bytes.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
    img.media_type = media_from_extension(path);
    if (img.media_type.empty()) img.media_type = sniff_media_type(img.bytes).value_or("");
    return img;
}

ImageInput ImageInput::from_base64(std::string_view b64, std::string media_type) {
    ImageInput img;
    img.bytes = base64_decode(b64);
    img.media_type = media_type.empty() ? sniff_media_type(img.bytes).value_or("")
                                        : std::move(media_type);
    return img;
}

void ChatRequest::validate() const {
    require(!user_text.empty(), ErrorCode::InvalidArgument, "chat user_text is empty");
    require(max_tokens > 0, ErrorCode::InvalidArgument, "max_tokens must be positive");
    require(temperature >= 0.0, ErrorCode::InvalidArgument, "temperature must be >= 0");
    if (image) image->validate();
}

void EndpointConfig::validate() const {
    require(!base_url.empty(), ErrorCode::ConfigError, "endpoint base_url is empty");
    require(timeout_ms > 0, ErrorCode::ConfigError, "timeout_ms must be positive");
    require(max_retries >= 0, ErrorCode::ConfigError, "max_retries must be >= 0");
    require(backoff_initial_ms >= 0, ErrorCode::ConfigError, "backoff_initial_ms must be >= 0");
}

EndpointConfig EndpointConfig::from_json(const nlohmann::json& j) {
    EndpointConfig cfg;
    try {
        cfg.base_url = j.value("base_url", std::string{});
        if (j.contains("api_key") && !j["api_key"].is_null())
            cfg.api_key = j["api_key"].get<std::string>();
        cfg.model_name = j.value("model_name", std::string{});
        cfg.timeout_ms = j.value("timeout_ms", cfg.timeout_ms);
        cfg.max_retries = j.value("max_retries", cfg.max_retries);
        cfg.backoff_initial_ms = j.value("backoff_initial_ms", cfg.backoff_initial_ms);
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::ConfigError, std::string("endpoint config: ") + e.what());
    }
    return cfg;
}

nlohmann::json EndpointConfig::to_json() const {
    nlohmann::json j{{"base_url", base_url},
                     {"model_name", model_name},
                     {"timeout_ms", timeout_ms},
                     {"max_retries", max_retries},
                     {"backoff_initial_ms", backoff_initial_ms}};
    if (api_key) j["api_key"] = *api_key;
    return j;
}

EndpointConfig with_env_overrides(EndpointConfig cfg, const char* url_var) {
    if (const char* url = std::getenv(url_var); url != nullptr && *url != '\0') cfg.base_url = url;
    if (const char* key = std::getenv("CLARIFY_API_KEY"); key != nullptr && *key != '\0')
        cfg.api_key = key;
    return cfg;
}

namespace {
constexpr std::string_view kAlphabet =
    "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

int decode_char(char c) {
    if (c >= 'A' && c <= 'Z') return c - 'A';
    if (c >= 'a' && c <= 'z') return c - 'a' + 26;
    if (c >= '0' && c <= '9') return c - '0' + 52;
    if (c == '+' || c == '-') return 62;
    if (c == '/' || c == '_') return 63;
    return -1;
}
}  // namespace

std::string base64_encode(const std::vector<std::uint8_t>& bytes) {
    std::string out;
    out.reserve((bytes.size() + 2) / 3 * 4);
    std::size_t i = 0;
    for (; i + 2 < bytes.size(); i += 3) {
        const std::uint32_t v = (bytes[i] << 16) | (bytes[i + 1] << 8) | bytes[i + 2];
        out += kAlphabet[(v >> 18) & 63];
        out += kAlphabet[(v >> 12) & 63];
        out += kAlphabet[(v >> 6) & 63];
        out += kAlphabet[v & 63];
    }
    if (i + 1 == bytes.size()) {
        const std::uint32_t v = bytes[i] << 16;
        out += kAlphabet[(v >> 18) & 63];
        out += kAlphabet[(v >> 12) & 63];
        out += "==";
    } else if (i + 2 == bytes.size()) {
        const std::uint32_t v = (bytes[i] << 16) | (bytes[i + 1] << 8);
        out += kAlphabet[(v >> 18) & 63];
        out += kAlphabet[(v >> 12) & 63];
        out += kAlphabet[(v >> 6) & 63];
        out += '=';
    }
    return out;
}

std::vector<std::uint8_t> base64_decode(std::string_view text) {
    // Accept an optional data URI prefix.
    if (text.starts_with("data:")) {
        const auto comma = text.find(',');
        require(comma != std::string_view::npos, ErrorCode::InvalidInput, "malformed data URI");
        text.remove_prefix(comma + 1);
    }
    std::vector<std::uint8_t> out;
    out.reserve(text.size() / 4 * 3);
    std::uint32_t acc = 0;
    int bits = 0;
    bool padding = false;
    for (char c : text) {
        if (c == '=') {
            padding = true;
            continue;
        }
        if (c == '\n' || c == '\r' || c == ' ' || c == '\t') continue;
        const int v = decode_char(c);
        require(v >= 0 && !padding, ErrorCode::InvalidInput, "invalid base64 payload");
        acc = (acc << 6) | static_cast<std::uint32_t>(v);
        bits += 6;
        if (bits >= 8) {
            bits -= 8;
            out.push_back(static_cast<std::uint8_t>((acc >> bits) & 0xFF));
        }
    }
    return out;
}

std::string data_uri(const ImageInput& image) {
    const std::string media = image.media_type.empty()
                                  ? sniff_media_type(image.bytes).value_or("application/octet-stream")
                                  : image.media_type;
    return "data:" + media + ";base64," + base64_encode(image.bytes);
}

}  // namespace clarify::gateway
