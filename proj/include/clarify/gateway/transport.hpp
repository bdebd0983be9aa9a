#pragma once

#include <string>

#include <nlohmann/json.hpp>

#include "clarify/gateway/types.hpp"

namespace clarify::gateway {

struct ParsedUrl {
    std::string scheme;
    std::string host;
    int port = 80;
    std::string path_prefix;  // no trailing slash
};

ParsedUrl parse_base_url(const std::string& base_url);

/// JSON-over-HTTP POST with the retry policy shared by all clients.
///
/// Retries transport failures, timeouts, 429 and 5xx with exponential backoff
/// (backoff_initial_ms, doubling) up to cfg.max_retries extra attempts. Other
/// 4xx fail immediately. Terminal errors: Timeout when the last attempt timed
/// out, UpstreamError(status) when the last attempt got a non-2xx reply,
/// RetryExhausted for connection-level failures, ProtocolViolation for a
/// body that is not JSON.
nlohmann::json post_json(const EndpointConfig& cfg, const std::string& path,
                         const nlohmann::json& body);

}  // namespace clarify::gateway
