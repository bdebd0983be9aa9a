#include "clarify/gateway/transport.hpp"

#include <chrono>
#include <thread>

#include <httplib.h>

#include "clarify/error.hpp"

namespace clarify::gateway {

ParsedUrl parse_base_url(const std::string& base_url) {
    ParsedUrl url;
    std::string rest = base_url;
    const auto scheme_end = rest.find("://");
    if (scheme_end == std::string::npos) {
        url.scheme = "http";
    } else {
        url.scheme = rest.substr(0, scheme_end);
        rest = rest.substr(scheme_end + 3);
    }
    require(url.scheme == "http" || url.scheme == "https", ErrorCode::ConfigError,
            "unsupported URL scheme in " + base_url);
    url.port = url.scheme == "https" ? 443 : 80;

    const auto slash = rest.find('/');
    std::string authority = rest.substr(0, slash);
    url.path_prefix = slash == std::string::npos ? "" : rest.substr(slash);
    while (!url.path_prefix.empty() && url.path_prefix.back() == '/') url.path_prefix.pop_back();

    const auto colon = authority.rfind(':');
    if (colon != std::string::npos && authority.find(']') == std::string::npos) {
        const std::string port = authority.substr(colon + 1);
        authority = authority.substr(0, colon);
        try {
            url.port = std::stoi(port);
        } catch (const std::exception&) {
            fail(ErrorCode::ConfigError, "bad port in " + base_url);
        }
    }
    require(!authority.empty(), ErrorCode::ConfigError, "missing host in " + base_url);
    url.host = authority;
    return url;
}

namespace {

enum class AttemptFailure { None, Transport, Timeout, Status };

}  // namespace

nlohmann::json post_json(const EndpointConfig& cfg, const std::string& path,
                         const nlohmann::json& body) {
    cfg.validate();
    const ParsedUrl url = parse_base_url(cfg.base_url);
    const std::string payload = body.dump();

    httplib::Headers headers;
    if (cfg.api_key) headers.emplace("Authorization", "Bearer " + *cfg.api_key);

    const auto timeout = std::chrono::milliseconds(cfg.timeout_ms);
    AttemptFailure last = AttemptFailure::None;
    int last_status = 0;
    std::string last_detail;

    for (int attempt = 0; attempt <= cfg.max_retries; ++attempt) {
        if (attempt > 0 && cfg.backoff_initial_ms > 0) {
            std::this_thread::sleep_for(std::chrono::milliseconds(cfg.backoff_initial_ms)
                                        * (1LL << std::min(attempt - 1, 20)));
        }
        httplib::Client client(url.scheme + "://" + url.host + ":" + std::to_string(url.port));
        require(client.is_valid(), ErrorCode::ConfigError,
                "cannot create client for " + cfg.base_url + " (https needs OpenSSL support)");
        client.set_connection_timeout(timeout);
        client.set_read_timeout(timeout);
        client.set_write_timeout(timeout);

        const auto started = std::chrono::steady_clock::now();
        auto res = client.Post(url.path_prefix + path, headers, payload, "application/json");
        const auto elapsed = std::chrono::steady_clock::now() - started;

        if (!res) {
            const auto err = res.error();
            const bool timed_out = err == httplib::Error::ConnectionTimeout
                                   || (err == httplib::Error::Read && elapsed >= timeout * 9 / 10);
            last = timed_out ? AttemptFailure::Timeout : AttemptFailure::Transport;
            last_detail = httplib::to_string(err);
            continue;
        }
        if (res->status < 200 || res->status >= 300) {
            last = AttemptFailure::Status;
            last_status = res->status;
            last_detail = res->body.substr(0, 512);
            if (res->status == 429 || res->status >= 500) continue;
            throw UpstreamError(res->status, last_detail);
        }
        try {
            return nlohmann::json::parse(res->body);
        } catch (const nlohmann::json::parse_error& e) {
            fail(ErrorCode::ProtocolViolation, std::string("response is not JSON: ") + e.what());
        }
    }

    const std::string where = cfg.base_url + path;
    switch (last) {
        case AttemptFailure::Timeout:
            fail(ErrorCode::Timeout, where + " timed out after " + std::to_string(cfg.timeout_ms)
                                         + " ms");
        case AttemptFailure::Status:
            throw UpstreamError(last_status, where + ": " + last_detail);
        default:
            fail(ErrorCode::RetryExhausted, where + " failed after "
                                                + std::to_string(cfg.max_retries + 1)
                                                + " attempts: " + last_detail);
    }
}

}  // namespace clarify::gateway
