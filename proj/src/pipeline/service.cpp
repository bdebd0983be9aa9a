#include <atomic>
#include <thread>

#include <httplib.h>

#include "clarify/error.hpp"
#include "clarify/pipeline/pipeline.hpp"

namespace clarify::pipeline {

namespace {

using nlohmann::json;

int http_status(const Error& e) {
    if (dynamic_cast<const StageError*>(&e)) return 502;
    switch (e.code()) {
        case ErrorCode::InvalidRequest:
        case ErrorCode::InvalidInput:
        case ErrorCode::InvalidArgument:
        case ErrorCode::PromptBudgetExceeded:
            return 400;
        case ErrorCode::NotFound:
            return 404;
        default:
            return 500;
    }
}

void send_json(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, const Error& e) {
    json err{{"code", std::string(to_string(e.code()))}, {"message", e.what()}};
    if (const auto* s = dynamic_cast<const StageError*>(&e)) {
        err["stage"] = s->stage();
        err["cause"] = std::string(to_string(s->cause()));
    }
    send_json(res, http_status(e), {{"error", err}});
}

template <typename F>
void guarded(httplib::Response& res, F&& fn) {
    try {
        fn();
    } catch (const Error& e) {
        send_error(res, e);
    } catch (const std::exception& e) {
        send_json(res, 500, {{"error", {{"code", "internal"}, {"message", e.what()}}}});
    }
}

gateway::ImageInput image_from_b64(const std::string& b64, const std::string& media_type) {
    try {
        return gateway::ImageInput::from_base64(b64, media_type);
    } catch (const Error& e) {
        fail(ErrorCode::InvalidInput, e.what());
    }
}

json parse_body(const httplib::Request& req) {
    try {
        auto j = json::parse(req.body);
        if (!j.is_object()) fail(ErrorCode::InvalidRequest, "request body must be a JSON object");
        return j;
    } catch (const json::parse_error& e) {
        fail(ErrorCode::InvalidRequest, std::string("malformed JSON body: ") + e.what());
    }
}

std::string string_field(const json& j, const char* key) {
    if (!j.contains(key) || j[key].is_null()) return {};
    if (!j[key].is_string()) fail(ErrorCode::InvalidRequest, std::string("'") + key + "' must be a string");
    return j[key].get<std::string>();
}

// Image and scalar fields from either a multipart form or a JSON body.
struct AskFields {
    std::string query;
    std::optional<gateway::ImageInput> image;
    std::optional<std::string> session_id;
};

AskFields read_fields(const httplib::Request& req) {
    AskFields f;
    if (req.is_multipart_form_data()) {
        if (req.has_file("query")) f.query = req.get_file_value("query").content;
        if (req.has_file("session_id")) {
            const auto v = req.get_file_value("session_id").content;
            if (!v.empty()) f.session_id = v;
        }
        if (req.has_file("image")) {
            const auto file = req.get_file_value("image");
            gateway::ImageInput img;
            img.bytes.assign(file.content.begin(), file.content.end());
            img.media_type = file.content_type == "application/octet-stream" ? "" : file.content_type;
            f.image = std::move(img);
        }
        return f;
    }
    const auto j = parse_body(req);
    f.query = string_field(j, "query");
    if (const auto sid = string_field(j, "session_id"); !sid.empty()) f.session_id = sid;
    if (const auto b64 = string_field(j, "image_b64"); !b64.empty())
        f.image = image_from_b64(b64, string_field(j, "media_type"));
    return f;
}

}  // namespace

struct Service::Impl {
    std::shared_ptr<Pipeline> pipeline;
    std::optional<std::string> api_key;
    httplib::Server server;
    std::thread thread;
    std::atomic<bool> bound{false};
};

Service::Service(std::shared_ptr<Pipeline> pipeline, std::optional<std::string> api_key)
    : impl_(std::make_unique<Impl>()) {
    require(static_cast<bool>(pipeline), ErrorCode::ConfigError, "service needs a pipeline");
    impl_->pipeline = std::move(pipeline);
    impl_->api_key = std::move(api_key);
    auto& svr = impl_->server;
    Impl* self = impl_.get();

    svr.set_payload_max_length(32u << 20);
    // httplib defaults to SO_REUSEPORT, which would let a second server share
    // a busy port silently. SO_REUSEADDR still allows quick restarts.
    svr.set_socket_options([](socket_t sock) {
        int yes = 1;
        setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof yes);
    });
    svr.set_pre_routing_handler([self](const httplib::Request& req, httplib::Response& res) {
        if (!self->api_key || req.path == "/health") return httplib::Server::HandlerResponse::Unhandled;
        if (req.get_header_value("Authorization") == "Bearer " + *self->api_key)
            return httplib::Server::HandlerResponse::Unhandled;
        send_json(res, 401, {{"error", {{"code", "Unauthorized"}, {"message", "missing or wrong API key"}}}});
        return httplib::Server::HandlerResponse::Handled;
    });

    svr.Get("/health", [self](const httplib::Request&, httplib::Response& res) {
        guarded(res, [&] {
            const auto c = self->pipeline->snapshot();
            json graph{{"entities", c->graph ? c->graph->entities().size() : 0},
                       {"relations", c->graph ? c->graph->relations().size() : 0},
                       {"indexed", c->graph && c->graph->has_index()}};
            send_json(res, 200,
                      {{"status", "ok"},
                       {"components",
                        {{"specialist", c->diagnoser->name()},
                         {"graph", graph},
                         {"embedder", c->embedder->identity()},
                         {"generalist", c->generalist->identity()},
                         {"prompt_version", c->prompt_template.version}}}});
        });
    });

    svr.Post("/v1/ask", [self](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            auto f = read_fields(req);
            require(!f.query.empty(), ErrorCode::InvalidRequest, "'query' is required");
            const auto resp = self->pipeline->ask({f.query, std::move(f.image), f.session_id});
            send_json(res, 200, resp.to_json());
        });
    });

    svr.Post("/v1/diagnose", [self](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            std::optional<gateway::ImageInput> image;
            if (req.is_multipart_form_data() || req.get_header_value("Content-Type").starts_with("application/json")) {
                image = read_fields(req).image;
            } else if (!req.body.empty()) {
                gateway::ImageInput raw;
                raw.bytes.assign(req.body.begin(), req.body.end());
                raw.media_type = req.get_header_value("Content-Type");
                if (raw.media_type == "application/octet-stream") raw.media_type.clear();
                image = std::move(raw);
            }
            require(image.has_value(), ErrorCode::InvalidRequest, "an image is required");
            send_json(res, 200, self->pipeline->diagnose(*image).to_json());
        });
    });

    svr.Get(R"(/v1/session/([^/]+))", [self](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] { send_json(res, 200, self->pipeline->session(req.matches[1]).to_json()); });
    });
}

Service::~Service() { stop(); }

int Service::bind(const std::string& host, int port) {
    auto& svr = impl_->server;
    int bound = port;
    if (port == 0) {
        bound = svr.bind_to_any_port(host);
        if (bound <= 0) fail(ErrorCode::IoError, "cannot bind any port on " + host);
    } else if (!svr.bind_to_port(host, port)) {
        fail(ErrorCode::IoError, "cannot bind " + host + ":" + std::to_string(port)
                                     + " (address in use or not available)");
    }
    impl_->bound = true;
    return bound;
}

void Service::start() {
    require(impl_->bound, ErrorCode::InvalidArgument, "bind() before start()");
    impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
    impl_->server.wait_until_ready();
}

void Service::run() {
    require(impl_->bound, ErrorCode::InvalidArgument, "bind() before run()");
    impl_->server.listen_after_bind();
}

void Service::stop() {
    if (!impl_) return;
    if (impl_->server.is_running() || impl_->bound) impl_->server.stop();
    if (impl_->thread.joinable()) impl_->thread.join();
    impl_->bound = false;
}

}  // namespace clarify::pipeline
