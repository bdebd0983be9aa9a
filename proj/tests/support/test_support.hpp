#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>

#include "clarify/error.hpp"
#include "clarify/gateway/types.hpp"

namespace clarify::testing {

/// Runs an httplib server on a free loopback port for the lifetime of the object.
class MockServer {
public:
    MockServer() = default;
    ~MockServer() { stop(); }

    httplib::Server& server() { return server_; }

    /// Binds, starts the listener thread and waits until it accepts.
    void start() {
        port_ = server_.bind_to_any_port("127.0.0.1");
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }
    void stop() {
        if (thread_.joinable()) {
            server_.stop();
            thread_.join();
        }
    }

    int port() const { return port_; }
    std::string url() const { return "http://127.0.0.1:" + std::to_string(port_); }

private:
    httplib::Server server_;
    std::thread thread_;
    int port_ = 0;
};

/// Unique scratch directory removed on destruction.
class TempDir {
public:
    TempDir() {
        static std::atomic<int> counter{0};
        const auto stamp = std::chrono::steady_clock::now().time_since_epoch().count();
        path_ = std::filesystem::temp_directory_path()
                / ("clarify-test-" + std::to_string(stamp) + "-" + std::to_string(counter++));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    const std::filesystem::path& path() const { return path_; }
    std::string file(const std::string& name) const { return (path_ / name).string(); }

private:
    std::filesystem::path path_;
};

/// PNG signature followed by `tag`; enough for media sniffing and hashing.
inline gateway::ImageInput png(const std::string& tag = "lesion") {
    gateway::ImageInput img;
    img.bytes = {0x89, 'P', 'N', 'G', 0x0D, 0x0A, 0x1A, 0x0A};
    img.bytes.insert(img.bytes.end(), tag.begin(), tag.end());
    img.media_type = "image/png";
    return img;
}

template <class Fn>
ErrorCode error_code_of(Fn&& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    throw std::logic_error("expected a clarify::Error");
}

}  // namespace clarify::testing
