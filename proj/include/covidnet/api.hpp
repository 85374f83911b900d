#pragma once

#include "covidnet/engine.hpp"
#include "covidnet/error.hpp"

#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>

namespace covidnet {

struct ApiRequest {
    std::string method = "GET";
    std::string path = "/";
    std::map<std::string, std::string> query;
    std::string body;
    /// Raw Authorization header value.
    std::optional<std::string> authorization;
};

struct ApiResponse {
    int status = 200;
    std::string content_type = "application/json";
    std::string body;
};

/// HTTP status for an error code. Each code maps to exactly one status.
int http_status(ErrorCode code) noexcept;

/// JSON endpoints over an engine. `handle` is the whole routing table and
/// can be driven without a socket; `start` binds it to cpp-httplib.
class ApiService {
public:
    using Clock = std::function<Instant()>;

    explicit ApiService(Engine& engine, Clock clock = {});
    ~ApiService();
    ApiService(const ApiService&) = delete;
    ApiService& operator=(const ApiService&) = delete;

    ApiResponse handle(const ApiRequest& request);

    /// Binds and serves on a background thread. Port 0 picks a free port.
    /// Returns the bound port; throws Io if binding fails.
    int start(const std::string& host, int port);
    /// Serves on the calling thread until stop() is called from elsewhere.
    void serve(const std::string& host, int port);
    void stop();

private:
    struct Server;

    int bind(const std::string& host, int port);
    Instant now() const;

    Engine& engine_;
    Clock clock_;
    std::unique_ptr<Server> server_;
};

} // namespace covidnet
