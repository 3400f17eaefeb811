#pragma once

#include "mmdesign/service.hpp"

#include <memory>
#include <string>

// ---------------------------------------------------------------------------
// Stateless JSON-over-HTTP facade over the request handlers.
//
//   POST /v1/design /v1/budget /v1/power /v1/estimate /v1/sensitivity
//        /v1/sweep /v1/simulate
//   GET  /v1/health
// ---------------------------------------------------------------------------

namespace mmdesign {

struct ServerOptions {
    std::string host = "127.0.0.1";
    int port = 8080;                 // 0 picks a free port
    unsigned workers = 4;            // concurrent requests
    std::string cors_origin = "*";   // empty disables cross-origin headers
    std::size_t max_body_bytes = 16 * 1024 * 1024;
    service::Limits limits;          // per-request grid cap and compute threads
};

class Server {
public:
    explicit Server(ServerOptions options);
    ~Server();
    Server(const Server&) = delete;
    Server& operator=(const Server&) = delete;

    // Binds and returns the port (useful with port 0). Throws on failure.
    int bind();
    // Serves until stop(); call bind() first.
    void listen();
    void stop();
    void wait_until_ready() const;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace mmdesign
