#include "mmdesign/server.hpp"

#include <CLI11.hpp>

#include <csignal>
#include <iostream>
#include <thread>

int main(int argc, char** argv) {
    CLI::App app{"HTTP service for exposure-study design"};
    mmdesign::ServerOptions opt;
    app.add_option("--host", opt.host, "bind address")->envname("MMDESIGN_HOST");
    app.add_option("--port", opt.port, "port (0 picks a free one)")->envname("MMDESIGN_PORT");
    app.add_option("--workers", opt.workers, "concurrent requests")
        ->envname("MMDESIGN_WORKERS")
        ->check(CLI::Range(1u, 256u));
    app.add_option("--threads", opt.limits.threads, "compute threads per request")
        ->check(CLI::Range(1u, 256u));
    app.add_option("--max-grid", opt.limits.max_grid_points, "largest sweep grid per request");
    app.add_option("--cors-origin", opt.cors_origin, "Access-Control-Allow-Origin; empty disables")
        ->envname("MMDESIGN_CORS_ORIGIN");
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    sigset_t signals;
    sigemptyset(&signals);
    sigaddset(&signals, SIGINT);
    sigaddset(&signals, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &signals, nullptr);

    mmdesign::Server server(opt);
    try {
        const int port = server.bind();
        std::cerr << "listening on " << opt.host << ":" << port << '\n';
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    std::thread worker([&] { server.listen(); });
    int sig = 0;
    sigwait(&signals, &sig);
    server.stop();
    worker.join();
    return 0;
}
