#include "mmdesign/server.hpp"

#include "mmdesign/errors.hpp"

#include <httplib.h>

#include <functional>
#include <stdexcept>

namespace mmdesign {

using service::json;

namespace {

using Handler = std::function<json(const json&, const service::Limits&)>;

void send_json(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, std::exception_ptr error) {
    const auto info = service::classify(error);
    send_json(res, info.http_status, info.body);
}

// Pilot uploads may come as {"csv": ...} JSON or as multipart with a "file"
// part and an optional "r_delta" field.
json estimate_request(const httplib::Request& req) {
    if (!req.is_multipart_form_data()) return json::parse(req.body);
    json request = json::object();
    if (req.has_file("file")) request["csv"] = req.get_file_value("file").content;
    else if (req.has_file("csv")) request["csv"] = req.get_file_value("csv").content;
    if (req.has_file("r_delta")) {
        const std::string text = req.get_file_value("r_delta").content;
        try {
            std::size_t used = 0;
            const double v = std::stod(text, &used);
            if (used != text.size()) throw std::invalid_argument(text);
            request["r_delta"] = v;
        } catch (const std::exception&) {
            throw ValidationError("r_delta", "expected a number, got '" + text + "'");
        }
    }
    return request;
}

}  // namespace

struct Server::Impl {
    ServerOptions options;
    httplib::Server http;
    int port = -1;

    explicit Impl(ServerOptions o) : options(std::move(o)) {
        const unsigned workers = options.workers ? options.workers : 1;
        http.new_task_queue = [workers] { return new httplib::ThreadPool(workers); };
        http.set_payload_max_length(options.max_body_bytes);
        if (!options.cors_origin.empty()) {
            http.set_default_headers({{"Access-Control-Allow-Origin", options.cors_origin},
                                      {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"},
                                      {"Access-Control-Allow-Headers", "Content-Type"}});
            http.Options(R"(/v1/.*)", [](const httplib::Request&, httplib::Response& res) {
                res.status = 204;
            });
        }

        http.Get("/v1/health", [](const httplib::Request&, httplib::Response& res) {
            send_json(res, 200, service::health());
        });

        const std::pair<const char*, Handler> routes[] = {
            {"/v1/design", service::handle_design},
            {"/v1/budget", service::handle_budget},
            {"/v1/power", service::handle_power},
            {"/v1/sensitivity", service::handle_sensitivity},
            {"/v1/sweep", service::handle_sweep},
            {"/v1/simulate", service::handle_simulate},
        };
        for (const auto& [path, handler] : routes) {
            http.Post(path, [this, handler](const httplib::Request& req, httplib::Response& res) {
                try {
                    send_json(res, 200, handler(json::parse(req.body), options.limits));
                } catch (...) {
                    send_error(res, std::current_exception());
                }
            });
        }
        http.Post("/v1/estimate", [this](const httplib::Request& req, httplib::Response& res) {
            try {
                send_json(res, 200, service::handle_estimate(estimate_request(req), options.limits));
            } catch (...) {
                send_error(res, std::current_exception());
            }
        });

        http.set_error_handler([](const httplib::Request&, httplib::Response& res) {
            if (!res.body.empty()) return;
            const char* kind = res.status == 404 ? "not_found"
                               : res.status == 413 ? "too_large"
                                                   : "http";
            send_json(res, res.status,
                      {{"error", {{"kind", kind}, {"message", httplib::status_message(res.status)}}}});
        });
    }
};

Server::Server(ServerOptions options) : impl_(std::make_unique<Impl>(std::move(options))) {}

Server::~Server() { stop(); }

int Server::bind() {
    auto& o = impl_->options;
    if (o.port == 0) impl_->port = impl_->http.bind_to_any_port(o.host);
    else impl_->port = impl_->http.bind_to_port(o.host, o.port) ? o.port : -1;
    if (impl_->port < 0)
        throw std::runtime_error("cannot bind " + o.host + ":" + std::to_string(o.port));
    return impl_->port;
}

void Server::listen() {
    if (impl_->port < 0) bind();
    impl_->http.listen_after_bind();
}

void Server::stop() {
    if (impl_->http.is_running()) impl_->http.stop();
}

void Server::wait_until_ready() const { impl_->http.wait_until_ready(); }

}  // namespace mmdesign
