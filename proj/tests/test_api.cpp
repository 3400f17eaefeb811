#include "mmdesign/server.hpp"
#include "mmdesign/service.hpp"

#include <httplib.h>

#include <doctest.h>

#include <fstream>
#include <sstream>
#include <thread>

using namespace mmdesign;
using service::json;

namespace {

class Running {
public:
    explicit Running(ServerOptions options = make_options()) : server_(options) {
        port_ = server_.bind();
        thread_ = std::thread([this] { server_.listen(); });
        server_.wait_until_ready();
    }
    ~Running() {
        server_.stop();
        thread_.join();
    }
    httplib::Client client() const {
        httplib::Client c("127.0.0.1", port_);
        c.set_read_timeout(60);
        return c;
    }

    static ServerOptions make_options() {
        ServerOptions o;
        o.port = 0;
        o.workers = 4;
        return o;
    }

private:
    Server server_;
    int port_ = 0;
    std::thread thread_;
};

const char* kDesign = R"({
  "groups": [
    {"sigma2_eps": 0.551, "r_delta": 0.43, "r_phi": 1.78},
    {"sigma2_eps": 0.705, "r_delta": 0.34, "r_phi": 1.40}
  ],
  "cost": {"c_q": 125, "c_b": 250, "budget": 50000}
})";

}  // namespace

TEST_CASE("health") {
    Running s;
    auto c = s.client();
    const auto res = c.Get("/v1/health");
    REQUIRE(res);
    CHECK(res->status == 200);
    const auto body = json::parse(res->body);
    CHECK(body["status"] == "ok");
    CHECK(body["version"] == service::kVersion);
    CHECK(res->get_header_value("Access-Control-Allow-Origin") == "*");
}

TEST_CASE("design endpoint reproduces the case-study design") {
    Running s;
    auto c = s.client();
    const auto res = c.Post("/v1/design", kDesign, "application/json");
    REQUIRE(res);
    CHECK(res->status == 200);
    const auto body = json::parse(res->body);
    CHECK(body["result"]["groups"][0]["n_total"] == 64);
    CHECK(body["result"]["groups"][1]["n_total"] == 70);
    CHECK(body["result"]["groups"][1]["n_direct"] == 69);
    CHECK(body == service::handle_design(json::parse(kDesign)));
}

TEST_CASE("budget endpoint") {
    Running s;
    auto c = s.client();
    json req = {{"groups", json::parse(kDesign)["groups"]},
                {"cost", {{"c_q", 125}, {"c_b", 250}}},
                {"power", {{"alpha", 0.05}, {"power", 0.9}, {"delta", 0.1}}}};
    const auto res = c.Post("/v1/budget", req.dump(), "application/json");
    REQUIRE(res);
    CHECK(res->status == 200);
    CHECK(json::parse(res->body)["result"]["budget"].get<double>() ==
          doctest::Approx(1'360'757).epsilon(0.01));
}

TEST_CASE("error statuses") {
    Running s;
    auto c = s.client();
    auto res = c.Post("/v1/design", "{not json", "application/json");
    REQUIRE(res);
    CHECK(res->status == 400);

    json req = json::parse(kDesign);
    req["groups"][0].erase("sigma2_eps");
    res = c.Post("/v1/design", req.dump(), "application/json");
    CHECK(res->status == 400);
    CHECK(json::parse(res->body)["error"]["field"] == "groups[0].sigma2_eps");

    req = json::parse(kDesign);
    req["cost"]["budget"] = 2000;
    res = c.Post("/v1/design", req.dump(), "application/json");
    CHECK(res->status == 422);
    CHECK(json::parse(res->body)["error"]["minimal_budget"] == 3000.0);

    json sweep = {{"kind", "se_surface"}, {"n_total", 100}, {"n_values", json::array()},
                  {"k_values", json::array()}, {"r_delta", {1.0}}, {"r_phi", {1.0}}};
    for (int n = 4; n < 104; ++n) sweep["n_values"].push_back(n);
    for (int k = 1; k <= 101; ++k) sweep["k_values"].push_back(k);
    res = c.Post("/v1/sweep", sweep.dump(), "application/json");
    CHECK(res->status == 413);

    res = c.Get("/v1/nothing");
    CHECK(res->status == 404);
}

TEST_CASE("pilot upload inline and multipart give the same estimates") {
    std::ifstream in(MMDESIGN_FIXTURES "/pilot_example.csv");
    std::stringstream buf;
    buf << in.rdbuf();
    Running s;
    auto c = s.client();
    const auto inline_res = c.Post("/v1/estimate", json{{"csv", buf.str()}}.dump(), "application/json");
    REQUIRE(inline_res);
    CHECK(inline_res->status == 200);
    httplib::MultipartFormDataItems items = {{"file", buf.str(), "pilot.csv", "text/csv"}};
    const auto multi_res = c.Post("/v1/estimate", items);
    REQUIRE(multi_res);
    CHECK(multi_res->status == 200);
    CHECK(json::parse(inline_res->body)["result"] == json::parse(multi_res->body)["result"]);
}

TEST_CASE("concurrent identical requests return identical bodies") {
    Running s;
    std::vector<std::string> bodies(8);
    std::vector<std::thread> threads;
    for (std::size_t i = 0; i < bodies.size(); ++i)
        threads.emplace_back([&, i] {
            auto c = s.client();
            const auto res = c.Post("/v1/design", kDesign, "application/json");
            if (res) bodies[i] = res->body;
        });
    for (auto& t : threads) t.join();
    for (const auto& b : bodies) CHECK(b == bodies[0]);
    CHECK_FALSE(bodies[0].empty());
}

TEST_CASE("preflight and disabled CORS") {
    {
        Running s;
        auto c = s.client();
        const auto res = c.Options("/v1/design");
        REQUIRE(res);
        CHECK(res->status == 204);
    }
    auto o = Running::make_options();
    o.cors_origin.clear();
    Running s(o);
    auto c = s.client();
    const auto res = c.Get("/v1/health");
    REQUIRE(res);
    CHECK_FALSE(res->has_header("Access-Control-Allow-Origin"));
}
