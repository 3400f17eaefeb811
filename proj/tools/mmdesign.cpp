#include "mmdesign/config.hpp"
#include "mmdesign/errors.hpp"
#include "mmdesign/report.hpp"
#include "mmdesign/service.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

namespace fs = std::filesystem;
using mmdesign::service::json;

namespace {

struct Options {
    std::string config_path;
    std::string request_path;
    std::string out_dir;
    std::string format = "text";
    unsigned threads = 1;
    std::vector<std::string> sets;
    std::map<std::string, std::string> shortcuts;  // "section.key" -> value
};

using Handler = json (*)(const json&, const mmdesign::service::Limits&);

const std::map<std::string, Handler>& handlers() {
    static const std::map<std::string, Handler> h = {
        {"design", mmdesign::service::handle_design},
        {"budget", mmdesign::service::handle_budget},
        {"power", mmdesign::service::handle_power},
        {"estimate", mmdesign::service::handle_estimate},
        {"simulate", mmdesign::service::handle_simulate},
        {"sweep", mmdesign::service::handle_sweep},
        {"sensitivity", mmdesign::service::handle_sensitivity},
    };
    return h;
}

json load_request(const std::string& command, const Options& opt) {
    if (!opt.request_path.empty()) {
        std::ifstream in(opt.request_path);
        if (!in) throw mmdesign::ValidationError("--request", "cannot read '" + opt.request_path + "'");
        return json::parse(in);
    }
    mmdesign::config::Ini ini;
    if (!opt.config_path.empty()) ini = mmdesign::config::read_ini(opt.config_path);
    for (const auto& [path, value] : opt.shortcuts) mmdesign::config::apply_override(ini, path + "=" + value);
    for (const auto& s : opt.sets) mmdesign::config::apply_override(ini, s);
    return mmdesign::config::build_request(command, ini);
}

void write_outputs(const json& response, const Options& opt) {
    const std::string kind = response.at("kind");
    const auto tables = mmdesign::response_tables(response);
    if (!opt.out_dir.empty()) {
        fs::create_directories(opt.out_dir);
        std::ofstream(fs::path(opt.out_dir) / (kind + ".json")) << response.dump(2) << '\n';
        for (const auto& [name, table] : tables) {
            std::ofstream out(fs::path(opt.out_dir) / (kind + "_" + name + ".csv"));
            mmdesign::write_csv(out, table);
        }
    }
    if (opt.format == "json") std::cout << response.dump(2) << '\n';
    else if (opt.format == "csv") {
        if (!tables.empty()) mmdesign::write_csv(std::cout, tables.front().second);
    } else std::cout << mmdesign::render_text(response);
}

int run(const std::string& command, const Options& opt) {
    try {
        mmdesign::service::Limits limits;
        limits.threads = opt.threads;
        limits.max_grid_points = std::numeric_limits<std::size_t>::max();
        const json response = handlers().at(command)(load_request(command, opt), limits);
        write_outputs(response, opt);
        return 0;
    } catch (...) {
        const auto info = mmdesign::service::classify(std::current_exception());
        const json& e = info.body.at("error");
        std::cerr << "error: " << e.at("message").get<std::string>() << '\n';
        if (e.contains("minimal_budget") && !e["minimal_budget"].is_null())
            std::cerr << "minimal feasible budget: " << e["minimal_budget"].get<double>() << '\n';
        return info.exit_code;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Optimal designs for exposure studies with direct and indirect measurements"};
    app.require_subcommand(1);
    Options opt;

    const std::map<std::string, std::string> help = {
        {"design", "optimal (N, n, K) per group and budget allocation"},
        {"budget", "smallest budget reaching a power target"},
        {"power", "power for a given design or standard error"},
        {"estimate", "parameter estimates from a pilot CSV"},
        {"simulate", "Monte Carlo check of the closed-form standard error"},
        {"sweep", "parameter sweeps (se_surface, thresholds, design_grid, allocation)"},
        {"sensitivity", "efficiency under misspecified planning values"},
    };
    auto shortcut = [&](CLI::App* sub, const std::string& flag, const std::string& path,
                        const std::string& desc) {
        sub->add_option_function<std::string>(
            flag, [&opt, path](const std::string& v) { opt.shortcuts[path] = v; }, desc);
    };

    for (const auto& [name, description] : help) {
        CLI::App* sub = app.add_subcommand(name, description);
        sub->add_option("--config", opt.config_path, "INI run configuration")->check(CLI::ExistingFile);
        sub->add_option("--request", opt.request_path, "JSON request (same body as the HTTP API)")
            ->check(CLI::ExistingFile)
            ->excludes("--config");
        sub->add_option("--out", opt.out_dir, "directory for JSON and CSV outputs");
        sub->add_option("--format", opt.format, "stdout format")
            ->check(CLI::IsMember({"text", "csv", "json"}));
        sub->add_option("--threads", opt.threads, "worker threads")->check(CLI::Range(1u, 1024u));
        sub->add_option("--set", opt.sets, "override section.key=value (repeatable)");
        if (name == "design" || name == "sensitivity")
            shortcut(sub, "--budget", "cost.budget", "total budget");
        if (name == "budget" || name == "power") {
            shortcut(sub, "--power", "power.power", "target power");
            shortcut(sub, "--delta", "power.delta", "effect size");
            shortcut(sub, "--alpha", "power.alpha", "two-sided significance level");
        }
        if (name == "estimate") {
            shortcut(sub, "--input", "estimate.input", "pilot CSV");
            shortcut(sub, "--r-delta", "estimate.r_delta", "external r_delta for K = 1 pilots");
        }
        if (name == "simulate") {
            shortcut(sub, "--seed", "simulate.seed", "random seed");
            shortcut(sub, "--replications", "simulate.replications", "Monte Carlo replications");
        }
        if (name == "sweep") shortcut(sub, "--kind", "sweep.kind", "sweep kind");
        if (name == "sensitivity") {
            shortcut(sub, "--axis", "sensitivity.axis", "sigma2_eps, r_phi or r_delta");
            shortcut(sub, "--scale", "sensitivity.scale", "variance or standard_error");
        }
        sub->callback([&opt, name = name] { throw CLI::RuntimeError(run(name, opt)); });
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::RuntimeError& e) {
        return e.get_exit_code();
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }
    return 0;
}
