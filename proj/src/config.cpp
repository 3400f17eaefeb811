#include "mmdesign/config.hpp"

#include "mmdesign/errors.hpp"

#include <boost/algorithm/string.hpp>
#include <boost/property_tree/ini_parser.hpp>

#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace mmdesign::config {

using json = nlohmann::json;

namespace {

enum class Kind { number, integer, boolean, text, numbers, integers };

using Schema = std::map<std::string, Kind>;

const Schema& group_schema() {
    static const Schema s = {
        {"name", Kind::text},          {"sigma2_eps", Kind::number}, {"r_delta", Kind::number},
        {"r_phi", Kind::number},       {"alpha0", Kind::number},     {"alpha1", Kind::number},
        {"sigma2_phi", Kind::number},  {"sigma2_delta", Kind::number},
        {"n_total", Kind::integer},    {"n_direct", Kind::integer},  {"k_reps", Kind::integer},
        {"mu", Kind::number}};
    return s;
}

const std::map<std::string, Schema>& schema() {
    static const std::map<std::string, Schema> s = {
        {"cost", {{"c_q", Kind::number}, {"c_b", Kind::number}, {"budget", Kind::number}}},
        {"group1", group_schema()},
        {"group2", group_schema()},
        {"power",
         {{"alpha", Kind::number}, {"power", Kind::number}, {"delta", Kind::number},
          {"mu0", Kind::number}, {"se", Kind::number}}},
        {"optimizer",
         {{"k_max_extra", Kind::integer}, {"allocation_grid", Kind::number},
          {"refine_allocation", Kind::boolean}, {"tie_tolerance", Kind::number},
          {"budget_tolerance", Kind::number}, {"max_iterations", Kind::integer},
          {"fraction_report_epsilon", Kind::number}, {"fixed_k", Kind::integer}}},
        {"estimate", {{"input", Kind::text}, {"r_delta", Kind::number}}},
        {"simulate",
         {{"replications", Kind::integer}, {"seed", Kind::integer}, {"dump", Kind::boolean}}},
        {"sensitivity",
         {{"axis", Kind::text}, {"multipliers", Kind::numbers}, {"scale", Kind::text}}},
        {"sweep",
         {{"kind", Kind::text}, {"n_total", Kind::integer}, {"n_values", Kind::integers},
          {"k_values", Kind::integers}, {"r_delta", Kind::numbers}, {"r_phi", Kind::numbers},
          {"sigma2_eps", Kind::number}, {"r_cb", Kind::numbers}, {"budget", Kind::number},
          {"c_q", Kind::number}, {"r_delta_min", Kind::number}, {"r_delta_max", Kind::number},
          {"relative_width", Kind::number}, {"sigma2_eps1", Kind::numbers},
          {"r_phi1", Kind::numbers}, {"r_delta1", Kind::number}}},
    };
    return s;
}

double to_number(const std::string& raw, const std::string& field) {
    const std::string s = boost::trim_copy(raw);
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || ec != std::errc{} || ptr != s.data() + s.size() || !std::isfinite(v))
        throw ValidationError(field, "expected a number, got '" + s + "'");
    return v;
}

std::int64_t to_integer(const std::string& raw, const std::string& field) {
    const std::string s = boost::trim_copy(raw);
    std::int64_t v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || ec != std::errc{} || ptr != s.data() + s.size())
        throw ValidationError(field, "expected an integer, got '" + s + "'");
    return v;
}

bool to_bool(const std::string& raw, const std::string& field) {
    const std::string s = boost::to_lower_copy(boost::trim_copy(raw));
    if (s == "true" || s == "yes" || s == "1") return true;
    if (s == "false" || s == "no" || s == "0") return false;
    throw ValidationError(field, "expected true or false, got '" + s + "'");
}

// "a,b,c" or "start:stop:step" (inclusive of stop up to rounding).
std::vector<double> to_numbers(const std::string& raw, const std::string& field) {
    const std::string s = boost::trim_copy(raw);
    std::vector<std::string> parts;
    if (s.find(':') != std::string::npos) {
        boost::split(parts, s, boost::is_any_of(":"));
        if (parts.size() != 3) throw ValidationError(field, "range must be start:stop:step");
        const double a = to_number(parts[0], field);
        const double b = to_number(parts[1], field);
        const double step = to_number(parts[2], field);
        if (!(step > 0) || b < a) throw ValidationError(field, "range needs step > 0 and stop >= start");
        const auto count = static_cast<std::int64_t>(std::floor((b - a) / step + 1e-9)) + 1;
        if (count > 1'000'000) throw ValidationError(field, "range has too many points");
        std::vector<double> out;
        for (std::int64_t i = 0; i < count; ++i) out.push_back(a + static_cast<double>(i) * step);
        return out;
    }
    boost::split(parts, s, boost::is_any_of(","));
    std::vector<double> out;
    for (const auto& p : parts) out.push_back(to_number(p, field));
    return out;
}

std::vector<std::int64_t> to_integers(const std::string& raw, const std::string& field) {
    std::vector<std::int64_t> out;
    for (double v : to_numbers(raw, field)) {
        if (v != std::floor(v)) throw ValidationError(field, "expected integers");
        out.push_back(static_cast<std::int64_t>(v));
    }
    return out;
}

json convert(const std::string& raw, Kind kind, const std::string& field) {
    switch (kind) {
        case Kind::number: return to_number(raw, field);
        case Kind::integer: return to_integer(raw, field);
        case Kind::boolean: return to_bool(raw, field);
        case Kind::text: return boost::trim_copy(raw);
        case Kind::numbers: return to_numbers(raw, field);
        case Kind::integers: return to_integers(raw, field);
    }
    return nullptr;
}

// All keys of one section converted to JSON, optionally restricted to `only`.
json section(const Ini& ini, const std::string& name, const std::set<std::string>& only = {}) {
    json out = json::object();
    const auto child = ini.get_child_optional(name);
    if (!child) return out;
    const Schema& keys = schema().at(name);
    for (const auto& [key, node] : *child) {
        if (!only.empty() && !only.count(key)) continue;
        out[key] = convert(node.data(), keys.at(key), name + "." + key);
    }
    return out;
}

bool has_section(const Ini& ini, const std::string& name) {
    const auto child = ini.get_child_optional(name);
    return child && !child->empty();
}

const std::set<std::string> kParamKeys = {"name",   "sigma2_eps", "r_delta",    "r_phi",
                                          "alpha0", "alpha1",     "sigma2_phi", "sigma2_delta"};

json group(const Ini& ini, const std::string& name, bool with_design, bool with_mu) {
    json g = section(ini, name, kParamKeys);
    if (with_design) {
        json d = section(ini, name, {"n_total", "n_direct", "k_reps"});
        if (!d.empty()) g["design"] = d;
    }
    if (with_mu) {
        json m = section(ini, name, {"mu"});
        if (m.contains("mu")) g["mu"] = m["mu"];
    }
    return g;
}

json groups(const Ini& ini, bool with_design = false, bool with_mu = false) {
    json arr = json::array();
    for (const char* name : {"group1", "group2"})
        if (has_section(ini, name)) arr.push_back(group(ini, name, with_design, with_mu));
    return arr;
}

json cost(const Ini& ini, bool with_budget) {
    return section(ini, "cost", with_budget ? std::set<std::string>{"c_q", "c_b", "budget"}
                                            : std::set<std::string>{"c_q", "c_b"});
}

void add_optimizer(json& request, const Ini& ini) {
    if (has_section(ini, "optimizer")) request["optimizer"] = section(ini, "optimizer");
}

std::string read_file(const std::string& path, const std::string& field) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError(field, "cannot read '" + path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

}  // namespace

Ini parse_ini(const std::string& text) {
    Ini ini;
    std::istringstream in(text);
    try {
        boost::property_tree::ini_parser::read_ini(in, ini);
    } catch (const boost::property_tree::ini_parser_error& e) {
        throw ValidationError("config", "line " + std::to_string(e.line()) + ": " + e.message());
    }
    return ini;
}

Ini read_ini(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("config", "cannot read '" + path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    try {
        return parse_ini(buf.str());
    } catch (const ValidationError& e) {
        throw ValidationError("config", path + ": " + std::string(e.what()).substr(8));
    }
}

void set_value(Ini& ini, const std::string& section_name, const std::string& key,
               const std::string& value) {
    ini.put(Ini::path_type(section_name + "." + key, '.'), value);
}

void apply_override(Ini& ini, const std::string& assignment) {
    const auto eq = assignment.find('=');
    const auto dot = assignment.find('.');
    if (eq == std::string::npos || dot == std::string::npos || dot > eq)
        throw ValidationError("--set", "expected section.key=value, got '" + assignment + "'");
    set_value(ini, assignment.substr(0, dot), assignment.substr(dot + 1, eq - dot - 1),
              assignment.substr(eq + 1));
}

void check_known(const Ini& ini) {
    for (const auto& [name, sec] : ini) {
        const auto it = schema().find(name);
        if (it == schema().end()) {
            if (sec.empty()) throw ValidationError(name, "keys must belong to a [section]");
            throw ValidationError(name, "unknown section");
        }
        for (const auto& [key, node] : sec) {
            const auto k = it->second.find(key);
            if (k == it->second.end()) throw ValidationError(name + "." + key, "unknown field");
            convert(node.data(), k->second, name + "." + key);
        }
    }
}

json build_request(const std::string& command, const Ini& ini) {
    check_known(ini);
    auto require = [&](const std::string& name) {
        if (!has_section(ini, name)) throw ValidationError(name, "section required");
    };
    json request = json::object();

    if (command == "design") {
        require("group1");
        require("cost");
        request["groups"] = groups(ini);
        request["cost"] = cost(ini, true);
        add_optimizer(request, ini);
    } else if (command == "budget") {
        require("group1");
        require("group2");
        require("cost");
        require("power");
        request["groups"] = groups(ini);
        request["cost"] = cost(ini, false);
        request["power"] = section(ini, "power", {"alpha", "power", "delta", "mu0"});
        add_optimizer(request, ini);
    } else if (command == "power") {
        require("power");
        request["power"] = section(ini, "power", {"alpha", "power", "delta", "mu0"});
        json se = section(ini, "power", {"se"});
        if (se.contains("se")) request["se"] = se["se"];
        else request["groups"] = groups(ini, true);
    } else if (command == "estimate") {
        require("estimate");
        json e = section(ini, "estimate");
        if (!e.contains("input")) throw ValidationError("estimate.input", "required");
        request["csv"] = read_file(e["input"].get<std::string>(), "estimate.input");
        if (e.contains("r_delta")) request["r_delta"] = e["r_delta"];
    } else if (command == "simulate") {
        require("group1");
        require("simulate");
        request["groups"] = groups(ini, true, true);
        json s = section(ini, "simulate");
        if (!s.contains("replications")) throw ValidationError("simulate.replications", "required");
        request.update(s);
        json p = section(ini, "power", {"alpha"});
        if (p.contains("alpha") && request["groups"].size() == 2) request["power"] = p;
    } else if (command == "sensitivity") {
        require("group1");
        require("group2");
        require("cost");
        require("sensitivity");
        request["groups"] = groups(ini);
        request["cost"] = cost(ini, true);
        request.update(section(ini, "sensitivity"));
        add_optimizer(request, ini);
    } else if (command == "sweep") {
        require("sweep");
        request = section(ini, "sweep");
        if (request.value("kind", "") == "allocation" && has_section(ini, "group2"))
            request["group2"] = group(ini, "group2", false, false);
        if (request.value("kind", "") != "se_surface") add_optimizer(request, ini);
    } else {
        throw ValidationError("command", "unknown command '" + command + "'");
    }
    return request;
}

}  // namespace mmdesign::config
