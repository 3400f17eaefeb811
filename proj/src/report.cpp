#include "mmdesign/report.hpp"

#include "mmdesign/service.hpp"

#include <cmath>
#include <iomanip>
#include <sstream>

namespace mmdesign {

using nlohmann::json;

namespace {

Cell to_cell(const json& v) {
    if (v.is_null()) return std::monostate{};
    if (v.is_boolean()) return std::int64_t{v.get<bool>() ? 1 : 0};
    if (v.is_number_integer()) return v.get<std::int64_t>();
    if (v.is_number()) return v.get<double>();
    if (v.is_string()) return v.get<std::string>();
    return v.dump();
}

// One row per object in `items`, one column per key in `keys`.
Table rows_of(const json& items, const std::vector<std::string>& keys, const std::string& index) {
    Table t;
    if (!index.empty()) t.columns.push_back(index);
    t.columns.insert(t.columns.end(), keys.begin(), keys.end());
    std::int64_t i = 1;
    for (const auto& item : items) {
        std::vector<Cell> row;
        if (!index.empty()) row.emplace_back(i++);
        for (const auto& k : keys) row.push_back(item.contains(k) ? to_cell(item[k]) : Cell{});
        t.add_row(std::move(row));
    }
    return t;
}

Table design_groups(const json& design) {
    return rows_of(design.at("groups"),
                   {"n_total", "n_direct", "k_reps", "variance", "se", "allocated_budget",
                    "spent_budget", "sampling_fraction", "sampling_fraction_reported"},
                   "group");
}

Table scalars(const json& obj, const std::vector<std::string>& keys) {
    Table t;
    t.columns = {"quantity", "value"};
    for (const auto& k : keys)
        if (obj.contains(k)) t.add_row({k, to_cell(obj[k])});
    return t;
}

std::string pretty(const Cell& cell) {
    if (const double* d = std::get_if<double>(&cell)) {
        std::ostringstream out;
        out << std::setprecision(6) << *d;
        return out.str();
    }
    return format_cell(cell);
}

void print_table(std::ostream& out, const std::string& title, const Table& t) {
    std::vector<std::size_t> width(t.columns.size());
    for (std::size_t c = 0; c < t.columns.size(); ++c) width[c] = t.columns[c].size();
    for (const auto& row : t.rows)
        for (std::size_t c = 0; c < row.size(); ++c) width[c] = std::max(width[c], pretty(row[c]).size());
    out << title << '\n';
    for (std::size_t c = 0; c < t.columns.size(); ++c)
        out << "  " << std::setw(static_cast<int>(width[c])) << t.columns[c];
    out << '\n';
    for (const auto& row : t.rows) {
        for (std::size_t c = 0; c < row.size(); ++c)
            out << "  " << std::setw(static_cast<int>(width[c])) << pretty(row[c]);
        out << '\n';
    }
    out << '\n';
}

}  // namespace

std::vector<NamedTable> response_tables(const json& response) {
    const std::string kind = response.at("kind");
    const json& r = response.at("result");
    std::vector<NamedTable> out;
    if (kind == "design") {
        out.emplace_back("groups", design_groups(r));
        out.emplace_back("summary", scalars(r, {"allocation", "c_total", "achieved_variance",
                                                "achieved_se", "spent_budget", "slack_budget"}));
    } else if (kind == "budget") {
        out.emplace_back("trace", rows_of(r.at("trace"), {"budget", "se"}, "step"));
        out.emplace_back("groups", design_groups(r.at("design")));
        json summary = r;
        summary["allocation"] = r.at("design").at("allocation");
        summary["achieved_se"] = r.at("design").at("achieved_se");
        summary["spent_budget"] = r.at("design").at("spent_budget");
        out.emplace_back("summary",
                         scalars(summary, {"budget", "initial_budget", "se_target", "se_initial",
                                           "iterations", "achieved_se", "achieved_power",
                                           "allocation", "spent_budget"}));
    } else if (kind == "power") {
        out.emplace_back("power", scalars(r, {"se", "power", "z_crit", "se_target"}));
    } else if (kind == "estimate") {
        Table t;
        t.columns = {"group", "parameter", "value", "se"};
        for (const auto& g : r.at("groups"))
            for (const char* p : {"alpha0", "alpha1", "sigma2_eps", "sigma2_phi", "sigma2_delta",
                                  "r_delta", "r_phi", "mu_hat", "nu_hat", "beta0_hat", "beta1_hat"})
                t.add_row({to_cell(g["group"]), std::string(p), to_cell(g[p]["value"]),
                           to_cell(g[p]["se"])});
        out.emplace_back("estimates", std::move(t));
        out.emplace_back("samples",
                         rows_of(r.at("groups"), {"group", "n_total", "n_direct", "k_reps"}, ""));
    } else if (kind == "simulate") {
        out.emplace_back("summary", service::table_from_json(r.at("summary")));
        if (r.contains("power"))
            out.emplace_back("power", scalars(r.at("power"), {"rejection_rate", "mc_error",
                                                              "closed_form_power", "closed_form_se",
                                                              "replications", "failures"}));
        if (r.contains("replicates"))
            out.emplace_back("replicates", service::table_from_json(r.at("replicates")));
    } else if (kind == "sensitivity") {
        out.emplace_back("efficiency", service::table_from_json(r.at("table")));
    } else if (kind == "sweep") {
        out.emplace_back(response.at("inputs").at("kind").get<std::string>(),
                         service::table_from_json(r.at("table")));
    }
    return out;
}

std::string render_text(const json& response) {
    std::ostringstream out;
    out << response.at("kind").get<std::string>() << " (schema "
        << response.at("schema_version").get<std::string>() << ")\n\n";
    for (const auto& [name, table] : response_tables(response)) {
        if (name == "replicates") continue;
        print_table(out, name, table);
    }
    for (const auto& w : response.at("warnings")) out << "warning: " << w.get<std::string>() << '\n';
    return out.str();
}

}  // namespace mmdesign
