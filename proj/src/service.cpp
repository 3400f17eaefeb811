#include "mmdesign/service.hpp"

#include "mmdesign/errors.hpp"
#include "mmdesign/estimation.hpp"
#include "mmdesign/optimizer.hpp"
#include "mmdesign/simulation.hpp"
#include "mmdesign/sweeps.hpp"

#include <cmath>
#include <optional>
#include <set>

namespace mmdesign::service {

namespace {

// Reads one JSON object, remembering which keys were consumed so that
// finish() can reject anything unexpected.
class ObjectReader {
public:
    ObjectReader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) throw ValidationError(path_.empty() ? "request" : path_, "expected an object");
    }

    std::string field(const std::string& key) const {
        return path_.empty() ? key : path_ + "." + key;
    }

    bool has(const std::string& key) {
        seen_.insert(key);
        return j_.contains(key) && !j_.at(key).is_null();
    }

    double number(const std::string& key) {
        if (!has(key)) throw ValidationError(field(key), "required");
        return as_number(j_.at(key), field(key));
    }

    std::optional<double> opt_number(const std::string& key) {
        if (!has(key)) return std::nullopt;
        return as_number(j_.at(key), field(key));
    }

    double number_or(const std::string& key, double fallback) {
        return opt_number(key).value_or(fallback);
    }

    std::int64_t integer(const std::string& key) {
        if (!has(key)) throw ValidationError(field(key), "required");
        return as_integer(j_.at(key), field(key));
    }

    std::optional<std::int64_t> opt_integer(const std::string& key) {
        if (!has(key)) return std::nullopt;
        return as_integer(j_.at(key), field(key));
    }

    std::optional<std::string> opt_string(const std::string& key) {
        if (!has(key)) return std::nullopt;
        const auto& v = j_.at(key);
        if (!v.is_string()) throw ValidationError(field(key), "expected a string");
        return v.get<std::string>();
    }

    std::optional<bool> opt_bool(const std::string& key) {
        if (!has(key)) return std::nullopt;
        const auto& v = j_.at(key);
        if (!v.is_boolean()) throw ValidationError(field(key), "expected true or false");
        return v.get<bool>();
    }

    const json* child(const std::string& key) {
        if (!has(key)) return nullptr;
        return &j_.at(key);
    }

    const json& require_child(const std::string& key) {
        if (!has(key)) throw ValidationError(field(key), "required");
        return j_.at(key);
    }

    std::vector<double> numbers(const std::string& key) {
        const json& arr = require_child(key);
        if (!arr.is_array() || arr.empty())
            throw ValidationError(field(key), "expected a non-empty array of numbers");
        std::vector<double> out;
        for (std::size_t i = 0; i < arr.size(); ++i)
            out.push_back(as_number(arr[i], field(key) + "[" + std::to_string(i) + "]"));
        return out;
    }

    std::vector<std::int64_t> integers(const std::string& key) {
        const json& arr = require_child(key);
        if (!arr.is_array() || arr.empty())
            throw ValidationError(field(key), "expected a non-empty array of integers");
        std::vector<std::int64_t> out;
        for (std::size_t i = 0; i < arr.size(); ++i)
            out.push_back(as_integer(arr[i], field(key) + "[" + std::to_string(i) + "]"));
        return out;
    }

    void finish() const {
        for (const auto& [key, value] : j_.items())
            if (!seen_.count(key)) throw ValidationError(field(key), "unknown field");
    }

private:
    static double as_number(const json& v, const std::string& where) {
        if (!v.is_number()) throw ValidationError(where, "expected a number");
        const double d = v.get<double>();
        if (!std::isfinite(d)) throw ValidationError(where, "must be finite");
        return d;
    }

    static std::int64_t as_integer(const json& v, const std::string& where) {
        if (v.is_number_integer()) return v.get<std::int64_t>();
        if (v.is_number_float()) {
            const double d = v.get<double>();
            if (std::isfinite(d) && d == std::floor(d) && std::fabs(d) < 9e15)
                return static_cast<std::int64_t>(d);
        }
        throw ValidationError(where, "expected an integer");
    }

    const json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

// ---------------------------------------------------------------------------
// Request pieces
// ---------------------------------------------------------------------------

struct GroupInput {
    std::optional<std::string> name;
    ModelParams params;
    std::optional<Design> design;
    std::optional<double> mu;
};

Design parse_design(const json& j, const std::string& path) {
    ObjectReader r(j, path);
    Design d;
    d.n_total = r.integer("n_total");
    d.n_direct = r.integer("n_direct");
    d.k_reps = r.integer("k_reps");
    r.finish();
    d.validate();
    return d;
}

GroupInput parse_group(const json& j, const std::string& path) {
    ObjectReader r(j, path);
    GroupInput g;
    g.name = r.opt_string("name");
    auto& p = g.params;
    p.sigma2_eps = r.number("sigma2_eps");
    p.alpha0 = r.opt_number("alpha0");
    p.alpha1 = r.opt_number("alpha1");
    p.sigma2_phi = r.opt_number("sigma2_phi");
    p.sigma2_delta = r.opt_number("sigma2_delta");

    if (auto rd = r.opt_number("r_delta")) p.r_delta = *rd;
    else if (p.sigma2_delta && p.sigma2_eps > 0) p.r_delta = *p.sigma2_delta / p.sigma2_eps;
    else throw ValidationError(r.field("r_delta"), "required (or give sigma2_delta)");

    if (auto rp = r.opt_number("r_phi")) p.r_phi = *rp;
    else if (p.sigma2_phi && p.alpha1 && *p.alpha1 != 0 && p.sigma2_eps > 0)
        p.r_phi = *p.sigma2_phi / (*p.alpha1 * *p.alpha1 * p.sigma2_eps);
    else throw ValidationError(r.field("r_phi"), "required (or give sigma2_phi and alpha1)");

    if (const json* d = r.child("design")) g.design = parse_design(*d, r.field("design"));
    g.mu = r.opt_number("mu");
    r.finish();
    try {
        p.validate();
    } catch (const ValidationError& e) {
        throw ValidationError(r.field(e.field()), std::string(e.what()).substr(e.field().size() + 2));
    }
    return g;
}

std::vector<GroupInput> parse_groups(ObjectReader& r, std::size_t min_count, std::size_t max_count) {
    const json& arr = r.require_child("groups");
    if (!arr.is_array()) throw ValidationError(r.field("groups"), "expected an array");
    if (arr.size() < min_count || arr.size() > max_count)
        throw ValidationError(r.field("groups"),
                              min_count == max_count
                                  ? "expected exactly " + std::to_string(min_count) + " groups"
                                  : "expected " + std::to_string(min_count) + " to " +
                                        std::to_string(max_count) + " groups");
    std::vector<GroupInput> groups;
    for (std::size_t i = 0; i < arr.size(); ++i)
        groups.push_back(parse_group(arr[i], r.field("groups[" + std::to_string(i) + "]")));
    return groups;
}

CostModel parse_cost(const json& j, const std::string& path, bool need_budget) {
    ObjectReader r(j, path);
    CostModel c;
    c.c_q = r.number("c_q");
    c.c_b = r.number("c_b");
    if (need_budget) c.c_total = r.number("budget");
    else if (r.has("budget")) throw ValidationError(r.field("budget"), "not used by this request");
    r.finish();
    if (!(c.c_q > 0)) throw ValidationError(r.field("c_q"), "must be > 0");
    if (!(c.c_b > 0)) throw ValidationError(r.field("c_b"), "must be > 0");
    if (need_budget && !(c.c_total >= c.c_q))
        throw ValidationError(r.field("budget"), "must be >= c_q");
    return c;
}

OptimizerConfig parse_optimizer(const json* j, const std::string& path, unsigned threads) {
    OptimizerConfig c;
    c.threads = threads;
    if (!j) return c;
    ObjectReader r(*j, path);
    c.k_max_extra = r.opt_integer("k_max_extra").value_or(c.k_max_extra);
    c.allocation_grid = r.number_or("allocation_grid", c.allocation_grid);
    c.refine_allocation = r.opt_bool("refine_allocation").value_or(c.refine_allocation);
    c.tie_tolerance = r.number_or("tie_tolerance", c.tie_tolerance);
    c.budget_tolerance = r.number_or("budget_tolerance", c.budget_tolerance);
    c.max_iterations = static_cast<int>(r.opt_integer("max_iterations").value_or(c.max_iterations));
    c.fraction_report_epsilon = r.number_or("fraction_report_epsilon", c.fraction_report_epsilon);
    c.fixed_k = r.opt_integer("fixed_k");
    r.finish();
    try {
        c.validate();
    } catch (const ValidationError& e) {
        throw ValidationError(r.field(e.field()), std::string(e.what()).substr(e.field().size() + 2));
    }
    return c;
}

struct PowerInput {
    double alpha = 0.05;
    std::optional<double> power;
    double delta = 0.0;
    double mu0 = 0.0;
};

PowerInput parse_power(const json& j, const std::string& path, bool need_target) {
    ObjectReader r(j, path);
    PowerInput p;
    p.alpha = r.number("alpha");
    p.power = need_target ? std::optional(r.number("power")) : r.opt_number("power");
    p.delta = r.number("delta");
    p.mu0 = r.number_or("mu0", 0.0);
    r.finish();
    if (!(p.alpha > 0 && p.alpha < 1)) throw ValidationError(r.field("alpha"), "must lie in (0, 1)");
    if (p.power && !(*p.power > 0 && *p.power < 1))
        throw ValidationError(r.field("power"), "must lie in (0, 1)");
    if (need_target && !(p.delta > 0)) throw ValidationError(r.field("delta"), "must be > 0");
    if (!(p.delta >= 0)) throw ValidationError(r.field("delta"), "must be >= 0");
    return p;
}

PowerSpec to_spec(const PowerInput& p) {
    return PowerSpec{p.alpha, p.power.value_or(0.5), p.delta, p.mu0};
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

json opt(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

json params_json(const ModelParams& p) {
    json j = {{"sigma2_eps", p.sigma2_eps}, {"r_delta", p.r_delta}, {"r_phi", p.r_phi}};
    if (p.alpha0) j["alpha0"] = *p.alpha0;
    if (p.alpha1) j["alpha1"] = *p.alpha1;
    if (p.sigma2_phi) j["sigma2_phi"] = *p.sigma2_phi;
    if (p.sigma2_delta) j["sigma2_delta"] = *p.sigma2_delta;
    return j;
}

json design_json(const Design& d) {
    return {{"n_total", d.n_total}, {"n_direct", d.n_direct}, {"k_reps", d.k_reps}};
}

json group_input_json(const GroupInput& g) {
    json j = params_json(g.params);
    if (g.name) j["name"] = *g.name;
    if (g.design) j["design"] = design_json(*g.design);
    if (g.mu) j["mu"] = *g.mu;
    return j;
}

json groups_json(const std::vector<GroupInput>& groups) {
    json arr = json::array();
    for (const auto& g : groups) arr.push_back(group_input_json(g));
    return arr;
}

json cost_json(const CostModel& c, bool with_budget) {
    json j = {{"c_q", c.c_q}, {"c_b", c.c_b}};
    if (with_budget) j["budget"] = c.c_total;
    return j;
}

json optimizer_json(const OptimizerConfig& c) {
    return {{"k_max_extra", c.k_max_extra},
            {"allocation_grid", c.allocation_grid},
            {"refine_allocation", c.refine_allocation},
            {"tie_tolerance", c.tie_tolerance},
            {"budget_tolerance", c.budget_tolerance},
            {"max_iterations", c.max_iterations},
            {"fraction_report_epsilon", c.fraction_report_epsilon},
            {"fixed_k", c.fixed_k ? json(*c.fixed_k) : json(nullptr)}};
}

json power_json(const PowerInput& p) {
    return {{"alpha", p.alpha}, {"power", opt(p.power)}, {"delta", p.delta}, {"mu0", p.mu0}};
}

json report_json(const DesignReport& r) {
    json groups = json::array();
    for (const auto& g : r.groups) {
        json j = design_json(g.design);
        j["variance"] = g.variance;
        j["se"] = std::sqrt(g.variance);
        j["allocated_budget"] = g.allocated_budget;
        j["spent_budget"] = g.spent_budget;
        j["sampling_fraction"] = g.design.sampling_fraction();
        j["sampling_fraction_reported"] = g.sampling_fraction_reported;
        groups.push_back(std::move(j));
    }
    return {{"allocation", opt(r.allocation)},
            {"groups", std::move(groups)},
            {"c_total", r.c_total},
            {"achieved_variance", r.achieved_variance},
            {"achieved_se", r.achieved_se},
            {"spent_budget", r.spent_budget},
            {"slack_budget", r.slack_budget}};
}

json estimate_json(const Estimate& e) { return {{"value", e.value}, {"se", opt(e.se)}}; }

json envelope(const char* kind, json inputs, json units, json result,
              const std::vector<std::string>& warnings) {
    return {{"schema_version", kSchemaVersion},
            {"kind", kind},
            {"inputs", std::move(inputs)},
            {"units", std::move(units)},
            {"result", std::move(result)},
            {"warnings", warnings}};
}

json design_units() {
    return {{"budget", "currency"},
            {"variance", "squared outcome units"},
            {"se", "outcome units"},
            {"allocation", "fraction of budget to group 1"}};
}

void check_grid(std::size_t points, const Limits& limits) {
    if (points > limits.max_grid_points)
        throw GridTooLarge("grid has " + std::to_string(points) + " points; the limit is " +
                           std::to_string(limits.max_grid_points));
}

}  // namespace

json table_to_json(const Table& table) {
    json rows = json::array();
    for (const auto& row : table.rows) {
        json r = json::array();
        for (const auto& cell : row) {
            std::visit(
                [&](const auto& v) {
                    using T = std::decay_t<decltype(v)>;
                    if constexpr (std::is_same_v<T, std::monostate>) r.push_back(nullptr);
                    else r.push_back(v);
                },
                cell);
        }
        rows.push_back(std::move(r));
    }
    return {{"columns", table.columns}, {"rows", std::move(rows)}};
}

Table table_from_json(const json& j) {
    Table t;
    t.columns = j.at("columns").get<std::vector<std::string>>();
    for (const auto& row : j.at("rows")) {
        std::vector<Cell> cells;
        for (const auto& v : row) {
            if (v.is_null()) cells.emplace_back(std::monostate{});
            else if (v.is_number_integer()) cells.emplace_back(v.get<std::int64_t>());
            else if (v.is_number()) cells.emplace_back(v.get<double>());
            else cells.emplace_back(v.get<std::string>());
        }
        t.add_row(std::move(cells));
    }
    return t;
}

json handle_design(const json& request, const Limits& limits) {
    ObjectReader r(request, "");
    auto groups = parse_groups(r, 1, 2);
    const CostModel cost = parse_cost(r.require_child("cost"), "cost", true);
    const OptimizerConfig config = parse_optimizer(r.child("optimizer"), "optimizer", limits.threads);
    r.finish();

    const DesignReport report =
        groups.size() == 1 ? optimize_single_group(groups[0].params, cost, config)
                           : optimize_two_groups(groups[0].params, groups[1].params, cost, config);
    json inputs = {{"groups", groups_json(groups)},
                   {"cost", cost_json(cost, true)},
                   {"optimizer", optimizer_json(config)}};
    return envelope("design", std::move(inputs), design_units(), report_json(report),
                    report.warnings);
}

json handle_budget(const json& request, const Limits& limits) {
    ObjectReader r(request, "");
    auto groups = parse_groups(r, 2, 2);
    const CostModel cost = parse_cost(r.require_child("cost"), "cost", false);
    const PowerInput power = parse_power(r.require_child("power"), "power", true);
    const OptimizerConfig config = parse_optimizer(r.child("optimizer"), "optimizer", limits.threads);
    r.finish();

    const UnitCosts unit{cost.c_q, cost.c_b};
    const BudgetResult res =
        minimize_budget(groups[0].params, groups[1].params, unit, to_spec(power), config);
    json trace = json::array();
    for (const auto& s : res.trace) trace.push_back({{"budget", s.budget}, {"se", s.se}});
    json result = {{"budget", res.budget},
                   {"initial_budget", res.initial_budget},
                   {"se_target", res.se_target},
                   {"se_initial", res.trace.front().se},
                   {"iterations", res.iterations},
                   {"achieved_power", power_two_group(res.report.achieved_se, to_spec(power))},
                   {"trace", std::move(trace)},
                   {"design", report_json(res.report)}};
    json inputs = {{"groups", groups_json(groups)},
                   {"cost", cost_json(cost, false)},
                   {"power", power_json(power)},
                   {"optimizer", optimizer_json(config)}};
    return envelope("budget", std::move(inputs), design_units(), std::move(result),
                    res.report.warnings);
}

json handle_power(const json& request, const Limits&) {
    ObjectReader r(request, "");
    const PowerInput power = parse_power(r.require_child("power"), "power", false);
    std::optional<double> se = r.opt_number("se");
    std::vector<GroupInput> groups;
    if (r.has("groups")) {
        if (se) throw ValidationError("se", "give either se or groups, not both");
        groups = parse_groups(r, 1, 2);
        double var = 0.0;
        for (std::size_t i = 0; i < groups.size(); ++i) {
            if (!groups[i].design)
                throw ValidationError("groups[" + std::to_string(i) + "].design", "required");
            var += var_mu_hat(groups[i].params, *groups[i].design);
        }
        se = std::sqrt(var);
    }
    r.finish();
    if (!se) throw ValidationError("se", "required (or give groups with designs)");
    if (!(*se > 0)) throw ValidationError("se", "must be > 0");

    const PowerSpec spec = to_spec(power);
    json result = {{"se", *se},
                   {"power", power_two_group(*se, spec)},
                   {"z_crit", normal_quantile(1.0 - power.alpha / 2.0)}};
    if (power.power && power.delta > 0) result["se_target"] = se_target(spec);
    json inputs = {{"power", power_json(power)}};
    if (groups.empty()) inputs["se"] = *se;
    else inputs["groups"] = groups_json(groups);
    return envelope("power", std::move(inputs),
                    {{"se", "outcome units"}, {"power", "probability"}}, std::move(result), {});
}

json handle_estimate(const json& request, const Limits&) {
    ObjectReader r(request, "");
    const auto csv = r.opt_string("csv");
    if (!csv) throw ValidationError("csv", "required (pilot data as CSV text)");
    const auto r_delta = r.opt_number("r_delta");
    r.finish();

    const PilotDataset data = parse_pilot_csv(*csv);
    const ParamEstimates est = estimate_all(data, r_delta);
    json groups = json::array();
    json params = json::array();
    std::vector<std::string> warnings;
    for (const auto& g : est.groups) {
        groups.push_back({{"group", g.group},
                          {"n_total", g.n_total},
                          {"n_direct", g.n_direct},
                          {"k_reps", g.k_reps},
                          {"r_delta_external", g.r_delta_external},
                          {"alpha0", estimate_json(g.alpha0)},
                          {"alpha1", estimate_json(g.alpha1)},
                          {"sigma2_eps", estimate_json(g.sigma2_eps)},
                          {"sigma2_phi", estimate_json(g.sigma2_phi)},
                          {"sigma2_delta", estimate_json(g.sigma2_delta)},
                          {"r_delta", estimate_json(g.r_delta)},
                          {"r_phi", estimate_json(g.r_phi)},
                          {"mu_hat", estimate_json(g.mu_hat)},
                          {"nu_hat", estimate_json(g.nu_hat)},
                          {"beta0_hat", estimate_json(g.beta0_hat)},
                          {"beta1_hat", estimate_json(g.beta1_hat)}});
        params.push_back(params_json(g.to_model_params()));
        warnings.insert(warnings.end(), g.warnings.begin(), g.warnings.end());
    }
    json inputs = {{"records", data.records.size()}, {"r_delta", opt(r_delta)}};
    return envelope("estimate", std::move(inputs),
                    {{"variance", "squared outcome units"}, {"mu", "outcome units"}},
                    {{"groups", std::move(groups)}, {"model_params", std::move(params)}},
                    warnings);
}

json handle_sensitivity(const json& request, const Limits& limits) {
    ObjectReader r(request, "");
    auto groups = parse_groups(r, 2, 2);
    const CostModel cost = parse_cost(r.require_child("cost"), "cost", true);
    const SensitivityAxis axis = parse_sensitivity_axis(r.opt_string("axis").value_or(""));
    const auto multipliers = r.numbers("multipliers");
    const EfficiencyScale scale = parse_efficiency_scale(r.opt_string("scale").value_or("variance"));
    const OptimizerConfig config = parse_optimizer(r.child("optimizer"), "optimizer", limits.threads);
    r.finish();
    check_grid(multipliers.size(), limits);

    const auto res = sensitivity_scan(groups[0].params, groups[1].params, axis, multipliers, cost,
                                      config, scale);
    json result = {{"optimal",
                    {{"allocation", res.optimal.allocation},
                     {"groups", {design_json(res.optimal.group1), design_json(res.optimal.group2)}}}},
                   {"optimal_variance", res.optimal_variance},
                   {"table", table_to_json(sensitivity_table(res, axis))}};
    json inputs = {{"groups", groups_json(groups)},
                   {"cost", cost_json(cost, true)},
                   {"axis", to_string(axis)},
                   {"multipliers", multipliers},
                   {"scale", to_string(scale)},
                   {"optimizer", optimizer_json(config)}};
    return envelope("sensitivity", std::move(inputs),
                    {{"efficiency", to_string(scale) + " ratio, smaller over larger"}},
                    std::move(result), {});
}

json handle_sweep(const json& request, const Limits& limits) {
    ObjectReader r(request, "");
    const std::string kind = r.opt_string("kind").value_or("");
    json inputs = {{"kind", kind}};
    Table table;

    if (kind == "se_surface") {
        SeSurfaceGrid g;
        g.n_total = r.integer("n_total");
        g.n_values = r.integers("n_values");
        g.k_values = r.integers("k_values");
        g.r_delta_values = r.numbers("r_delta");
        g.r_phi_values = r.numbers("r_phi");
        g.sigma2_eps = r.number_or("sigma2_eps", 1.0);
        r.finish();
        check_grid(g.points(), limits);
        for (auto k : g.k_values)
            if (k < 1) throw ValidationError("k_values", "entries must be >= 1");
        for (auto n : g.n_values)
            if (n < kMinCalibration) throw ValidationError("n_values", "entries must be >= 4");
        table = se_surface(g);
        inputs.update({{"n_total", g.n_total}, {"n_values", g.n_values}, {"k_values", g.k_values},
                       {"r_delta", g.r_delta_values}, {"r_phi", g.r_phi_values},
                       {"sigma2_eps", g.sigma2_eps}});
    } else if (kind == "thresholds") {
        ThresholdScanConfig s;
        const auto r_cb = r.numbers("r_cb");
        s.r_phi = r.number_or("r_phi", s.r_phi);
        s.c_total = r.number_or("budget", s.c_total);
        s.c_q = r.number_or("c_q", s.c_q);
        s.r_delta_min = r.number_or("r_delta_min", s.r_delta_min);
        s.r_delta_max = r.number_or("r_delta_max", s.r_delta_max);
        s.relative_width = r.number_or("relative_width", s.relative_width);
        const OptimizerConfig config = parse_optimizer(r.child("optimizer"), "optimizer", limits.threads);
        r.finish();
        check_grid(r_cb.size(), limits);
        table = threshold_table(threshold_scan(r_cb, s, config));
        inputs.update({{"r_cb", r_cb}, {"r_phi", s.r_phi}, {"budget", s.c_total}, {"c_q", s.c_q},
                       {"r_delta_min", s.r_delta_min}, {"r_delta_max", s.r_delta_max},
                       {"relative_width", s.relative_width}, {"optimizer", optimizer_json(config)}});
    } else if (kind == "design_grid") {
        DesignGrid g;
        g.r_delta_values = r.numbers("r_delta");
        g.r_cb_values = r.numbers("r_cb");
        g.r_phi_values = r.numbers("r_phi");
        g.c_total = r.number_or("budget", g.c_total);
        g.c_q = r.number_or("c_q", g.c_q);
        g.sigma2_eps = r.number_or("sigma2_eps", g.sigma2_eps);
        const OptimizerConfig config = parse_optimizer(r.child("optimizer"), "optimizer", limits.threads);
        r.finish();
        check_grid(g.points(), limits);
        table = design_grid(g, config);
        inputs.update({{"r_delta", g.r_delta_values}, {"r_cb", g.r_cb_values},
                       {"r_phi", g.r_phi_values}, {"budget", g.c_total}, {"c_q", g.c_q},
                       {"sigma2_eps", g.sigma2_eps}, {"optimizer", optimizer_json(config)}});
    } else if (kind == "allocation") {
        AllocationGrid g;
        g.sigma2_eps1_values = r.numbers("sigma2_eps1");
        g.r_phi1_values = r.numbers("r_phi1");
        g.r_cb_values = r.numbers("r_cb");
        g.r_delta1 = r.number_or("r_delta1", g.r_delta1);
        if (const json* g2 = r.child("group2")) g.group2 = parse_group(*g2, "group2").params;
        g.c_total = r.number_or("budget", g.c_total);
        g.c_q = r.number_or("c_q", g.c_q);
        const OptimizerConfig config = parse_optimizer(r.child("optimizer"), "optimizer", limits.threads);
        r.finish();
        check_grid(g.points(), limits);
        table = allocation_scan(g, config);
        inputs.update({{"sigma2_eps1", g.sigma2_eps1_values}, {"r_phi1", g.r_phi1_values},
                       {"r_cb", g.r_cb_values}, {"r_delta1", g.r_delta1},
                       {"group2", params_json(g.group2)}, {"budget", g.c_total}, {"c_q", g.c_q},
                       {"optimizer", optimizer_json(config)}});
    } else {
        throw ValidationError("kind", "expected se_surface, thresholds, design_grid or allocation");
    }
    return envelope("sweep", std::move(inputs), {{"se", "outcome units"}},
                    {{"table", table_to_json(table)}}, {});
}

json handle_simulate(const json& request, const Limits& limits) {
    ObjectReader r(request, "");
    auto groups = parse_groups(r, 1, 2);
    const std::int64_t replications = r.integer("replications");
    const auto seed = r.opt_integer("seed").value_or(0);
    std::optional<double> alpha;
    if (const json* p = r.child("power")) {
        ObjectReader pr(*p, "power");
        alpha = pr.number("alpha");
        pr.finish();
    }
    const bool dump = r.opt_bool("dump").value_or(false);
    r.finish();
    if (replications < 1) throw ValidationError("replications", "must be >= 1");
    if (seed < 0) throw ValidationError("seed", "must be >= 0");

    std::vector<SimSpec> specs;
    for (std::size_t i = 0; i < groups.size(); ++i) {
        const std::string path = "groups[" + std::to_string(i) + "]";
        if (!groups[i].design) throw ValidationError(path + ".design", "required");
        if (!groups[i].params.alpha0) throw ValidationError(path + ".alpha0", "required");
        if (!groups[i].params.alpha1) throw ValidationError(path + ".alpha1", "required");
        specs.push_back(SimSpec{groups[i].params, *groups[i].design, groups[i].mu.value_or(0.0),
                                replications, static_cast<std::uint64_t>(seed) + i});
    }

    Table summary;
    summary.columns = {"group", "replications", "failures", "mean_mu_hat", "empirical_se",
                       "mc_error", "closed_form_se", "z_score"};
    Table dump_table;
    dump_table.columns = {"replicate"};
    for (std::size_t i = 0; i < specs.size(); ++i)
        dump_table.columns.push_back("mu_hat" + std::to_string(i + 1));
    std::vector<std::vector<double>> per_rep;

    for (std::size_t i = 0; i < specs.size(); ++i) {
        const auto mc = monte_carlo_se(specs[i], limits.threads);
        summary.add_row({static_cast<std::int64_t>(i + 1), mc.replications, mc.failures,
                         mc.mean_mu_hat, mc.empirical_se, mc.mc_error, mc.closed_form_se,
                         (mc.empirical_se - mc.closed_form_se) / mc.mc_error});
        per_rep.push_back(mc.mu_hats);
    }
    json result = {{"summary", table_to_json(summary)}};
    if (alpha && specs.size() == 2) {
        const auto pw = monte_carlo_power(specs[0], specs[1], *alpha, limits.threads);
        result["power"] = {{"rejection_rate", pw.rejection_rate},
                           {"mc_error", pw.mc_error},
                           {"closed_form_se", pw.closed_form_se},
                           {"closed_form_power", pw.closed_form_power},
                           {"replications", pw.replications},
                           {"failures", pw.failures}};
    }
    if (dump) {
        for (std::int64_t rep = 0; rep < replications; ++rep) {
            std::vector<Cell> row{rep};
            for (const auto& g : per_rep) {
                const double v = g[static_cast<std::size_t>(rep)];
                row.emplace_back(std::isnan(v) ? Cell{std::monostate{}} : Cell{v});
            }
            dump_table.add_row(std::move(row));
        }
        result["replicates"] = table_to_json(dump_table);
    }
    json inputs = {{"groups", groups_json(groups)},
                   {"replications", replications},
                   {"seed", seed},
                   {"power", alpha ? json{{"alpha", *alpha}} : json(nullptr)},
                   {"dump", dump}};
    return envelope("simulate", std::move(inputs), {{"se", "outcome units"}}, std::move(result), {});
}

json health() {
    return {{"status", "ok"}, {"version", kVersion}, {"schema_version", kSchemaVersion}};
}

ErrorInfo classify(std::exception_ptr error) {
    ErrorInfo info;
    auto body = [](const char* kind, const std::string& message) {
        return json{{"error", {{"kind", kind}, {"message", message}}}};
    };
    try {
        std::rethrow_exception(error);
    } catch (const ValidationError& e) {
        info = {400, 2, body("validation", e.what())};
        info.body["error"]["field"] = e.field();
    } catch (const GridTooLarge& e) {
        info = {413, 2, body("too_large", e.what())};
    } catch (const ConstraintError& e) {
        info = {422, 1, body("infeasible", e.what())};
        info.body["error"]["minimal_budget"] = opt(e.minimal_budget());
    } catch (const ConvergenceError& e) {
        info = {422, 1, body("convergence", e.what())};
        json trace = json::array();
        for (const auto& s : e.trace()) trace.push_back({{"budget", s.budget}, {"se", s.se}});
        info.body["error"]["trace"] = std::move(trace);
    } catch (const DomainError& e) {
        info = {422, 1, body("domain", e.what())};
    } catch (const DataError& e) {
        info = {422, 1, body("data", e.what())};
    } catch (const nlohmann::json::exception& e) {
        info = {400, 2, body("validation", std::string("malformed JSON: ") + e.what())};
    } catch (const std::exception& e) {
        info = {500, 1, body("internal", e.what())};
    }
    return info;
}

}  // namespace mmdesign::service
