#include "mmdesign/sweeps.hpp"

#include "mmdesign/errors.hpp"
#include "mmdesign/parallel.hpp"

#include <cmath>

namespace mmdesign {

namespace {

Cell opt_cell(const std::optional<double>& v) {
    if (v) return *v;
    return std::monostate{};
}

// Smallest r_delta in [lo, hi] where `crossed` turns true, assuming it is
// false at lo and true at hi. Geometric bisection to relative width `width`.
template <class Pred>
std::optional<double> bisect_log(double lo, double hi, double width, Pred&& crossed) {
    if (crossed(lo) || !crossed(hi)) return std::nullopt;
    while (hi / lo - 1.0 > width) {
        const double mid = std::sqrt(lo * hi);
        if (crossed(mid)) hi = mid;
        else lo = mid;
    }
    return std::sqrt(lo * hi);
}

ModelParams perturbed(const ModelParams& base, SensitivityAxis axis, double m) {
    ModelParams p{base.sigma2_eps, base.r_delta, base.r_phi};
    switch (axis) {
        case SensitivityAxis::sigma2_eps: p.sigma2_eps *= m; break;
        case SensitivityAxis::r_phi: p.r_phi *= m; break;
        case SensitivityAxis::r_delta: p.r_delta *= m; break;
    }
    return p;
}

double two_group_variance(const ModelParams& p1, const ModelParams& p2, const TwoGroupDesign& d) {
    return var_mu_hat(p1, d.group1) + var_mu_hat(p2, d.group2);
}

}  // namespace

EfficiencyScale parse_efficiency_scale(const std::string& name) {
    if (name == "variance") return EfficiencyScale::variance;
    if (name == "standard_error" || name == "se") return EfficiencyScale::standard_error;
    throw ValidationError("scale", "expected 'variance' or 'standard_error', got '" + name + "'");
}

std::string to_string(EfficiencyScale scale) {
    return scale == EfficiencyScale::variance ? "variance" : "standard_error";
}

SensitivityAxis parse_sensitivity_axis(const std::string& name) {
    if (name == "sigma2_eps") return SensitivityAxis::sigma2_eps;
    if (name == "r_phi") return SensitivityAxis::r_phi;
    if (name == "r_delta") return SensitivityAxis::r_delta;
    throw ValidationError("axis", "expected sigma2_eps, r_phi or r_delta, got '" + name + "'");
}

std::string to_string(SensitivityAxis axis) {
    switch (axis) {
        case SensitivityAxis::sigma2_eps: return "sigma2_eps";
        case SensitivityAxis::r_phi: return "r_phi";
        case SensitivityAxis::r_delta: return "r_delta";
    }
    return "?";
}

double efficiency_from_variances(double va, double vb, EfficiencyScale scale) {
    if (!(va > 0) || !(vb > 0)) throw DomainError("variances must be > 0");
    const double ratio = std::min(va, vb) / std::max(va, vb);
    return scale == EfficiencyScale::variance ? ratio : std::sqrt(ratio);
}

double efficiency(const ModelParams& params_true, const Design& a, const Design& b,
                  EfficiencyScale scale) {
    return efficiency_from_variances(var_mu_hat(params_true, a), var_mu_hat(params_true, b),
                                     scale);
}

double efficiency(const ModelParams& true1, const ModelParams& true2, const TwoGroupDesign& a,
                  const TwoGroupDesign& b, EfficiencyScale scale) {
    return efficiency_from_variances(two_group_variance(true1, true2, a),
                                     two_group_variance(true1, true2, b), scale);
}

SensitivityResult sensitivity_scan(const ModelParams& true1, const ModelParams& true2,
                                   SensitivityAxis axis, const std::vector<double>& multipliers,
                                   const CostModel& cost, const OptimizerConfig& config,
                                   EfficiencyScale scale) {
    for (std::size_t i = 0; i < multipliers.size(); ++i)
        if (!(std::isfinite(multipliers[i]) && multipliers[i] > 0))
            throw ValidationError("multipliers[" + std::to_string(i) + "]", "must be > 0");

    SensitivityResult result;
    const DesignReport truth = optimize_two_groups(true1, true2, cost, config);
    result.optimal = truth.two_group();
    result.optimal_variance = truth.achieved_variance;

    // Each row is its own two-group search; the grid is parallelized inside it.
    for (double m : multipliers) {
        SensitivityRow row;
        row.multiplier = m;
        row.design =
            optimize_two_groups(perturbed(true1, axis, m), true2, cost, config).two_group();
        row.variance_at_truth = two_group_variance(true1, true2, row.design);
        row.efficiency =
            efficiency_from_variances(result.optimal_variance, row.variance_at_truth, scale);
        result.rows.push_back(row);
    }
    return result;
}

Table sensitivity_table(const SensitivityResult& result, SensitivityAxis axis) {
    Table t;
    t.columns = {"axis", "multiplier", "efficiency", "variance_at_truth", "allocation",
                 "n_total1", "n_direct1", "k_reps1", "n_total2", "n_direct2", "k_reps2"};
    for (const auto& r : result.rows) {
        t.add_row({to_string(axis), r.multiplier, r.efficiency, r.variance_at_truth,
                   r.design.allocation, r.design.group1.n_total, r.design.group1.n_direct,
                   r.design.group1.k_reps, r.design.group2.n_total, r.design.group2.n_direct,
                   r.design.group2.k_reps});
    }
    return t;
}

std::vector<ThresholdRow> threshold_scan(const std::vector<double>& r_cb_grid,
                                         const ThresholdScanConfig& scan,
                                         const OptimizerConfig& config) {
    if (!(scan.r_phi >= 0)) throw ValidationError("r_phi", "must be >= 0");
    if (!(scan.c_q > 0)) throw ValidationError("c_q", "must be > 0");
    if (!(scan.r_delta_min > 0 && scan.r_delta_max > scan.r_delta_min))
        throw ValidationError("r_delta_min", "need 0 < r_delta_min < r_delta_max");
    if (!(scan.relative_width > 0)) throw ValidationError("relative_width", "must be > 0");
    for (std::size_t i = 0; i < r_cb_grid.size(); ++i)
        if (!(std::isfinite(r_cb_grid[i]) && r_cb_grid[i] > 0))
            throw ValidationError("r_cb[" + std::to_string(i) + "]", "must be > 0");

    std::vector<ThresholdRow> rows(r_cb_grid.size());
    OptimizerConfig serial = config;
    serial.threads = 1;
    parallel_for(r_cb_grid.size(), config.threads, [&](std::size_t i) {
        const double r_cb = r_cb_grid[i];
        const CostModel cost{scan.c_q, r_cb * scan.c_q, scan.c_total};
        auto optimum = [&](double r_delta, const OptimizerConfig& cfg) {
            return optimize_single_group(ModelParams{1.0, r_delta, scan.r_phi}, cost, cfg);
        };
        auto k_at = [&](double r_delta) { return optimum(r_delta, serial).groups[0].design.k_reps; };

        ThresholdRow row;
        row.r_cb = r_cb;
        row.k1_to_k2 = bisect_log(scan.r_delta_min, scan.r_delta_max, scan.relative_width,
                                  [&](double rd) { return k_at(rd) >= 2; });
        row.k2_to_k3 = bisect_log(scan.r_delta_min, scan.r_delta_max, scan.relative_width,
                                  [&](double rd) { return k_at(rd) >= 3; });
        OptimizerConfig k1 = serial;
        k1.fixed_k = 1;
        row.fraction_one =
            bisect_log(scan.r_delta_min, scan.r_delta_max, scan.relative_width, [&](double rd) {
                return optimum(rd, k1).groups[0].sampling_fraction_reported == 1.0;
            });
        rows[i] = row;
    });
    return rows;
}

Table threshold_table(const std::vector<ThresholdRow>& rows) {
    Table t;
    t.columns = {"r_cb", "r_delta_k1_to_k2", "r_delta_k2_to_k3", "r_delta_fraction_one",
                 "ratio_k1_to_k2", "ratio_k2_to_k3"};
    for (const auto& r : rows) {
        auto ratio = [&](const std::optional<double>& v) -> Cell {
            if (v) return *v / r.r_cb;
            return std::monostate{};
        };
        t.add_row({r.r_cb, opt_cell(r.k1_to_k2), opt_cell(r.k2_to_k3), opt_cell(r.fraction_one),
                   ratio(r.k1_to_k2), ratio(r.k2_to_k3)});
    }
    return t;
}

Table se_surface(const SeSurfaceGrid& grid) {
    if (grid.n_total < kMinCalibration) throw ValidationError("n_total", "must be >= 4");
    if (!(grid.sigma2_eps > 0)) throw ValidationError("sigma2_eps", "must be > 0");
    Table t;
    t.columns = {"n_total", "n_direct", "k_reps", "r_delta", "r_phi", "se"};
    for (double rd : grid.r_delta_values)
        for (double rp : grid.r_phi_values)
            for (auto k : grid.k_values)
                for (auto n : grid.n_values) {
                    if (n > grid.n_total) continue;
                    const ModelParams p{grid.sigma2_eps, rd, rp};
                    p.validate();
                    const double v = var_mu_hat(p, Design{grid.n_total, n, k});
                    t.add_row({grid.n_total, n, k, rd, rp, std::sqrt(v)});
                }
    return t;
}

Table design_grid(const DesignGrid& grid, const OptimizerConfig& config) {
    struct Point {
        double rd, rcb, rp;
    };
    std::vector<Point> points;
    for (double rd : grid.r_delta_values)
        for (double rp : grid.r_phi_values)
            for (double rcb : grid.r_cb_values) points.push_back({rd, rcb, rp});

    std::vector<DesignReport> reports(points.size());
    OptimizerConfig serial = config;
    serial.threads = 1;
    parallel_for(points.size(), config.threads, [&](std::size_t i) {
        const auto& pt = points[i];
        if (!(pt.rcb > 0)) throw ValidationError("r_cb", "must be > 0");
        reports[i] = optimize_single_group(ModelParams{grid.sigma2_eps, pt.rd, pt.rp},
                                           CostModel{grid.c_q, pt.rcb * grid.c_q, grid.c_total},
                                           serial);
    });

    Table t;
    t.columns = {"r_delta", "r_phi", "r_cb", "n_total", "n_direct", "k_reps",
                 "sampling_fraction", "sampling_fraction_reported", "se"};
    for (std::size_t i = 0; i < points.size(); ++i) {
        const auto& g = reports[i].groups[0];
        t.add_row({points[i].rd, points[i].rp, points[i].rcb, g.design.n_total,
                   g.design.n_direct, g.design.k_reps, g.design.sampling_fraction(),
                   g.sampling_fraction_reported, reports[i].achieved_se});
    }
    return t;
}

Table allocation_scan(const AllocationGrid& grid, const OptimizerConfig& config) {
    Table t;
    t.columns = {"r_cb", "sigma2_eps1", "r_phi1", "allocation", "n_total1", "n_direct1",
                 "k_reps1", "n_total2", "n_direct2", "k_reps2", "se"};
    for (double rcb : grid.r_cb_values)
        for (double rp : grid.r_phi1_values)
            for (double s2 : grid.sigma2_eps1_values) {
                const ModelParams p1{s2, grid.r_delta1, rp};
                const auto report = optimize_two_groups(
                    p1, grid.group2, CostModel{grid.c_q, rcb * grid.c_q, grid.c_total}, config);
                const auto d = report.two_group();
                t.add_row({rcb, s2, rp, d.allocation, d.group1.n_total, d.group1.n_direct,
                           d.group1.k_reps, d.group2.n_total, d.group2.n_direct, d.group2.k_reps,
                           report.achieved_se});
            }
    return t;
}

}  // namespace mmdesign
