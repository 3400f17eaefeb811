#include "mmdesign/optimizer.hpp"

#include "mmdesign/parallel.hpp"

#include <cmath>
#include <limits>
#include <utility>

namespace mmdesign {

namespace {

// var_mu_hat without validation, for the inner search loop.
double variance_unchecked(const ModelParams& p, double N, double n, double K) {
    const double bracket = (N * n - 2.0 * N - n) * (1.0 + p.r_delta / K) -
                           (N - n) * (n - 2.0) / (1.0 + p.r_phi);
    return p.sigma2_eps / (N * n * (n - 3.0)) * bracket;
}

// Budgets come from products like C * i / M; absorb the last-ulp noise.
double with_slack(double budget) { return budget * (1.0 + 1e-12); }

std::int64_t k_upper(const ModelParams& params, double r_cb, const OptimizerConfig& config) {
    return optimal_k_full_sampling(params.r_delta, r_cb) + config.k_max_extra;
}

std::optional<GroupReport> search_group(const ModelParams& params, double c_q, double c_b,
                                        double budget, const OptimizerConfig& config) {
    const double cap = with_slack(budget);
    std::int64_t k_lo = 1;
    std::int64_t k_hi = k_upper(params, c_b / c_q, config);
    if (config.fixed_k) k_lo = k_hi = *config.fixed_k;

    std::optional<Design> best;
    double best_var = std::numeric_limits<double>::infinity();
    for (std::int64_t k = k_lo; k <= k_hi; ++k) {
        const double K = static_cast<double>(k);
        const double per_calibrated = K * c_b + c_q;
        for (std::int64_t n = kMinCalibration;; ++n) {
            const double nn = static_cast<double>(n);
            if (nn * per_calibrated > cap) break;
            const double direct_cost = nn * K * c_b;
            auto N = static_cast<std::int64_t>(std::floor((cap - direct_cost) / c_q));
            if (N < n) break;
            // For fixed (n, K) the variance is monotone in N, so only the two
            // ends can win. Extra indirect-only subjects usually help; with a
            // very small calibration subsample the extrapolation they add
            // costs more than they bring.
            for (const std::int64_t candidate : {N, n}) {
                const double v =
                    variance_unchecked(params, static_cast<double>(candidate), nn, K);
                if (!best || v < best_var - config.tie_tolerance * best_var) {
                    best_var = v;
                    best = Design{candidate, n, k};
                }
            }
        }
    }
    if (!best) return std::nullopt;

    GroupReport report;
    report.design = *best;
    report.variance = var_mu_hat(params, *best);
    report.allocated_budget = budget;
    report.spent_budget = best->cost(c_q, c_b);
    report.sampling_fraction_reported =
        reported_sampling_fraction(params, *best, config.fraction_report_epsilon);
    return report;
}

void finish_report(DesignReport& report, double c_total) {
    report.c_total = c_total;
    report.achieved_variance = 0.0;
    report.spent_budget = 0.0;
    for (std::size_t g = 0; g < report.groups.size(); ++g) {
        const auto& group = report.groups[g];
        report.achieved_variance += group.variance;
        report.spent_budget += group.spent_budget;
        if (group.design.n_direct < kFragileCalibration)
            report.warnings.push_back("group " + std::to_string(g + 1) +
                                      ": calibration subsample n = " +
                                      std::to_string(group.design.n_direct) +
                                      " < 10; normal-approximation SEs are fragile");
    }
    report.achieved_se = std::sqrt(report.achieved_variance);
    report.slack_budget = c_total - report.spent_budget;
}

struct AllocationPoint {
    double share = 0.0;
    std::optional<std::pair<GroupReport, GroupReport>> groups;

    double total() const {
        return groups ? groups->first.variance + groups->second.variance
                      : std::numeric_limits<double>::infinity();
    }
};

std::vector<AllocationPoint> evaluate_shares(const std::vector<double>& shares,
                                             const ModelParams& params1,
                                             const ModelParams& params2, const CostModel& cost,
                                             const OptimizerConfig& config) {
    std::vector<AllocationPoint> points(shares.size());
    parallel_for(shares.size(), config.threads, [&](std::size_t i) {
        const double share = shares[i];
        points[i].share = share;
        const double budget1 = cost.c_total * share;
        const double budget2 = cost.c_total - budget1;
        auto g1 = search_group(params1, cost.c_q, cost.c_b, budget1, config);
        if (!g1) return;
        auto g2 = search_group(params2, cost.c_q, cost.c_b, budget2, config);
        if (!g2) return;
        points[i].groups = std::make_pair(std::move(*g1), std::move(*g2));
    });
    return points;
}

// Lower variance wins; within tolerance prefer the share nearer 0.5, then the
// smaller share.
bool better(const AllocationPoint& a, const AllocationPoint& b, double tol) {
    const double va = a.total();
    const double vb = b.total();
    if (!std::isfinite(vb)) return std::isfinite(va);
    if (va < vb - tol * vb) return true;
    if (va > vb + tol * vb) return false;
    const double da = std::fabs(a.share - 0.5);
    const double db = std::fabs(b.share - 0.5);
    if (std::fabs(da - db) > 1e-12) return da < db;
    return a.share < b.share;
}

std::vector<double> grid_shares(double step) {
    std::vector<double> shares;
    const double inv = 1.0 / step;
    const double m = std::round(inv);
    if (std::fabs(inv - m) < 1e-9) {
        for (int i = 1; i < static_cast<int>(m); ++i) shares.push_back(i / m);
    } else {
        for (int i = 1; i * step < 1.0; ++i) shares.push_back(i * step);
    }
    return shares;
}

}  // namespace

void OptimizerConfig::validate() const {
    if (k_max_extra < 0) throw ValidationError("k_max_extra", "must be >= 0");
    if (!(allocation_grid > 0 && allocation_grid < 0.5))
        throw ValidationError("allocation_grid", "must lie in (0, 0.5)");
    if (!(tie_tolerance >= 0)) throw ValidationError("tie_tolerance", "must be >= 0");
    if (!(budget_tolerance > 0)) throw ValidationError("budget_tolerance", "must be > 0");
    if (max_iterations < 1) throw ValidationError("max_iterations", "must be >= 1");
    if (!(fraction_report_epsilon > 0))
        throw ValidationError("fraction_report_epsilon", "must be > 0");
    if (fixed_k && *fixed_k < 1) throw ValidationError("fixed_k", "must be >= 1");
}

void UnitCosts::validate() const {
    if (!(std::isfinite(c_q) && c_q > 0)) throw ValidationError("c_q", "must be > 0");
    if (!(std::isfinite(c_b) && c_b > 0)) throw ValidationError("c_b", "must be > 0");
}

TwoGroupDesign DesignReport::two_group() const {
    if (groups.size() != 2 || !allocation)
        throw DomainError("report does not describe a two-group design");
    return TwoGroupDesign{groups[0].design, groups[1].design, *allocation};
}

std::int64_t optimal_k_full_sampling(double r_delta, double r_cb) {
    if (!(r_delta >= 0)) throw DomainError("r_delta must be >= 0");
    if (!(r_cb > 0)) throw DomainError("r_cb must be > 0");
    const double bound = r_delta / r_cb;
    std::int64_t k = 1;
    while (static_cast<double>(k + 1) * static_cast<double>(k) < bound) ++k;
    return k;
}

double minimal_feasible_budget(const UnitCosts& costs, int groups) {
    return static_cast<double>(groups) * static_cast<double>(kMinCalibration) *
           (costs.c_b + costs.c_q);
}

double reported_sampling_fraction(const ModelParams& params, const Design& design,
                                  double epsilon) {
    if (design.n_total == design.n_direct) return 1.0;
    const double full = var_mu_hat(params, design);
    const double trimmed =
        var_mu_hat(params, Design{design.n_direct, design.n_direct, design.k_reps});
    if ((trimmed - full) / full < epsilon) return 1.0;
    return design.sampling_fraction();
}

DesignReport optimize_single_group(const ModelParams& params, const CostModel& cost,
                                   const OptimizerConfig& config) {
    params.validate();
    cost.validate();
    config.validate();
    auto group = search_group(params, cost.c_q, cost.c_b, cost.c_total, config);
    if (!group) {
        const double needed = static_cast<double>(kMinCalibration) *
                              (static_cast<double>(config.fixed_k.value_or(1)) * cost.c_b +
                               cost.c_q);
        throw ConstraintError("budget " + std::to_string(cost.c_total) +
                                  " admits no design with n >= 4; minimal feasible budget is " +
                                  std::to_string(needed),
                              needed);
    }
    DesignReport report;
    report.groups.push_back(std::move(*group));
    finish_report(report, cost.c_total);
    return report;
}

DesignReport optimize_two_groups(const ModelParams& params1, const ModelParams& params2,
                                 const CostModel& cost, const OptimizerConfig& config) {
    params1.validate();
    params2.validate();
    cost.validate();
    config.validate();

    auto points = evaluate_shares(grid_shares(config.allocation_grid), params1, params2, cost,
                                  config);
    const AllocationPoint* best = nullptr;
    for (const auto& p : points)
        if (p.groups && (!best || better(p, *best, config.tie_tolerance))) best = &p;

    std::vector<AllocationPoint> refined;
    if (best && config.refine_allocation) {
        const double step = config.allocation_grid / 10.0;
        std::vector<double> shares;
        for (int j = -9; j <= 9; ++j) {
            const double s = best->share + j * step;
            if (j != 0 && s > 0.0 && s < 1.0) shares.push_back(s);
        }
        refined = evaluate_shares(shares, params1, params2, cost, config);
        for (const auto& p : refined)
            if (p.groups && better(p, *best, config.tie_tolerance)) best = &p;
    }

    if (!best) {
        const double k = static_cast<double>(config.fixed_k.value_or(1));
        const double needed = minimal_feasible_budget(UnitCosts{cost.c_q, k * cost.c_b}, 2);
        throw ConstraintError("budget " + std::to_string(cost.c_total) +
                                  " cannot fund n >= 4 in both groups; minimal feasible budget is " +
                                  std::to_string(needed),
                              needed);
    }

    DesignReport report;
    report.allocation = best->share;
    report.groups.push_back(best->groups->first);
    report.groups.push_back(best->groups->second);
    finish_report(report, cost.c_total);
    return report;
}

double initial_budget(const ModelParams& params1, const ModelParams& params2,
                      const UnitCosts& costs, double se_target) {
    if (!(se_target > 0)) throw DomainError("se_target must be > 0");
    auto weight = [&](const ModelParams& p) {
        const auto k = static_cast<double>(optimal_k_full_sampling(p.r_delta, costs.r_cb()));
        const double a = costs.c_q * p.r_delta / k + k * costs.c_b + costs.c_q +
                         costs.c_b * p.r_delta;
        return p.sigma2_eps * a;
    };
    return 2.0 * (weight(params1) + weight(params2)) / (se_target * se_target);
}

BudgetResult minimize_budget(const ModelParams& params1, const ModelParams& params2,
                             const UnitCosts& costs, const PowerSpec& spec,
                             const OptimizerConfig& config) {
    params1.validate();
    params2.validate();
    costs.validate();
    spec.validate();
    config.validate();

    BudgetResult result;
    result.se_target = se_target(spec);
    result.initial_budget = initial_budget(params1, params2, costs, result.se_target);

    const double target = result.se_target;
    const double floor_budget = minimal_feasible_budget(costs, 2);
    double budget = std::max(result.initial_budget, floor_budget);
    for (int step = 0; step <= config.max_iterations; ++step) {
        DesignReport report =
            optimize_two_groups(params1, params2, CostModel{costs.c_q, costs.c_b, budget}, config);
        const double se = report.achieved_se;
        result.trace.push_back({budget, se});

        const double ratio = se / target;
        double proposal = ratio * ratio * budget;
        const bool meets = se <= target;
        const bool within_tol = std::fabs(se - target) / target <= config.budget_tolerance;
        // Below one cost quantum the design cannot change, so the correction
        // has reached integer granularity.
        const bool settled = meets && budget - proposal < costs.quantum();
        if (meets && (within_tol || settled)) {
            result.budget = budget;
            result.iterations = step;
            result.report = std::move(report);
            return result;
        }
        if (!meets) proposal = std::max(proposal, budget + costs.quantum());
        budget = std::max(proposal, floor_budget);
    }
    throw ConvergenceError("budget search did not converge within " +
                               std::to_string(config.max_iterations) + " iterations",
                           result.trace);
}

}  // namespace mmdesign
