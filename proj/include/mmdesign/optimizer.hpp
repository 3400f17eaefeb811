#pragma once

#include "mmdesign/errors.hpp"
#include "mmdesign/model.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace mmdesign {

struct OptimizerConfig {
    std::int64_t k_max_extra = 2;          // K searched up to closed-form optimum + this
    double allocation_grid = 0.01;         // step of the group-1 budget share
    bool refine_allocation = false;        // extra pass at grid/10 around the best share
    double tie_tolerance = 1e-12;          // relative; ties prefer smaller K, then smaller n
    double budget_tolerance = 1e-5;        // relative SE gap for minimize_budget
    int max_iterations = 50;
    double fraction_report_epsilon = 1e-4;
    std::optional<std::int64_t> fixed_k;   // force K in every group
    unsigned threads = 1;

    void validate() const;
};

struct UnitCosts {
    double c_q = 1.0;
    double c_b = 1.0;

    void validate() const;
    double r_cb() const { return c_b / c_q; }
    // Smallest change in spent money that can alter a design.
    double quantum() const { return c_b < c_q ? c_b : c_q; }
};

struct GroupReport {
    Design design;
    double variance = 0.0;
    double allocated_budget = 0.0;
    double spent_budget = 0.0;
    double sampling_fraction_reported = 1.0;
};

struct DesignReport {
    std::vector<GroupReport> groups;   // one or two
    std::optional<double> allocation;  // set for two-group reports
    double c_total = 0.0;
    double achieved_variance = 0.0;    // sum over groups
    double achieved_se = 0.0;
    double spent_budget = 0.0;
    double slack_budget = 0.0;
    std::vector<std::string> warnings;

    TwoGroupDesign two_group() const;
};

struct BudgetResult {
    double budget = 0.0;
    double initial_budget = 0.0;
    double se_target = 0.0;
    int iterations = 0;  // number of budget corrections applied after C0
    DesignReport report;
    std::vector<BudgetStep> trace;  // (C_i, SE(C_i)) for every evaluated budget
};

// Largest k >= 1 with k(k-1) < r_delta / r_cb: the best replicate count when
// every participant is directly measured.
std::int64_t optimal_k_full_sampling(double r_delta, double r_cb);

// The variance-minimizing integer (N, n, K) within cost.c_total. For each
// (n, K) the remaining money buys indirect-only participants, so the search is
// exhaustive over n and K only.
DesignReport optimize_single_group(const ModelParams& params, const CostModel& cost,
                                   const OptimizerConfig& config = {});

// Splits the budget between two groups on the allocation grid and optimizes
// each group on its share; minimizes Var1 + Var2.
DesignReport optimize_two_groups(const ModelParams& params1, const ModelParams& params2,
                                 const CostModel& cost, const OptimizerConfig& config = {});

// Budget C0 from an even split, n = N and closed-form K in each group.
double initial_budget(const ModelParams& params1, const ModelParams& params2,
                      const UnitCosts& costs, double se_target);

// Smallest budget whose optimal two-group design reaches se_target(spec), via
// C_{i+1} = (SE(C_i) / SE_target)^2 C_i starting from initial_budget.
BudgetResult minimize_budget(const ModelParams& params1, const ModelParams& params2,
                             const UnitCosts& costs, const PowerSpec& spec,
                             const OptimizerConfig& config = {});

// n/N after collapsing negligible indirect-only tails to 1.
double reported_sampling_fraction(const ModelParams& params, const Design& design,
                                  double epsilon);

// Smallest budget that admits the (4, 4, 1) design in every group.
double minimal_feasible_budget(const UnitCosts& costs, int groups);

}  // namespace mmdesign
