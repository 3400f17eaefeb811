#pragma once

#include "mmdesign/model.hpp"
#include "mmdesign/optimizer.hpp"
#include "mmdesign/table.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace mmdesign {

// Efficiency compares two designs at the true parameters: min(V) / max(V) on
// the variance scale, or its square root (ratio of standard errors).
enum class EfficiencyScale { variance, standard_error };

EfficiencyScale parse_efficiency_scale(const std::string& name);
std::string to_string(EfficiencyScale scale);

double efficiency_from_variances(double va, double vb,
                                 EfficiencyScale scale = EfficiencyScale::variance);

double efficiency(const ModelParams& params_true, const Design& a, const Design& b,
                  EfficiencyScale scale = EfficiencyScale::variance);

double efficiency(const ModelParams& true1, const ModelParams& true2, const TwoGroupDesign& a,
                  const TwoGroupDesign& b, EfficiencyScale scale = EfficiencyScale::variance);

// Planning-value perturbations applied to group 1.
enum class SensitivityAxis { sigma2_eps, r_phi, r_delta };

SensitivityAxis parse_sensitivity_axis(const std::string& name);
std::string to_string(SensitivityAxis axis);

struct SensitivityRow {
    double multiplier = 1.0;
    double efficiency = 1.0;
    double variance_at_truth = 0.0;
    TwoGroupDesign design;
};

struct SensitivityResult {
    TwoGroupDesign optimal;  // designed with the true values
    double optimal_variance = 0.0;
    std::vector<SensitivityRow> rows;
};

SensitivityResult sensitivity_scan(const ModelParams& true1, const ModelParams& true2,
                                   SensitivityAxis axis, const std::vector<double>& multipliers,
                                   const CostModel& cost, const OptimizerConfig& config = {},
                                   EfficiencyScale scale = EfficiencyScale::variance);

Table sensitivity_table(const SensitivityResult& result, SensitivityAxis axis);

struct ThresholdRow {
    double r_cb = 0.0;
    std::optional<double> k1_to_k2;       // smallest r_delta with optimal K >= 2
    std::optional<double> k2_to_k3;       // smallest r_delta with optimal K >= 3
    std::optional<double> fraction_one;   // smallest r_delta with reported n/N = 1 (K = 1)
};

struct ThresholdScanConfig {
    double r_phi = 1.0;
    double c_total = 2'000'000.0;
    double c_q = 100.0;
    double r_delta_min = 1e-4;
    double r_delta_max = 1e4;
    double relative_width = 1e-3;
};

// Bisection in log r_delta on the single-group optimizer's output.
std::vector<ThresholdRow> threshold_scan(const std::vector<double>& r_cb_grid,
                                         const ThresholdScanConfig& scan,
                                         const OptimizerConfig& config = {});

Table threshold_table(const std::vector<ThresholdRow>& rows);

struct SeSurfaceGrid {
    std::int64_t n_total = 200;
    std::vector<std::int64_t> n_values;
    std::vector<std::int64_t> k_values;
    std::vector<double> r_delta_values;
    std::vector<double> r_phi_values;
    double sigma2_eps = 1.0;

    std::size_t points() const {
        return n_values.size() * k_values.size() * r_delta_values.size() * r_phi_values.size();
    }
};

// Columns: n_total, n_direct, k_reps, r_delta, r_phi, se. Grid points with
// n > N are skipped.
Table se_surface(const SeSurfaceGrid& grid);

struct DesignGrid {
    std::vector<double> r_delta_values;
    std::vector<double> r_cb_values;
    std::vector<double> r_phi_values;
    double c_total = 100'000.0;
    double c_q = 1.0;
    double sigma2_eps = 1.0;

    std::size_t points() const {
        return r_delta_values.size() * r_cb_values.size() * r_phi_values.size();
    }
};

// Optimal single-group design per grid point (n/N and K maps).
Table design_grid(const DesignGrid& grid, const OptimizerConfig& config = {});

struct AllocationGrid {
    std::vector<double> sigma2_eps1_values;
    std::vector<double> r_phi1_values;
    std::vector<double> r_cb_values;
    ModelParams group2{1.0, 1.0, 1.0};
    double r_delta1 = 1.0;
    double c_total = 10'000.0;
    double c_q = 1.0;

    std::size_t points() const {
        return sigma2_eps1_values.size() * r_phi1_values.size() * r_cb_values.size();
    }
};

// Group-1 budget share of the optimal two-group design per grid point.
Table allocation_scan(const AllocationGrid& grid, const OptimizerConfig& config = {});

}  // namespace mmdesign
