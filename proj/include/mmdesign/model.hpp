#pragma once

#include <cstdint>
#include <optional>

// ---------------------------------------------------------------------------
// Measurement-error model for one study group
//
//   T_j  = mu + eps_j                    eps_j   ~ N(0, sigma2_eps)
//   M_jk = T_j + delta_jk                delta_jk ~ N(0, sigma2_delta)
//   Q_j  = alpha0 + alpha1 T_j + phi_j   phi_j   ~ N(0, sigma2_phi)
//
// All N participants give Q; n of them also give K replicate M values.
// Design work only needs sigma2_eps and the two noise ratios
//   r_delta = sigma2_delta / sigma2_eps
//   r_phi   = sigma2_phi / (alpha1^2 sigma2_eps)
// ---------------------------------------------------------------------------

namespace mmdesign {

inline constexpr std::int64_t kMinCalibration = 4;
inline constexpr std::int64_t kFragileCalibration = 10;

struct ModelParams {
    double sigma2_eps = 1.0;
    double r_delta = 0.0;
    double r_phi = 0.0;

    std::optional<double> alpha0;
    std::optional<double> alpha1;
    std::optional<double> sigma2_phi;
    std::optional<double> sigma2_delta;

    // Throws ValidationError naming the offending field.
    void validate() const;

    // Builds a parameter set from raw variances, deriving both ratios.
    static ModelParams from_raw(double alpha0, double alpha1, double sigma2_eps,
                                double sigma2_phi, double sigma2_delta);

    double delta_variance() const { return r_delta * sigma2_eps; }
    // Requires alpha1.
    double phi_variance() const;
};

struct CostModel {
    double c_q = 1.0;      // per participant: recruitment + indirect measure
    double c_b = 1.0;      // per direct measurement
    double c_total = 1.0;  // budget

    void validate() const;
    double r_cb() const { return c_b / c_q; }
    double r_c() const { return c_total / c_q; }
};

struct Design {
    std::int64_t n_total = 0;   // N
    std::int64_t n_direct = 0;  // n
    std::int64_t k_reps = 1;    // K

    void validate() const;
    double cost(double c_q, double c_b) const {
        return static_cast<double>(n_direct) * static_cast<double>(k_reps) * c_b +
               static_cast<double>(n_total) * c_q;
    }
    double cost(const CostModel& cm) const { return cost(cm.c_q, cm.c_b); }
    double sampling_fraction() const {
        return static_cast<double>(n_direct) / static_cast<double>(n_total);
    }

    friend bool operator==(const Design&, const Design&) = default;
};

struct TwoGroupDesign {
    Design group1;
    Design group2;
    double allocation = 0.5;  // budget share of group 1

    friend bool operator==(const TwoGroupDesign&, const TwoGroupDesign&) = default;
};

struct PowerSpec {
    double alpha = 0.05;
    double power = 0.8;
    double delta = 0.0;
    double mu0 = 0.0;

    void validate() const;
};

// Standard normal helpers.
double normal_cdf(double x);
double normal_quantile(double p);

// Var(mu_hat) for the MLE of the group mean. Throws DomainError for n < 4 and
// ConstraintError for n > N.
double var_mu_hat(const ModelParams& params, const Design& design);

// n = N closed form, expressed through the budget: (sigma2_eps / C) *
// (C_Q r_delta / K + K C_B + C_Q + C_B r_delta). Continuous in N.
double var_mu_full_sampling(const ModelParams& params, const CostModel& cost,
                            std::int64_t k_reps);

// Variance when N is chosen to spend the budget exactly (N = r_C - n K r_CB,
// not rounded). Diagnostic only.
double var_mu_budget_form(const ModelParams& params, const CostModel& cost,
                          std::int64_t n_direct, std::int64_t k_reps);

// Phi(|delta| / se - z_{1-alpha/2}); ignores rejection in the wrong direction.
double power_two_group(double se_combined, const PowerSpec& spec);

// Largest SE that still meets spec.power: |delta| / (z_{1-alpha/2} + z_power).
double se_target(const PowerSpec& spec);

}  // namespace mmdesign
