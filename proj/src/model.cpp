#include "mmdesign/model.hpp"

#include "mmdesign/errors.hpp"

#include <boost/math/distributions/normal.hpp>

#include <cmath>
#include <string>

namespace mmdesign {

namespace {

constexpr double kRatioRelTol = 1e-9;

bool finite(double x) { return std::isfinite(x); }

void require(bool ok, const char* field, const std::string& message) {
    if (!ok) throw ValidationError(field, message);
}

bool close_rel(double a, double b) {
    return std::fabs(a - b) <= kRatioRelTol * std::max(std::fabs(a), std::fabs(b));
}

}  // namespace

void ModelParams::validate() const {
    require(finite(sigma2_eps) && sigma2_eps > 0, "sigma2_eps", "must be > 0");
    require(finite(r_delta) && r_delta >= 0, "r_delta", "must be >= 0");
    require(finite(r_phi) && r_phi >= 0, "r_phi", "must be >= 0");
    if (sigma2_delta) {
        require(finite(*sigma2_delta) && *sigma2_delta >= 0, "sigma2_delta", "must be >= 0");
        require(close_rel(r_delta, *sigma2_delta / sigma2_eps), "r_delta",
                "inconsistent with sigma2_delta / sigma2_eps");
    }
    if (alpha1) require(finite(*alpha1), "alpha1", "must be finite");
    if (alpha0) require(finite(*alpha0), "alpha0", "must be finite");
    if (sigma2_phi) {
        require(finite(*sigma2_phi) && *sigma2_phi >= 0, "sigma2_phi", "must be >= 0");
        if (alpha1) {
            require(*alpha1 != 0.0, "alpha1", "must be nonzero when sigma2_phi is given");
            require(close_rel(r_phi, *sigma2_phi / (*alpha1 * *alpha1 * sigma2_eps)), "r_phi",
                    "inconsistent with sigma2_phi / (alpha1^2 sigma2_eps)");
        }
    }
}

ModelParams ModelParams::from_raw(double alpha0, double alpha1, double sigma2_eps,
                                  double sigma2_phi, double sigma2_delta) {
    ModelParams p;
    p.sigma2_eps = sigma2_eps;
    p.alpha0 = alpha0;
    p.alpha1 = alpha1;
    p.sigma2_phi = sigma2_phi;
    p.sigma2_delta = sigma2_delta;
    p.r_delta = sigma2_delta / sigma2_eps;
    p.r_phi = sigma2_phi / (alpha1 * alpha1 * sigma2_eps);
    p.validate();
    return p;
}

double ModelParams::phi_variance() const {
    if (!alpha1) throw ValidationError("alpha1", "required to recover sigma2_phi");
    return r_phi * (*alpha1) * (*alpha1) * sigma2_eps;
}

void CostModel::validate() const {
    require(finite(c_q) && c_q > 0, "c_q", "must be > 0");
    require(finite(c_b) && c_b > 0, "c_b", "must be > 0");
    require(finite(c_total) && c_total >= c_q, "c_total", "must be >= c_q");
}

void Design::validate() const {
    if (n_direct < kMinCalibration)
        throw DomainError("calibration subsample too small: n = " + std::to_string(n_direct) +
                          " (need n >= 4)");
    if (n_direct > n_total)
        throw ConstraintError("calibration subsample larger than sample: n = " +
                              std::to_string(n_direct) + " > N = " + std::to_string(n_total));
    if (k_reps < 1) throw DomainError("replicate count must be >= 1");
}

void PowerSpec::validate() const {
    require(finite(alpha) && alpha > 0 && alpha < 1, "alpha", "must lie in (0, 1)");
    require(finite(power) && power > 0 && power < 1, "power", "must lie in (0, 1)");
    require(finite(delta) && delta > 0, "delta", "must be > 0");
    require(finite(mu0), "mu0", "must be finite");
}

double normal_cdf(double x) {
    if (x == -INFINITY) return 0.0;
    if (x == INFINITY) return 1.0;
    return boost::math::cdf(boost::math::normal_distribution<double>(), x);
}

double normal_quantile(double p) {
    return boost::math::quantile(boost::math::normal_distribution<double>(), p);
}

double var_mu_hat(const ModelParams& params, const Design& design) {
    design.validate();
    const double N = static_cast<double>(design.n_total);
    const double n = static_cast<double>(design.n_direct);
    const double K = static_cast<double>(design.k_reps);
    const double bracket = (N * n - 2.0 * N - n) * (1.0 + params.r_delta / K) -
                           (N - n) * (n - 2.0) / (1.0 + params.r_phi);
    return params.sigma2_eps / (N * n * (n - 3.0)) * bracket;
}

double var_mu_full_sampling(const ModelParams& params, const CostModel& cost,
                            std::int64_t k_reps) {
    if (k_reps < 1) throw DomainError("replicate count must be >= 1");
    const double K = static_cast<double>(k_reps);
    const double per_subject = K * cost.c_b + cost.c_q;
    if (cost.c_total < static_cast<double>(kMinCalibration) * per_subject)
        throw ConstraintError("budget cannot fund 4 fully measured participants at K = " +
                                  std::to_string(k_reps),
                              static_cast<double>(kMinCalibration) * per_subject);
    return params.sigma2_eps / cost.c_total *
           (cost.c_q * params.r_delta / K + K * cost.c_b + cost.c_q + cost.c_b * params.r_delta);
}

double var_mu_budget_form(const ModelParams& params, const CostModel& cost,
                          std::int64_t n_direct, std::int64_t k_reps) {
    if (n_direct < kMinCalibration)
        throw DomainError("calibration subsample too small: n = " + std::to_string(n_direct));
    if (k_reps < 1) throw DomainError("replicate count must be >= 1");
    const double n = static_cast<double>(n_direct);
    const double K = static_cast<double>(k_reps);
    const double N = cost.r_c() - n * K * cost.r_cb();
    if (N < n)
        throw ConstraintError("budget cannot fund n = " + std::to_string(n_direct) +
                                  " calibrated participants at K = " + std::to_string(k_reps),
                              n * (K * cost.c_b + cost.c_q));
    const double inv_n = 1.0 / n;
    const double inv_N = 1.0 / N;
    return params.sigma2_eps / (n - 3.0) *
           (((n - 2.0) * inv_n - inv_N) * (1.0 + params.r_delta / K) -
            (n - 2.0) / (1.0 + params.r_phi) * (inv_n - inv_N));
}

double power_two_group(double se_combined, const PowerSpec& spec) {
    if (!(se_combined > 0) || !finite(se_combined))
        throw DomainError("standard error must be > 0");
    const double z = normal_quantile(1.0 - spec.alpha / 2.0);
    return normal_cdf(std::fabs(spec.delta) / se_combined - z);
}

double se_target(const PowerSpec& spec) {
    spec.validate();
    return std::fabs(spec.delta) /
           (normal_quantile(1.0 - spec.alpha / 2.0) + normal_quantile(spec.power));
}

}  // namespace mmdesign
