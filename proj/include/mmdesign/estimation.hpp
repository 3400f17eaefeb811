#pragma once

#include "mmdesign/model.hpp"

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace mmdesign {

struct PilotRecord {
    std::string subject_id;
    int group = 1;                    // 1 or 2
    double q = 0.0;                   // indirect measure
    std::vector<double> replicates;   // direct measures; empty outside the calibration subsample
};

struct PilotDataset {
    std::vector<PilotRecord> records;

    // Unique ids, groups in {1, 2}, finite values.
    void validate() const;
    std::vector<int> groups() const;  // sorted, distinct
};

// Long layout: subject_id, group, q, m1..mK; header row required, empty cells
// for missing replicates. Comma, semicolon or tab delimited (sniffed from the
// header). Throws ValidationError with "line N" in the field.
PilotDataset parse_pilot_csv(std::string_view text);
PilotDataset read_pilot_csv(const std::string& path);
void write_pilot_csv(std::ostream& out, const PilotDataset& data);

// Per-group view used by the estimators. Calibration subjects are those with
// at least one replicate; mbar_cal[j] pairs with q_cal[j].
struct GroupSample {
    std::vector<double> q_all;
    std::vector<double> q_cal;
    std::vector<double> mbar_cal;
    std::vector<std::int64_t> k_cal;  // replicate count per calibration subject

    std::int64_t n_total() const { return static_cast<std::int64_t>(q_all.size()); }
    std::int64_t n_direct() const { return static_cast<std::int64_t>(q_cal.size()); }
};

GroupSample group_sample(const PilotDataset& data, int group);

struct MuEstimate {
    double mu_hat = 0.0;
    double beta0_hat = 0.0;
    double beta1_hat = 0.0;
    double nu_hat = 0.0;
};

// mu_hat = beta0 + beta1 * nu, from the regression of the replicate means on Q
// over the calibration subsample and nu_hat = mean of Q over all N.
MuEstimate mle_mu(const GroupSample& sample);
MuEstimate mle_mu(const PilotDataset& data, int group);

struct Estimate {
    double value = 0.0;
    std::optional<double> se;
};

struct GroupEstimates {
    int group = 1;
    std::int64_t n_total = 0;
    std::int64_t n_direct = 0;
    std::int64_t k_reps = 0;  // maximum observed
    Estimate alpha0, alpha1, sigma2_eps, sigma2_phi, sigma2_delta;
    Estimate r_delta, r_phi;
    Estimate mu_hat, nu_hat, beta0_hat, beta1_hat;
    bool r_delta_external = false;
    std::vector<std::string> warnings;

    ModelParams to_model_params() const;
};

struct ParamEstimates {
    std::vector<GroupEstimates> groups;
};

// Moment estimates of the design inputs. With a single replicate per subject
// sigma2_delta is not identifiable and r_delta_external must be supplied.
GroupEstimates estimate_params(const PilotDataset& data, int group,
                               std::optional<double> r_delta_external = std::nullopt);

ParamEstimates estimate_all(const PilotDataset& data,
                            std::optional<double> r_delta_external = std::nullopt);

}  // namespace mmdesign
