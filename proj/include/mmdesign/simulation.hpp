#pragma once

#include "mmdesign/estimation.hpp"
#include "mmdesign/model.hpp"

#include <cstdint>
#include <vector>

namespace mmdesign {

// Replicate r of group g draws from its own generator, seeded by
// splitmix64 over (seed, r, g); results never depend on thread count.
// Generator: boost::random::mt19937_64, normals by Boost's ziggurat sampler.
struct SimSpec {
    ModelParams params;  // alpha0 and alpha1 required
    Design design;
    double mu = 0.0;
    std::int64_t replications = 1;
    std::uint64_t seed = 0;

    void validate() const;
};

std::uint64_t substream_seed(std::uint64_t seed, std::uint64_t replicate, std::uint64_t stream);

// One dataset: N subjects with Q, the first n carrying K replicates.
PilotDataset simulate_dataset(const SimSpec& spec, std::uint64_t replicate = 0, int group = 1);

// Same draws as simulate_dataset, straight into the estimator's view.
GroupSample simulate_sample(const SimSpec& spec, std::uint64_t replicate, int stream);

struct MonteCarloSe {
    double empirical_se = 0.0;
    double mc_error = 0.0;        // delta-method SE of the SD estimate
    double mean_mu_hat = 0.0;
    double closed_form_se = 0.0;  // sqrt(var_mu_hat)
    std::int64_t replications = 0;
    std::int64_t failures = 0;
    std::vector<double> mu_hats;  // per replicate, NaN on failure
};

// Throws DataError if more than 1% of replicates fail.
MonteCarloSe monte_carlo_se(const SimSpec& spec, unsigned threads = 1);

struct MonteCarloPower {
    double rejection_rate = 0.0;
    double mc_error = 0.0;  // binomial
    double closed_form_se = 0.0;
    double closed_form_power = 0.0;  // exact two-sided normal power at closed_form_se
    std::int64_t replications = 0;
    std::int64_t failures = 0;
};

// Wald test of mu2 - mu1 = 0 using the closed-form SE, two-sided at `alpha`.
// Replication count and seed come from group1.
MonteCarloPower monte_carlo_power(const SimSpec& group1, const SimSpec& group2, double alpha,
                                  unsigned threads = 1);

}  // namespace mmdesign
