#include "mmdesign/simulation.hpp"

#include "mmdesign/errors.hpp"
#include "mmdesign/parallel.hpp"

#include <boost/random/mersenne_twister.hpp>
#include <boost/random/normal_distribution.hpp>

#include <cmath>
#include <limits>

namespace mmdesign {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

// Calls sink(j, q, replicates) for each subject j in draw order.
template <class Sink>
void draw_group(const SimSpec& spec, std::uint64_t replicate, int stream, Sink&& sink) {
    boost::random::mt19937_64 rng(substream_seed(spec.seed, replicate,
                                                 static_cast<std::uint64_t>(stream)));
    boost::random::normal_distribution<double> z(0.0, 1.0);

    const auto& p = spec.params;
    const double sd_eps = std::sqrt(p.sigma2_eps);
    const double sd_delta = std::sqrt(p.delta_variance());
    const double sd_phi = std::sqrt(p.phi_variance());
    const double a0 = *p.alpha0;
    const double a1 = *p.alpha1;

    std::vector<double> reps;
    for (std::int64_t j = 0; j < spec.design.n_total; ++j) {
        const double t = spec.mu + sd_eps * z(rng);
        const double q = a0 + a1 * t + sd_phi * z(rng);
        reps.clear();
        if (j < spec.design.n_direct)
            for (std::int64_t k = 0; k < spec.design.k_reps; ++k)
                reps.push_back(t + sd_delta * z(rng));
        sink(j, q, reps);
    }
}

}  // namespace

void SimSpec::validate() const {
    // sigma2_eps = 0 is allowed here: it generates the noiseless model.
    if (params.sigma2_eps == 0.0) {
        if (!(params.r_delta >= 0 && params.r_phi >= 0))
            throw ValidationError("r_delta", "ratios must be >= 0");
    } else {
        params.validate();
    }
    if (!params.alpha0) throw ValidationError("alpha0", "required for simulation");
    if (!params.alpha1) throw ValidationError("alpha1", "required for simulation");
    design.validate();
    if (!std::isfinite(mu)) throw ValidationError("mu", "must be finite");
    if (replications < 1) throw ValidationError("replications", "must be >= 1");
}

std::uint64_t substream_seed(std::uint64_t seed, std::uint64_t replicate, std::uint64_t stream) {
    return splitmix64(splitmix64(splitmix64(seed) ^ replicate) ^ (stream * 0xD1B54A32D192ED03ULL));
}

PilotDataset simulate_dataset(const SimSpec& spec, std::uint64_t replicate, int group) {
    spec.validate();
    PilotDataset data;
    data.records.reserve(static_cast<std::size_t>(spec.design.n_total));
    draw_group(spec, replicate, group, [&](std::int64_t j, double q, const std::vector<double>& reps) {
        data.records.push_back(
            PilotRecord{"g" + std::to_string(group) + "-" + std::to_string(j + 1), group, q, reps});
    });
    return data;
}

GroupSample simulate_sample(const SimSpec& spec, std::uint64_t replicate, int stream) {
    GroupSample s;
    s.q_all.reserve(static_cast<std::size_t>(spec.design.n_total));
    draw_group(spec, replicate, stream, [&](std::int64_t, double q, const std::vector<double>& reps) {
        s.q_all.push_back(q);
        if (reps.empty()) return;
        double sum = 0.0;
        for (double m : reps) sum += m;
        s.q_cal.push_back(q);
        s.mbar_cal.push_back(sum / static_cast<double>(reps.size()));
        s.k_cal.push_back(static_cast<std::int64_t>(reps.size()));
    });
    return s;
}

MonteCarloSe monte_carlo_se(const SimSpec& spec, unsigned threads) {
    spec.validate();
    const auto reps = static_cast<std::size_t>(spec.replications);
    std::vector<double> mu(reps, std::numeric_limits<double>::quiet_NaN());
    parallel_for(reps, threads, [&](std::size_t r) {
        try {
            mu[r] = mle_mu(simulate_sample(spec, r, 1)).mu_hat;
        } catch (const DataError&) {
        }
    });

    MonteCarloSe out;
    out.replications = spec.replications;
    out.closed_form_se = std::sqrt(var_mu_hat(spec.params, spec.design));
    double sum = 0.0;
    std::int64_t ok = 0;
    for (double m : mu) {
        if (std::isnan(m)) {
            ++out.failures;
            continue;
        }
        sum += m;
        ++ok;
    }
    if (static_cast<double>(out.failures) > 0.01 * static_cast<double>(reps))
        throw DataError(std::to_string(out.failures) + " of " + std::to_string(reps) +
                        " replicates failed estimation (more than 1%)");
    if (ok < 2) throw DataError("need at least 2 successful replicates for an SE");

    out.mean_mu_hat = sum / static_cast<double>(ok);
    double m2 = 0.0;
    double m4 = 0.0;
    for (double m : mu) {
        if (std::isnan(m)) continue;
        const double d = m - out.mean_mu_hat;
        m2 += d * d;
        m4 += d * d * d * d;
    }
    const double okd = static_cast<double>(ok);
    const double var = m2 / (okd - 1.0);
    m4 /= okd;
    out.empirical_se = std::sqrt(var);
    // Var(s^2) ~ (m4 - s^4) / R, then the delta method for s.
    const double var_s2 = std::max(m4 - var * var, 0.0) / okd;
    out.mc_error = std::sqrt(var_s2) / (2.0 * out.empirical_se);
    out.mu_hats = std::move(mu);
    return out;
}

MonteCarloPower monte_carlo_power(const SimSpec& group1, const SimSpec& group2, double alpha,
                                  unsigned threads) {
    group1.validate();
    group2.validate();
    if (!(alpha > 0 && alpha < 1)) throw ValidationError("alpha", "must lie in (0, 1)");

    MonteCarloPower out;
    out.replications = group1.replications;
    out.closed_form_se = std::sqrt(var_mu_hat(group1.params, group1.design) +
                                   var_mu_hat(group2.params, group2.design));
    const double z_crit = normal_quantile(1.0 - alpha / 2.0);
    out.closed_form_power =
        normal_cdf(std::fabs(group2.mu - group1.mu) / out.closed_form_se - z_crit) +
        normal_cdf(-std::fabs(group2.mu - group1.mu) / out.closed_form_se - z_crit);

    // 1 = reject, 0 = accept, -1 = estimation failure
    const auto reps = static_cast<std::size_t>(group1.replications);
    std::vector<signed char> outcome(reps, -1);
    SimSpec g2 = group2;
    g2.seed = group1.seed;
    parallel_for(reps, threads, [&](std::size_t r) {
        try {
            const double m1 = mle_mu(simulate_sample(group1, r, 1)).mu_hat;
            const double m2 = mle_mu(simulate_sample(g2, r, 2)).mu_hat;
            outcome[r] = std::fabs(m2 - m1) / out.closed_form_se > z_crit ? 1 : 0;
        } catch (const DataError&) {
        }
    });

    std::int64_t rejects = 0;
    for (auto o : outcome) {
        if (o < 0) ++out.failures;
        else rejects += o;
    }
    if (static_cast<double>(out.failures) > 0.01 * static_cast<double>(reps))
        throw DataError(std::to_string(out.failures) + " of " + std::to_string(reps) +
                        " replicates failed estimation (more than 1%)");
    const double ok = static_cast<double>(out.replications - out.failures);
    out.rejection_rate = static_cast<double>(rejects) / ok;
    out.mc_error = std::sqrt(out.rejection_rate * (1.0 - out.rejection_rate) / ok);
    return out;
}

}  // namespace mmdesign
