// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fail.

#include "mmdesign/estimation.hpp"
#include "mmdesign/optimizer.hpp"
#include "mmdesign/simulation.hpp"
#include "mmdesign/sweeps.hpp"

#include "case_studies.hpp"
#include "oracles.hpp"

#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

using namespace mmdesign;

namespace {

unsigned threads() { return std::max(1u, std::thread::hardware_concurrency()); }

struct Check {
    bool ok = true;
    std::ostringstream detail;

    void expect(bool condition, const std::string& what) {
        if (!condition) {
            ok = false;
            detail << " [FAILED: " << what << "]";
        }
    }
};

bool within(double value, double target, double tolerance) {
    return std::fabs(value - target) <= tolerance;
}

bool within_rel(double value, double target, double rel) {
    return std::fabs(value - target) <= rel * std::fabs(target);
}

// --- SE target ---------------------------------------------------------------

void se_target_check(Check& c) {
    const double s80 = se_target(PowerSpec{0.05, 0.8, 0.1, 0.0});
    const double s90 = se_target(PowerSpec{0.05, 0.9, 0.1, 0.0});
    c.detail << "pi=0.8 -> " << s80 << ", pi=0.9 -> " << s90;
    c.expect(within(s80, 0.03569, 1e-5), "pi=0.8 within 1e-5 of 0.03569");
    c.expect(within(s90, 0.03085, 1e-5), "pi=0.9 within 1e-5 of 0.03085");
}

// --- case-study designs --------------------------------------------------------

struct Expected {
    const cases::Study* study;
    double budget;
    std::int64_t n1, N1, K1, n2, N2, K2;
    double allocation;
};

void case_study_check(Check& c) {
    const Expected rows[] = {
        {&cases::hovell, 50'000, 64, 64, 1, 69, 70, 1, 0.48},
        {&cases::wilson, 50'000, 40, 40, 2, 40, 40, 2, 0.50},
        {&cases::tone, 50'000, 61, 62, 1, 72, 72, 1, 0.46},
        {&cases::hovell, 250'000, 320, 320, 1, 346, 348, 1, 0.48},
        {&cases::wilson, 250'000, 340, 340, 1, 196, 196, 2, 0.51},
        {&cases::tone, 250'000, 313, 314, 1, 353, 354, 1, 0.47},
    };
    OptimizerConfig config;
    config.threads = threads();
    int exact = 0;
    for (const auto& e : rows) {
        const auto r = optimize_two_groups(e.study->group1, e.study->group2,
                                           CostModel{cases::kCq, cases::kCb, e.budget}, config);
        const auto d = r.two_group();
        const std::string tag = std::string(e.study->name) + "@" + std::to_string(int(e.budget));
        c.detail << tag << ": " << d.group1.n_direct << "/" << d.group1.n_total << "/"
                 << d.group1.k_reps << " " << d.group2.n_direct << "/" << d.group2.n_total << "/"
                 << d.group2.k_reps << " share " << d.allocation << "; ";
        auto near = [](std::int64_t a, std::int64_t b) { return std::llabs(a - b) <= 1; };
        c.expect(near(d.group1.n_direct, e.n1) && near(d.group1.n_total, e.N1) &&
                     near(d.group2.n_direct, e.n2) && near(d.group2.n_total, e.N2),
                 tag + " counts within 1");
        c.expect(d.group1.k_reps == e.K1 && d.group2.k_reps == e.K2, tag + " replicate pattern");
        c.expect(within(d.allocation, e.allocation, 0.01 + 1e-9), tag + " allocation within 0.01");
        exact += d.group1.n_direct == e.n1 && d.group1.n_total == e.N1 &&
                 d.group2.n_direct == e.n2 && d.group2.n_total == e.N2 &&
                 within(d.allocation, e.allocation, 1e-9);
    }
    c.detail << exact << "/6 exact";
}

// --- budget search -----------------------------------------------------------------

void budget_check(Check& c) {
    OptimizerConfig config;
    config.threads = threads();
    const UnitCosts costs{cases::kCq, cases::kCb};
    const auto r80 = minimize_budget(cases::hovell.group1, cases::hovell.group2, costs,
                                     PowerSpec{0.05, 0.8, 0.1, 0.0}, config);
    const auto r90 = minimize_budget(cases::hovell.group1, cases::hovell.group2, costs,
                                     PowerSpec{0.05, 0.9, 0.1, 0.0}, config);
    const auto d = r80.report.two_group();
    c.detail << "pi=0.8: C=" << r80.budget << " (" << r80.iterations << " iter) design "
             << d.group1.n_direct << "/" << d.group1.n_total << "/" << d.group1.k_reps << " "
             << d.group2.n_direct << "/" << d.group2.n_total << "/" << d.group2.k_reps
             << "; pi=0.9: C=" << r90.budget << " (" << r90.iterations << " iter)";
    c.expect(within_rel(r80.budget, 1'016'565, 0.01), "pi=0.8 budget within 1%");
    c.expect(within_rel(r90.budget, 1'360'757, 0.01), "pi=0.9 budget within 1%");
    c.expect(within_rel(d.group1.n_direct, 1301, 0.01) && within_rel(d.group1.n_total, 1301, 0.01) &&
                 within_rel(d.group2.n_direct, 1409, 0.01) &&
                 within_rel(d.group2.n_total, 1409, 0.01),
             "pi=0.8 design within 1%");
    c.expect(d.group1.k_reps == 1 && d.group2.k_reps == 1, "pi=0.8 K = 1");
    c.expect(r80.iterations <= 3 && r90.iterations <= 3, "at most 3 iterations");
}

// --- replicate thresholds ------------------------------------------------------------

void threshold_check(Check& c) {
    const std::vector<double> grid{0.05, 0.1, 0.2, 0.25, 0.4, 0.5, 1, 2, 2.5, 4, 5, 10, 20};
    OptimizerConfig config;
    config.threads = threads();
    const auto rows = threshold_scan(grid, ThresholdScanConfig{}, config);
    double lo12 = 1e9, hi12 = 0, lo23 = 1e9, hi23 = 0;
    for (const auto& r : rows) {
        c.expect(r.k1_to_k2 && r.k2_to_k3, "both boundaries found at r_cb=" + std::to_string(r.r_cb));
        if (!r.k1_to_k2 || !r.k2_to_k3) continue;
        const double a = *r.k1_to_k2 / r.r_cb;
        const double b = *r.k2_to_k3 / r.r_cb;
        lo12 = std::min(lo12, a);
        hi12 = std::max(hi12, a);
        lo23 = std::min(lo23, b);
        hi23 = std::max(hi23, b);
        c.expect(within_rel(a, 2.0, 0.05), "K1->2 ratio within 5% at r_cb=" + std::to_string(r.r_cb));
        c.expect(within_rel(b, 6.0, 0.05), "K2->3 ratio within 5% at r_cb=" + std::to_string(r.r_cb));
    }
    c.detail << "K1->2 r_delta/r_cb in [" << lo12 << ", " << hi12 << "], K2->3 in [" << lo23
             << ", " << hi23 << "] over " << rows.size() << " r_cb values";
}

// --- efficiency claims --------------------------------------------------------------------

void efficiency_check(Check& c) {
    OptimizerConfig config;
    config.threads = threads();
    const CostModel cost{cases::kCq, cases::kCb, 250'000};
    const auto se_scale = EfficiencyScale::standard_error;

    // Forcing K = 1 in the Wilson study.
    const auto& w = cases::wilson;
    const auto best = optimize_two_groups(w.group1, w.group2, cost, config).two_group();
    OptimizerConfig k1 = config;
    k1.fixed_k = 1;
    const auto forced = optimize_two_groups(w.group1, w.group2, cost, k1).two_group();
    const double eff_k1 = efficiency(w.group1, w.group2, best, forced, se_scale);
    const double eff_k1_var = efficiency(w.group1, w.group2, best, forced);
    c.detail << "wilson K=1: " << eff_k1 << " (variance scale " << eff_k1_var << "); ";
    c.expect(within(eff_k1, 0.986, 0.002), "wilson forced K=1 efficiency 0.986 +- 0.002");

    // Misspecified planning values in the Hovell study.
    const std::vector<double> multipliers{0.5, 0.6, 0.7, 0.8, 0.9, 1.0, 1.25, 1.5, 1.75, 2.0};
    const auto& h = cases::hovell;
    double overall_min = 1.0, min_var_scale = 1.0, under_min = 1.0, over_min = 1.0;
    for (auto axis : {SensitivityAxis::sigma2_eps, SensitivityAxis::r_phi}) {
        const auto se = sensitivity_scan(h.group1, h.group2, axis, multipliers, cost, config, se_scale);
        const auto var = sensitivity_scan(h.group1, h.group2, axis, multipliers, cost, config);
        for (std::size_t i = 0; i < se.rows.size(); ++i) {
            const double e = se.rows[i].efficiency;
            overall_min = std::min(overall_min, e);
            min_var_scale = std::min(min_var_scale, var.rows[i].efficiency);
            if (axis == SensitivityAxis::sigma2_eps) {
                if (se.rows[i].multiplier < 1) under_min = std::min(under_min, e);
                if (se.rows[i].multiplier > 1) over_min = std::min(over_min, e);
            }
        }
    }
    c.detail << "hovell min " << overall_min << " (variance scale " << min_var_scale
             << "), sigma2_eps under " << under_min << " vs over " << over_min << "; ";
    c.expect(overall_min >= 0.975, "hovell efficiency >= 0.975 everywhere");
    c.expect(under_min < over_min && under_min == overall_min,
             "minimum on the sigma2_eps under-assessment branch");

    for (const auto* s : {&cases::wilson, &cases::tone}) {
        const auto r = sensitivity_scan(s->group1, s->group2, SensitivityAxis::r_phi, multipliers,
                                        cost, config, se_scale);
        double lowest = 1.0;
        for (const auto& row : r.rows) lowest = std::min(lowest, row.efficiency);
        c.detail << s->name << " r_phi min " << lowest << "; ";
        c.expect(lowest == 1.0, std::string(s->name) + " r_phi efficiency exactly 1");
    }
}

// --- Monte Carlo ---------------------------------------------------------------------------

void monte_carlo_check(Check& c) {
    std::vector<SimSpec> specs;
    specs.push_back(SimSpec{ModelParams::from_raw(0.0, 1.0, 1.0, 1.0, 1.0), Design{60, 30, 2},
                            0.0, 10'000, 1});
    std::mt19937_64 rng(20240601);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int i = 0; i < 5; ++i) {
        const double s2 = 0.3 + 1.7 * u(rng);
        const double a1 = 0.5 + u(rng);
        const auto p = ModelParams::from_raw(2 * u(rng) - 1, a1, s2, 0.2 + 2 * u(rng),
                                             0.1 + 2 * u(rng));
        const auto n = static_cast<std::int64_t>(15 + 45 * u(rng));
        const auto N = n + static_cast<std::int64_t>(120 * u(rng));
        const auto K = static_cast<std::int64_t>(1 + 3 * u(rng));
        specs.push_back(SimSpec{p, Design{N, n, K}, 4 * u(rng), 10'000, 100 + std::uint64_t(i)});
    }
    double worst = 0;
    for (const auto& spec : specs) {
        const auto mc = monte_carlo_se(spec, threads());
        const double z = (mc.empirical_se - mc.closed_form_se) / mc.mc_error;
        worst = std::max(worst, std::fabs(z));
        c.detail << "(" << spec.design.n_total << "," << spec.design.n_direct << ","
                 << spec.design.k_reps << ") z=" << z << "; ";
        c.expect(std::fabs(z) <= 3.0, "within 3 MC errors");
    }

    SimSpec g1{cases::hovell_raw1(), Design{1301, 1301, 1}, 0.0, 5'000, 77};
    SimSpec g2{cases::hovell_raw2(), Design{1409, 1409, 1}, 0.1, 5'000, 0};
    const auto pw = monte_carlo_power(g1, g2, 0.05, threads());
    c.detail << "max |z| " << worst << "; power " << pw.rejection_rate << " +- " << pw.mc_error
             << " (closed form " << pw.closed_form_power << ")";
    c.expect(pw.rejection_rate >= 0.78 && pw.rejection_rate <= 0.82, "power in [0.78, 0.82]");
}

// --- optimality --------------------------------------------------------------------------------

void optimality_check(Check& c) {
    std::mt19937_64 rng(31337);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    int matched = 0;
    for (int i = 0; i < 20; ++i) {
        const double s2 = 0.2 + 2 * u(rng);
        const double rd = 0.05 + 10 * u(rng);
        const double rp = 0.05 + 5 * u(rng);
        const double c_q = 1.0 + 9 * u(rng);
        const double c_b = c_q * (0.1 + 5 * u(rng));
        const double r_c = 4 * (1 + c_b / c_q) + (300 - 4 * (1 + c_b / c_q)) * u(rng);
        const double budget = r_c * c_q;
        const auto got = optimize_single_group(ModelParams{s2, rd, rp}, CostModel{c_q, c_b, budget});
        const auto want = oracle::enumerate(s2, rd, rp, c_q, c_b, budget);
        const bool ok = std::fabs(got.achieved_variance - want.variance) <= 1e-12 * want.variance &&
                        got.spent_budget <= budget * (1 + 1e-12);
        matched += ok;
        c.expect(ok, "instance " + std::to_string(i));
    }
    c.detail << matched << "/20 instances match full enumeration";
}

// --- properties -------------------------------------------------------------------------------------

void property_check(Check& c) {
    std::mt19937_64 rng(99);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    int checks = 0;
    for (int i = 0; i < 300; ++i) {
        const ModelParams p{0.1 + 2 * u(rng), 5 * u(rng), 5 * u(rng)};
        const auto n = static_cast<std::int64_t>(4 + 100 * u(rng));
        const auto N = n + static_cast<std::int64_t>(200 * u(rng));
        const auto K = static_cast<std::int64_t>(1 + 5 * u(rng));
        const double v = var_mu_hat(p, Design{N, n, K});
        // Monotone in n and K; in N with the direction of the sign condition.
        if (n < N) c.expect(var_mu_hat(p, Design{N, n + 1, K}) < v, "decreasing in n");
        c.expect(var_mu_hat(p, Design{N, n, K + 1}) < v, "decreasing in K");
        const double lhs = double(n - 2) / (1 + p.r_phi);
        const double rhs = 1 + p.r_delta / double(K);
        const double vN = var_mu_hat(p, Design{N + 1, n, K});
        if (std::fabs(lhs - rhs) > 1e-9) c.expect((lhs > rhs) == (vN < v), "monotone in N");
        // n = N identity and r_phi invariance.
        const double full = var_mu_hat(p, Design{N, N, K});
        c.expect(within_rel(full, p.sigma2_eps * (1 + p.r_delta / K) / N, 1e-12), "n = N identity");
        c.expect(within_rel(var_mu_hat(ModelParams{p.sigma2_eps, p.r_delta, p.r_phi * 3 + 1},
                                       Design{N, N, K}),
                            full, 1e-12),
                 "r_phi invariance at n = N");
        checks += 5;
    }

    // mu_hat equals the calibration mean when everyone is calibrated.
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        SimSpec spec{cases::hovell_raw1(), Design{30, 30, 2}, 1.0, 1, seed};
        const auto s = simulate_sample(spec, 0, 1);
        double m = 0;
        for (double x : s.mbar_cal) m += x;
        c.expect(within_rel(mle_mu(s).mu_hat, m / 30, 1e-12), "mu_hat = Mbar when n = N");
        ++checks;
    }

    // Every optimizer output is within budget.
    for (int i = 0; i < 40; ++i) {
        const CostModel cost{1 + 10 * u(rng), 1 + 30 * u(rng), 2000 + 50000 * u(rng)};
        const auto r = optimize_two_groups(ModelParams{0.1 + u(rng), 5 * u(rng), 5 * u(rng)},
                                           ModelParams{0.1 + u(rng), 5 * u(rng), 5 * u(rng)}, cost);
        bool ok = r.spent_budget <= cost.c_total * (1 + 1e-12);
        for (const auto& g : r.groups)
            ok = ok && g.spent_budget <= g.allocated_budget * (1 + 1e-12) &&
                 g.design.n_direct >= 4 && g.design.n_direct <= g.design.n_total;
        c.expect(ok, "budget feasibility");
        ++checks;
    }

    // Simulation determinism across runs and thread counts.
    SimSpec spec{cases::hovell_raw2(), Design{80, 40, 2}, 0.3, 500, 2024};
    const auto a = monte_carlo_se(spec, 1);
    const auto b = monte_carlo_se(spec, threads());
    c.expect(a.mu_hats == b.mu_hats, "simulation determinism");
    ++checks;
    c.detail << checks << " property checks";
}

}  // namespace

int main() {
    const std::pair<const char*, std::function<void(Check&)>> criteria[] = {
        {"se-target", se_target_check},
        {"case-study-designs", case_study_check},
        {"budget-search", budget_check},
        {"replicate-thresholds", threshold_check},
        {"efficiency-claims", efficiency_check},
        {"monte-carlo", monte_carlo_check},
        {"optimality-oracle", optimality_check},
        {"property-suites", property_check},
    };
    int failed = 0;
    for (const auto& [name, run] : criteria) {
        Check c;
        try {
            run(c);
        } catch (const std::exception& e) {
            c.ok = false;
            c.detail << " [exception: " << e.what() << "]";
        }
        failed += !c.ok;
        std::printf("%s %s: %s\n", c.ok ? "PASS" : "FAIL", name, c.detail.str().c_str());
        std::fflush(stdout);
    }
    std::printf("%d/%zu criteria passed\n", static_cast<int>(std::size(criteria)) - failed,
                std::size(criteria));
    return failed ? 1 : 0;
}
