#include "mmdesign/errors.hpp"
#include "mmdesign/optimizer.hpp"

#include "case_studies.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <random>

using namespace mmdesign;

namespace {

void check_design(const GroupReport& g, std::int64_t n, std::int64_t N, std::int64_t K) {
    CHECK(g.design.n_direct == n);
    CHECK(g.design.n_total == N);
    CHECK(g.design.k_reps == K);
}

}  // namespace

TEST_CASE("closed-form replicate count") {
    CHECK(optimal_k_full_sampling(0.5, 1.0) == 1);
    CHECK(optimal_k_full_sampling(2.0, 1.0) == 1);   // 2*1 < 2 fails
    CHECK(optimal_k_full_sampling(2.01, 1.0) == 2);
    CHECK(optimal_k_full_sampling(6.0, 1.0) == 2);
    CHECK(optimal_k_full_sampling(6.01, 1.0) == 3);
    CHECK(optimal_k_full_sampling(0.0, 3.0) == 1);
    CHECK_THROWS_AS(optimal_k_full_sampling(1.0, 0.0), DomainError);
}

TEST_CASE("single-group search matches full enumeration") {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int i = 0; i < 40; ++i) {
        const double s2 = 0.2 + 2 * u(rng);
        const double rd = 0.05 + 8 * u(rng);
        const double rp = 0.05 + 5 * u(rng);
        const double c_q = 1.0;
        const double c_b = 0.1 + 4 * u(rng);
        const double budget = 30 + 270 * u(rng);
        const ModelParams p{s2, rd, rp};
        if (budget < 4 * (c_q + c_b)) continue;
        const auto got = optimize_single_group(p, CostModel{c_q, c_b, budget});
        const auto want = oracle::enumerate(s2, rd, rp, c_q, c_b, budget);
        CHECK(got.achieved_variance == doctest::Approx(want.variance).epsilon(1e-12));
        CHECK(got.spent_budget <= budget * (1 + 1e-12));
    }
}

TEST_CASE("budget feasibility of every output") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int i = 0; i < 30; ++i) {
        const ModelParams p1{0.1 + u(rng), 5 * u(rng), 5 * u(rng)};
        const ModelParams p2{0.1 + u(rng), 5 * u(rng), 5 * u(rng)};
        const CostModel cost{1 + 10 * u(rng), 1 + 30 * u(rng), 2000 + 20000 * u(rng)};
        const auto r = optimize_two_groups(p1, p2, cost);
        CHECK(r.spent_budget <= cost.c_total * (1 + 1e-12));
        CHECK(r.slack_budget >= -1e-9 * cost.c_total);
        for (std::size_t k = 0; k < 2; ++k) {
            const auto& g = r.groups[k];
            CHECK(g.spent_budget <= g.allocated_budget * (1 + 1e-12));
            CHECK(g.design.n_direct >= 4);
            CHECK(g.design.n_direct <= g.design.n_total);
            CHECK(g.variance == doctest::Approx(var_mu_hat(k == 0 ? p1 : p2, g.design)));
        }
    }
}

TEST_CASE("case-study designs at $50,000 and $250,000") {
    const OptimizerConfig config;
    auto run = [&](const cases::Study& s, double budget) {
        return optimize_two_groups(s.group1, s.group2, CostModel{cases::kCq, cases::kCb, budget},
                                   config);
    };
    SUBCASE("hovell") {
        auto r = run(cases::hovell, 50'000);
        check_design(r.groups[0], 64, 64, 1);
        check_design(r.groups[1], 69, 70, 1);
        CHECK(*r.allocation == doctest::Approx(0.48));
        r = run(cases::hovell, 250'000);
        check_design(r.groups[0], 320, 320, 1);
        check_design(r.groups[1], 346, 348, 1);
        CHECK(*r.allocation == doctest::Approx(0.48));
    }
    SUBCASE("wilson") {
        auto r = run(cases::wilson, 50'000);
        check_design(r.groups[0], 40, 40, 2);
        check_design(r.groups[1], 40, 40, 2);
        CHECK(*r.allocation == doctest::Approx(0.50));
        r = run(cases::wilson, 250'000);
        check_design(r.groups[0], 340, 340, 1);
        check_design(r.groups[1], 196, 196, 2);
        CHECK(*r.allocation == doctest::Approx(0.51));
    }
    SUBCASE("tone") {
        auto r = run(cases::tone, 50'000);
        check_design(r.groups[0], 61, 62, 1);
        check_design(r.groups[1], 72, 72, 1);
        CHECK(*r.allocation == doctest::Approx(0.46));
        r = run(cases::tone, 250'000);
        check_design(r.groups[0], 313, 314, 1);
        check_design(r.groups[1], 353, 354, 1);
        CHECK(*r.allocation == doctest::Approx(0.47));
    }
}

TEST_CASE("two-group search is invariant to thread count") {
    OptimizerConfig serial, parallel;
    parallel.threads = 8;
    const CostModel cost{cases::kCq, cases::kCb, 250'000};
    const auto a = optimize_two_groups(cases::wilson.group1, cases::wilson.group2, cost, serial);
    const auto b = optimize_two_groups(cases::wilson.group1, cases::wilson.group2, cost, parallel);
    CHECK(a.two_group() == b.two_group());
    CHECK(a.achieved_variance == b.achieved_variance);
}

TEST_CASE("fixed K is honoured") {
    OptimizerConfig config;
    config.fixed_k = 3;
    const auto r = optimize_single_group(ModelParams{1, 0.1, 1}, CostModel{1, 1, 1000}, config);
    CHECK(r.groups[0].design.k_reps == 3);
}

TEST_CASE("refinement never does worse than the grid") {
    OptimizerConfig coarse, fine;
    fine.refine_allocation = true;
    const CostModel cost{cases::kCq, cases::kCb, 50'000};
    const auto a = optimize_two_groups(cases::tone.group1, cases::tone.group2, cost, coarse);
    const auto b = optimize_two_groups(cases::tone.group1, cases::tone.group2, cost, fine);
    CHECK(b.achieved_variance <= a.achieved_variance);
}

TEST_CASE("infeasible budgets report the minimal feasible budget") {
    try {
        optimize_single_group(ModelParams{1, 1, 1}, CostModel{10, 20, 100});
        FAIL("expected ConstraintError");
    } catch (const ConstraintError& e) {
        REQUIRE(e.minimal_budget());
        CHECK(*e.minimal_budget() == doctest::Approx(120.0));
        CHECK_NOTHROW(optimize_single_group(ModelParams{1, 1, 1},
                                            CostModel{10, 20, *e.minimal_budget()}));
    }
    try {
        optimize_two_groups(ModelParams{1, 1, 1}, ModelParams{1, 1, 1}, CostModel{10, 20, 200});
        FAIL("expected ConstraintError");
    } catch (const ConstraintError& e) {
        REQUIRE(e.minimal_budget());
        CHECK(*e.minimal_budget() == doctest::Approx(240.0));
    }
}

TEST_CASE("tiny budgets warn about fragile calibration") {
    const auto r = optimize_single_group(ModelParams{1, 1, 1}, CostModel{1, 1, 12});
    CHECK(r.groups[0].design.n_direct < 10);
    CHECK_FALSE(r.warnings.empty());
}

TEST_CASE("reported sampling fraction collapses negligible tails") {
    const ModelParams p{1, 1, 1e9};  // Q carries no information
    const Design d{1001, 1000, 1};
    CHECK(reported_sampling_fraction(p, d, 1e-4) == 1.0);
    CHECK(reported_sampling_fraction(ModelParams{1, 1, 0.1}, Design{200, 50, 1}, 1e-4) ==
          doctest::Approx(0.25));
}

TEST_CASE("initial budget uses the even-split closed form") {
    const ModelParams p1{0.5, 1.0, 1.0}, p2{2.0, 3.0, 1.0};
    const UnitCosts c{10, 20};
    const double se = 0.1;
    // K = 1 for r_delta/r_cb = 0.5 and 1.5 (needs K(K-1) < r_delta/r_cb).
    const double a1 = 10 * 1.0 / 1 + 1 * 20 + 10 + 20 * 1.0;
    const double a2 = 10 * 3.0 / 1 + 1 * 20 + 10 + 20 * 3.0;
    CHECK(initial_budget(ModelParams{1, 4.01, 1}, p1, c, se) ==
          doctest::Approx(2 * ((10 * 4.01 / 2 + 2 * 20 + 10 + 20 * 4.01) + 0.5 * a1) / 0.01));
    CHECK(initial_budget(p1, p2, c, se) == doctest::Approx(2 * (0.5 * a1 + 2.0 * a2) / 0.01));
}

TEST_CASE("budget search for the case study") {
    SUBCASE("power 0.8") {
        const auto r = minimize_budget(cases::hovell.group1, cases::hovell.group2,
                                       UnitCosts{cases::kCq, cases::kCb},
                                       PowerSpec{0.05, 0.8, 0.1, 0.0});
        CHECK(r.budget == doctest::Approx(1'016'565).epsilon(0.01));
        CHECK(r.iterations <= 3);
        CHECK(r.report.achieved_se <= r.se_target);
        CHECK(r.trace.size() == static_cast<std::size_t>(r.iterations) + 1);
        CHECK(r.report.groups[0].design.n_total == doctest::Approx(1301).epsilon(0.01));
        CHECK(r.report.groups[1].design.n_total == doctest::Approx(1409).epsilon(0.01));
    }
    SUBCASE("power 0.9") {
        const auto r = minimize_budget(cases::hovell.group1, cases::hovell.group2,
                                       UnitCosts{cases::kCq, cases::kCb},
                                       PowerSpec{0.05, 0.9, 0.1, 0.0});
        CHECK(r.budget == doctest::Approx(1'360'757).epsilon(0.01));
        CHECK(r.iterations <= 3);
    }
}

TEST_CASE("budget search reports its trace when it cannot converge") {
    OptimizerConfig config;
    config.max_iterations = 1;
    config.budget_tolerance = 1e-15;
    try {
        minimize_budget(cases::hovell.group1, cases::hovell.group2,
                        UnitCosts{cases::kCq, cases::kCb}, PowerSpec{0.05, 0.9, 0.1, 0.0}, config);
        FAIL("expected ConvergenceError");
    } catch (const ConvergenceError& e) {
        CHECK(e.trace().size() == 2);
    }
}

TEST_CASE("optimizer configuration is validated") {
    OptimizerConfig c;
    c.allocation_grid = 0.0;
    CHECK_THROWS_AS(c.validate(), ValidationError);
    c = {};
    c.fixed_k = 0;
    CHECK_THROWS_AS(c.validate(), ValidationError);
}
