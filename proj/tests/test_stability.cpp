#include <cmath>
#include <numbers>
#include <vector>

#include <doctest.h>

#include "nstab/errors.hpp"
#include "nstab/gauss.hpp"
#include "nstab/partition.hpp"
#include "nstab/stability.hpp"

using namespace nstab;

namespace {

SetSpec whole_space(int n) {
    SetSpec s;
    s.dim = n;
    s.measure = 1.0;
    s.kind = "halfspace";
    s.contains = [](std::span<const double>) { return true; };
    return s;
}

SetSpec left_halfline(int n) {
    SetSpec s;
    s.dim = n;
    s.measure = 0.5;
    s.kind = "halfspace";
    s.contains = [](std::span<const double> x) { return x[0] <= 0.0; };
    return s;
}

}  // namespace

TEST_SUITE("stability") {

TEST_CASE("joint probability trivial and half-line families") {
    // Whole-space sets agree with probability one regardless of correlation.
    std::vector<SetSpec> all = {whole_space(2), whole_space(2), whole_space(2)};
    auto est = joint_probability(all, 2, ExchangeableCov(3, 0.4), 2000, 7);
    CHECK(est.value == 1.0);
    CHECK(est.std_error == 0.0);

    // k = 2, rho = 0.5, both sets {x1 <= 0}: P = 1/4 + asin(1/2)/(2 pi) = 1/3.
    std::vector<SetSpec> pair = {left_halfline(2), left_halfline(2)};
    auto p = joint_probability(pair, 2, ExchangeableCov(2, 0.5), 400000, 11);
    CHECK(p.method == "monte_carlo");
    CHECK(std::abs(p.value - 1.0 / 3.0) <= 3.5 * p.std_error);

    // k = 3 independent: product of halves.
    std::vector<SetSpec> trio = {left_halfline(1), left_halfline(1), left_halfline(1)};
    auto t = joint_probability(trio, 1, ExchangeableCov(3, 0.0), 400000, 13);
    CHECK(std::abs(t.value - 0.125) <= 3.5 * t.std_error);
}

TEST_CASE("joint probability input validation") {
    std::vector<SetSpec> pair = {left_halfline(2), left_halfline(2)};
    CHECK_THROWS_AS(joint_probability(pair, 2, ExchangeableCov(3, 0.2), 100, 0),
                    DimensionError);
    CHECK_THROWS_AS(joint_probability(pair, 3, ExchangeableCov(2, 0.2), 100, 0),
                    DimensionError);
    CHECK_THROWS_AS(joint_probability(pair, 2, ExchangeableCov(2, 0.2), 0, 0), DomainError);
}

TEST_CASE("two-cell stack pair stability closed form") {
    auto balanced = GaussianPartition::halfspace_stack({0.5, 0.5});
    auto est = pair_partition_stability(balanced, 0.6, 0, 0);
    CHECK(est.method == "closed_form");
    CHECK(est.value == doctest::Approx(0.5 + std::asin(0.6) / std::numbers::pi).epsilon(1e-9));

    // Monotone nondecreasing in rho on [0, 1] (exact path, no slack needed).
    double prev = -1.0;
    for (double rho : {0.0, 0.25, 0.5, 0.75, 1.0}) {
        const double v = pair_partition_stability(balanced, rho, 0, 0).value;
        CHECK(v >= prev);
        prev = v;
    }
    CHECK(pair_partition_stability(balanced, 0.0, 0, 0).value == doctest::Approx(0.5));
    CHECK(pair_partition_stability(balanced, 1.0, 0, 0).value == doctest::Approx(1.0));

    // Unbalanced closed form matches Monte Carlo via a callback clone of the
    // same partition (forces the sampling path).
    auto skew = GaussianPartition::halfspace_stack({0.2, 0.8});
    const double closed = pair_partition_stability(skew, 0.7, 0, 0).value;
    auto clone = GaussianPartition::callback(
        1, 2, [c = normal_inv_cdf(0.2)](std::span<const double> x) { return x[0] <= c ? 0 : 1; });
    auto mc = pair_partition_stability(clone, 0.7, 400000, 3);
    CHECK(std::abs(mc.value - closed) <= 3.5 * mc.std_error);
    CHECK(mc.std_error == doctest::Approx(std::sqrt(mc.value * (1 - mc.value) / 400000.0)));
}

TEST_CASE("pair stability at rho zero equals sum of squared measures") {
    auto stack = GaussianPartition::halfspace_stack({0.2, 0.3, 0.5});
    auto est = pair_partition_stability(stack, 0.0, 300000, 5);
    CHECK(std::abs(est.value - 0.38) <= 3.5 * est.std_error);

    auto simplex = GaussianPartition::simplex(3);
    auto s = pair_partition_stability(simplex, 0.0, 300000, 5);
    CHECK(std::abs(s.value - 1.0 / 3.0) <= 3.5 * s.std_error);

    // Callback pinwheel with four cells: balanced by symmetry.
    auto pin = GaussianPartition::callback(2, 4, [](std::span<const double> x) {
        const double theta = std::atan2(x[1], x[0]) + std::numbers::pi;
        int s4 = static_cast<int>(theta / (std::numbers::pi / 2.0));
        return s4 > 3 ? 3 : s4;
    });
    auto pe = pair_partition_stability(pin, 0.0, 300000, 5);
    CHECK(std::abs(pe.value - 0.25) <= 3.5 * pe.std_error);
}

TEST_CASE("simplex pair stability endpoints and closed form") {
    CHECK(simplex_pair_stability(2, 0.6, 0, 0).value ==
          doctest::Approx(0.5 + std::asin(0.6) / std::numbers::pi).epsilon(1e-12));
    CHECK(simplex_pair_stability(2, -1.0, 0, 0).value == doctest::Approx(0.0));

    auto one = simplex_pair_stability(3, 1.0, 50000, 9);
    CHECK(one.value == doctest::Approx(1.0));

    auto third = simplex_pair_stability(3, 0.0, 300000, 9);
    CHECK(std::abs(third.value - 1.0 / 3.0) <= 3.5 * third.std_error);

    // Monotone in rho with Monte Carlo slack.
    const std::uint64_t n = 200000;
    double prev = -1.0;
    for (double rho : {0.0, 0.25, 0.5, 0.75, 1.0}) {
        auto est = simplex_pair_stability(3, rho, n, 21);
        CHECK(est.value >= prev - 3.0 * 2.0 * est.std_error);
        prev = est.value;
    }

    CHECK_THROWS_AS(simplex_pair_stability(1, 0.3, 100, 0), DimensionError);
    CHECK_THROWS_AS(simplex_pair_stability(3, 1.5, 100, 0), RangeError);
}

TEST_CASE("random set generators hit their target measures") {
    RngStream rng(2024, 0);

    for (double m : {0.15, 0.5, 0.83}) {
        auto h = random_halfspace_set(3, m, rng);
        CHECK(h.measure == m);
        CHECK(h.measure_se == 0.0);
    }

    for (double m : {0.2, 0.45, 0.7}) {
        auto b = random_box_union_set(2, m, rng);
        CHECK(b.measure == doctest::Approx(m).epsilon(1e-10));
        CHECK(b.measure_se == 0.0);
        // Monte Carlo cross-check of the claimed exact measure.
        RngStream mc(99, 1);
        std::uint64_t hits = 0;
        const std::uint64_t n = 200000;
        std::vector<double> x(2);
        for (std::uint64_t i = 0; i < n; ++i) {
            x[0] = mc.next_normal();
            x[1] = mc.next_normal();
            hits += b.contains(x) ? 1 : 0;
        }
        const double p = static_cast<double>(hits) / n;
        CHECK(std::abs(p - m) <= 3.5 * binomial_se(p, n));
    }

    auto ball = random_ball_set(2, 0.4, rng, 100000);
    CHECK(ball.measure == doctest::Approx(0.4).epsilon(1e-3));
    CHECK(ball.measure_se == doctest::Approx(binomial_se(ball.measure, 100000)));
    {
        RngStream mc(98, 1);
        std::uint64_t hits = 0;
        const std::uint64_t n = 200000;
        std::vector<double> x(2);
        for (std::uint64_t i = 0; i < n; ++i) {
            x[0] = mc.next_normal();
            x[1] = mc.next_normal();
            hits += ball.contains(x) ? 1 : 0;
        }
        const double p = static_cast<double>(hits) / n;
        CHECK(std::abs(p - ball.measure) <= 3.5 * (binomial_se(p, n) + ball.measure_se));
    }

    auto fz = random_defuzzified_set(2, 0.35, rng);
    CHECK(fz.measure == doctest::Approx(0.35).epsilon(1e-8));
    {
        RngStream mc(97, 1);
        std::uint64_t hits = 0;
        const std::uint64_t n = 200000;
        std::vector<double> x(2);
        for (std::uint64_t i = 0; i < n; ++i) {
            x[0] = mc.next_normal();
            x[1] = mc.next_normal();
            hits += fz.contains(x) ? 1 : 0;
        }
        const double p = static_cast<double>(hits) / n;
        CHECK(std::abs(p - 0.35) <= 3.5 * binomial_se(p, n));
    }

    CHECK_THROWS_AS(random_box_union_set(2, 0.0, rng), DomainError);
    CHECK_THROWS_AS(random_ball_set(2, 0.5, rng, 10), DomainError);
    CHECK_THROWS_AS(random_defuzzified_set(4, 0.5, rng), DimensionError);
}

TEST_CASE("parallel half-spaces achieve the joint-probability bound") {
    // Equality case: every set is the same coordinate half-space, so the
    // estimate should sit on the bound up to Monte Carlo noise.
    const int k = 3;
    const double rho = 0.5;
    std::vector<double> measures = {0.3, 0.5, 0.7};
    std::vector<SetSpec> sets;
    std::vector<double> thresholds;
    for (double m : measures) {
        SetSpec s;
        s.dim = 2;
        s.measure = m;
        s.kind = "halfspace";
        s.contains = [c = normal_inv_cdf(m)](std::span<const double> x) { return x[0] <= c; };
        thresholds.push_back(normal_inv_cdf(m));
        sets.push_back(std::move(s));
    }
    auto lhs = joint_probability(sets, 2, ExchangeableCov(k, rho), 400000, 17);
    const double rhs = exchangeable_orthant(thresholds, rho);
    CHECK(std::abs(lhs.value - rhs) <= 3.5 * lhs.std_error);
}

TEST_CASE("joint-stability audit flags no violations on random families") {
    std::vector<double> measures = {0.35, 0.55};
    auto report = halfspace_bound_audit(2, 0.5, measures, 2, 8, 100000, 42);
    CHECK(report.violations == 0);
    CHECK(report.cases.size() == 8);
    for (const auto& c : report.cases) {
        CHECK(c.kinds.size() == 2);
        CHECK(c.combined_se > 0.0);
        CHECK(c.margin >= -3.0 * c.combined_se);
        // The bound dominates well beyond noise for generic families.
        CHECK(c.bound >= c.estimate - 3.0 * c.combined_se);
    }
    const auto j = report.to_json();
    CHECK(j.at("violations").get<int>() == 0);
    CHECK(j.at("cases").size() == 8);

    CHECK_THROWS_AS(halfspace_bound_audit(2, -0.2, measures, 2, 1, 1000, 0), RangeError);
    std::vector<double> wrong = {0.5};
    CHECK_THROWS_AS(halfspace_bound_audit(2, 0.5, wrong, 2, 1, 1000, 0), DimensionError);
    std::vector<double> degenerate = {0.0, 0.5};
    CHECK_THROWS_AS(halfspace_bound_audit(2, 0.5, degenerate, 2, 1, 1000, 0), DomainError);
}

TEST_CASE("audit report is deterministic under a fixed seed") {
    std::vector<double> measures = {0.4, 0.6};
    auto a = halfspace_bound_audit(2, 0.3, measures, 2, 3, 20000, 7);
    auto b = halfspace_bound_audit(2, 0.3, measures, 2, 3, 20000, 7);
    CHECK(a.to_json() == b.to_json());
}

TEST_CASE("balanced partition probe at positive rho") {
    auto report = balanced_partition_probe(3, 2, 0.5, 8, 200000, 123);
    CHECK(report.violations == 0);
    CHECK(report.cases.size() == 8);
    CHECK(report.simplex_value > 0.4);   // well above the rho=0 value 1/3
    CHECK(report.simplex_value < 0.75);
    for (const auto& c : report.cases) {
        CHECK(c.margin >= -3.0 * c.combined_se);
        CHECK_FALSE(c.violation);
        CHECK(c.partition.contains("kind"));
    }
    // Generators rotate through the menu; the first is the plain stack.
    CHECK(report.cases[0].generator == "stack");

    // A rotated simplex is distribution-equal to the simplex: margin ~ 0.
    bool saw_rot = false;
    for (const auto& c : report.cases)
        if (c.generator == "rotated_simplex") {
            saw_rot = true;
            CHECK(std::abs(c.margin) <= 3.5 * c.combined_se);
        }
    CHECK(saw_rot);
}

TEST_CASE("three-cell stack sits strictly below the simplex at rho 0.5") {
    auto report = balanced_partition_probe(3, 2, 0.5, 1, 1000000, 77);
    REQUIRE(report.cases.size() == 1);
    const auto& stack = report.cases[0];
    REQUIRE(stack.generator == "stack");
    CHECK(stack.margin > 3.0 * stack.combined_se);
}

TEST_CASE("balanced partition probe at negative rho reverses the direction") {
    auto report = balanced_partition_probe(3, 2, -0.5, 6, 200000, 321);
    CHECK(report.violations == 0);
    for (const auto& c : report.cases) CHECK(c.margin >= -3.0 * c.combined_se);

    // The stack should now sit strictly above the simplex value.
    auto solo = balanced_partition_probe(3, 2, -0.5, 1, 1000000, 88);
    CHECK(solo.cases[0].margin > 3.0 * solo.cases[0].combined_se);
}

TEST_CASE("probe input validation") {
    CHECK_THROWS_AS(balanced_partition_probe(2, 2, 0.5, 1, 100, 0), DomainError);
    CHECK_THROWS_AS(balanced_partition_probe(4, 2, 0.5, 1, 100, 0), DomainError);
    CHECK_THROWS_AS(balanced_partition_probe(3, 2, 1.5, 1, 100, 0), RangeError);
}

}  // TEST_SUITE
