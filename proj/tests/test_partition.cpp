#include <doctest.h>

#include <cmath>
#include <limits>
#include <vector>

#include "nstab/errors.hpp"
#include "nstab/gauss.hpp"
#include "nstab/partition.hpp"
#include "nstab/rng.hpp"

using namespace nstab;

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}

TEST_SUITE_BEGIN("partition");

TEST_CASE("simplex vectors: unit norm and pairwise dot -1/(q-1)") {
    for (int q : {2, 3, 5}) {
        const auto v = simplex_vectors(q);
        const int d = q - 1;
        for (int i = 0; i < q; ++i) {
            for (int j = i; j < q; ++j) {
                double dot = 0.0;
                for (int t = 0; t < d; ++t) dot += v[i * d + t] * v[j * d + t];
                const double want = i == j ? 1.0 : -1.0 / (q - 1);
                CHECK(dot == doctest::Approx(want).epsilon(1e-12));
            }
        }
    }
    const auto v2 = simplex_vectors(2);
    CHECK(v2[0] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(v2[1] == doctest::Approx(-1.0).epsilon(1e-12));
    CHECK_THROWS_AS(simplex_vectors(1), DomainError);
}

TEST_CASE("simplex classification: own vector wins, ties to lowest index") {
    const auto p = GaussianPartition::simplex(3);
    const auto v = simplex_vectors(3);
    for (int i = 0; i < 3; ++i) {
        const std::vector<double> x{v[i * 2], v[i * 2 + 1]};
        CHECK(p.classify(x) == i);
    }
    const std::vector<double> origin{0.0, 0.0};
    CHECK(p.classify(origin) == 0);  // full tie

    // scale invariance
    RngStream rng(1, 0);
    for (int t = 0; t < 200; ++t) {
        std::vector<double> x{rng.next_normal(), rng.next_normal()};
        std::vector<double> cx{7.5 * x[0], 7.5 * x[1]};
        CHECK(p.classify(x) == p.classify(cx));
    }
    const auto measures = p.cell_measures();
    for (double m : measures) CHECK(m == doctest::Approx(1.0 / 3));
}

TEST_CASE("simplex cell masses are uniform (monte carlo)") {
    const auto p = GaussianPartition::simplex(4);
    RngStream rng(2, 0);
    const int reps = 200'000;
    std::vector<int> counts(4, 0);
    std::vector<double> x(3);
    for (int t = 0; t < reps; ++t) {
        for (auto& v : x) v = rng.next_normal();
        ++counts[p.classify(x)];
    }
    for (int c : counts) {
        const double p_hat = static_cast<double>(c) / reps;
        CHECK(std::abs(p_hat - 0.25) <= 4.0 * binomial_se(0.25, reps));
    }
}

TEST_CASE("halfspace stack: cuts at normal quantiles, degenerate measures fine") {
    const auto p = GaussianPartition::halfspace_stack({1.0 / 3, 1.0 / 3, 1.0 / 3});
    const double c = normal_inv_cdf(1.0 / 3.0);
    std::vector<double> x{c - 0.01};
    CHECK(p.classify(x) == 0);
    x[0] = 0.0;
    CHECK(p.classify(x) == 1);
    x[0] = -c + 0.01;
    CHECK(p.classify(x) == 2);
    CHECK(p.cell_measures()[1] == doctest::Approx(1.0 / 3));

    const auto all_first = GaussianPartition::halfspace_stack({1.0, 0.0});
    const auto all_last = GaussianPartition::halfspace_stack({0.0, 1.0});
    for (double v : {-5.0, 0.0, 5.0}) {
        std::vector<double> pt{v};
        CHECK(all_first.classify(pt) == 0);
        CHECK(all_last.classify(pt) == 1);
    }

    CHECK_THROWS_AS(GaussianPartition::halfspace_stack({0.5, 0.4}), DomainError);
    CHECK_THROWS_AS(GaussianPartition::halfspace_stack({1.2, -0.2}), DomainError);
}

TEST_CASE("box union: disjointness enforced, measures are cdf products") {
    using Box = GaussianPartition::Box;
    const auto p = GaussianPartition::box_union(
        2, 3,
        {Box{{0.0, 0.0}, {1.0, 1.0}, 0}, Box{{-kInf, -kInf}, {0.0, 0.0}, 1}});
    const double m0 = (normal_cdf(1.0) - normal_cdf(0.0)) * (normal_cdf(1.0) - normal_cdf(0.0));
    const double m1 = 0.25;
    const auto meas = p.cell_measures();
    CHECK(meas[0] == doctest::Approx(m0).epsilon(1e-12));
    CHECK(meas[1] == doctest::Approx(m1).epsilon(1e-12));
    CHECK(meas[2] == doctest::Approx(1.0 - m0 - m1).epsilon(1e-12));

    std::vector<double> in0{0.5, 0.5}, in1{-1.0, -2.0}, rest{2.0, -1.0};
    CHECK(p.classify(in0) == 0);
    CHECK(p.classify(in1) == 1);
    CHECK(p.classify(rest) == 2);

    CHECK_THROWS_AS(GaussianPartition::box_union(
                        2, 3,
                        {Box{{0.0, 0.0}, {1.0, 1.0}, 0}, Box{{0.5, 0.5}, {2.0, 2.0}, 1}}),
                    InvariantError);
    CHECK_THROWS_AS(GaussianPartition::box_union(1, 2, {Box{{0.0}, {1.0}, 1}}), IndexError);
    CHECK_THROWS_AS(GaussianPartition::box_union(1, 2, {Box{{1.0}, {1.0}, 0}}), DomainError);
}

TEST_CASE("json round trip preserves classification and measures") {
    RngStream rng(3, 0);
    using Box = GaussianPartition::Box;
    std::vector<GaussianPartition> parts;
    parts.push_back(GaussianPartition::halfspace_stack({0.2, 0.5, 0.3}, 2));
    parts.push_back(GaussianPartition::simplex(4));
    parts.push_back(GaussianPartition::box_union(
        2, 2, {Box{{-1.0, -kInf}, {1.0, 0.5}, 0}, Box{{2.0, 0.0}, {kInf, kInf}, 0}}));

    for (const auto& p : parts) {
        const auto j = p.to_json();
        const auto back = GaussianPartition::from_json(j);
        CHECK(back.cells() == p.cells());
        CHECK(back.dim() == p.dim());
        const auto ma = p.cell_measures(), mb = back.cell_measures();
        for (std::size_t i = 0; i < ma.size(); ++i)
            CHECK(ma[i] == doctest::Approx(mb[i]).epsilon(1e-12));
        std::vector<double> x(p.dim());
        for (int t = 0; t < 500; ++t) {
            for (auto& v : x) v = rng.next_normal();
            CHECK(p.classify(x) == back.classify(x));
        }
    }

    const auto cb = GaussianPartition::callback(1, 2, [](std::span<const double> x) {
        return x[0] < 0 ? 0 : 1;
    });
    const auto j = cb.to_json();
    CHECK(j.at("kind") == "callback");
    CHECK(j.at("parameters").at("serializable") == false);
    CHECK_THROWS_AS(GaussianPartition::from_json(j), MetadataError);
    CHECK_THROWS_AS(cb.cell_measures(), MetadataError);
}

TEST_CASE("fuzzy partition validates weights") {
    const FuzzyPartition bad(1, 2, [](std::span<const double>, std::span<double> out) {
        out[0] = 0.7;
        out[1] = 0.7;
    });
    std::vector<double> x{0.0}, w(2);
    CHECK_THROWS_AS(bad.weights(x, w), DomainError);

    const FuzzyPartition ok(1, 2, [](std::span<const double> p, std::span<double> out) {
        const double s = 1.0 / (1.0 + std::exp(-p[0]));
        out[0] = s;
        out[1] = 1.0 - s;
    });
    x[0] = 1.3;
    ok.weights(x, w);
    CHECK(w[0] + w[1] == doctest::Approx(1.0));
}

TEST_CASE("defuzzify: crisp stacks come back with the same cells") {
    // One-hot weights are discontinuous, so cube averages carry O(delta)
    // error near the cut; away from it the classification must agree, and
    // supplying targets recovers the measures exactly.
    auto stack = GaussianPartition::halfspace_stack({0.3, 0.7});
    const double cut = normal_inv_cdf(0.3);
    const auto fuzzy = FuzzyPartition::from_partition(stack);
    const double delta = 0.125;
    const auto res = defuzzify(fuzzy, delta);
    CHECK(res.tail_mass < 1e-12);
    CHECK(std::abs(res.measures[0] - 0.3) <= 0.02);
    RngStream rng(4, 0);
    std::vector<double> x(1);
    for (int t = 0; t < 2000; ++t) {
        x[0] = rng.next_normal();
        if (std::abs(x[0] - cut) <= delta) continue;
        CHECK(res.partition.classify(x) == stack.classify(x));
    }

    const std::vector<double> targets{0.3, 0.7};
    const auto fixed = defuzzify(fuzzy, delta, &targets);
    CHECK(std::abs(fixed.measures[0] - 0.3) <= 1e-9);
}

TEST_CASE("defuzzify: sigmoid weights keep their expectation") {
    const FuzzyPartition g(1, 2, [](std::span<const double> p, std::span<double> out) {
        const double s = 1.0 / (1.0 + std::exp(-(p[0] - 0.3)));
        out[0] = s;
        out[1] = 1.0 - s;
    });
    const double want = integrate_gk(
        [](double x) { return normal_pdf(x) / (1.0 + std::exp(-(x - 0.3))); }, -kGaussWindow,
        kGaussWindow, 1e-12);

    const auto fine = defuzzify(g, 0.05);
    CHECK(std::abs(fine.measures[0] - want) <= 1e-6);

    // coarser grids stay close too; the error shrinks with delta
    const auto coarse = defuzzify(g, 0.4);
    CHECK(std::abs(coarse.measures[0] - want) <= 1e-3);
    CHECK(std::abs(fine.measures[0] - want) <= std::abs(coarse.measures[0] - want) + 1e-9);
}

TEST_CASE("defuzzify: targets are hit exactly via mass transfer") {
    const FuzzyPartition g(2, 3, [](std::span<const double> p, std::span<double> out) {
        // softmax of three fixed linear scores
        const double s0 = 0.9 * p[0] + 0.2 * p[1] + 0.1;
        const double s1 = -0.4 * p[0] + 0.8 * p[1];
        const double s2 = -0.5 * p[0] - 1.0 * p[1] - 0.1;
        const double m = std::max({s0, s1, s2});
        const double e0 = std::exp(s0 - m), e1 = std::exp(s1 - m), e2 = std::exp(s2 - m);
        const double z = e0 + e1 + e2;
        out[0] = e0 / z;
        out[1] = e1 / z;
        out[2] = e2 / z;
    });
    const std::vector<double> targets{1.0 / 3, 1.0 / 3, 1.0 / 3};
    const auto res = defuzzify(g, 0.2, &targets);
    for (int c = 0; c < 3; ++c)
        CHECK(std::abs(res.measures[c] - 1.0 / 3) <= 1e-9);

    // the crisp partition really has those masses: spot check by MC
    RngStream rng(5, 0);
    std::vector<double> x(2);
    std::vector<int> counts(3, 0);
    const int reps = 200'000;
    for (int t = 0; t < reps; ++t) {
        x[0] = rng.next_normal();
        x[1] = rng.next_normal();
        ++counts[res.partition.classify(x)];
    }
    for (int c = 0; c < 3; ++c) {
        const double p_hat = static_cast<double>(counts[c]) / reps;
        CHECK(std::abs(p_hat - 1.0 / 3) <= 4.0 * binomial_se(1.0 / 3, reps));
    }
}

TEST_CASE("defuzzify guards") {
    const FuzzyPartition g4(4, 2, [](std::span<const double>, std::span<double> out) {
        out[0] = 1.0;
        out[1] = 0.0;
    });
    CHECK_THROWS_AS(defuzzify(g4, 0.5), ScaleError);

    const FuzzyPartition g1(1, 2, [](std::span<const double>, std::span<double> out) {
        out[0] = 1.0;
        out[1] = 0.0;
    });
    CHECK_THROWS_AS(defuzzify(g1, 0.0), DomainError);
    CHECK_THROWS_AS(defuzzify(g1, -1.0), DomainError);
    const std::vector<double> bad{0.6, 0.6};
    CHECK_THROWS_AS(defuzzify(g1, 0.5, &bad), DomainError);

    const FuzzyPartition g3(3, 2, [](std::span<const double>, std::span<double> out) {
        out[0] = 1.0;
        out[1] = 0.0;
    });
    CHECK_THROWS_AS(defuzzify(g3, 0.01), ScaleError);  // grid too fine in 3D
}

TEST_SUITE_END();
