#include <cmath>
#include <string>
#include <vector>

#include <doctest.h>

#include "nstab/errors.hpp"
#include "nstab/maxqcut.hpp"
#include "nstab/partition.hpp"
#include "nstab/rng.hpp"

using namespace nstab;

namespace {

MaxQCutInstance triangle(int q) {
    return MaxQCutInstance(q, 3, {{0, 1}, {1, 2}, {0, 2}});
}

MaxQCutInstance complete(int v, int q) {
    std::vector<WeightedEdge> edges;
    for (int u = 0; u < v; ++u)
        for (int w = u + 1; w < v; ++w) edges.push_back({u, w, 1.0});
    return MaxQCutInstance(q, v, std::move(edges));
}

}  // namespace

TEST_SUITE("maxqcut") {

TEST_CASE("instance validation and canonical edge order") {
    CHECK_THROWS_AS(MaxQCutInstance(1, 2, {{0, 1}}), DomainError);
    CHECK_THROWS_AS(MaxQCutInstance(2, 0, {}), DomainError);
    CHECK_THROWS_AS(MaxQCutInstance(2, 2, {{0, 2}}), IndexError);
    CHECK_THROWS_AS(MaxQCutInstance(2, 2, {{-1, 0}}), IndexError);
    CHECK_THROWS_AS(MaxQCutInstance(2, 2, {{0, 1, 1.5}}), DomainError);
    CHECK_THROWS_AS(MaxQCutInstance(2, 2, {{0, 1, -0.1}}), DomainError);
    // (1,0) flips to (0,1) and collides with the existing edge.
    CHECK_THROWS_AS(MaxQCutInstance(2, 2, {{0, 1}, {1, 0}}), DomainError);

    MaxQCutInstance g(2, 4, {{3, 2, 0.25}, {1, 0, 0.5}, {3, 0, 0.125}});
    REQUIRE(g.edges().size() == 3);
    CHECK(g.edges()[0].u == 0);
    CHECK(g.edges()[0].v == 1);
    CHECK(g.edges()[1].v == 3);
    CHECK(g.edges()[2].u == 2);
    CHECK(g.total_weight() == doctest::Approx(0.875));

    // A self-loop carries weight but can never be bichromatic.
    MaxQCutInstance loop(2, 2, {{0, 0, 0.5}, {0, 1, 1.0}});
    CHECK(loop.total_weight() == doctest::Approx(1.5));
    std::vector<int> lab = {0, 1};
    CHECK(loop.cut_value(lab) == doctest::Approx(1.0));

    std::vector<int> wrong = {0, 1, 0};
    CHECK_THROWS_AS(loop.cut_value(wrong), DimensionError);
    std::vector<int> bad = {0, 2};
    CHECK_THROWS_AS(loop.cut_value(bad), DomainError);
}

TEST_CASE("graph text serialization round trip") {
    MaxQCutInstance g(3, 5, {{0, 1, 0.125}, {2, 3, 1.0}});  // vertex 4 is isolated
    const std::string text = g.to_text();
    MaxQCutInstance back = MaxQCutInstance::from_text(text, 3);
    CHECK(back.vertices() == 5);
    CHECK(back.q() == 3);
    REQUIRE(back.edges().size() == 2);
    CHECK(back.edges()[0].w == 0.125);
    CHECK(back.to_text() == text);

    // Comments are skipped; vertex count is inferred from the endpoints when
    // no header raises it.
    MaxQCutInstance inferred = MaxQCutInstance::from_text("# a comment\n0 3 1.0\n", 2);
    CHECK(inferred.vertices() == 4);

    CHECK_THROWS_AS(MaxQCutInstance::from_text("", 2), MetadataError);
    CHECK_THROWS_AS(MaxQCutInstance::from_text("zero one 1.0\n", 2), MetadataError);
    CHECK_THROWS_AS(MaxQCutInstance::from_text("0 1\n", 2), MetadataError);
}

TEST_CASE("generators produce the advertised shapes") {
    RngStream rng(5, 0);
    auto gnp = random_gnp_instance(6, 1.0, 2, true, rng);
    CHECK(gnp.edges().size() == 15);  // p = 1 gives the complete graph
    CHECK(gnp.total_weight() == doctest::Approx(15.0));

    auto bip = bipartite_instance(3, 4, 1.0, 2, true, rng);
    CHECK(bip.vertices() == 7);
    CHECK(bip.edges().size() == 12);
    // Bipartite with q = 2: the sides form an optimal cut.
    std::vector<int> sides = {0, 0, 0, 1, 1, 1, 1};
    CHECK(bip.cut_value(sides) == doctest::Approx(bip.total_weight()));

    auto pet = petersen_instance(3);
    CHECK(pet.vertices() == 10);
    CHECK(pet.edges().size() == 15);
    for (const auto& e : pet.edges()) CHECK(e.w == 1.0);

    CHECK_THROWS_AS(random_gnp_instance(4, 1.5, 2, true, rng), RangeError);
    CHECK_THROWS_AS(bipartite_instance(2, 2, -0.5, 2, true, rng), RangeError);
}

TEST_CASE("exhaustive optimum on small named graphs") {
    // Path on three vertices: alternating labels cut both edges.
    MaxQCutInstance p3(2, 3, {{0, 1}, {1, 2}});
    auto r = brute_force_opt(p3);
    CHECK(r.value == doctest::Approx(2.0));
    CHECK(p3.cut_value(r.labels) == doctest::Approx(r.value));

    CHECK(brute_force_opt(triangle(2)).value == doctest::Approx(2.0));
    CHECK(brute_force_opt(triangle(3)).value == doctest::Approx(3.0));
    CHECK(brute_force_opt(complete(4, 2)).value == doctest::Approx(4.0));
    CHECK(brute_force_opt(complete(4, 4)).value == doctest::Approx(6.0));
    CHECK(brute_force_opt(petersen_instance(2)).value == doctest::Approx(12.0));
    CHECK(brute_force_opt(petersen_instance(3)).value == doctest::Approx(15.0));

    // Weighted triangle: drop the lightest edge.
    MaxQCutInstance wt(2, 3, {{0, 1, 0.5}, {1, 2, 0.25}, {0, 2, 1.0}});
    CHECK(brute_force_opt(wt).value == doctest::Approx(1.5));

    // 3^16 labelings exceed the enumeration budget.
    std::vector<WeightedEdge> chain;
    for (int i = 0; i + 1 < 16; ++i) chain.push_back({i, i + 1, 1.0});
    MaxQCutInstance big(3, 16, std::move(chain));
    CHECK_THROWS_AS(brute_force_opt(big), ScaleError);
}

TEST_CASE("relaxation matches known optima") {
    MaxQCutInstance edge(2, 2, {{0, 1}});
    auto s1 = sdp_solve(edge, -1.0, 1);
    CHECK(s1.objective == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(s1.dot(0, 1) == doctest::Approx(-1.0).epsilon(1e-4));
    CHECK(s1.norm_residual <= 1e-9);
    CHECK(s1.dot_residual <= 1e-6);
    CHECK(s1.kkt_residual <= 1e-4);

    // Triangle, two parts: vectors at 120 degrees, (1/2)(3/2)(3) = 2.25.
    auto s2 = sdp_solve(triangle(2), -1.0, 1);
    CHECK(s2.objective == doctest::Approx(2.25).epsilon(1e-4));

    // Triangle, three parts: the simplex configuration cuts everything.
    auto s3 = sdp_solve(triangle(3), -1.0, 1);
    CHECK(s3.objective == doctest::Approx(3.0).epsilon(1e-4));
    CHECK(s3.dot(0, 1) == doctest::Approx(-0.5).epsilon(1e-3));
    CHECK(s3.dot(1, 2) == doctest::Approx(-0.5).epsilon(1e-3));

    // Petersen is 3-colorable, so the three-part relaxation is tight.
    auto sp = sdp_solve(petersen_instance(3), -1.0, 1);
    CHECK(sp.objective == doctest::Approx(15.0).epsilon(1e-4));

    // No edges: the relaxation is identically zero but still well posed.
    MaxQCutInstance empty(2, 3, {});
    auto s0 = sdp_solve(empty, -1.0, 1);
    CHECK(s0.objective == doctest::Approx(0.0));

    CHECK_THROWS_AS(sdp_solve(edge, -1.0, 1, 0), DomainError);

    const auto j = s3.to_json();
    CHECK(j.at("vertices").get<int>() == 3);
    CHECK(j.at("z").size() == static_cast<std::size_t>(3 * s3.r));
}

TEST_CASE("relaxation dominates the exhaustive optimum") {
    RngStream rng(42, 1);
    for (int t = 0; t < 3; ++t) {
        auto g = random_gnp_instance(8, 0.5, 3, false, rng);
        if (g.edges().empty()) continue;
        const auto exact = brute_force_opt(g);
        const auto sol = sdp_solve(g, -1.0, 7 + t);
        CHECK(sol.objective + sol.delta >= exact.value - 1e-9 * (1.0 + exact.value));
        CHECK(sol.dot_residual <= 1e-6);
        CHECK(sol.kkt_residual <= 1e-4);
    }

    // Relabeling the vertices leaves the optimum unchanged.
    MaxQCutInstance g(3, 5, {{0, 1, 0.7}, {1, 2, 0.3}, {2, 3, 0.9}, {3, 4, 0.5}, {0, 4, 0.2}});
    MaxQCutInstance h(3, 5, {{4, 3, 0.7}, {3, 2, 0.3}, {2, 1, 0.9}, {1, 0, 0.5}, {4, 0, 0.2}});
    const double a = sdp_solve(g, -1.0, 3).objective;
    const double b = sdp_solve(h, -1.0, 4).objective;
    CHECK(a == doctest::Approx(b).epsilon(1e-4));
}

TEST_CASE("rounding reproduces the expected cut distributions") {
    // Antipodal vectors land in different cells almost surely.
    MaxQCutInstance edge(2, 2, {{0, 1}});
    auto sol = sdp_solve(edge, -1.0, 1);
    auto rep = round_sdp(sol, edge, 500, 9);
    CHECK(rep.best_value == doctest::Approx(1.0));
    CHECK(rep.mean_value == doctest::Approx(1.0));
    CHECK(edge.cut_value(rep.best_labels) == doctest::Approx(rep.best_value));

    // Triangle with three parts: the best of 2000 rounds hits the optimum and
    // the mean ratio sits near the worst-case constant for three parts.
    auto s3 = sdp_solve(triangle(3), -1.0, 1);
    auto r3 = round_sdp(s3, triangle(3), 2000, 11);
    CHECK(r3.best_value == doctest::Approx(3.0));
    const double ratio = r3.mean_value / s3.objective;
    CHECK(ratio > 0.80);
    CHECK(ratio < 0.88);
    CHECK(r3.mean_se > 0.0);
    for (int l : r3.best_labels) CHECK((l >= 0 && l < 3));

    // Deterministic under a fixed (seed, workers) pair; a different worker
    // split draws different repeats but stays statistically consistent.
    auto again = round_sdp(s3, triangle(3), 2000, 11);
    CHECK(again.to_json() == r3.to_json());
    auto split = round_sdp(s3, triangle(3), 2000, 11, 3);
    CHECK(split.to_json() == round_sdp(s3, triangle(3), 2000, 11, 3).to_json());
    CHECK(std::abs(split.mean_value - r3.mean_value) <= 4.0 * (split.mean_se + r3.mean_se));

    // Identical unit vectors can never be separated.
    SdpSolution flat;
    flat.vertices = 2;
    flat.q = 2;
    flat.r = 1;
    flat.z = {1.0, 1.0};
    auto rf = round_sdp(flat, edge, 50, 1);
    CHECK(rf.best_value == doctest::Approx(0.0));
    CHECK(rf.mean_value == doctest::Approx(0.0));

    // Any two-cell partition may be supplied explicitly.
    auto stack = GaussianPartition::halfspace_stack({0.5, 0.5});
    auto rs = round_sdp(sol, edge, stack, 500, 9);
    CHECK(rs.best_value == doctest::Approx(1.0));

    CHECK_THROWS_AS(round_sdp(sol, edge, 0, 9), DomainError);
    CHECK_THROWS_AS(round_sdp(s3, triangle(3), stack, 10, 9), DomainError);  // 2 cells, q = 3
    CHECK_THROWS_AS(round_sdp(flat, triangle(2), 10, 9), DimensionError);
}

TEST_CASE("worst-case rounding ratio for two parts") {
    auto rep = alpha_q(2);
    CHECK(rep.method == "closed_form");
    CHECK(rep.alpha == doctest::Approx(0.8785672058).epsilon(1e-9));
    CHECK(rep.rho_star == doctest::Approx(-0.6891578).epsilon(1e-6));

    // The sampled search reduces to the same closed form cell by cell, so it
    // must land on the identical curve.
    auto mc = alpha_q(2, 50000, 17, false, true);
    CHECK(mc.method == "grid_mc");
    CHECK(mc.alpha == doctest::Approx(rep.alpha).epsilon(1e-9));
    CHECK(mc.rho_star == doctest::Approx(rep.rho_star).epsilon(1e-3));

    CHECK_THROWS_AS(alpha_q(1), DomainError);
}

TEST_CASE("worst-case rounding ratio for three parts") {
    auto rep = alpha_q(3, 100000, 3, false, false, 2);
    CHECK(rep.method == "grid_mc");
    CHECK(rep.alpha == doctest::Approx(0.836008).epsilon(8e-3));
    CHECK(rep.rho_star == doctest::Approx(-0.5).epsilon(0.12));
    CHECK(rep.std_error > 0.0);
    CHECK(rep.std_error < 5e-3);

    // Searching the full correlation range cannot find a smaller ratio than
    // the restricted range already contains (the minimizer is negative).
    auto full = alpha_q(3, 50000, 3, true, false, 2);
    CHECK(full.full_range);
    CHECK(full.rho_star < 0.0);
    CHECK(std::abs(full.alpha - rep.alpha) < 0.02);

    const auto j = rep.to_json();
    CHECK(j.at("q").get<int>() == 3);
    CHECK(j.at("method").get<std::string>() == "grid_mc");
}

TEST_CASE("ratio harness flags nothing on the standard menu") {
    auto rep = approx_ratio_harness(2, 8, 400, 0.8785672, 5);
    CHECK(rep.cases.size() == 8);
    CHECK(rep.dominance_all);
    CHECK(rep.flagged_count == 0);
    bool saw_petersen = false;
    for (const auto& c : rep.cases) {
        CHECK(c.dominance_ok);
        CHECK_FALSE(c.flagged);
        CHECK(c.rounded_best >= c.rounded_mean - 1e-12);
        // Instances stay small enough that repeated rounding finds the optimum.
        CHECK(c.best_over_opt == doctest::Approx(1.0).epsilon(1e-9));
        if (c.generator == "petersen") {
            saw_petersen = true;
            CHECK(c.opt == doctest::Approx(12.0));
        }
    }
    CHECK(saw_petersen);
    CHECK(rep.to_json().at("cases").size() == 8);

    auto r3 = approx_ratio_harness(3, 4, 200, 0.836, 6);
    CHECK(r3.dominance_all);
    CHECK(r3.flagged_count == 0);

    CHECK_THROWS_AS(approx_ratio_harness(1, 1, 1, 0.8, 0), DomainError);
    CHECK_THROWS_AS(approx_ratio_harness(2, 0, 1, 0.8, 0), DomainError);
}

}  // TEST_SUITE
