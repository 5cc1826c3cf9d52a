#include "nstab/stability.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numbers>

#include "nstab/errors.hpp"

namespace nstab {

namespace {

struct HitAcc {
    std::uint64_t hits = 0;
    HitAcc& operator+=(const HitAcc& o) {
        hits += o.hits;
        return *this;
    }
};

StabilityEstimate mc_estimate(std::uint64_t hits, std::uint64_t n, std::uint64_t seed) {
    const double p = static_cast<double>(hits) / static_cast<double>(n);
    return {p, binomial_se(p, n), n, "monte_carlo", seed};
}

void require_samples(std::uint64_t n) {
    if (n == 0) throw DomainError("monte carlo estimate needs n_samples >= 1");
}

}  // namespace

StabilityEstimate joint_probability(std::span<const SetSpec> sets, int n_dim,
                                    const ExchangeableCov& cov, std::uint64_t n_samples,
                                    std::uint64_t seed, int workers) {
    if (n_dim < 1) throw DimensionError("joint_probability: dimension must be >= 1");
    if (static_cast<int>(sets.size()) != cov.k)
        throw DimensionError("joint_probability: need exactly one set per coordinate of the "
                             "exchangeable vector");
    for (const SetSpec& s : sets)
        if (s.dim != n_dim)
            throw DimensionError("joint_probability: set dimension mismatch");
    require_samples(n_samples);

    const int k = cov.k;
    auto acc = parallel_accumulate(
        n_samples, workers, seed, 0, [&](RngStream& rng, std::uint64_t count) {
            HitAcc a;
            std::vector<double> draws(static_cast<std::size_t>(k) * n_dim);
            for (std::uint64_t i = 0; i < count; ++i) {
                sample_exchangeable(cov, n_dim, rng, draws);
                bool all = true;
                for (int j = 0; j < k && all; ++j) {
                    std::span<const double> row(draws.data() + static_cast<std::size_t>(j) * n_dim,
                                                static_cast<std::size_t>(n_dim));
                    all = sets[j].contains(row);
                }
                a.hits += all ? 1 : 0;
            }
            return a;
        });
    return mc_estimate(acc.hits, n_samples, seed);
}

StabilityEstimate pair_partition_stability(const GaussianPartition& p, double rho,
                                           std::uint64_t n_samples, std::uint64_t seed,
                                           int workers) {
    if (!(rho >= -1.0 && rho <= 1.0))
        throw RangeError("pair_partition_stability: correlation must lie in [-1, 1]");

    if (p.kind() == GaussianPartition::Kind::halfspace_stack && p.cells() == 2) {
        // P(agree) = P(X<=c, Y<=c) + P(X>c, Y>c) = 2*Phi2(c,c;rho) + 1 - 2*Phi(c).
        const double c = normal_inv_cdf(p.cell_measures()[0]);
        double v = 2.0 * bivariate_orthant(c, c, rho) + 1.0 - 2.0 * normal_cdf(c);
        v = std::clamp(v, 0.0, 1.0);
        return {v, 0.0, 0, "closed_form", seed};
    }

    require_samples(n_samples);
    const int n = p.dim();
    auto acc = parallel_accumulate(
        n_samples, workers, seed, 0, [&](RngStream& rng, std::uint64_t count) {
            HitAcc a;
            std::vector<double> x(n), y(n);
            for (std::uint64_t i = 0; i < count; ++i) {
                sample_pair(n, rho, rng, x, y);
                a.hits += p.classify(x) == p.classify(y) ? 1 : 0;
            }
            return a;
        });
    return mc_estimate(acc.hits, n_samples, seed);
}

StabilityEstimate simplex_pair_stability(int q, double rho, std::uint64_t n_samples,
                                         std::uint64_t seed, int workers) {
    if (q < 2) throw DimensionError("simplex_pair_stability: q must be >= 2");
    if (!(rho >= -1.0 && rho <= 1.0))
        throw RangeError("simplex_pair_stability: correlation must lie in [-1, 1]");
    if (q == 2) {
        const double v = 0.5 + std::asin(rho) / std::numbers::pi;
        return {std::clamp(v, 0.0, 1.0), 0.0, 0, "closed_form", seed};
    }
    return pair_partition_stability(GaussianPartition::simplex(q), rho, n_samples, seed,
                                    workers);
}

// --- random set generators -------------------------------------------------

SetSpec random_halfspace_set(int n_dim, double target_measure, RngStream& rng) {
    if (n_dim < 1) throw DimensionError("random_halfspace_set: dimension must be >= 1");
    if (!(target_measure >= 0.0 && target_measure <= 1.0))
        throw DomainError("random_halfspace_set: measure must lie in [0, 1]");
    std::vector<double> u(n_dim);
    double norm2 = 0.0;
    do {
        norm2 = 0.0;
        for (double& v : u) {
            v = rng.next_normal();
            norm2 += v * v;
        }
    } while (norm2 < 1e-12);
    const double inv = 1.0 / std::sqrt(norm2);
    for (double& v : u) v *= inv;
    const double t = normal_inv_cdf(target_measure);

    SetSpec s;
    s.dim = n_dim;
    s.measure = target_measure;
    s.measure_se = 0.0;
    s.kind = "halfspace";
    s.params = {{"normal", u}, {"threshold", t}};
    s.contains = [u = std::move(u), t](std::span<const double> x) {
        double dot = 0.0;
        for (std::size_t d = 0; d < x.size(); ++d) dot += u[d] * x[d];
        return dot <= t;
    };
    return s;
}

SetSpec random_box_union_set(int n_dim, double target_measure, RngStream& rng) {
    if (n_dim < 1) throw DimensionError("random_box_union_set: dimension must be >= 1");
    if (!(target_measure > 0.0 && target_measure < 1.0))
        throw DomainError("random_box_union_set: measure must lie in (0, 1)");

    const int n_boxes = 2 + static_cast<int>(rng.next_below(7));  // 2..8

    // Disjoint boxes described in quantile space, where the measure of an
    // interval is its length.  Axis 0 gets a random partition of [0,1); the
    // other axes a full interval per box.  A shared scale t in (0,1] shrinks
    // every interval toward an interior anchor, so the union's measure is
    // continuous and strictly increasing in t; bisection hits the target.
    std::vector<double> cuts(n_boxes + 1);
    cuts.front() = 0.0;
    cuts.back() = 1.0;
    for (int b = 1; b < n_boxes; ++b) cuts[b] = rng.next_double_pos();
    std::sort(cuts.begin(), cuts.end());

    struct AxisIval {
        double lo, hi, anchor;
    };
    std::vector<std::vector<AxisIval>> ivals(n_boxes, std::vector<AxisIval>(n_dim));
    std::vector<double> widths(static_cast<std::size_t>(n_boxes) * n_dim, 1.0);
    for (bool full_widths : {false, true}) {
        for (int b = 0; b < n_boxes; ++b) {
            for (int d = 0; d < n_dim; ++d) {
                const double lo = d == 0 ? cuts[b] : 0.0;
                const double hi = d == 0 ? cuts[b + 1] : 0.0 + 1.0;
                const double w = full_widths ? 1.0 : 0.5 + 0.5 * rng.next_double();
                widths[static_cast<std::size_t>(b) * n_dim + d] = d == 0 ? 1.0 : w;
                const double anchor = lo + (0.2 + 0.6 * rng.next_double()) * (hi - lo);
                ivals[b][d] = {lo, hi, anchor};
            }
        }
        // Maximum reachable measure at t = 1; retry with full widths if short.
        double cap = 0.0;
        for (int b = 0; b < n_boxes; ++b) {
            double prod = cuts[b + 1] - cuts[b];
            for (int d = 1; d < n_dim; ++d)
                prod *= widths[static_cast<std::size_t>(b) * n_dim + d];
            cap += prod;
        }
        if (cap >= target_measure || full_widths) break;
    }

    auto measure_at = [&](double t) {
        double total = 0.0;
        for (int b = 0; b < n_boxes; ++b) {
            double prod = 1.0;
            for (int d = 0; d < n_dim; ++d) {
                const AxisIval& iv = ivals[b][d];
                const double w = widths[static_cast<std::size_t>(b) * n_dim + d];
                prod *= t * w * (iv.hi - iv.lo);
            }
            total += prod;
        }
        return total;
    };

    double lo_t = 0.0, hi_t = 1.0;
    for (int it = 0; it < 200 && hi_t - lo_t > 1e-16; ++it) {
        const double mid = 0.5 * (lo_t + hi_t);
        (measure_at(mid) < target_measure ? lo_t : hi_t) = mid;
    }
    const double t = hi_t;

    // Materialize x-space bounds and the exact achieved measure.
    std::vector<double> los(static_cast<std::size_t>(n_boxes) * n_dim);
    std::vector<double> his(static_cast<std::size_t>(n_boxes) * n_dim);
    double achieved = 0.0;
    nlohmann::json jboxes = nlohmann::json::array();
    for (int b = 0; b < n_boxes; ++b) {
        double prod = 1.0;
        nlohmann::json jb = {{"lo", nlohmann::json::array()}, {"hi", nlohmann::json::array()}};
        for (int d = 0; d < n_dim; ++d) {
            const AxisIval& iv = ivals[b][d];
            const double w = widths[static_cast<std::size_t>(b) * n_dim + d];
            const double half_lo = (iv.anchor - iv.lo) * t * w;
            const double half_hi = (iv.hi - iv.anchor) * t * w;
            const double qlo = iv.anchor - half_lo;
            const double qhi = iv.anchor + half_hi;
            prod *= qhi - qlo;
            const std::size_t idx = static_cast<std::size_t>(b) * n_dim + d;
            los[idx] = normal_inv_cdf(qlo);
            his[idx] = normal_inv_cdf(qhi);
            jb["lo"].push_back(los[idx]);
            jb["hi"].push_back(his[idx]);
        }
        achieved += prod;
        jboxes.push_back(std::move(jb));
    }

    SetSpec s;
    s.dim = n_dim;
    s.measure = achieved;
    s.measure_se = 0.0;
    s.kind = "box_union";
    s.params = {{"boxes", std::move(jboxes)}};
    s.contains = [n_boxes, n_dim, los = std::move(los),
                  his = std::move(his)](std::span<const double> x) {
        for (int b = 0; b < n_boxes; ++b) {
            bool inside = true;
            for (int d = 0; d < n_dim && inside; ++d) {
                const std::size_t idx = static_cast<std::size_t>(b) * n_dim + d;
                inside = x[d] >= los[idx] && x[d] < his[idx];
            }
            if (inside) return true;
        }
        return false;
    };
    return s;
}

SetSpec random_ball_set(int n_dim, double target_measure, RngStream& rng,
                        std::uint64_t measure_samples) {
    if (n_dim < 1) throw DimensionError("random_ball_set: dimension must be >= 1");
    if (!(target_measure > 0.0 && target_measure < 1.0))
        throw DomainError("random_ball_set: measure must lie in (0, 1)");
    if (measure_samples < 1000)
        throw DomainError("random_ball_set: need at least 1000 measure samples");

    std::vector<double> center(n_dim);
    for (double& c : center) c = 0.7 * rng.next_normal();

    // The radius is the empirical target-quantile of ||X - center|| over a
    // fresh Monte Carlo cloud, so the set's measure is that empirical
    // fraction with a binomial standard error.
    std::vector<double> dist2(measure_samples);
    for (std::uint64_t i = 0; i < measure_samples; ++i) {
        double d2 = 0.0;
        for (int d = 0; d < n_dim; ++d) {
            const double v = rng.next_normal() - center[d];
            d2 += v * v;
        }
        dist2[i] = d2;
    }
    std::size_t idx = static_cast<std::size_t>(target_measure * measure_samples);
    idx = std::min(idx, dist2.size() - 1);
    std::nth_element(dist2.begin(), dist2.begin() + idx, dist2.end());
    const double r2 = dist2[idx];
    std::uint64_t inside = 0;
    for (double d2 : dist2) inside += d2 <= r2 ? 1 : 0;
    const double achieved = static_cast<double>(inside) / static_cast<double>(measure_samples);

    SetSpec s;
    s.dim = n_dim;
    s.measure = achieved;
    s.measure_se = binomial_se(achieved, measure_samples);
    s.kind = "ball";
    s.params = {{"center", center}, {"radius", std::sqrt(r2)}};
    s.contains = [center = std::move(center), r2](std::span<const double> x) {
        double d2 = 0.0;
        for (std::size_t d = 0; d < x.size(); ++d) {
            const double v = x[d] - center[d];
            d2 += v * v;
        }
        return d2 <= r2;
    };
    return s;
}

SetSpec random_defuzzified_set(int n_dim, double target_measure, RngStream& rng) {
    if (n_dim < 1 || n_dim > 3)
        throw DimensionError("random_defuzzified_set: dimension must be in [1, 3]");
    if (!(target_measure > 0.0 && target_measure < 1.0))
        throw DomainError("random_defuzzified_set: measure must lie in (0, 1)");

    std::vector<double> w(n_dim);
    for (double& v : w) v = rng.next_normal();
    const double scale = 0.8 + rng.next_double();
    const double bias = 0.5 * rng.next_normal();

    FuzzyPartition fuzzy(n_dim, 2, [w, scale, bias](std::span<const double> x,
                                                    std::span<double> out) {
        double dot = bias;
        for (std::size_t d = 0; d < x.size(); ++d) dot += w[d] * x[d];
        const double g = 1.0 / (1.0 + std::exp(-scale * dot));
        out[0] = g;
        out[1] = 1.0 - g;
    });

    const double delta = n_dim == 1 ? 0.05 : (n_dim == 2 ? 0.125 : 0.25);
    const std::vector<double> targets = {target_measure, 1.0 - target_measure};
    DefuzzifyResult res = defuzzify(fuzzy, delta, &targets);

    SetSpec s;
    s.dim = n_dim;
    s.measure = res.measures[0];
    s.measure_se = 0.0;
    s.kind = "defuzzified";
    s.params = {{"weights", w}, {"scale", scale}, {"bias", bias}, {"delta", delta}};
    s.contains = [p = std::make_shared<GaussianPartition>(std::move(res.partition))](
                     std::span<const double> x) { return p->classify(x) == 0; };
    return s;
}

// --- positive-rho joint-stability audit ------------------------------------

nlohmann::json JointStabilityReport::to_json() const {
    nlohmann::json jcases = nlohmann::json::array();
    for (const JointStabilityCase& c : cases) {
        jcases.push_back({{"kinds", c.kinds},
                          {"measures", c.measures},
                          {"estimate", c.estimate},
                          {"estimate_se", c.estimate_se},
                          {"bound", c.bound},
                          {"bound_se", c.bound_se},
                          {"margin", c.margin},
                          {"combined_se", c.combined_se},
                          {"violation", c.violation},
                          {"family_seed", c.family_seed}});
    }
    return {{"op", "halfspace_bound_audit"},
            {"k", k},
            {"rho", rho},
            {"n_dim", n_dim},
            {"n_samples", n_samples},
            {"seed", seed},
            {"violations", violations},
            {"cases", std::move(jcases)}};
}

JointStabilityReport halfspace_bound_audit(int k, double rho,
                                           std::span<const double> target_measures,
                                           int n_dim, int n_families,
                                           std::uint64_t n_samples, std::uint64_t seed,
                                           int workers) {
    if (!(rho >= 0.0 && rho <= 1.0))
        throw RangeError("halfspace_bound_audit: the parallel half-space bound needs rho in "
                         "[0, 1]");
    ExchangeableCov cov(k, rho);
    if (static_cast<int>(target_measures.size()) != k)
        throw DimensionError("halfspace_bound_audit: need one target measure per set");
    for (double m : target_measures)
        if (!(m > 0.0 && m < 1.0))
            throw DomainError("halfspace_bound_audit: target measures must lie in (0, 1)");
    if (n_dim < 1) throw DimensionError("halfspace_bound_audit: dimension must be >= 1");
    if (n_families < 1) throw DomainError("halfspace_bound_audit: need at least one family");
    require_samples(n_samples);

    JointStabilityReport report;
    report.k = k;
    report.rho = rho;
    report.n_dim = n_dim;
    report.n_samples = n_samples;
    report.seed = seed;
    report.cases.reserve(n_families);

    const int n_kinds = n_dim <= 3 ? 4 : 3;
    RngStream gen_rng(seed, 0x6e5e7a70);  // generator draws, distinct from estimator streams

    for (int f = 0; f < n_families; ++f) {
        JointStabilityCase c;
        c.family_seed = seed + 1 + static_cast<std::uint64_t>(f);

        std::vector<SetSpec> sets;
        sets.reserve(k);
        double bound_se = 0.0;
        std::vector<double> thresholds(k);
        for (int j = 0; j < k; ++j) {
            const double m = target_measures[j];
            SetSpec s;
            switch ((f + j) % n_kinds) {
                case 0: s = random_halfspace_set(n_dim, m, gen_rng); break;
                case 1: s = random_box_union_set(n_dim, m, gen_rng); break;
                case 2: s = random_ball_set(n_dim, m, gen_rng); break;
                default: s = random_defuzzified_set(n_dim, m, gen_rng); break;
            }
            c.kinds.push_back(s.kind);
            c.measures.push_back(s.measure);
            thresholds[j] = normal_inv_cdf(s.measure);
            // d(bound)/d(measure_j) lies in [0, 1]: the bound is a joint CDF
            // evaluated at Phi^{-1} of the measures, so measure errors pass
            // through with derivative at most one.
            bound_se += s.measure_se;
            sets.push_back(std::move(s));
        }

        const StabilityEstimate lhs =
            joint_probability(sets, n_dim, cov, n_samples, c.family_seed, workers);
        const double rhs = exchangeable_orthant(thresholds, rho);

        c.estimate = lhs.value;
        c.estimate_se = lhs.std_error;
        c.bound = rhs;
        c.bound_se = bound_se;
        c.margin = rhs - lhs.value;
        c.combined_se = std::sqrt(lhs.std_error * lhs.std_error + bound_se * bound_se);
        c.violation = c.margin < -3.0 * c.combined_se;
        if (c.violation) ++report.violations;
        report.cases.push_back(std::move(c));
    }
    return report;
}

// --- balanced-partition probe ----------------------------------------------

nlohmann::json ProbeReport::to_json() const {
    nlohmann::json jcases = nlohmann::json::array();
    for (const ProbeCase& c : cases) {
        jcases.push_back({{"generator", c.generator},
                          {"gen_seed", c.gen_seed},
                          {"candidate", c.candidate},
                          {"candidate_se", c.candidate_se},
                          {"margin", c.margin},
                          {"combined_se", c.combined_se},
                          {"violation", c.violation},
                          {"partition", c.partition}});
    }
    return {{"op", "balanced_partition_probe"},
            {"q", q},
            {"n_dim", n_dim},
            {"rho", rho},
            {"n_samples", n_samples},
            {"seed", seed},
            {"simplex_value", simplex_value},
            {"simplex_se", simplex_se},
            {"violations", violations},
            {"cases", std::move(jcases)}};
}

namespace {

// Exactly balanced candidate partitions of R^n into q cells.
GaussianPartition make_probe_candidate(int idx, int q, int n_dim, RngStream& rng,
                                       std::string& generator) {
    const bool allow_pinwheel = n_dim >= 2;
    const bool allow_defuzz = n_dim <= 3;
    std::vector<int> menu = {0, 1};
    if (allow_pinwheel) menu.push_back(2);
    if (allow_defuzz) menu.push_back(3);
    switch (menu[idx % menu.size()]) {
        case 0: {
            generator = "stack";
            return GaussianPartition::halfspace_stack(std::vector<double>(q, 1.0 / q), n_dim);
        }
        case 1: {
            generator = "rotated_simplex";
            std::vector<double> rows = random_orthonormal_rows(q - 1, n_dim, rng);
            if (n_dim == q - 1) {
                // Rotating the canonical vertex vectors preserves the Gram
                // matrix, so the result is a serializable simplex kind.
                const std::vector<double> base = simplex_vectors(q);
                std::vector<double> rotated(static_cast<std::size_t>(q) * (q - 1), 0.0);
                for (int i = 0; i < q; ++i)
                    for (int d = 0; d < n_dim; ++d) {
                        double acc = 0.0;
                        for (int t = 0; t < q - 1; ++t)
                            acc += base[static_cast<std::size_t>(i) * (q - 1) + t] *
                                   rows[static_cast<std::size_t>(t) * n_dim + d];
                        rotated[static_cast<std::size_t>(i) * (q - 1) + d] = acc;
                    }
                return GaussianPartition::simplex_with_vectors(q, std::move(rotated));
            }
            auto base = std::make_shared<const std::vector<double>>(simplex_vectors(q));
            auto r = std::make_shared<const std::vector<double>>(std::move(rows));
            return GaussianPartition::callback(
                n_dim, q,
                [q, n_dim, base, r](std::span<const double> x) {
                    std::vector<double> y(static_cast<std::size_t>(q - 1), 0.0);
                    for (int t = 0; t < q - 1; ++t) {
                        double acc = 0.0;
                        for (int d = 0; d < n_dim; ++d)
                            acc += (*r)[static_cast<std::size_t>(t) * n_dim + d] * x[d];
                        y[t] = acc;
                    }
                    return classify_by_vectors(y, *base, q, q - 1);
                },
                "rotated_simplex");
        }
        case 2: {
            generator = "pinwheel";
            const int mult = 2 + static_cast<int>(rng.next_below(2));  // 2 or 3
            const double offset = rng.next_double() * 2.0 * std::numbers::pi;
            const double sector = 2.0 * std::numbers::pi / (q * mult);
            return GaussianPartition::callback(
                n_dim, q,
                [q, offset, sector](std::span<const double> x) {
                    double theta = std::atan2(x[1], x[0]) + offset;
                    theta -= 2.0 * std::numbers::pi *
                             std::floor(theta / (2.0 * std::numbers::pi));
                    const int s = static_cast<int>(theta / sector);
                    return s % q;
                },
                "pinwheel");
        }
        default: {
            generator = "defuzzified_softmax";
            std::vector<double> w(static_cast<std::size_t>(q) * n_dim);
            std::vector<double> b(q);
            for (double& v : w) v = rng.next_normal();
            for (double& v : b) v = 0.3 * rng.next_normal();
            const double scale = 0.8 + rng.next_double();
            FuzzyPartition fuzzy(n_dim, q,
                                 [q, n_dim, w, b, scale](std::span<const double> x,
                                                         std::span<double> out) {
                                     double mx = -1e300;
                                     for (int i = 0; i < q; ++i) {
                                         double dot = b[i];
                                         for (int d = 0; d < n_dim; ++d)
                                             dot += w[static_cast<std::size_t>(i) * n_dim + d] *
                                                    x[d];
                                         out[i] = scale * dot;
                                         mx = std::max(mx, out[i]);
                                     }
                                     double sum = 0.0;
                                     for (int i = 0; i < q; ++i) {
                                         out[i] = std::exp(out[i] - mx);
                                         sum += out[i];
                                     }
                                     for (int i = 0; i < q; ++i) out[i] /= sum;
                                 });
            const double delta = n_dim == 1 ? 0.05 : (n_dim == 2 ? 0.125 : 0.25);
            const std::vector<double> targets(q, 1.0 / q);
            return defuzzify(fuzzy, delta, &targets).partition;
        }
    }
}

}  // namespace

ProbeReport balanced_partition_probe(int q, int n_dim, double rho, int n_candidates,
                                     std::uint64_t n_samples, std::uint64_t seed,
                                     int workers) {
    if (q < 3) throw DomainError("balanced_partition_probe: q must be >= 3");
    if (q > n_dim + 1)
        throw DomainError("balanced_partition_probe: the simplex comparison needs q <= n + 1");
    if (!(rho >= -1.0 && rho <= 1.0))
        throw RangeError("balanced_partition_probe: correlation must lie in [-1, 1]");
    if (n_candidates < 1)
        throw DomainError("balanced_partition_probe: need at least one candidate");
    require_samples(n_samples);

    ProbeReport report;
    report.q = q;
    report.n_dim = n_dim;
    report.rho = rho;
    report.n_samples = n_samples;
    report.seed = seed;
    report.cases.reserve(n_candidates);

    const GaussianPartition simplex = GaussianPartition::simplex(q);
    std::uint64_t simplex_hits = 0;

    for (int c_idx = 0; c_idx < n_candidates; ++c_idx) {
        const std::uint64_t gen_seed = seed ^ (0x9e3779b97f4a7c15ull * (c_idx + 1));
        RngStream gen_rng(gen_seed, 0x6e5e7a71);
        ProbeCase pc;
        pc.gen_seed = gen_seed;
        const GaussianPartition candidate =
            make_probe_candidate(c_idx, q, n_dim, gen_rng, pc.generator);

        // Candidate and simplex see the same correlated draws; the simplex
        // lives on the first q-1 coordinates (a coordinate projection of a
        // standard pair is a standard pair of the same correlation).
        struct PairAcc {
            std::uint64_t cand = 0, simp = 0;
            PairAcc& operator+=(const PairAcc& o) {
                cand += o.cand;
                simp += o.simp;
                return *this;
            }
        };
        auto acc = parallel_accumulate(
            n_samples, workers, gen_seed + 1, 0, [&](RngStream& rng, std::uint64_t count) {
                PairAcc a;
                std::vector<double> x(n_dim), y(n_dim);
                const std::size_t sd = static_cast<std::size_t>(q - 1);
                for (std::uint64_t i = 0; i < count; ++i) {
                    sample_pair(n_dim, rho, rng, x, y);
                    a.cand += candidate.classify(x) == candidate.classify(y) ? 1 : 0;
                    a.simp += simplex.classify(std::span<const double>(x.data(), sd)) ==
                                      simplex.classify(std::span<const double>(y.data(), sd))
                                  ? 1
                                  : 0;
                }
                return a;
            });

        const double cand_p = static_cast<double>(acc.cand) / static_cast<double>(n_samples);
        const double simp_p = static_cast<double>(acc.simp) / static_cast<double>(n_samples);
        const double cand_se = binomial_se(cand_p, n_samples);
        const double simp_se = binomial_se(simp_p, n_samples);
        simplex_hits += acc.simp;

        pc.candidate = cand_p;
        pc.candidate_se = cand_se;
        pc.margin = rho >= 0.0 ? simp_p - cand_p : cand_p - simp_p;
        pc.combined_se = std::sqrt(cand_se * cand_se + simp_se * simp_se);
        pc.violation = pc.margin < -3.0 * pc.combined_se;
        pc.partition = candidate.to_json();
        if (pc.violation) ++report.violations;
        report.cases.push_back(std::move(pc));
    }

    const std::uint64_t total = static_cast<std::uint64_t>(n_candidates) * n_samples;
    report.simplex_value = static_cast<double>(simplex_hits) / static_cast<double>(total);
    report.simplex_se = binomial_se(report.simplex_value, total);
    return report;
}

}  // namespace nstab
