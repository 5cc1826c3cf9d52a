#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "nstab/estimate.hpp"
#include "nstab/gauss.hpp"
#include "nstab/partition.hpp"
#include "nstab/rng.hpp"

namespace nstab {

// Indicator of a measurable subset of R^n.
using Membership = std::function<bool(std::span<const double>)>;

// One set in a joint-stability family: the indicator plus its Gaussian
// measure and the standard error of that measure (0 when the measure is
// exact by construction).
struct SetSpec {
    Membership contains;
    int dim = 0;
    double measure = 0.0;
    double measure_se = 0.0;
    std::string kind;          // "halfspace", "box_union", "ball", "defuzzified"
    nlohmann::json params;     // generator parameters, for reproducibility
};

// P(X_j in A_j for all j) where (X_1..X_k) ~ N(0, cov (x) I_n).
// sets.size() must equal cov.k and every set must have dim == n_dim.
StabilityEstimate joint_probability(std::span<const SetSpec> sets, int n_dim,
                                    const ExchangeableCov& cov,
                                    std::uint64_t n_samples, std::uint64_t seed,
                                    int workers = 1);

// P(partition agrees on a rho-correlated pair), i.e. sum_i P(X in A_i, Y in A_i)
// with (X, Y) standard normal pairs of correlation rho per coordinate.
// Two-cell halfspace stacks use the closed form 2*Phi_2(c,c;rho) + 1 - 2*Phi(c)
// (method "closed_form"); everything else is Monte Carlo.
StabilityEstimate pair_partition_stability(const GaussianPartition& p, double rho,
                                           std::uint64_t n_samples, std::uint64_t seed,
                                           int workers = 1);

// Pair agreement probability of the balanced q-cell simplex partition.
// q = 2 has the closed form 1/2 + asin(rho)/pi; q >= 3 is Monte Carlo.
StabilityEstimate simplex_pair_stability(int q, double rho, std::uint64_t n_samples,
                                         std::uint64_t seed, int workers = 1);

// --- random set generators -------------------------------------------------
// Each returns a set of the requested Gaussian measure (exactly, except the
// ball whose measure is an empirical quantile with binomial standard error).

SetSpec random_halfspace_set(int n_dim, double target_measure, RngStream& rng);
SetSpec random_box_union_set(int n_dim, double target_measure, RngStream& rng);
SetSpec random_ball_set(int n_dim, double target_measure, RngStream& rng,
                        std::uint64_t measure_samples = 200000);
// Smooth sigmoid cell snapped to a crisp set of exact measure; n_dim <= 3.
SetSpec random_defuzzified_set(int n_dim, double target_measure, RngStream& rng);

// --- positive-rho joint-stability audit ------------------------------------
// For each random family (A_1..A_k) of the given target measures, compares
// the Monte Carlo estimate of P(X_j in A_j for all j) against the parallel
// half-space family of the same measures (deterministic quadrature), which
// maximizes the joint probability for rho >= 0. margin = bound - estimate;
// a violation is margin < -3 * combined_se.

struct JointStabilityCase {
    std::vector<std::string> kinds;
    std::vector<double> measures;       // achieved measures
    double estimate = 0.0;
    double estimate_se = 0.0;
    double bound = 0.0;
    double bound_se = 0.0;              // propagated from MC-measured sets
    double margin = 0.0;
    double combined_se = 0.0;
    bool violation = false;
    std::uint64_t family_seed = 0;
};

struct JointStabilityReport {
    int k = 0;
    double rho = 0.0;
    int n_dim = 0;
    std::uint64_t n_samples = 0;
    std::uint64_t seed = 0;
    std::vector<JointStabilityCase> cases;
    int violations = 0;
    nlohmann::json to_json() const;
};

JointStabilityReport halfspace_bound_audit(int k, double rho,
                                           std::span<const double> target_measures,
                                           int n_dim, int n_families,
                                           std::uint64_t n_samples, std::uint64_t seed,
                                           int workers = 1);

// --- balanced-partition probe ----------------------------------------------
// Generates balanced q-cell partitions of R^n (q <= n + 1) and compares each
// pair-agreement probability against the simplex partition on common random
// draws. For rho >= 0 the simplex is conjectured maximal (margin =
// simplex - candidate); for rho < 0 minimal (margin = candidate - simplex).
// A violation is margin < -3 * combined_se and carries the serialized
// candidate (or its generator metadata when not serializable).

struct ProbeCase {
    std::string generator;
    std::uint64_t gen_seed = 0;
    double candidate = 0.0;
    double candidate_se = 0.0;
    double margin = 0.0;
    double combined_se = 0.0;
    bool violation = false;
    nlohmann::json partition;   // serialized candidate or serializable:false stub
};

struct ProbeReport {
    int q = 0;
    int n_dim = 0;
    double rho = 0.0;
    std::uint64_t n_samples = 0;
    std::uint64_t seed = 0;
    double simplex_value = 0.0;     // averaged across cases (shared draws)
    double simplex_se = 0.0;
    std::vector<ProbeCase> cases;
    int violations = 0;
    nlohmann::json to_json() const;
};

ProbeReport balanced_partition_probe(int q, int n_dim, double rho, int n_candidates,
                                     std::uint64_t n_samples, std::uint64_t seed,
                                     int workers = 1);

}  // namespace nstab
