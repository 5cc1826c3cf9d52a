#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "nstab/partition.hpp"
#include "nstab/rng.hpp"

namespace nstab {

// Largest exact labeling enumeration: q^V <= 2^24.
inline constexpr std::uint64_t kMaxBruteLabelings = std::uint64_t{1} << 24;
// Largest reduced graph: q^M * |W| <= 2^20 vertices.
inline constexpr std::uint64_t kMaxReductionVertices = std::uint64_t{1} << 20;
// Largest verifier enumeration: |V| * degree^2 * q^(2M) terms.
inline constexpr std::uint64_t kMaxVerifierTerms = std::uint64_t{1} << 26;

struct WeightedEdge {
    int u = 0, v = 0;
    double w = 1.0;
};

// Edge-weighted graph to be split into q parts, maximizing the weight of
// edges whose endpoints get different labels. Edges are canonicalized to
// u <= v and sorted; one entry per unordered pair. Self-loops are legal but
// can never be cut.
class MaxQCutInstance {
public:
    MaxQCutInstance(int q, int vertices, std::vector<WeightedEdge> edges);

    int q() const { return q_; }
    int vertices() const { return vertices_; }
    std::span<const WeightedEdge> edges() const { return edges_; }
    double total_weight() const { return total_weight_; }

    // Weight of edges cut by the labeling (labels in [0, q), size = vertices).
    double cut_value(std::span<const int> labels) const;

    // Text form: '#' comment lines, then one "u v w" line per edge in
    // canonical order. A "# vertices N" comment carries isolated vertices.
    std::string to_text() const;
    static MaxQCutInstance from_text(const std::string& text, int q);

private:
    int q_ = 0;
    int vertices_ = 0;
    double total_weight_ = 0.0;
    std::vector<WeightedEdge> edges_;
};

// Instance generators used by the benchmark harness. Weights are uniform on
// [0, 1] unless unit_weights is set.
MaxQCutInstance random_gnp_instance(int vertices, double p, int q, bool unit_weights,
                                    RngStream& rng);
MaxQCutInstance complete_instance(int vertices, int q, bool unit_weights, RngStream& rng);
MaxQCutInstance bipartite_instance(int left, int right, double p, int q, bool unit_weights,
                                   RngStream& rng);
MaxQCutInstance petersen_instance(int q);

struct BruteForceResult {
    double value = 0.0;
    std::vector<int> labels;
};

// Exact optimum by enumeration; label 0 is pinned on vertex 0 since color
// permutations preserve the cut. ScaleError when q^V > 2^24.
BruteForceResult brute_force_opt(const MaxQCutInstance& g);

// Low-rank solution of the relaxation
//   max (q-1)/q * sum w (1 - z_u . z_v)   over unit vectors with pairwise
//   dots >= -1/(q-1).
struct SdpSolution {
    int vertices = 0;
    int q = 0;
    int r = 0;                  // embedding dimension
    std::vector<double> z;      // vertices x r row-major, unit rows
    double objective = 0.0;
    double delta = 0.0;         // accuracy target the solve ran with
    double norm_residual = 0.0; // max | ||z_u||^2 - 1 |
    double dot_residual = 0.0;  // max constraint violation, 0 when feasible
    double kkt_residual = 0.0;  // stationarity + complementarity, scaled
    int restarts = 0;

    double dot(int u, int v) const;
    nlohmann::json to_json() const;
};

// Factorized ascent at rank min(V, ceil(sqrt(2V)) + 1): pairwise constraints
// via an augmented Lagrangian with multipliers clamped at zero, unit norms by
// row renormalization, best of `restarts` random starts. delta < 0 picks the
// default 1e-4 * total weight. ConvergenceError when no restart reaches
// feasibility 1e-6 and KKT residual 1e-4.
SdpSolution sdp_solve(const MaxQCutInstance& g, double delta = -1.0, std::uint64_t seed = 0,
                      int restarts = 8);

struct RoundingReport {
    std::vector<int> best_labels;
    double best_value = 0.0;
    double mean_value = 0.0;
    double mean_se = 0.0;
    int repeats = 0;
    std::uint64_t seed = 0;

    nlohmann::json to_json() const;
};

// Projects the solution through a fresh Gaussian matrix per repeat and labels
// each vertex by the partition cell of its projection; reports the best and
// mean cut value. The partition must have q cells; its dimension sets the
// projection size.
RoundingReport round_sdp(const SdpSolution& sol, const MaxQCutInstance& g,
                         const GaussianPartition& partition, int repeats, std::uint64_t seed,
                         int workers = 1);
// Standard rounding: the simplex partition of R^(q-1).
RoundingReport round_sdp(const SdpSolution& sol, const MaxQCutInstance& g, int repeats,
                         std::uint64_t seed, int workers = 1);

struct AlphaReport {
    int q = 0;
    double alpha = 0.0;
    double rho_star = 0.0;
    double std_error = 0.0;  // propagated at rho_star; 0 for the closed form
    std::string method;
    bool full_range = false;
    std::uint64_t n_samples = 0;
    std::uint64_t seed = 0;

    nlohmann::json to_json() const;
};

// Worst-case ratio of the simplex rounding:
//   alpha_q = inf_rho (q/(q-1)) (1 - S(rho)) / (1 - rho)
// with S the agreement probability of the simplex partition at correlation
// rho. The search covers rho in [-1/(q-1), 0]; positive rho cannot attain the
// infimum, but full_range = true extends the scan toward 1 as an audit. q = 2
// is closed form (Newton on the critical angle) unless force_mc selects the
// generic grid + golden-section path, which evaluates S by common-random-
// number replay at each rho. n_samples = 0 picks 10^6 per evaluation.
AlphaReport alpha_q(int q, std::uint64_t n_samples = 0, std::uint64_t seed = 0,
                    bool full_range = false, bool force_mc = false, int workers = 1);

struct RatioCase {
    std::string generator;
    int vertices = 0;
    int edge_count = 0;
    double opt = 0.0;
    double sdp_val = 0.0;
    double delta = 0.0;
    double rounded_best = 0.0;
    double rounded_mean = 0.0;
    double rounded_se = 0.0;
    double best_over_opt = 0.0;
    double mean_over_sdp = 0.0;
    double sdp_over_opt = 0.0;
    bool dominance_ok = false;  // sdp_val + delta >= opt
    bool flagged = false;       // mean_over_sdp < alpha_ref - 3 * se

    nlohmann::json to_json() const;
};

struct RatioReport {
    int q = 0;
    double alpha_ref = 0.0;
    int trials = 0;
    int repeats = 0;
    std::uint64_t seed = 0;
    std::vector<RatioCase> cases;
    int flagged_count = 0;
    bool dominance_all = false;

    nlohmann::json to_json() const;
};

// Rotates through the generator menu (gnp, complete, bipartite, petersen),
// solves each instance exactly and by relaxation + rounding, and reports the
// ratio triple per instance. Instances stay small enough for the exact
// oracle; empty random draws are resampled.
RatioReport approx_ratio_harness(int q, int trials, int repeats, double alpha_ref,
                                 std::uint64_t seed, int workers = 1);

// ----- Unique label cover and the verifier reduction -----

struct UlcEdge {
    int v = 0, w = 0;
    std::vector<int> perm;  // bijection [M] -> [M]; perm[l(w)] == l(v) satisfies
};

// Bipartite constraint graph with one permutation per edge. The V side must
// be regular (every v has the same degree), so a uniformly random
// (v, neighbor) pick is a uniformly random edge.
class UlcInstance {
public:
    UlcInstance(int label_size, int v_count, int w_count, std::vector<UlcEdge> edges);

    int label_size() const { return m_; }
    int v_count() const { return n_v_; }
    int w_count() const { return n_w_; }
    int v_degree() const { return degree_; }
    std::span<const UlcEdge> edges() const { return edges_; }
    // Indices into edges() of the edges at v.
    std::span<const int> edges_of(int v) const;

    // Fraction of edges with perm[labels_w[w]] == labels_v[v].
    double value(std::span<const int> labels_v, std::span<const int> labels_w) const;

    nlohmann::json to_json() const;
    static UlcInstance from_json(const nlohmann::json& j);

private:
    int m_ = 0, n_v_ = 0, n_w_ = 0, degree_ = 0;
    std::vector<UlcEdge> edges_;
    std::vector<int> by_v_;  // edge indices grouped by v, degree_ per vertex
};

// Instance with a planted labeling that satisfies every edge (value 1).
UlcInstance random_satisfiable_ulc(int label_size, int v_count, int w_count, int degree,
                                   RngStream& rng);

// Graph image of the two-query verifier: vertices are proof positions
// (w, x) with id w * q^M + lex(x); each (v, w, w', x, y) outcome adds its
// probability to the edge between the two queried positions. Coinciding
// positions become self-loops, which the cut can never collect.
struct UlcReduction {
    MaxQCutInstance graph;
    int q = 0;
    int label_size = 0;
    int w_count = 0;
    double rho = 0.0;
    bool exact = false;  // rational accumulation path was used

    nlohmann::json metadata() const;
};

// rho in [-1/(q-1), 1]; ScaleError when the vertex or enumeration budget is
// exceeded. Masses are accumulated in exact rationals when rho reduces to a
// small fraction and q^M * M <= 2^12, otherwise by compensated summation;
// either way the total is 1 within 1e-12.
UlcReduction ulc_reduce(const UlcInstance& l, int q, double rho);

// Acceptance probability of an arbitrary proof: tables[w] lists f_w over
// [q]^M in lexicographic order.
double proof_acceptance(const UlcInstance& l, const std::vector<std::vector<int>>& tables,
                        int q, double rho);

// Exact acceptance as a reduced fraction, for rho = rho_num / rho_den.
// ScaleError when the rational budget does not cover the instance.
std::pair<long long, long long> proof_acceptance_exact(
    const UlcInstance& l, const std::vector<std::vector<int>>& tables, int q,
    long long rho_num, long long rho_den);

// Acceptance of the honest long-code proof f_w(x) = x[labels_w[w]].
double long_code_value(const UlcInstance& l, std::span<const int> labels_w, int q, double rho);

// The reduced-graph labeling induced by that proof (cut value equals
// long_code_value up to the float accumulation error).
std::vector<int> long_code_cut(const UlcInstance& l, std::span<const int> labels_w, int q);

struct DecodeResult {
    std::vector<int> labels_v, labels_w;
    std::vector<double> influence_v, influence_w;  // winning low-degree influence
    int degree = 0;
    double tau = 0.0;
    double ulc_value = 0.0;  // value of the decoded labeling on the source instance

    nlohmann::json to_json() const;
};

// Reads the proof tables back out of a cut of the reduced graph and labels
// every vertex by its most influential coordinate (degree <= d); influences
// below tau are reported but still labeled by the argmax. Diagnostic only --
// no soundness constant is claimed. MetadataError when the reduction and
// instance do not describe the same object.
DecodeResult influence_decode(const UlcReduction& red, const UlcInstance& l,
                              std::span<const int> cut_labels, int d, double tau);

}  // namespace nstab
