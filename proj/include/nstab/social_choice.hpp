#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "nstab/estimate.hpp"
#include "nstab/fourier.hpp"
#include "nstab/rng.hpp"

namespace nstab {

// Largest exact profile enumeration: (k!)^n <= 2^24.
inline constexpr std::uint64_t kMaxExactProfiles = std::uint64_t{1} << 24;
// Largest tabled vote function: q^n (or 2^n) <= 2^20 points.
inline constexpr std::uint64_t kMaxVoteTablePoints = std::uint64_t{1} << 20;

// Decision rule on signed votes: maps a vector in {-1,+1}^n to {0,1}.
using VoteRule = std::function<int(std::span<const int>)>;

// 1 when the vote sum is positive, 0 when negative, 1 on a zero sum. A zero
// sum only occurs for even n, and aggregate's anti-symmetry check rejects
// the rule in that case, so no tie-break policy leaks into results.
VoteRule majority_rule(int n);

enum class EstimateMode { exact, monte_carlo };

// Ranked ballots: orders[i][c] is the rank voter i gives candidate c, each
// row a permutation of 0..k-1 with larger rank preferred.
struct RankingProfile {
    int n = 0;
    int k = 0;
    std::vector<std::vector<int>> orders;

    RankingProfile(int n, int k, std::vector<std::vector<int>> orders);

    // n rankings drawn independently and uniformly from the k! orders.
    static RankingProfile random(int k, int n, RngStream& rng);

    nlohmann::json to_json() const;
    static RankingProfile from_json(const nlohmann::json& j);
};

// Signed votes on the ordered pair (a, b): +1 from each voter ranking a above
// b, -1 otherwise. Swapping a and b negates the vector.
std::vector<int> pairwise_votes(const RankingProfile& p, int a, int b);

// Round-robin outcome: exactly one direction per unordered pair.
class Tournament {
public:
    // wins is k*k row-major with wins[a*k+b] = 1 iff a beats b; the diagonal
    // must be 0 and exactly one of (a,b), (b,a) must be set.
    Tournament(int k, std::vector<std::uint8_t> wins);

    int k() const { return k_; }
    bool beats(int a, int b) const;
    // The candidate that beats all k-1 others, if one exists (at most one can).
    std::optional<int> unique_best() const;

    nlohmann::json to_json() const;

private:
    int k_ = 0;
    std::vector<std::uint8_t> wins_;
};

// Decides every pair by applying f to its vote vector. f must be
// anti-symmetric, f(-x) = 1 - f(x); that is checked over all 2^n sign
// vectors when n <= 20 and over a fixed deterministic sample otherwise,
// AntiSymmetryError on failure.
Tournament aggregate(const RankingProfile& p, const VoteRule& f);

// P[some candidate beats all others] under i.i.d. uniform rankings, with the
// per-candidate split (disjoint events, so the split sums to the total).
struct UniqueBestReport {
    int k = 0;
    int n = 0;
    StabilityEstimate prob;
    std::vector<double> per_candidate;

    nlohmann::json to_json() const;
};

// Exact mode enumerates all (k!)^n profiles (ScaleError past 2^24) and
// ignores n_samples; Monte Carlo samples profiles. The pair (a, b) is decided
// by f on the a-over-b vote vector, so an anti-symmetric f reproduces the
// round-robin semantics of aggregate.
UniqueBestReport unique_best_prob(const VoteRule& f, int k, int n, EstimateMode mode,
                                  std::uint64_t n_samples, std::uint64_t seed,
                                  int workers = 1);

// n -> infinity value of unique_best_prob with the majority rule: k times the
// orthant mass of k-1 exchangeable standard normals with correlation 1/3.
double majority_unique_best_limit(int k);

// P[f(Y_1) = ... = f(Y_k)] where each player's Y_i copies a uniform source
// bitwise with probability (1+rho)/2 and flips it otherwise, independently
// across players. Exact mode conditions on the source: it tables f, smooths
// with the noise operator at rho, and averages p^k + (1-p)^k over the table
// (2^n <= 2^20, ScaleError past that). rho must lie in [0, 1].
StabilityEstimate cosmic_coin_prob(const VoteRule& f, int k, int n, double rho,
                                   EstimateMode mode, std::uint64_t n_samples,
                                   std::uint64_t seed, int workers = 1);

// n -> infinity value for the majority rule: twice the orthant mass of k
// exchangeable standard normals with correlation rho^2.
double majority_coin_limit(int k, double rho);

// Vote shares with ties split evenly: component c is 1/#winners when c ties
// for the most votes, 0 otherwise. votes holds labels in [0, q); out has
// size q.
void plurality_shares(std::span<const int> votes, int q, std::span<double> out);

// Dense simplex-valued table of the share function on [q]^n (q^n <= 2^20),
// ready for the transform-based stability paths.
DiscreteFunction plurality_table(int q, int n);

// E<shares(omega), shares(lambda)> over rho-correlated uniform vote pairs.
// Streaming, so n is unrestricted; rho must lie in [-1/(q-1), 1].
StabilityEstimate plurality_noise_stability(int q, int n, double rho,
                                            std::uint64_t n_samples, std::uint64_t seed,
                                            int workers = 1);

// n -> infinity value of the above: the agreement probability of the
// standard simplex partition at the same correlation.
StabilityEstimate plurality_stability_limit(int q, double rho, std::uint64_t n_samples,
                                            std::uint64_t seed, int workers = 1);

}  // namespace nstab
