#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "nstab/estimate.hpp"
#include "nstab/partition.hpp"
#include "nstab/rng.hpp"

namespace nstab {

// Largest dense table: q^n <= 2^24 points.
inline constexpr std::uint64_t kMaxTablePoints = std::uint64_t{1} << 24;
// Largest all-pairs enumeration: q^(2n) <= 2^26.
inline constexpr std::uint64_t kMaxPairPoints = std::uint64_t{1} << 26;

// Orthonormal function basis on {0..q-1} under the uniform measure:
// element 0 is the constant 1, elements 1..q-1 have mean zero, and
// (1/q) * sum_w at(a,w)*at(b,w) = delta_ab.
class QBasis {
public:
    static QBasis helmert(int q);
    // Rows 1..q-1 of the Helmert basis remixed by a random orthogonal matrix;
    // still orthonormal, used to confirm basis-independent quantities.
    static QBasis rotated(int q, RngStream& rng);

    int q() const { return q_; }
    double at(int elem, int omega) const {
        return m_[static_cast<std::size_t>(elem) * q_ + omega];
    }

private:
    QBasis(int q, std::vector<double> m) : q_(q), m_(std::move(m)) {}
    int q_ = 0;
    std::vector<double> m_;  // q x q row-major, row = basis element
};

enum class RangeTag { real, simplex, vertex, unit_interval };

std::string to_string(RangeTag tag);
RangeTag range_tag_from_string(const std::string& s);

// Dense vector-valued function on [q]^n. Points are indexed lexicographically
// with coordinate 0 most significant (the last coordinate varies fastest);
// each point stores k contiguous components.
class DiscreteFunction {
public:
    DiscreteFunction(int q, int n, int k, RangeTag tag, std::vector<double> table);

    static DiscreteFunction from_evaluator(
        int q, int n, int k, RangeTag tag,
        const std::function<void(std::span<const int>, std::span<double>)>& eval);
    // One-hot encoding of a cell-valued function (range E_k).
    static DiscreteFunction vertex_from_labels(int q, int n, int k,
                                               const std::function<int(std::span<const int>)>& f);

    int q() const { return q_; }
    int n() const { return n_; }
    int k() const { return k_; }
    RangeTag tag() const { return tag_; }
    std::uint64_t size() const { return points_; }

    std::span<const double> value(std::uint64_t index) const {
        return {table_.data() + index * k_, static_cast<std::size_t>(k_)};
    }
    std::span<const double> table() const { return table_; }

    std::uint64_t index_of(std::span<const int> omega) const;
    void point_at(std::uint64_t index, std::span<int> omega) const;

    nlohmann::json to_json() const;
    static DiscreteFunction from_json(const nlohmann::json& j);

private:
    int q_ = 0, n_ = 0, k_ = 0;
    RangeTag tag_ = RangeTag::real;
    std::uint64_t points_ = 0;
    std::vector<double> table_;
};

// Multilinear expansion over a per-coordinate orthonormal basis: the
// coefficient of multi-index sigma sits at the same lexicographic position
// sigma would have as a point of [q]^n.
class MultilinearPoly {
public:
    MultilinearPoly(int q, int n, int k, std::vector<double> coeffs);

    int q() const { return q_; }
    int n() const { return n_; }
    int k() const { return k_; }
    std::uint64_t size() const { return points_; }
    std::span<const double> coeff(std::uint64_t index) const {
        return {coeffs_.data() + index * k_, static_cast<std::size_t>(k_)};
    }
    std::span<const double> coeffs() const { return coeffs_; }

    // Number of nonzero digits of the multi-index at `index`.
    int degree_of(std::uint64_t index) const;
    // Largest degree with a coefficient of magnitude > 1e-12.
    int degree() const;

    std::vector<double> expectation() const;         // c_0
    double total_weight() const;                     // sum ||c_sigma||^2
    double variance() const;                         // weight above degree 0

    // Evaluate at one real assignment x[(i,a)] of the basis variables,
    // a = 1..q-1 per coordinate i (row-major i*(q-1) + (a-1)).
    void evaluate(std::span<const double> x, std::span<double> out) const;

    nlohmann::json to_json() const;
    static MultilinearPoly from_json(const nlohmann::json& j);

private:
    int q_ = 0, n_ = 0, k_ = 0;
    std::uint64_t points_ = 0;
    std::vector<double> coeffs_;
};

MultilinearPoly transform(const DiscreteFunction& f);
MultilinearPoly transform(const DiscreteFunction& f, const QBasis& basis);
DiscreteFunction inverse_transform(const MultilinearPoly& p, RangeTag tag = RangeTag::real);
DiscreteFunction inverse_transform(const MultilinearPoly& p, const QBasis& basis,
                                   RangeTag tag = RangeTag::real);

// c_sigma -> rho^{|sigma|} c_sigma; rho must lie in [-1/(q-1), 1].
MultilinearPoly noise_operator(const MultilinearPoly& p, double rho);

// sum_sigma rho^{|sigma|} ||c_sigma||^2 via the transform.
double noise_stability_fourier(const DiscreteFunction& f, double rho);
// Literal sum over all pairs (omega, lambda) weighted by the conditional
// lambda_i = omega_i with prob rho, else uniform. ScaleError when q^(2n) is
// too large.
double noise_stability_brute(const DiscreteFunction& f, double rho);

// Draw omega uniform on [q]^n and lambda rho-correlated coordinatewise.
void sample_correlated_pair(int q, int n, double rho, RngStream& rng, std::span<int> omega,
                            std::span<int> lambda);

// Monte Carlo noise stability of a label-valued function given as an
// evaluator: P(f(omega) = f(lambda)).
StabilityEstimate noise_stability_mc(const std::function<int(std::span<const int>)>& f, int q,
                                     int n, double rho, std::uint64_t n_samples,
                                     std::uint64_t seed, int workers = 1);

// Influence of coordinate i (zero-based): sum of ||c_sigma||^2 over sigma
// with a nonzero digit at i; the direct path computes E[Var over coordinate i]
// from the table.
double influence(const MultilinearPoly& p, int i);
double influence_direct(const DiscreteFunction& f, int i);
// Restriction to |sigma| <= d.
double low_degree_influence(const MultilinearPoly& p, int i, int d);

// Correlated finite product space: joint distribution on [s1] x [s2].
struct FiniteJoint {
    int s1 = 0, s2 = 0;
    std::vector<double> probs;  // s1 x s2 row-major, entries >= 0, total 1
    FiniteJoint(int s1, int s2, std::vector<double> probs);
    std::vector<double> row_marginal() const;
    std::vector<double> col_marginal() const;
};

// Second singular value of probs_ab / sqrt(marg1_a * marg2_b), in [0, 1].
// DegenerateError on a zero marginal. When the support graph is connected
// with minimum positive entry alpha, the result is self-checked against the
// 1 - alpha^2/2 bound.
double maximal_correlation(const FiniteJoint& j);

// rho-correlated uniform pair on [q]: mu(w,l) = rho*1{w=l}/q + (1-rho)/q^2.
FiniteJoint correlated_uniform_joint(int q, double rho);

// --- invariance gap ----------------------------------------------------------
// Compares E psi(f(omega), f(lambda)) for a rho-correlated discrete pair
// against E psi(Q(Z), Q(Z')) where each basis variable is replaced by a
// standard Gaussian and pairs are rho-correlated per variable.

enum class TestFunctional {
    clamp_product,   // product over all components of both halves, clamped to [0,1]
    simplex_inner,   // inner product of the simplex projections of the halves
};

std::string to_string(TestFunctional psi);

struct InvarianceReport {
    std::string psi;
    double rho = 0.0;
    double discrete_value = 0.0;
    double discrete_se = 0.0;
    double gaussian_value = 0.0;
    double gaussian_se = 0.0;
    double gap = 0.0;            // |discrete - gaussian|
    double combined_se = 0.0;
    double max_influence = 0.0;  // tau of f
    int degree = 0;
    std::uint64_t n_samples = 0;
    std::uint64_t seed = 0;
    nlohmann::json to_json() const;
};

InvarianceReport invariance_gap(const DiscreteFunction& f, TestFunctional psi, double rho,
                                std::uint64_t n_samples, std::uint64_t seed, int workers = 1);

// Streaming variant for the Boolean majority on n (odd) bits, one-hot valued;
// never builds the 2^n table. The Gaussian side evaluates the multilinear
// expansion through elementary symmetric polynomials of the inputs.
InvarianceReport majority_invariance_gap(int n, TestFunctional psi, double rho,
                                         std::uint64_t n_samples, std::uint64_t seed,
                                         int workers = 1);

// Per-set expansion coefficients of the +-1 majority (sign of the coordinate
// sum) on n (odd) inputs: entry d is the common coefficient of every
// degree-d monomial; even degrees are zero.
std::vector<double> majority_sign_coefficients(int n);

// Influence of a single coordinate of the +-1 majority on n (odd) bits.
double majority_sign_influence(int n);

// --- Gaussian partition -> discrete function --------------------------------
// f(omega) = cell of g at the standardized block sums
// V_i(omega) = q/sqrt((q-1) r) * sum_{j in block i} (1{omega_j = 1} - 1/q),
// with omega in [q]^{r * dim(g)}.
class BlockFunction {
public:
    BlockFunction(GaussianPartition g, int q, int r);

    int q() const { return q_; }
    int r() const { return r_; }
    int coords() const { return r_ * g_.dim(); }
    int cells() const { return g_.cells(); }
    const GaussianPartition& partition() const { return g_; }

    int operator()(std::span<const int> omega) const;
    void block_sums(std::span<const int> omega, std::span<double> v) const;

    // One-hot table; ScaleError when q^(r*dim) exceeds the dense limit.
    DiscreteFunction to_table() const;

private:
    GaussianPartition g_;
    int q_ = 0, r_ = 0;
    double scale_ = 0.0;
};

}  // namespace nstab
