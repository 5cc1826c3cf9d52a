#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <utility>
#include <vector>

#include "nstab/estimate.hpp"
#include "nstab/rng.hpp"

namespace nstab {

// All quadratures against the standard normal density are truncated to
// [-kGaussWindow, kGaussWindow]; the discarded tail mass is < 1e-16.
inline constexpr double kGaussWindow = 8.5;

double normal_pdf(double x);
double normal_cdf(double x);

// Inverse standard normal CDF. Rational initial guess polished by two Halley
// steps against normal_cdf; |normal_cdf(normal_inv_cdf(p)) - p| <= 1e-9 on
// (0,1). Returns -/+infinity at p = 0/1, throws DomainError outside [0,1].
double normal_inv_cdf(double p);

// Adaptive 15-point Gauss-Kronrod with 7-point error control on [a, b].
// Splits until the local error estimate is below abs_tol; throws
// ConvergenceError if the interval budget runs out.
double integrate_gk(const std::function<double(double)>& f, double a, double b,
                    double abs_tol);

// Covariance with unit diagonal and constant off-diagonal correlation rho.
// Valid range is rho in [-1/(k-1), 1]; anything else is not a covariance.
struct ExchangeableCov {
    int k;
    double rho;

    ExchangeableCov(int k, double rho);

    double min_rho() const { return k > 1 ? -1.0 / (k - 1) : -1.0; }

    std::vector<double> matrix() const;   // k*k row-major
    std::vector<double> inverse() const;  // k*k row-major; RangeError at the endpoints

    // {1 + (k-1) rho (multiplicity 1), 1 - rho (multiplicity k-1)}
    std::pair<double, double> eigenvalues() const;
};

// Draws k vectors of dimension n whose coordinates are i.i.d. across i and
// exchangeable across j with correlation rho. Uses the spectral form
//   X_j = sqrt(1-rho) G_j + ((sqrt(1+(k-1)rho) - sqrt(1-rho))/k) sum_l G_l,
// which is valid on the whole admissible range including negative rho.
// out must have size k*n, row j holding vector X_j.
void sample_exchangeable(const ExchangeableCov& cov, int n, RngStream& rng,
                         std::span<double> out);

// Reference sampler via dense Cholesky of the k x k covariance. Same law as
// sample_exchangeable; kept as an independent cross-check path.
void sample_exchangeable_cholesky(const ExchangeableCov& cov, int n, RngStream& rng,
                                  std::span<double> out);

// rho-correlated standard normal pair in R^n: y = rho x + sqrt(1-rho^2) xi.
// rho may be anywhere in [-1, 1].
void sample_pair(int n, double rho, RngStream& rng, std::span<double> x,
                 std::span<double> y);

// P(X <= a, Y <= b) for standard bivariate normals with correlation rho.
// 1D quadrature of phi(x) Phi((b - rho x)/sqrt(1-rho^2)); absolute error
// <= 1e-10. Closed-form branches at rho = 0, +-1.
double bivariate_orthant(double a, double b, double rho);

// P(X_j <= a_j for all j) under ExchangeableCov(k, rho), by shared-factor
// quadrature; absolute error <= 1e-8. Requires rho in [0, 1] when k >= 3
// (RangeError otherwise; use exchangeable_orthant_mc for negative rho).
// k = 2 accepts any rho in [-1, 1] via the bivariate quadrature.
double exchangeable_orthant(std::span<const double> a, double rho);

// Monte Carlo fallback valid on the whole admissible rho range.
StabilityEstimate exchangeable_orthant_mc(std::span<const double> a, double rho,
                                          std::uint64_t n_samples, std::uint64_t seed,
                                          int workers = 1);

// `rows` orthonormal vectors in R^n (rows x n, row-major), Haar-distributed
// via Gram-Schmidt on Gaussian draws. Requires rows <= n.
std::vector<double> random_orthonormal_rows(int rows, int n, RngStream& rng);

}  // namespace nstab
