#include "nstab/gauss.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "nstab/errors.hpp"

namespace nstab {

namespace {

constexpr double kSqrt2 = 1.4142135623730950488;
constexpr double kSqrt2Pi = 2.5066282746310005024;
constexpr double kInf = std::numeric_limits<double>::infinity();

// 15-point Kronrod nodes (positive half) with embedded 7-point Gauss rule.
constexpr double kGkNodes[8] = {
    0.99145537112081263921, 0.94910791234275852453, 0.86486442335976907279,
    0.74153118559939443986, 0.58608723546769113029, 0.40584515137739716691,
    0.20778495500789846760, 0.0};
constexpr double kGkWeights[8] = {
    0.02293532201052922496, 0.06309209262997855329, 0.10479001032225018384,
    0.14065325971552591875, 0.16900472663926790283, 0.19035057806478540991,
    0.20443294007529889241, 0.20948214108472782801};
constexpr double kGaussWeights[4] = {0.12948496616886969327, 0.27970539148927666790,
                                     0.38183005050511894495, 0.41795918367346938776};

struct GkResult {
    double integral;
    double error;
};

GkResult gk15(const std::function<double(double)>& f, double a, double b) {
    const double c = 0.5 * (a + b);
    const double h = 0.5 * (b - a);
    const double fc = f(c);
    double kron = kGkWeights[7] * fc;
    double gauss = kGaussWeights[3] * fc;
    for (int i = 0; i < 7; ++i) {
        const double dx = h * kGkNodes[i];
        const double fsum = f(c - dx) + f(c + dx);
        kron += kGkWeights[i] * fsum;
        if (i % 2 == 1) gauss += kGaussWeights[i / 2] * fsum;
    }
    return {kron * h, std::abs(kron - gauss) * h};
}

}  // namespace

double normal_pdf(double x) { return std::exp(-0.5 * x * x) / kSqrt2Pi; }

double normal_cdf(double x) { return 0.5 * std::erfc(-x / kSqrt2); }

double normal_inv_cdf(double p) {
    if (!(p >= 0.0 && p <= 1.0))
        throw DomainError("normal_inv_cdf: p = " + std::to_string(p) + " outside [0,1]");
    if (p == 0.0) return -kInf;
    if (p == 1.0) return kInf;

    // Rational approximation in three pieces (central and two tails).
    static constexpr double a[6] = {-3.969683028665376e+01, 2.209460984245205e+02,
                                    -2.759285104469687e+02, 1.383577518672690e+02,
                                    -3.066479806614716e+01, 2.506628277459239e+00};
    static constexpr double b[5] = {-5.447609879822406e+01, 1.615858368580409e+02,
                                    -1.556989798598866e+02, 6.680131188771972e+01,
                                    -1.328068155288572e+01};
    static constexpr double c[6] = {-7.784894002430293e-03, -3.223964580411365e-01,
                                    -2.400758277161838e+00, -2.549732539343734e+00,
                                    4.374664141464968e+00,  2.938163982698783e+00};
    static constexpr double d[4] = {7.784695709041462e-03, 3.224671290700398e-01,
                                    2.445134137142996e+00, 3.754408661907416e+00};
    constexpr double p_low = 0.02425;

    double x;
    if (p < p_low) {
        const double q = std::sqrt(-2.0 * std::log(p));
        x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    } else if (p <= 1.0 - p_low) {
        const double q = p - 0.5;
        const double r = q * q;
        x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
            (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
    } else {
        const double q = std::sqrt(-2.0 * std::log(1.0 - p));
        x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }

    // Two Halley steps against the forward CDF. Skipped in the far tails,
    // where the density underflows and the initial guess is already beyond
    // any representable requirement.
    for (int iter = 0; iter < 2; ++iter) {
        const double dens = normal_pdf(x);
        if (dens < 1e-305) break;
        const double err = normal_cdf(x) - p;
        const double u = err / dens;
        x -= u / (1.0 + 0.5 * x * u);
    }
    return x;
}

double integrate_gk(const std::function<double(double)>& f, double a, double b,
                    double abs_tol) {
    if (!(b > a)) return 0.0;
    struct Interval {
        double a, b;
    };
    const double total_len = b - a;
    std::vector<Interval> stack{{a, b}};
    double total = 0.0;
    int evaluated = 0;
    while (!stack.empty()) {
        if (++evaluated > 20000)
            throw ConvergenceError("integrate_gk: interval budget exhausted");
        const Interval iv = stack.back();
        stack.pop_back();
        const GkResult r = gk15(f, iv.a, iv.b);
        const double local_tol = abs_tol * (iv.b - iv.a) / total_len;
        if (r.error <= std::max(local_tol, 1e-300) || (iv.b - iv.a) < 1e-14) {
            total += r.integral;
        } else {
            const double m = 0.5 * (iv.a + iv.b);
            stack.push_back({iv.a, m});
            stack.push_back({m, iv.b});
        }
    }
    return total;
}

ExchangeableCov::ExchangeableCov(int k_, double rho_) : k(k_), rho(rho_) {
    if (k < 2) throw DimensionError("ExchangeableCov: k must be >= 2, got " + std::to_string(k));
    const double lo = -1.0 / (k - 1);
    if (!(rho >= lo && rho <= 1.0))
        throw RangeError("ExchangeableCov: rho = " + std::to_string(rho) +
                         " outside [" + std::to_string(lo) + ", 1]");
}

std::vector<double> ExchangeableCov::matrix() const {
    std::vector<double> m(static_cast<std::size_t>(k) * k, rho);
    for (int i = 0; i < k; ++i) m[static_cast<std::size_t>(i) * k + i] = 1.0;
    return m;
}

std::vector<double> ExchangeableCov::inverse() const {
    const double top = 1.0 + rho * (k - 1);
    if (rho == 1.0 || top <= 0.0 || rho == min_rho())
        throw RangeError("ExchangeableCov::inverse: covariance is singular at rho = " +
                         std::to_string(rho));
    const double b = 1.0 / (1.0 - rho);
    const double a = rho / ((1.0 - rho) * top);
    std::vector<double> m(static_cast<std::size_t>(k) * k, -a);
    for (int i = 0; i < k; ++i) m[static_cast<std::size_t>(i) * k + i] = -a + b;
    return m;
}

std::pair<double, double> ExchangeableCov::eigenvalues() const {
    return {1.0 + (k - 1) * rho, 1.0 - rho};
}

void sample_exchangeable(const ExchangeableCov& cov, int n, RngStream& rng,
                         std::span<double> out) {
    const int k = cov.k;
    if (n < 1) throw DimensionError("sample_exchangeable: n must be >= 1");
    if (out.size() != static_cast<std::size_t>(k) * n)
        throw DimensionError("sample_exchangeable: out must have size k*n");
    const double alpha = std::sqrt(1.0 - cov.rho);
    const double beta = (std::sqrt(1.0 + (k - 1) * cov.rho) - alpha) / k;
    std::vector<double> g(k);
    for (int i = 0; i < n; ++i) {
        double s = 0.0;
        for (int j = 0; j < k; ++j) {
            g[j] = rng.next_normal();
            s += g[j];
        }
        for (int j = 0; j < k; ++j)
            out[static_cast<std::size_t>(j) * n + i] = alpha * g[j] + beta * s;
    }
}

void sample_exchangeable_cholesky(const ExchangeableCov& cov, int n, RngStream& rng,
                                  std::span<double> out) {
    const int k = cov.k;
    if (out.size() != static_cast<std::size_t>(k) * n)
        throw DimensionError("sample_exchangeable_cholesky: out must have size k*n");
    std::vector<double> l(cov.matrix());
    // In-place lower Cholesky; pivots clamped at zero so the PSD boundary
    // cases (rho = 1, rho = -1/(k-1)) factor instead of failing.
    for (int j = 0; j < k; ++j) {
        double piv = l[static_cast<std::size_t>(j) * k + j];
        for (int t = 0; t < j; ++t) {
            const double v = l[static_cast<std::size_t>(j) * k + t];
            piv -= v * v;
        }
        piv = piv > 0.0 ? std::sqrt(piv) : 0.0;
        l[static_cast<std::size_t>(j) * k + j] = piv;
        for (int i = j + 1; i < k; ++i) {
            double v = l[static_cast<std::size_t>(i) * k + j];
            for (int t = 0; t < j; ++t)
                v -= l[static_cast<std::size_t>(i) * k + t] * l[static_cast<std::size_t>(j) * k + t];
            l[static_cast<std::size_t>(i) * k + j] = piv > 0.0 ? v / piv : 0.0;
        }
        for (int t = j + 1; t < k; ++t) l[static_cast<std::size_t>(j) * k + t] = 0.0;
    }
    std::vector<double> g(k);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < k; ++j) g[j] = rng.next_normal();
        for (int j = 0; j < k; ++j) {
            double v = 0.0;
            for (int t = 0; t <= j; ++t) v += l[static_cast<std::size_t>(j) * k + t] * g[t];
            out[static_cast<std::size_t>(j) * n + i] = v;
        }
    }
}

void sample_pair(int n, double rho, RngStream& rng, std::span<double> x,
                 std::span<double> y) {
    if (!(rho >= -1.0 && rho <= 1.0))
        throw RangeError("sample_pair: rho = " + std::to_string(rho) + " outside [-1,1]");
    if (x.size() != static_cast<std::size_t>(n) || y.size() != static_cast<std::size_t>(n))
        throw DimensionError("sample_pair: x and y must have size n");
    const double s = std::sqrt(std::max(0.0, (1.0 - rho) * (1.0 + rho)));
    for (int i = 0; i < n; ++i) {
        const double g = rng.next_normal();
        x[i] = g;
        y[i] = rho * g + s * rng.next_normal();
    }
}

double bivariate_orthant(double a, double b, double rho) {
    if (!(rho >= -1.0 && rho <= 1.0))
        throw RangeError("bivariate_orthant: rho = " + std::to_string(rho) +
                         " outside [-1,1]");
    if (std::isnan(a) || std::isnan(b)) throw DomainError("bivariate_orthant: NaN threshold");
    if (a == -kInf || b == -kInf) return 0.0;
    if (a == kInf) return normal_cdf(b);
    if (b == kInf) return normal_cdf(a);
    if (rho == 1.0) return normal_cdf(std::min(a, b));
    if (rho == -1.0) return std::max(0.0, normal_cdf(a) + normal_cdf(b) - 1.0);
    if (rho == 0.0) return normal_cdf(a) * normal_cdf(b);
    if (a > b) std::swap(a, b);  // integrate over the smaller threshold

    const double hi = std::min(a, kGaussWindow);
    if (hi <= -kGaussWindow) return 0.0;
    const double s = std::sqrt((1.0 - rho) * (1.0 + rho));
    const double val = integrate_gk(
        [b, rho, s](double x) { return normal_pdf(x) * normal_cdf((b - rho * x) / s); },
        -kGaussWindow, hi, 1e-12);
    return std::clamp(val, 0.0, 1.0);
}

double exchangeable_orthant(std::span<const double> a, double rho) {
    const int k = static_cast<int>(a.size());
    if (k < 1) throw DimensionError("exchangeable_orthant: empty threshold vector");
    if (k == 1) return normal_cdf(a[0]);
    const double lo = -1.0 / (k - 1);
    if (!(rho >= lo - 1e-12 && rho <= 1.0))
        throw RangeError("exchangeable_orthant: rho = " + std::to_string(rho) +
                         " outside [" + std::to_string(lo) + ", 1]");

    std::vector<double> th;
    th.reserve(a.size());
    for (double v : a) {
        if (std::isnan(v)) throw DomainError("exchangeable_orthant: NaN threshold");
        if (v == -kInf) return 0.0;
        if (v != kInf) th.push_back(v);  // +inf factors are identically 1
    }
    if (th.empty()) return 1.0;
    if (th.size() == 1) return normal_cdf(th[0]);

    if (rho == 0.0) {
        double p = 1.0;
        for (double v : th) p *= normal_cdf(v);
        return p;
    }
    if (rho == 1.0) return normal_cdf(*std::min_element(th.begin(), th.end()));
    if (th.size() == 2) return bivariate_orthant(th[0], th[1], rho);
    if (rho < 0.0)
        throw RangeError(
            "exchangeable_orthant: quadrature path requires rho >= 0 for k >= 3; "
            "use exchangeable_orthant_mc");

    const double sr = std::sqrt(rho);
    const double s1 = std::sqrt(1.0 - rho);
    const double val = integrate_gk(
        [&th, sr, s1](double g) {
            double p = normal_pdf(g);
            for (double v : th) p *= normal_cdf((v - sr * g) / s1);
            return p;
        },
        -kGaussWindow, kGaussWindow, 1e-11);
    return std::clamp(val, 0.0, 1.0);
}

StabilityEstimate exchangeable_orthant_mc(std::span<const double> a, double rho,
                                          std::uint64_t n_samples, std::uint64_t seed,
                                          int workers) {
    const int k = static_cast<int>(a.size());
    const ExchangeableCov cov(k, rho);  // validates k and rho
    std::vector<double> th(a.begin(), a.end());
    const std::uint64_t hits = parallel_accumulate(
        n_samples, workers, seed, /*stream_base=*/0,
        [&cov, &th, k](RngStream& rng, std::uint64_t n) {
            std::vector<double> x(static_cast<std::size_t>(k));
            std::uint64_t c = 0;
            for (std::uint64_t i = 0; i < n; ++i) {
                sample_exchangeable(cov, 1, rng, x);
                bool all = true;
                for (int j = 0; j < k; ++j)
                    if (!(x[static_cast<std::size_t>(j)] <= th[static_cast<std::size_t>(j)])) {
                        all = false;
                        break;
                    }
                c += all ? 1 : 0;
            }
            return c;
        });
    const double p = n_samples ? static_cast<double>(hits) / static_cast<double>(n_samples) : 0.0;
    return {p, binomial_se(p, n_samples), n_samples, "mc", seed};
}

std::vector<double> random_orthonormal_rows(int rows, int n, RngStream& rng) {
    if (rows < 1 || rows > n)
        throw DimensionError("random_orthonormal_rows: need 1 <= rows <= n");
    std::vector<double> r(static_cast<std::size_t>(rows) * n);
    for (int i = 0; i < rows; ++i) {
        double* ri = r.data() + static_cast<std::size_t>(i) * n;
        while (true) {
            for (int d = 0; d < n; ++d) ri[d] = rng.next_normal();
            for (int j = 0; j < i; ++j) {
                const double* rj = r.data() + static_cast<std::size_t>(j) * n;
                double dot = 0.0;
                for (int d = 0; d < n; ++d) dot += ri[d] * rj[d];
                for (int d = 0; d < n; ++d) ri[d] -= dot * rj[d];
            }
            double norm2 = 0.0;
            for (int d = 0; d < n; ++d) norm2 += ri[d] * ri[d];
            if (norm2 > 1e-12) {
                const double inv = 1.0 / std::sqrt(norm2);
                for (int d = 0; d < n; ++d) ri[d] *= inv;
                break;
            }
        }
    }
    return r;
}

}  // namespace nstab
