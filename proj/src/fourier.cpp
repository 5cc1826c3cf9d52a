#include "nstab/fourier.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <numbers>
#include <numeric>
#include <tuple>

#include <Eigen/Dense>

#include "nstab/errors.hpp"
#include "nstab/gauss.hpp"

namespace nstab {

namespace {

std::uint64_t checked_points(int q, int n, std::uint64_t limit) {
    std::uint64_t p = 1;
    for (int i = 0; i < n; ++i) {
        p *= static_cast<std::uint64_t>(q);
        if (p > limit)
            throw ScaleError("dense table over [q]^n exceeds the supported size");
    }
    return p;
}

void validate_range_tag(int k, RangeTag tag, std::span<const double> table) {
    const std::size_t points = table.size() / k;
    switch (tag) {
        case RangeTag::real:
            return;
        case RangeTag::unit_interval:
            for (double v : table)
                if (!(v >= -1e-12 && v <= 1.0 + 1e-12))
                    throw DomainError("unit_interval values must lie in [0, 1]");
            return;
        case RangeTag::simplex:
        case RangeTag::vertex:
            for (std::size_t p = 0; p < points; ++p) {
                double sum = 0.0;
                bool onehot_ok = true;
                for (int c = 0; c < k; ++c) {
                    const double v = table[p * k + c];
                    if (v < -1e-12)
                        throw DomainError("simplex values must be nonnegative");
                    if (std::abs(v) > 1e-12 && std::abs(v - 1.0) > 1e-12) onehot_ok = false;
                    sum += v;
                }
                if (std::abs(sum - 1.0) > 1e-12)
                    throw DomainError("simplex values must sum to one");
                if (tag == RangeTag::vertex && !onehot_ok)
                    throw DomainError("vertex values must be one-hot");
            }
            return;
    }
}

double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

// Euclidean projection onto the probability simplex.
void simplex_project(std::span<const double> v, std::span<double> out) {
    const int k = static_cast<int>(v.size());
    std::vector<double> u(v.begin(), v.end());
    std::sort(u.begin(), u.end(), std::greater<>());
    double css = 0.0, tau = 0.0;
    int support = 0;
    for (int j = 0; j < k; ++j) {
        css += u[j];
        const double t = (css - 1.0) / (j + 1);
        if (u[j] - t > 0.0) {
            support = j + 1;
            tau = t;
        }
    }
    (void)support;
    for (int c = 0; c < k; ++c) out[c] = std::max(v[c] - tau, 0.0);
}

double psi_eval(TestFunctional psi, std::span<const double> a, std::span<const double> b,
                std::span<double> scratch) {
    switch (psi) {
        case TestFunctional::clamp_product: {
            double p = 1.0;
            for (double v : a) p *= clamp01(v);
            for (double v : b) p *= clamp01(v);
            return p;
        }
        case TestFunctional::simplex_inner: {
            const int k = static_cast<int>(a.size());
            simplex_project(a, scratch.subspan(0, k));
            simplex_project(b, scratch.subspan(k, k));
            double dot = 0.0;
            for (int c = 0; c < k; ++c) dot += scratch[c] * scratch[k + c];
            return dot;
        }
    }
    std::abort();
}

struct MeanAcc {
    double sum = 0.0, sumsq = 0.0;
    MeanAcc& operator+=(const MeanAcc& o) {
        sum += o.sum;
        sumsq += o.sumsq;
        return *this;
    }
};

std::pair<double, double> mean_and_se(const MeanAcc& a, std::uint64_t n) {
    const double mean = a.sum / static_cast<double>(n);
    if (n < 2) return {mean, 0.0};
    const double var =
        std::max(0.0, (a.sumsq - a.sum * a.sum / static_cast<double>(n)) /
                          static_cast<double>(n - 1));
    return {mean, std::sqrt(var / static_cast<double>(n))};
}

void require_noise_rho(int q, double rho, const char* who) {
    if (!(rho >= -1.0 / (q - 1) - 1e-15 && rho <= 1.0 + 1e-15))
        throw RangeError(std::string(who) + ": rho must lie in [-1/(q-1), 1]");
}

}  // namespace

// --- QBasis ------------------------------------------------------------------

QBasis QBasis::helmert(int q) {
    if (q < 2) throw DimensionError("QBasis: q must be >= 2");
    std::vector<double> m(static_cast<std::size_t>(q) * q, 0.0);
    for (int w = 0; w < q; ++w) m[w] = 1.0;
    for (int j = 1; j < q; ++j) {
        // Unnormalized row: 1 at w < j, -j at w = j; squared norm j(j+1),
        // scaled so the uniform-measure second moment is one.
        const double c = std::sqrt(static_cast<double>(q) / (static_cast<double>(j) * (j + 1)));
        for (int w = 0; w < j; ++w) m[static_cast<std::size_t>(j) * q + w] = c;
        m[static_cast<std::size_t>(j) * q + j] = -c * j;
    }
    return QBasis(q, std::move(m));
}

QBasis QBasis::rotated(int q, RngStream& rng) {
    QBasis base = helmert(q);
    const std::vector<double> rot = random_orthonormal_rows(q - 1, q - 1, rng);
    std::vector<double> m(static_cast<std::size_t>(q) * q, 0.0);
    for (int w = 0; w < q; ++w) m[w] = 1.0;
    for (int a = 1; a < q; ++a)
        for (int w = 0; w < q; ++w) {
            double acc = 0.0;
            for (int b = 1; b < q; ++b)
                acc += rot[static_cast<std::size_t>(a - 1) * (q - 1) + (b - 1)] * base.at(b, w);
            m[static_cast<std::size_t>(a) * q + w] = acc;
        }
    return QBasis(q, std::move(m));
}

std::string to_string(RangeTag tag) {
    switch (tag) {
        case RangeTag::real: return "real";
        case RangeTag::simplex: return "simplex";
        case RangeTag::vertex: return "vertex";
        case RangeTag::unit_interval: return "unit_interval";
    }
    std::abort();
}

RangeTag range_tag_from_string(const std::string& s) {
    if (s == "real") return RangeTag::real;
    if (s == "simplex") return RangeTag::simplex;
    if (s == "vertex") return RangeTag::vertex;
    if (s == "unit_interval") return RangeTag::unit_interval;
    throw MetadataError("unknown range tag: " + s);
}

// --- DiscreteFunction ----------------------------------------------------------

DiscreteFunction::DiscreteFunction(int q, int n, int k, RangeTag tag,
                                   std::vector<double> table)
    : q_(q), n_(n), k_(k), tag_(tag), table_(std::move(table)) {
    if (q < 2) throw DimensionError("DiscreteFunction: q must be >= 2");
    if (n < 1) throw DimensionError("DiscreteFunction: n must be >= 1");
    if (k < 1) throw DimensionError("DiscreteFunction: k must be >= 1");
    points_ = checked_points(q, n, kMaxTablePoints);
    if (table_.size() != points_ * static_cast<std::uint64_t>(k))
        throw DimensionError("DiscreteFunction: table must hold q^n points of k components");
    validate_range_tag(k_, tag_, table_);
}

DiscreteFunction DiscreteFunction::from_evaluator(
    int q, int n, int k, RangeTag tag,
    const std::function<void(std::span<const int>, std::span<double>)>& eval) {
    const std::uint64_t points = checked_points(q, n, kMaxTablePoints);
    std::vector<double> table(points * static_cast<std::uint64_t>(k));
    std::vector<int> omega(n, 0);
    for (std::uint64_t idx = 0; idx < points; ++idx) {
        eval(omega, std::span<double>(table.data() + idx * k, static_cast<std::size_t>(k)));
        for (int i = n - 1; i >= 0; --i) {  // odometer, last coordinate fastest
            if (++omega[i] < q) break;
            omega[i] = 0;
        }
    }
    return DiscreteFunction(q, n, k, tag, std::move(table));
}

DiscreteFunction DiscreteFunction::vertex_from_labels(
    int q, int n, int k, const std::function<int(std::span<const int>)>& f) {
    return from_evaluator(q, n, k, RangeTag::vertex,
                          [&](std::span<const int> omega, std::span<double> out) {
                              const int label = f(omega);
                              if (label < 0 || label >= k)
                                  throw IndexError("vertex_from_labels: label out of range");
                              std::fill(out.begin(), out.end(), 0.0);
                              out[label] = 1.0;
                          });
}

std::uint64_t DiscreteFunction::index_of(std::span<const int> omega) const {
    if (static_cast<int>(omega.size()) != n_)
        throw DimensionError("index_of: expected n coordinates");
    std::uint64_t idx = 0;
    for (int i = 0; i < n_; ++i) {
        if (omega[i] < 0 || omega[i] >= q_) throw IndexError("index_of: digit out of range");
        idx = idx * q_ + static_cast<std::uint64_t>(omega[i]);
    }
    return idx;
}

void DiscreteFunction::point_at(std::uint64_t index, std::span<int> omega) const {
    for (int i = n_ - 1; i >= 0; --i) {
        omega[i] = static_cast<int>(index % q_);
        index /= q_;
    }
}

nlohmann::json DiscreteFunction::to_json() const {
    return {{"q", q_}, {"n", n_}, {"k", k_}, {"range_tag", to_string(tag_)},
            {"values", table_}};
}

DiscreteFunction DiscreteFunction::from_json(const nlohmann::json& j) {
    return DiscreteFunction(j.at("q").get<int>(), j.at("n").get<int>(), j.at("k").get<int>(),
                            range_tag_from_string(j.at("range_tag").get<std::string>()),
                            j.at("values").get<std::vector<double>>());
}

// --- MultilinearPoly -----------------------------------------------------------

MultilinearPoly::MultilinearPoly(int q, int n, int k, std::vector<double> coeffs)
    : q_(q), n_(n), k_(k), coeffs_(std::move(coeffs)) {
    if (q < 2) throw DimensionError("MultilinearPoly: q must be >= 2");
    if (n < 1) throw DimensionError("MultilinearPoly: n must be >= 1");
    if (k < 1) throw DimensionError("MultilinearPoly: k must be >= 1");
    points_ = checked_points(q, n, kMaxTablePoints);
    if (coeffs_.size() != points_ * static_cast<std::uint64_t>(k))
        throw DimensionError("MultilinearPoly: need q^n coefficient vectors");
}

int MultilinearPoly::degree_of(std::uint64_t index) const {
    int deg = 0;
    for (int i = 0; i < n_; ++i) {
        deg += index % q_ != 0 ? 1 : 0;
        index /= q_;
    }
    return deg;
}

int MultilinearPoly::degree() const {
    int deg = 0;
    for (std::uint64_t idx = 0; idx < points_; ++idx) {
        double norm2 = 0.0;
        for (int c = 0; c < k_; ++c) {
            const double v = coeffs_[idx * k_ + c];
            norm2 += v * v;
        }
        if (norm2 > 1e-24) deg = std::max(deg, degree_of(idx));
    }
    return deg;
}

std::vector<double> MultilinearPoly::expectation() const {
    return {coeffs_.begin(), coeffs_.begin() + k_};
}

double MultilinearPoly::total_weight() const {
    double w = 0.0;
    for (double v : coeffs_) w += v * v;
    return w;
}

double MultilinearPoly::variance() const {
    double w0 = 0.0;
    for (int c = 0; c < k_; ++c) w0 += coeffs_[c] * coeffs_[c];
    return total_weight() - w0;
}

void MultilinearPoly::evaluate(std::span<const double> x, std::span<double> out) const {
    if (x.size() != static_cast<std::size_t>(n_) * (q_ - 1))
        throw DimensionError("evaluate: expected n*(q-1) basis-variable values");
    if (out.size() != static_cast<std::size_t>(k_))
        throw DimensionError("evaluate: output must have k components");
    // Contract one axis at a time, fastest (last) axis first; `buf` holds a
    // table over the remaining axes.
    std::vector<double> buf(coeffs_.begin(), coeffs_.end());
    std::uint64_t pts = points_;
    for (int i = n_ - 1; i >= 0; --i) {
        const std::uint64_t groups = pts / q_;
        for (std::uint64_t g = 0; g < groups; ++g) {
            double* dst = buf.data() + g * k_;
            const double* src = buf.data() + g * q_ * k_;
            for (int c = 0; c < k_; ++c) {
                double acc = src[c];  // basis element 0 is the constant 1
                for (int a = 1; a < q_; ++a)
                    acc += x[static_cast<std::size_t>(i) * (q_ - 1) + (a - 1)] *
                           src[static_cast<std::size_t>(a) * k_ + c];
                dst[c] = acc;
            }
        }
        pts = groups;
    }
    std::copy(buf.begin(), buf.begin() + k_, out.begin());
}

nlohmann::json MultilinearPoly::to_json() const {
    nlohmann::json entries = nlohmann::json::array();
    std::vector<int> sigma(n_);
    for (std::uint64_t idx = 0; idx < points_; ++idx) {
        double norm2 = 0.0;
        for (int c = 0; c < k_; ++c) {
            const double v = coeffs_[idx * k_ + c];
            norm2 += v * v;
        }
        if (norm2 <= 1e-30) continue;
        std::uint64_t rem = idx;
        for (int i = n_ - 1; i >= 0; --i) {
            sigma[i] = static_cast<int>(rem % q_);
            rem /= q_;
        }
        entries.push_back(
            {{"sigma", sigma},
             {"c", std::vector<double>(coeffs_.begin() + idx * k_,
                                       coeffs_.begin() + idx * k_ + k_)}});
    }
    return {{"q", q_}, {"n", n_}, {"k", k_}, {"coeffs", std::move(entries)}};
}

MultilinearPoly MultilinearPoly::from_json(const nlohmann::json& j) {
    const int q = j.at("q").get<int>();
    const int n = j.at("n").get<int>();
    const int k = j.at("k").get<int>();
    const std::uint64_t points = checked_points(q, n, kMaxTablePoints);
    std::vector<double> coeffs(points * static_cast<std::uint64_t>(k), 0.0);
    for (const auto& entry : j.at("coeffs")) {
        const auto sigma = entry.at("sigma").get<std::vector<int>>();
        if (static_cast<int>(sigma.size()) != n)
            throw MetadataError("poly entry has a multi-index of the wrong length");
        std::uint64_t idx = 0;
        for (int i = 0; i < n; ++i) {
            if (sigma[i] < 0 || sigma[i] >= q)
                throw MetadataError("poly entry has a digit out of range");
            idx = idx * q + static_cast<std::uint64_t>(sigma[i]);
        }
        const auto c = entry.at("c").get<std::vector<double>>();
        if (static_cast<int>(c.size()) != k)
            throw MetadataError("poly entry has a coefficient of the wrong arity");
        std::copy(c.begin(), c.end(), coeffs.begin() + idx * k);
    }
    return MultilinearPoly(q, n, k, std::move(coeffs));
}

// --- transform -----------------------------------------------------------------

namespace {

// Apply the q x q matrix (b, w) -> basis.at(b, w) (optionally transposed and
// scaled) along every axis of the table in place.
void apply_axiswise(std::vector<double>& table, int q, int n, int k, const QBasis& basis,
                    bool forward) {
    const double scale = forward ? 1.0 / q : 1.0;
    std::vector<double> tmp(static_cast<std::size_t>(q) * k);
    std::uint64_t suffix = 1;  // points strictly after the processed axis
    for (int axis = n - 1; axis >= 0; --axis) {
        const std::uint64_t stride = suffix * k;
        std::uint64_t blocks = table.size() / (stride * q);
        for (std::uint64_t b = 0; b < blocks; ++b) {
            for (std::uint64_t s = 0; s < suffix; ++s) {
                double* base = table.data() + b * stride * q + s * k;
                for (int out = 0; out < q; ++out) {
                    for (int c = 0; c < k; ++c) {
                        double acc = 0.0;
                        for (int in = 0; in < q; ++in) {
                            const double m = forward ? basis.at(out, in) : basis.at(in, out);
                            acc += m * base[static_cast<std::uint64_t>(in) * stride + c];
                        }
                        tmp[static_cast<std::size_t>(out) * k + c] = acc * scale;
                    }
                }
                for (int out = 0; out < q; ++out)
                    for (int c = 0; c < k; ++c)
                        base[static_cast<std::uint64_t>(out) * stride + c] =
                            tmp[static_cast<std::size_t>(out) * k + c];
            }
        }
        suffix *= q;
    }
}

}  // namespace

MultilinearPoly transform(const DiscreteFunction& f) {
    return transform(f, QBasis::helmert(f.q()));
}

MultilinearPoly transform(const DiscreteFunction& f, const QBasis& basis) {
    if (basis.q() != f.q()) throw DimensionError("transform: basis arity mismatch");
    std::vector<double> coeffs(f.table().begin(), f.table().end());
    apply_axiswise(coeffs, f.q(), f.n(), f.k(), basis, true);
    return MultilinearPoly(f.q(), f.n(), f.k(), std::move(coeffs));
}

DiscreteFunction inverse_transform(const MultilinearPoly& p, RangeTag tag) {
    return inverse_transform(p, QBasis::helmert(p.q()), tag);
}

DiscreteFunction inverse_transform(const MultilinearPoly& p, const QBasis& basis,
                                   RangeTag tag) {
    if (basis.q() != p.q()) throw DimensionError("inverse_transform: basis arity mismatch");
    std::vector<double> table(p.coeffs().begin(), p.coeffs().end());
    apply_axiswise(table, p.q(), p.n(), p.k(), basis, false);
    return DiscreteFunction(p.q(), p.n(), p.k(), tag, std::move(table));
}

// --- noise operator and stability ------------------------------------------------

MultilinearPoly noise_operator(const MultilinearPoly& p, double rho) {
    require_noise_rho(p.q(), rho, "noise_operator");
    std::vector<double> pw(p.n() + 1);
    pw[0] = 1.0;
    for (int d = 1; d <= p.n(); ++d) pw[d] = pw[d - 1] * rho;
    std::vector<double> coeffs(p.coeffs().begin(), p.coeffs().end());
    for (std::uint64_t idx = 0; idx < p.size(); ++idx) {
        const double s = pw[p.degree_of(idx)];
        for (int c = 0; c < p.k(); ++c) coeffs[idx * p.k() + c] *= s;
    }
    return MultilinearPoly(p.q(), p.n(), p.k(), std::move(coeffs));
}

double noise_stability_fourier(const DiscreteFunction& f, double rho) {
    require_noise_rho(f.q(), rho, "noise_stability_fourier");
    const MultilinearPoly p = transform(f);
    std::vector<double> pw(f.n() + 1);
    pw[0] = 1.0;
    for (int d = 1; d <= f.n(); ++d) pw[d] = pw[d - 1] * rho;
    double total = 0.0;
    for (std::uint64_t idx = 0; idx < p.size(); ++idx) {
        double norm2 = 0.0;
        for (int c = 0; c < p.k(); ++c) {
            const double v = p.coeffs()[idx * p.k() + c];
            norm2 += v * v;
        }
        total += pw[p.degree_of(idx)] * norm2;
    }
    return total;
}

double noise_stability_brute(const DiscreteFunction& f, double rho) {
    require_noise_rho(f.q(), rho, "noise_stability_brute");
    const std::uint64_t points = f.size();
    if (points > kMaxPairPoints / points)
        throw ScaleError("noise_stability_brute: q^(2n) exceeds the supported size");
    const int n = f.n(), k = f.k(), q = f.q();
    const double same = rho + (1.0 - rho) / q;
    const double diff = (1.0 - rho) / q;
    const double inv_points = 1.0 / static_cast<double>(points);
    double total = 0.0;
    std::vector<int> w(n), l(n);
    for (std::uint64_t iw = 0; iw < points; ++iw) {
        f.point_at(iw, w);
        for (std::uint64_t il = 0; il < points; ++il) {
            f.point_at(il, l);
            double weight = inv_points;
            for (int i = 0; i < n; ++i) weight *= w[i] == l[i] ? same : diff;
            double dot = 0.0;
            for (int c = 0; c < k; ++c)
                dot += f.table()[iw * k + c] * f.table()[il * k + c];
            total += weight * dot;
        }
    }
    return total;
}

void sample_correlated_pair(int q, int n, double rho, RngStream& rng, std::span<int> omega,
                            std::span<int> lambda) {
    require_noise_rho(q, rho, "sample_correlated_pair");
    if (rho >= 0.0) {
        for (int i = 0; i < n; ++i) {
            omega[i] = static_cast<int>(rng.next_below(static_cast<std::uint64_t>(q)));
            lambda[i] = rng.next_double() < rho
                            ? omega[i]
                            : static_cast<int>(rng.next_below(static_cast<std::uint64_t>(q)));
        }
        return;
    }
    const double p_same = rho + (1.0 - rho) / q;
    const double p_other = (1.0 - rho) / q;
    for (int i = 0; i < n; ++i) {
        omega[i] = static_cast<int>(rng.next_below(static_cast<std::uint64_t>(q)));
        const double u = rng.next_double();
        if (u < p_same) {
            lambda[i] = omega[i];
        } else {
            int j = static_cast<int>((u - p_same) / p_other);
            j = std::min(j, q - 2);
            lambda[i] = j >= omega[i] ? j + 1 : j;
        }
    }
}

StabilityEstimate noise_stability_mc(const std::function<int(std::span<const int>)>& f, int q,
                                     int n, double rho, std::uint64_t n_samples,
                                     std::uint64_t seed, int workers) {
    require_noise_rho(q, rho, "noise_stability_mc");
    if (n_samples == 0) throw DomainError("noise_stability_mc: need n_samples >= 1");
    struct Acc {
        std::uint64_t hits = 0;
        Acc& operator+=(const Acc& o) {
            hits += o.hits;
            return *this;
        }
    };
    auto acc = parallel_accumulate(
        n_samples, workers, seed, 0, [&](RngStream& rng, std::uint64_t count) {
            Acc a;
            std::vector<int> w(n), l(n);
            for (std::uint64_t i = 0; i < count; ++i) {
                sample_correlated_pair(q, n, rho, rng, w, l);
                a.hits += f(w) == f(l) ? 1 : 0;
            }
            return a;
        });
    const double p = static_cast<double>(acc.hits) / static_cast<double>(n_samples);
    return {p, binomial_se(p, n_samples), n_samples, "monte_carlo", seed};
}

// --- influences ------------------------------------------------------------------

double influence(const MultilinearPoly& p, int i) {
    if (i < 0 || i >= p.n()) throw IndexError("influence: coordinate out of range");
    std::uint64_t stride = 1;
    for (int a = p.n() - 1; a > i; --a) stride *= p.q();
    double total = 0.0;
    for (std::uint64_t idx = 0; idx < p.size(); ++idx) {
        if ((idx / stride) % p.q() == 0) continue;
        for (int c = 0; c < p.k(); ++c) {
            const double v = p.coeffs()[idx * p.k() + c];
            total += v * v;
        }
    }
    return total;
}

double influence_direct(const DiscreteFunction& f, int i) {
    if (i < 0 || i >= f.n()) throw IndexError("influence_direct: coordinate out of range");
    const int q = f.q(), k = f.k();
    std::uint64_t suffix = 1;
    for (int a = f.n() - 1; a > i; --a) suffix *= q;
    const std::uint64_t stride = suffix * k;
    const std::uint64_t blocks = f.size() / (suffix * q);
    std::vector<double> mean(k);
    double total = 0.0;
    for (std::uint64_t b = 0; b < blocks; ++b) {
        for (std::uint64_t s = 0; s < suffix; ++s) {
            const double* base = f.table().data() + b * stride * q + s * k;
            std::fill(mean.begin(), mean.end(), 0.0);
            for (int w = 0; w < q; ++w)
                for (int c = 0; c < k; ++c)
                    mean[c] += base[static_cast<std::uint64_t>(w) * stride + c];
            for (int c = 0; c < k; ++c) mean[c] /= q;
            double var = 0.0;
            for (int w = 0; w < q; ++w)
                for (int c = 0; c < k; ++c) {
                    const double d = base[static_cast<std::uint64_t>(w) * stride + c] - mean[c];
                    var += d * d;
                }
            total += var / q;
        }
    }
    return total / static_cast<double>(f.size() / q);
}

double low_degree_influence(const MultilinearPoly& p, int i, int d) {
    if (i < 0 || i >= p.n()) throw IndexError("low_degree_influence: coordinate out of range");
    if (d < 1) throw DomainError("low_degree_influence: degree bound must be >= 1");
    std::uint64_t stride = 1;
    for (int a = p.n() - 1; a > i; --a) stride *= p.q();
    double total = 0.0;
    for (std::uint64_t idx = 0; idx < p.size(); ++idx) {
        if ((idx / stride) % p.q() == 0) continue;
        if (p.degree_of(idx) > d) continue;
        for (int c = 0; c < p.k(); ++c) {
            const double v = p.coeffs()[idx * p.k() + c];
            total += v * v;
        }
    }
    return total;
}

// --- maximal correlation ------------------------------------------------------------

FiniteJoint::FiniteJoint(int s1_, int s2_, std::vector<double> probs_)
    : s1(s1_), s2(s2_), probs(std::move(probs_)) {
    if (s1 < 1 || s2 < 1) throw DimensionError("FiniteJoint: sizes must be >= 1");
    if (probs.size() != static_cast<std::size_t>(s1) * s2)
        throw DimensionError("FiniteJoint: need s1*s2 probabilities");
    double total = 0.0;
    for (double p : probs) {
        if (p < 0.0) throw DomainError("FiniteJoint: probabilities must be nonnegative");
        total += p;
    }
    if (std::abs(total - 1.0) > 1e-12)
        throw DomainError("FiniteJoint: probabilities must sum to one");
}

std::vector<double> FiniteJoint::row_marginal() const {
    std::vector<double> m(s1, 0.0);
    for (int a = 0; a < s1; ++a)
        for (int b = 0; b < s2; ++b) m[a] += probs[static_cast<std::size_t>(a) * s2 + b];
    return m;
}

std::vector<double> FiniteJoint::col_marginal() const {
    std::vector<double> m(s2, 0.0);
    for (int a = 0; a < s1; ++a)
        for (int b = 0; b < s2; ++b) m[b] += probs[static_cast<std::size_t>(a) * s2 + b];
    return m;
}

namespace {

int uf_find(std::vector<int>& parent, int x) {
    while (parent[x] != x) {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    return x;
}

}  // namespace

double maximal_correlation(const FiniteJoint& j) {
    const std::vector<double> r = j.row_marginal();
    const std::vector<double> c = j.col_marginal();
    for (double m : r)
        if (m <= 0.0) throw DegenerateError("maximal_correlation: zero row marginal");
    for (double m : c)
        if (m <= 0.0) throw DegenerateError("maximal_correlation: zero column marginal");

    Eigen::MatrixXd M(j.s1, j.s2);
    for (int a = 0; a < j.s1; ++a)
        for (int b = 0; b < j.s2; ++b)
            M(a, b) = j.probs[static_cast<std::size_t>(a) * j.s2 + b] / std::sqrt(r[a] * c[b]);
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(M);
    const auto& sv = svd.singularValues();
    const double second = sv.size() > 1 ? std::clamp(sv(1), 0.0, 1.0) : 0.0;

    // Connected support with minimum positive entry alpha caps the
    // correlation at 1 - alpha^2/2; exceeding it indicates a numerical bug.
    std::vector<int> parent(j.s1 + j.s2);
    std::iota(parent.begin(), parent.end(), 0);
    double alpha = 1.0;
    for (int a = 0; a < j.s1; ++a)
        for (int b = 0; b < j.s2; ++b) {
            const double p = j.probs[static_cast<std::size_t>(a) * j.s2 + b];
            if (p <= 0.0) continue;
            alpha = std::min(alpha, p);
            parent[uf_find(parent, a)] = uf_find(parent, j.s1 + b);
        }
    bool connected = true;
    const int root = uf_find(parent, 0);
    for (int x = 1; x < j.s1 + j.s2; ++x)
        if (uf_find(parent, x) != root) connected = false;
    if (connected && second > 1.0 - alpha * alpha / 2.0 + 1e-9)
        throw InvariantError("maximal_correlation: value exceeds the connected-support bound");
    return second;
}

FiniteJoint correlated_uniform_joint(int q, double rho) {
    require_noise_rho(q, rho, "correlated_uniform_joint");
    std::vector<double> probs(static_cast<std::size_t>(q) * q, (1.0 - rho) / (static_cast<double>(q) * q));
    for (int w = 0; w < q; ++w) probs[static_cast<std::size_t>(w) * q + w] += rho / q;
    return FiniteJoint(q, q, std::move(probs));
}

// --- invariance gap -----------------------------------------------------------------

std::string to_string(TestFunctional psi) {
    switch (psi) {
        case TestFunctional::clamp_product: return "clamp_product";
        case TestFunctional::simplex_inner: return "simplex_inner";
    }
    std::abort();
}

nlohmann::json InvarianceReport::to_json() const {
    return {{"op", "invariance_gap"},
            {"psi", psi},
            {"rho", rho},
            {"discrete_value", discrete_value},
            {"discrete_se", discrete_se},
            {"gaussian_value", gaussian_value},
            {"gaussian_se", gaussian_se},
            {"gap", gap},
            {"combined_se", combined_se},
            {"max_influence", max_influence},
            {"degree", degree},
            {"n_samples", n_samples},
            {"seed", seed}};
}

InvarianceReport invariance_gap(const DiscreteFunction& f, TestFunctional psi, double rho,
                                std::uint64_t n_samples, std::uint64_t seed, int workers) {
    require_noise_rho(f.q(), rho, "invariance_gap");
    if (n_samples == 0) throw DomainError("invariance_gap: need n_samples >= 1");
    const MultilinearPoly poly = transform(f);
    const int n = f.n(), k = f.k(), q = f.q();

    InvarianceReport rep;
    rep.psi = to_string(psi);
    rep.rho = rho;
    rep.n_samples = n_samples;
    rep.seed = seed;
    rep.degree = poly.degree();
    for (int i = 0; i < n; ++i) rep.max_influence = std::max(rep.max_influence, influence(poly, i));

    // Discrete side: psi on table values at a rho-correlated pair.
    auto dacc = parallel_accumulate(
        n_samples, workers, seed, 0, [&](RngStream& rng, std::uint64_t count) {
            MeanAcc a;
            std::vector<int> w(n), l(n);
            std::vector<double> scratch(static_cast<std::size_t>(2) * k);
            for (std::uint64_t s = 0; s < count; ++s) {
                sample_correlated_pair(q, n, rho, rng, w, l);
                const double v =
                    psi_eval(psi, f.value(f.index_of(w)), f.value(f.index_of(l)), scratch);
                a.sum += v;
                a.sumsq += v * v;
            }
            return a;
        });
    std::tie(rep.discrete_value, rep.discrete_se) = mean_and_se(dacc, n_samples);

    // Gaussian side: every basis variable becomes a standard normal; the two
    // halves are rho-correlated per variable.
    const std::uint64_t gseed = seed ^ 0x9e3779b97f4a7c15ull;
    const int vars = n * (q - 1);
    auto gacc = parallel_accumulate(
        n_samples, workers, gseed, 0, [&](RngStream& rng, std::uint64_t count) {
            MeanAcc a;
            std::vector<double> x(vars), y(vars), qx(k), qy(k);
            std::vector<double> scratch(static_cast<std::size_t>(2) * k);
            for (std::uint64_t s = 0; s < count; ++s) {
                sample_pair(vars, rho, rng, x, y);
                poly.evaluate(x, qx);
                poly.evaluate(y, qy);
                const double v = psi_eval(psi, qx, qy, scratch);
                a.sum += v;
                a.sumsq += v * v;
            }
            return a;
        });
    std::tie(rep.gaussian_value, rep.gaussian_se) = mean_and_se(gacc, n_samples);

    rep.gap = std::abs(rep.discrete_value - rep.gaussian_value);
    rep.combined_se = std::sqrt(rep.discrete_se * rep.discrete_se +
                                rep.gaussian_se * rep.gaussian_se);
    return rep;
}

// --- streamed Boolean majority -----------------------------------------------------

std::vector<double> majority_sign_coefficients(int n) {
    if (n < 1 || n % 2 == 0)
        throw DomainError("majority_sign_coefficients: n must be odd and positive");
    // Common coefficient of every degree-d monomial, odd d:
    //   (-1)^((d-1)/2) * C((n-1)/2,(d-1)/2) / C(n-1,d-1) * C(n-1,(n-1)/2) / 2^(n-1).
    // Evaluated through log-gamma: the naive conditional sum cancels
    // catastrophically for mid-range d once n is large.
    std::vector<double> coeff(static_cast<std::size_t>(n) + 1, 0.0);
    for (int d = 1; d <= n; d += 2) {
        const double lg = -std::lgamma((d + 1) / 2.0) - std::lgamma((n - d) / 2.0 + 1.0) +
                          std::lgamma(static_cast<double>(d)) +
                          std::lgamma(static_cast<double>(n - d + 1)) -
                          std::lgamma((n + 1) / 2.0) - (n - 1) * std::numbers::ln2;
        const double mag = std::exp(lg);
        coeff[d] = ((d - 1) / 2) % 2 == 0 ? mag : -mag;
    }
    return coeff;
}

double majority_sign_influence(int n) {
    const std::vector<double> coeff = majority_sign_coefficients(n);
    double inf = 0.0;
    for (int d = 1; d <= n; d += 2) {
        if (coeff[d] == 0.0) continue;
        const double logbinom = std::lgamma(n) - std::lgamma(d) - std::lgamma(n - d + 1);
        inf += std::exp(logbinom + 2.0 * std::log(std::abs(coeff[d])));
    }
    return inf;
}

InvarianceReport majority_invariance_gap(int n, TestFunctional psi, double rho,
                                         std::uint64_t n_samples, std::uint64_t seed,
                                         int workers) {
    if (n < 1 || n % 2 == 0)
        throw DomainError("majority_invariance_gap: n must be odd and positive");
    if (!(rho >= -1.0 && rho <= 1.0))
        throw RangeError("majority_invariance_gap: rho must lie in [-1, 1]");
    if (n_samples == 0) throw DomainError("majority_invariance_gap: need n_samples >= 1");

    const std::vector<double> coeff = majority_sign_coefficients(n);

    InvarianceReport rep;
    rep.psi = to_string(psi);
    rep.rho = rho;
    rep.n_samples = n_samples;
    rep.seed = seed;
    rep.degree = n;
    // One-hot representation halves the +-1 influence (each component
    // carries a quarter of it).
    rep.max_influence = majority_sign_influence(n) / 2.0;

    // Discrete side: majority of +-1 votes, one-hot encoded.
    auto dacc = parallel_accumulate(
        n_samples, workers, seed, 0, [&](RngStream& rng, std::uint64_t count) {
            MeanAcc a;
            std::vector<double> scratch(4);
            for (std::uint64_t s = 0; s < count; ++s) {
                int sw = 0, sl = 0;
                for (int i = 0; i < n; ++i) {
                    const int w = rng.next_bool() ? 1 : -1;
                    int l;
                    if (rho >= 0.0) {
                        l = rng.next_double() < rho ? w : (rng.next_bool() ? 1 : -1);
                    } else {
                        // copy with prob (1+rho)/2, flip otherwise
                        l = rng.next_double() < 0.5 * (1.0 + rho) ? w : -w;
                    }
                    sw += w;
                    sl += l;
                }
                const double fw[2] = {sw > 0 ? 1.0 : 0.0, sw > 0 ? 0.0 : 1.0};
                const double fl[2] = {sl > 0 ? 1.0 : 0.0, sl > 0 ? 0.0 : 1.0};
                const double v = psi_eval(psi, {fw, 2}, {fl, 2}, scratch);
                a.sum += v;
                a.sumsq += v * v;
            }
            return a;
        });
    std::tie(rep.discrete_value, rep.discrete_se) = mean_and_se(dacc, n_samples);

    // Gaussian side: S(z) = sum_d coeff[d] e_d(z) through the elementary
    // symmetric polynomial recurrence; the one-hot components are (1 +- S)/2.
    const std::uint64_t gseed = seed ^ 0x9e3779b97f4a7c15ull;
    auto gacc = parallel_accumulate(
        n_samples, workers, gseed, 0, [&](RngStream& rng, std::uint64_t count) {
            MeanAcc a;
            std::vector<double> z(n), zp(n), e(static_cast<std::size_t>(n) + 1),
                ep(static_cast<std::size_t>(n) + 1);
            std::vector<double> scratch(4);
            for (std::uint64_t s = 0; s < count; ++s) {
                sample_pair(n, rho, rng, z, zp);
                std::fill(e.begin(), e.end(), 0.0);
                std::fill(ep.begin(), ep.end(), 0.0);
                e[0] = ep[0] = 1.0;
                for (int i = 0; i < n; ++i) {
                    const int top = i + 1;
                    for (int d = top; d >= 1; --d) {
                        e[d] += z[i] * e[d - 1];
                        ep[d] += zp[i] * ep[d - 1];
                    }
                }
                double S = 0.0, Sp = 0.0;
                for (int d = 1; d <= n; d += 2) {
                    S += coeff[d] * e[d];
                    Sp += coeff[d] * ep[d];
                }
                const double fw[2] = {0.5 * (1.0 + S), 0.5 * (1.0 - S)};
                const double fl[2] = {0.5 * (1.0 + Sp), 0.5 * (1.0 - Sp)};
                const double v = psi_eval(psi, {fw, 2}, {fl, 2}, scratch);
                a.sum += v;
                a.sumsq += v * v;
            }
            return a;
        });
    std::tie(rep.gaussian_value, rep.gaussian_se) = mean_and_se(gacc, n_samples);

    rep.gap = std::abs(rep.discrete_value - rep.gaussian_value);
    rep.combined_se = std::sqrt(rep.discrete_se * rep.discrete_se +
                                rep.gaussian_se * rep.gaussian_se);
    return rep;
}

// --- Gaussian partition -> discrete function ----------------------------------------

BlockFunction::BlockFunction(GaussianPartition g, int q, int r)
    : g_(std::move(g)), q_(q), r_(r) {
    if (q < 2) throw DimensionError("BlockFunction: q must be >= 2");
    if (r < 1) throw DimensionError("BlockFunction: block size must be >= 1");
    scale_ = q / std::sqrt(static_cast<double>(q - 1) * r);
}

void BlockFunction::block_sums(std::span<const int> omega, std::span<double> v) const {
    const int dim = g_.dim();
    if (static_cast<int>(omega.size()) != r_ * dim)
        throw DimensionError("block_sums: expected r*dim coordinates");
    for (int i = 0; i < dim; ++i) {
        double acc = 0.0;
        for (int j = 0; j < r_; ++j)
            acc += (omega[static_cast<std::size_t>(i) * r_ + j] == 1 ? 1.0 : 0.0) - 1.0 / q_;
        v[i] = scale_ * acc;
    }
}

int BlockFunction::operator()(std::span<const int> omega) const {
    std::vector<double> v(g_.dim());
    block_sums(omega, v);
    return g_.classify(v);
}

DiscreteFunction BlockFunction::to_table() const {
    return DiscreteFunction::vertex_from_labels(
        q_, coords(), cells(), [this](std::span<const int> omega) { return (*this)(omega); });
}

}  // namespace nstab
