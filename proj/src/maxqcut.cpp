#include "nstab/maxqcut.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>
#include <optional>
#include <sstream>

#include <Eigen/Dense>

#include "nstab/errors.hpp"
#include "nstab/stability.hpp"

namespace nstab {
namespace {

constexpr std::uint64_t kSdpStream = 0x6d717301;
constexpr std::uint64_t kRoundStream = 0x6d717302;
constexpr std::uint64_t kHarnessStream = 0x6d717303;

// q^v saturating at limit + 1, so gates never overflow.
std::uint64_t pow_capped(std::uint64_t base, int exp, std::uint64_t limit) {
    std::uint64_t r = 1;
    for (int i = 0; i < exp; ++i) {
        if (r > limit / base) return limit + 1;
        r *= base;
    }
    return r;
}

void check_labels(std::span<const int> labels, int vertices, int q) {
    if (static_cast<int>(labels.size()) != vertices)
        throw DimensionError("labeling size must match the vertex count");
    for (int l : labels)
        if (l < 0 || l >= q) throw DomainError("labels must lie in [0, q)");
}

}  // namespace

MaxQCutInstance::MaxQCutInstance(int q, int vertices, std::vector<WeightedEdge> edges)
    : q_(q), vertices_(vertices), edges_(std::move(edges)) {
    if (q_ < 2) throw DomainError("need at least 2 parts");
    if (vertices_ < 1) throw DomainError("need at least one vertex");
    for (auto& e : edges_) {
        if (e.u < 0 || e.u >= vertices_ || e.v < 0 || e.v >= vertices_)
            throw IndexError("edge endpoint out of range");
        if (!(e.w >= 0.0 && e.w <= 1.0)) throw DomainError("edge weights must lie in [0, 1]");
        if (e.u > e.v) std::swap(e.u, e.v);
    }
    std::sort(edges_.begin(), edges_.end(), [](const WeightedEdge& a, const WeightedEdge& b) {
        return a.u != b.u ? a.u < b.u : a.v < b.v;
    });
    for (std::size_t i = 1; i < edges_.size(); ++i)
        if (edges_[i].u == edges_[i - 1].u && edges_[i].v == edges_[i - 1].v)
            throw DomainError("duplicate edge");
    for (const auto& e : edges_) total_weight_ += e.w;
}

double MaxQCutInstance::cut_value(std::span<const int> labels) const {
    check_labels(labels, vertices_, q_);
    double v = 0.0;
    for (const auto& e : edges_)
        if (labels[e.u] != labels[e.v]) v += e.w;
    return v;
}

std::string MaxQCutInstance::to_text() const {
    std::ostringstream out;
    out << "# vertices " << vertices_ << "\n";
    char buf[64];
    for (const auto& e : edges_) {
        std::snprintf(buf, sizeof buf, "%d %d %.17g\n", e.u, e.v, e.w);
        out << buf;
    }
    return out.str();
}

MaxQCutInstance MaxQCutInstance::from_text(const std::string& text, int q) {
    std::istringstream in(text);
    std::vector<WeightedEdge> edges;
    int vertices = 0;
    std::string line;
    while (std::getline(in, line)) {
        std::istringstream ls(line);
        std::string first;
        if (!(ls >> first)) continue;
        if (first == "#") {
            std::string key;
            int n = 0;
            if (ls >> key >> n && key == "vertices") vertices = std::max(vertices, n);
            continue;
        }
        if (first[0] == '#') continue;
        WeightedEdge e;
        try {
            e.u = std::stoi(first);
        } catch (const std::exception&) {
            throw MetadataError("unparseable edge line: " + line);
        }
        if (!(ls >> e.v >> e.w)) throw MetadataError("unparseable edge line: " + line);
        edges.push_back(e);
        vertices = std::max({vertices, e.u + 1, e.v + 1});
    }
    if (vertices == 0) throw MetadataError("no vertices in graph text");
    return MaxQCutInstance(q, vertices, std::move(edges));
}

MaxQCutInstance random_gnp_instance(int vertices, double p, int q, bool unit_weights,
                                    RngStream& rng) {
    if (!(p >= 0.0 && p <= 1.0)) throw RangeError("edge probability must lie in [0, 1]");
    std::vector<WeightedEdge> edges;
    for (int u = 0; u < vertices; ++u)
        for (int v = u + 1; v < vertices; ++v)
            if (rng.next_double() < p)
                edges.push_back({u, v, unit_weights ? 1.0 : rng.next_double()});
    return MaxQCutInstance(q, vertices, std::move(edges));
}

MaxQCutInstance complete_instance(int vertices, int q, bool unit_weights, RngStream& rng) {
    std::vector<WeightedEdge> edges;
    for (int u = 0; u < vertices; ++u)
        for (int v = u + 1; v < vertices; ++v)
            edges.push_back({u, v, unit_weights ? 1.0 : rng.next_double()});
    return MaxQCutInstance(q, vertices, std::move(edges));
}

MaxQCutInstance bipartite_instance(int left, int right, double p, int q, bool unit_weights,
                                   RngStream& rng) {
    if (!(p >= 0.0 && p <= 1.0)) throw RangeError("edge probability must lie in [0, 1]");
    std::vector<WeightedEdge> edges;
    for (int u = 0; u < left; ++u)
        for (int v = 0; v < right; ++v)
            if (rng.next_double() < p)
                edges.push_back({u, left + v, unit_weights ? 1.0 : rng.next_double()});
    return MaxQCutInstance(q, left + right, std::move(edges));
}

MaxQCutInstance petersen_instance(int q) {
    std::vector<WeightedEdge> edges;
    for (int i = 0; i < 5; ++i) {
        edges.push_back({i, (i + 1) % 5, 1.0});
        edges.push_back({i, i + 5, 1.0});
        edges.push_back({5 + i, 5 + (i + 2) % 5, 1.0});
    }
    return MaxQCutInstance(q, 10, std::move(edges));
}

BruteForceResult brute_force_opt(const MaxQCutInstance& g) {
    const int v_count = g.vertices();
    const int q = g.q();
    if (pow_capped(q, v_count, kMaxBruteLabelings) > kMaxBruteLabelings)
        throw ScaleError("labeling space exceeds the exact enumeration budget");
    std::vector<int> labels(v_count, 0), best_labels(v_count, 0);
    double best = -1.0;
    // Vertex 0 stays at label 0: permuting colors preserves every cut.
    for (;;) {
        double val = 0.0;
        for (const auto& e : g.edges())
            if (labels[e.u] != labels[e.v]) val += e.w;
        if (val > best) {
            best = val;
            best_labels = labels;
        }
        int i = v_count - 1;
        while (i >= 1 && labels[i] == q - 1) labels[i--] = 0;
        if (i < 1) break;
        ++labels[i];
    }
    return {best, std::move(best_labels)};
}

// ----- relaxation solver -----

namespace {

struct SdpWork {
    const MaxQCutInstance* g = nullptr;
    int v_count = 0, r = 0;
    double c = 0.0;   // (q-1)/q
    double lo = 0.0;  // -1/(q-1)
    double mu = 4.0;
    std::vector<double> z;       // v_count x r
    std::vector<double> lambda;  // v_count x v_count, upper triangle used
    std::vector<double> dots;    // v_count x v_count
    std::vector<double> grad;    // v_count x r

    double& lam(int u, int v) { return lambda[static_cast<std::size_t>(u) * v_count + v]; }
    double dot(int u, int v) const { return dots[static_cast<std::size_t>(u) * v_count + v]; }

    void refresh_dots() {
        for (int u = 0; u < v_count; ++u)
            for (int v = u; v < v_count; ++v) {
                double s = 0.0;
                for (int j = 0; j < r; ++j) s += z[u * r + j] * z[v * r + j];
                dots[static_cast<std::size_t>(u) * v_count + v] = s;
                dots[static_cast<std::size_t>(v) * v_count + u] = s;
            }
    }

    // Augmented Lagrangian value at the current z (dots must be fresh):
    // minus the relaxation objective plus the clamped quadratic penalty.
    double lagrangian() const {
        double val = 0.0;
        for (const auto& e : g->edges()) val -= c * e.w * (1.0 - dot(e.u, e.v));
        for (int u = 0; u < v_count; ++u)
            for (int v = u + 1; v < v_count; ++v) {
                const double gap = dot(u, v) - lo;
                const double t = std::max(
                    0.0, lambda[static_cast<std::size_t>(u) * v_count + v] - mu * gap);
                val += (t * t - lambda[static_cast<std::size_t>(u) * v_count + v] *
                                    lambda[static_cast<std::size_t>(u) * v_count + v]) /
                       (2.0 * mu);
            }
        return val;
    }

    // Tangent-projected gradient of the Lagrangian; returns the squared norm.
    double refresh_grad() {
        std::fill(grad.begin(), grad.end(), 0.0);
        for (const auto& e : g->edges()) {
            if (e.u == e.v) continue;
            const double s = c * e.w;
            for (int j = 0; j < r; ++j) {
                grad[e.u * r + j] += s * z[e.v * r + j];
                grad[e.v * r + j] += s * z[e.u * r + j];
            }
        }
        for (int u = 0; u < v_count; ++u)
            for (int v = u + 1; v < v_count; ++v) {
                const double gap = dot(u, v) - lo;
                const double t = std::max(
                    0.0, lambda[static_cast<std::size_t>(u) * v_count + v] - mu * gap);
                if (t == 0.0) continue;
                for (int j = 0; j < r; ++j) {
                    grad[u * r + j] -= t * z[v * r + j];
                    grad[v * r + j] -= t * z[u * r + j];
                }
            }
        double sq = 0.0;
        for (int u = 0; u < v_count; ++u) {
            double along = 0.0;
            for (int j = 0; j < r; ++j) along += grad[u * r + j] * z[u * r + j];
            for (int j = 0; j < r; ++j) {
                grad[u * r + j] -= along * z[u * r + j];
                sq += grad[u * r + j] * grad[u * r + j];
            }
        }
        return sq;
    }

    double max_violation() const {
        double worst = 0.0;
        for (int u = 0; u < v_count; ++u)
            for (int v = u + 1; v < v_count; ++v) worst = std::max(worst, lo - dot(u, v));
        return worst;
    }

    // Tangent-projected gradient of the plain Lagrangian at the current
    // multipliers -- the KKT stationarity residual after a multiplier step.
    double stationarity() const {
        std::vector<double> s(z.size(), 0.0);
        for (const auto& e : g->edges()) {
            if (e.u == e.v) continue;
            for (int j = 0; j < r; ++j) {
                s[e.u * r + j] += c * e.w * z[e.v * r + j];
                s[e.v * r + j] += c * e.w * z[e.u * r + j];
            }
        }
        for (int u = 0; u < v_count; ++u)
            for (int v = u + 1; v < v_count; ++v) {
                const double l = lambda[static_cast<std::size_t>(u) * v_count + v];
                if (l == 0.0) continue;
                for (int j = 0; j < r; ++j) {
                    s[u * r + j] -= l * z[v * r + j];
                    s[v * r + j] -= l * z[u * r + j];
                }
            }
        double sq = 0.0;
        for (int u = 0; u < v_count; ++u) {
            double along = 0.0;
            for (int j = 0; j < r; ++j) along += s[u * r + j] * z[u * r + j];
            for (int j = 0; j < r; ++j) {
                const double t = s[u * r + j] - along * z[u * r + j];
                sq += t * t;
            }
        }
        return std::sqrt(sq);
    }

    double objective() const {
        double val = 0.0;
        for (const auto& e : g->edges()) val += c * e.w * (1.0 - dot(e.u, e.v));
        return val;
    }
};

void normalize_rows(std::vector<double>& z, int v_count, int r) {
    for (int u = 0; u < v_count; ++u) {
        double n2 = 0.0;
        for (int j = 0; j < r; ++j) n2 += z[u * r + j] * z[u * r + j];
        if (n2 < 1e-300) {
            std::fill(z.begin() + u * r, z.begin() + (u + 1) * r, 0.0);
            z[u * r] = 1.0;
        } else {
            const double inv = 1.0 / std::sqrt(n2);
            for (int j = 0; j < r; ++j) z[u * r + j] *= inv;
        }
    }
}

// Descends the Lagrangian until the projected gradient norm falls below tol.
// Limited-memory BFGS on the product of unit spheres: gradients are tangent-
// projected, steps retract by row renormalization, and curvature pairs use
// post-retraction differences. First-order steps crawl once the penalty makes
// the problem stiff; the quasi-Newton model does not.
void inner_minimize(SdpWork& w, double tol, int max_iter) {
    const std::size_t n = w.z.size();
    constexpr int kMem = 10;
    std::vector<std::vector<double>> s_hist, y_hist;
    std::vector<double> rho_hist;
    std::vector<double> alpha(kMem), d(n), trial(n), z_old(n), g_old(n);

    w.refresh_dots();
    double cur = w.lagrangian();
    double gsq = w.refresh_grad();
    for (int it = 0; it < max_iter; ++it) {
        if (std::sqrt(gsq) <= tol) return;

        // d = H * grad via the two-loop recursion, seeded with the latest
        // curvature scale; the step moves along -d.
        d.assign(w.grad.begin(), w.grad.end());
        int k = static_cast<int>(s_hist.size());
        for (int i = k - 1; i >= 0; --i) {
            double sd = 0.0;
            for (std::size_t j = 0; j < n; ++j) sd += s_hist[i][j] * d[j];
            alpha[i] = rho_hist[i] * sd;
            for (std::size_t j = 0; j < n; ++j) d[j] -= alpha[i] * y_hist[i][j];
        }
        if (k > 0) {
            double sy = 0.0, yy = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
                sy += s_hist[k - 1][j] * y_hist[k - 1][j];
                yy += y_hist[k - 1][j] * y_hist[k - 1][j];
            }
            const double gamma = yy > 1e-300 ? std::clamp(sy / yy, 1e-8, 1e8) : 1.0;
            for (std::size_t j = 0; j < n; ++j) d[j] *= gamma;
        }
        for (int i = 0; i < k; ++i) {
            double yd = 0.0;
            for (std::size_t j = 0; j < n; ++j) yd += y_hist[i][j] * d[j];
            const double beta = rho_hist[i] * yd;
            for (std::size_t j = 0; j < n; ++j) d[j] += (alpha[i] - beta) * s_hist[i][j];
        }
        double gd = 0.0, dd = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            gd += w.grad[j] * d[j];
            dd += d[j] * d[j];
        }
        if (!(gd > 1e-12 * std::sqrt(gsq * dd))) {  // not a descent direction
            s_hist.clear();
            y_hist.clear();
            rho_hist.clear();
            k = 0;
            d.assign(w.grad.begin(), w.grad.end());
            gd = gsq;
        }

        z_old = w.z;
        g_old = w.grad;
        bool accepted = false;
        for (int pass = 0; pass < 2 && !accepted; ++pass) {
            if (pass == 1) {
                if (k == 0) break;  // already steepest descent
                s_hist.clear();
                y_hist.clear();
                rho_hist.clear();
                k = 0;
                d.assign(w.grad.begin(), w.grad.end());
                gd = gsq;
            }
            double t = k > 0 ? 1.0 : std::min(1.0, 1.0 / std::sqrt(gsq));
            for (int attempt = 0; attempt < 40; ++attempt) {
                for (std::size_t j = 0; j < n; ++j) trial[j] = w.z[j] - t * d[j];
                normalize_rows(trial, w.v_count, w.r);
                std::swap(w.z, trial);
                w.refresh_dots();
                const double next = w.lagrangian();
                if (next <= cur - 1e-4 * t * gd) {
                    cur = next;
                    accepted = true;
                    break;
                }
                std::swap(w.z, trial);  // reject
                t *= 0.5;
                if (t < 1e-18) break;
            }
        }
        if (!accepted) {  // line search exhausted: z is at numerical stationarity
            w.refresh_dots();
            return;
        }

        gsq = w.refresh_grad();
        double sy = 0.0, ss = 0.0, yy = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            const double sj = w.z[j] - z_old[j];
            const double yj = w.grad[j] - g_old[j];
            sy += sj * yj;
            ss += sj * sj;
            yy += yj * yj;
        }
        if (sy > 1e-10 * std::sqrt(ss * yy)) {
            std::vector<double> s_new(n), y_new(n);
            for (std::size_t j = 0; j < n; ++j) {
                s_new[j] = w.z[j] - z_old[j];
                y_new[j] = w.grad[j] - g_old[j];
            }
            s_hist.push_back(std::move(s_new));
            y_hist.push_back(std::move(y_new));
            rho_hist.push_back(1.0 / sy);
            if (static_cast<int>(s_hist.size()) > kMem) {
                s_hist.erase(s_hist.begin());
                y_hist.erase(y_hist.begin());
                rho_hist.erase(rho_hist.begin());
            }
        }
    }
    w.refresh_dots();
}

// Non-negative least squares by the classical active-set passes; the problem
// here is tiny (rows = V * r, columns = near-active pairs). Plain least
// squares with negatives clamped is NOT a substitute: on degenerate active
// sets the clamped fit stops explaining the gradient entirely.
Eigen::VectorXd nnls(const Eigen::MatrixXd& a, const Eigen::VectorXd& b) {
    const long m = a.cols();
    Eigen::VectorXd x = Eigen::VectorXd::Zero(m);
    std::vector<char> passive(static_cast<std::size_t>(m), 0);
    Eigen::VectorXd resid = b;
    const double tol = 1e-12 * (1.0 + b.norm());
    for (long guard = 0; guard < 3 * m + 30; ++guard) {
        const Eigen::VectorXd w = a.transpose() * resid;
        long best = -1;
        double wbest = tol;
        for (long j = 0; j < m; ++j)
            if (!passive[j] && w[j] > wbest) {
                wbest = w[j];
                best = j;
            }
        if (best < 0) break;
        passive[static_cast<std::size_t>(best)] = 1;
        for (long inner = 0; inner <= m; ++inner) {
            std::vector<long> idx;
            for (long j = 0; j < m; ++j)
                if (passive[j]) idx.push_back(j);
            Eigen::MatrixXd sub(a.rows(), static_cast<long>(idx.size()));
            for (std::size_t k = 0; k < idx.size(); ++k) sub.col(static_cast<long>(k)) = a.col(idx[k]);
            const Eigen::VectorXd s = sub.colPivHouseholderQr().solve(b);
            double alpha = 1.0;
            for (std::size_t k = 0; k < idx.size(); ++k)
                if (s[static_cast<long>(k)] <= 0.0) {
                    const double xk = x[idx[k]];
                    const double sk = s[static_cast<long>(k)];
                    if (xk - sk > 0.0) alpha = std::min(alpha, xk / (xk - sk));
                }
            if (alpha >= 1.0) {
                for (std::size_t k = 0; k < idx.size(); ++k) x[idx[k]] = s[static_cast<long>(k)];
                break;
            }
            for (std::size_t k = 0; k < idx.size(); ++k)
                x[idx[k]] += alpha * (s[static_cast<long>(k)] - x[idx[k]]);
            for (long j = 0; j < m; ++j)
                if (passive[j] && x[j] <= 1e-14) {
                    passive[j] = 0;
                    x[j] = 0.0;
                }
        }
        resid = b - a * x;
    }
    return x;
}

// KKT certificate: non-negative least-squares multipliers on the near-active
// set. The running multiplier estimates carry mu * (violation noise) and
// never settle, so the certificate is fit after the fact: minimize
// || P(grad_obj - sum lambda grad_constraint) || over lambda >= 0 supported
// on near-active pairs.
double certified_kkt(const SdpWork& w, double scale) {
    const int vc = w.v_count, r = w.r;
    std::vector<std::pair<int, int>> active;
    for (int u = 0; u < vc; ++u)
        for (int v = u + 1; v < vc; ++v)
            if (w.dot(u, v) <= w.lo + 1e-5) active.emplace_back(u, v);

    auto project = [&](Eigen::VectorXd& vec) {
        for (int u = 0; u < vc; ++u) {
            double along = 0.0;
            for (int j = 0; j < r; ++j) along += vec[u * r + j] * w.z[u * r + j];
            for (int j = 0; j < r; ++j) vec[u * r + j] -= along * w.z[u * r + j];
        }
    };

    Eigen::VectorXd b = Eigen::VectorXd::Zero(static_cast<long>(vc) * r);
    for (const auto& e : w.g->edges()) {
        if (e.u == e.v) continue;
        for (int j = 0; j < r; ++j) {
            b[e.u * r + j] += w.c * e.w * w.z[e.v * r + j];
            b[e.v * r + j] += w.c * e.w * w.z[e.u * r + j];
        }
    }
    project(b);
    if (active.empty()) return b.norm() / scale;

    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(b.size(), static_cast<long>(active.size()));
    for (std::size_t k = 0; k < active.size(); ++k) {
        const auto [u, v] = active[k];
        Eigen::VectorXd col = Eigen::VectorXd::Zero(b.size());
        for (int j = 0; j < r; ++j) {
            col[u * r + j] = w.z[v * r + j];
            col[v * r + j] = w.z[u * r + j];
        }
        project(col);
        a.col(static_cast<long>(k)) = col;
    }
    const Eigen::VectorXd lam = nnls(a, b);
    const double stat = (b - a * lam).norm();
    double comp = 0.0;
    for (std::size_t k = 0; k < active.size(); ++k)
        comp = std::max(comp,
                        lam[static_cast<long>(k)] *
                            std::abs(w.dot(active[k].first, active[k].second) - w.lo));
    return std::max(stat, comp) / scale;
}

struct SdpAttempt {
    std::vector<double> z;
    double objective = 0.0, viol = 0.0, kkt = 0.0;
    bool converged = false;
};

SdpAttempt solve_once(const MaxQCutInstance& g, int r, std::uint64_t seed,
                      std::uint64_t stream) {
    SdpWork w;
    w.g = &g;
    w.v_count = g.vertices();
    w.r = r;
    w.c = (g.q() - 1.0) / g.q();
    w.lo = -1.0 / (g.q() - 1.0);
    w.z.resize(static_cast<std::size_t>(w.v_count) * r);
    w.lambda.assign(static_cast<std::size_t>(w.v_count) * w.v_count, 0.0);
    w.dots.resize(static_cast<std::size_t>(w.v_count) * w.v_count);
    w.grad.resize(w.z.size());

    RngStream rng(seed, stream);
    for (double& x : w.z) x = rng.next_normal();
    normalize_rows(w.z, w.v_count, r);

    const double scale = 1.0 + w.c * g.total_weight();
    double tol = 1e-3 * scale;
    double prev_viol = std::numeric_limits<double>::infinity();
    int polish = -1;  // extra multiplier rounds once feasibility is reached
    SdpAttempt out;
    for (int outer = 0; outer < 80; ++outer) {
        inner_minimize(w, tol, 500);
        out.viol = w.max_violation();
        for (int u = 0; u < w.v_count; ++u)
            for (int v = u + 1; v < w.v_count; ++v)
                w.lam(u, v) = std::max(0.0, w.lam(u, v) - w.mu * (w.dot(u, v) - w.lo));
        const double stat = w.stationarity();
        if (out.viol <= 1e-8 && stat <= 5e-5 * scale) break;
        if (polish < 0 && out.viol <= 1e-6) polish = 12;
        if (polish >= 0 && --polish == 0) break;
        // Grow the penalty only while infeasibility is both material and not
        // shrinking; growing on noise makes the inner problem ill-conditioned.
        if (out.viol > 1e-6 && out.viol > 0.1 * prev_viol) w.mu = std::min(w.mu * 4.0, 1e5);
        prev_viol = std::max(out.viol, 1e-16);
        tol = std::max(tol * 0.5, 1e-6 * scale);
    }
    out.kkt = certified_kkt(w, scale);
    out.converged = out.viol <= 1e-6 && out.kkt <= 1e-4;
    out.objective = w.objective();  // dots are fresh from the last inner pass
    out.z = std::move(w.z);
    return out;
}

}  // namespace

double SdpSolution::dot(int u, int v) const {
    if (u < 0 || u >= vertices || v < 0 || v >= vertices)
        throw IndexError("vertex out of range");
    double s = 0.0;
    for (int j = 0; j < r; ++j) s += z[u * r + j] * z[v * r + j];
    return s;
}

nlohmann::json SdpSolution::to_json() const {
    return {{"vertices", vertices}, {"q", q},
            {"r", r},               {"objective", objective},
            {"delta", delta},       {"norm_residual", norm_residual},
            {"dot_residual", dot_residual}, {"kkt_residual", kkt_residual},
            {"restarts", restarts}, {"z", z}};
}

SdpSolution sdp_solve(const MaxQCutInstance& g, double delta, std::uint64_t seed,
                      int restarts) {
    if (restarts < 1) throw DomainError("need at least one restart");
    if (delta < 0.0) delta = 1e-4 * g.total_weight();
    if (delta <= 0.0) delta = 1e-8;
    const int v_count = g.vertices();
    const int r = std::min(
        v_count, static_cast<int>(std::ceil(std::sqrt(2.0 * v_count))) + 1);

    std::optional<SdpAttempt> best;
    for (int t = 0; t < restarts; ++t) {
        SdpAttempt a = solve_once(g, r, seed, kSdpStream + t);
        if (!a.converged) continue;
        if (!best || a.objective > best->objective) best = std::move(a);
    }
    if (!best)
        throw ConvergenceError("relaxation solver reached no feasible stationary point");

    SdpSolution sol;
    sol.vertices = v_count;
    sol.q = g.q();
    sol.r = r;
    sol.z = std::move(best->z);
    sol.objective = best->objective;
    sol.delta = delta;
    sol.dot_residual = best->viol;
    sol.kkt_residual = best->kkt;
    sol.restarts = restarts;
    double nr = 0.0;
    for (int u = 0; u < v_count; ++u) {
        double n2 = 0.0;
        for (int j = 0; j < r; ++j) n2 += sol.z[u * r + j] * sol.z[u * r + j];
        nr = std::max(nr, std::abs(n2 - 1.0));
    }
    sol.norm_residual = nr;
    return sol;
}

// ----- rounding -----

namespace {

struct RoundAcc {
    double sum = 0.0, sumsq = 0.0;
    double best = -1.0;
    std::vector<int> best_labels;
    std::uint64_t count = 0;

    void add(double v, const std::vector<int>& labels) {
        sum += v;
        sumsq += v * v;
        ++count;
        if (v > best) {
            best = v;
            best_labels = labels;
        }
    }
    RoundAcc& operator+=(const RoundAcc& o) {
        sum += o.sum;
        sumsq += o.sumsq;
        count += o.count;
        if (o.best > best) {
            best = o.best;
            best_labels = o.best_labels;
        }
        return *this;
    }
};

}  // namespace

nlohmann::json RoundingReport::to_json() const {
    return {{"best_value", best_value}, {"mean_value", mean_value}, {"mean_se", mean_se},
            {"repeats", repeats},       {"seed", seed},             {"best_labels", best_labels}};
}

RoundingReport round_sdp(const SdpSolution& sol, const MaxQCutInstance& g,
                         const GaussianPartition& partition, int repeats, std::uint64_t seed,
                         int workers) {
    if (repeats < 1) throw DomainError("need at least one rounding repeat");
    if (partition.cells() != g.q())
        throw DomainError("partition cell count must equal the part count");
    if (sol.vertices != g.vertices() ||
        sol.z.size() != static_cast<std::size_t>(sol.vertices) * sol.r)
        throw DimensionError("solution does not match the instance");
    const int m = partition.dim();
    const int r = sol.r;
    const int v_count = g.vertices();

    auto acc = parallel_accumulate(
        static_cast<std::uint64_t>(repeats), workers, seed, kRoundStream,
        [&](RngStream& rng, std::uint64_t count) {
            RoundAcc a;
            std::vector<double> t(static_cast<std::size_t>(m) * r);
            std::vector<double> y(m);
            std::vector<int> labels(v_count);
            for (std::uint64_t s = 0; s < count; ++s) {
                for (double& x : t) x = rng.next_normal();
                for (int u = 0; u < v_count; ++u) {
                    for (int i = 0; i < m; ++i) {
                        double dot = 0.0;
                        for (int j = 0; j < r; ++j) dot += t[i * r + j] * sol.z[u * r + j];
                        y[i] = dot;
                    }
                    labels[u] = partition.classify(y);
                }
                double val = 0.0;
                for (const auto& e : g.edges())
                    if (labels[e.u] != labels[e.v]) val += e.w;
                a.add(val, labels);
            }
            return a;
        });

    RoundingReport rep;
    rep.repeats = repeats;
    rep.seed = seed;
    rep.best_value = acc.best;
    rep.best_labels = std::move(acc.best_labels);
    rep.mean_value = acc.sum / static_cast<double>(acc.count);
    if (acc.count > 1) {
        const double n = static_cast<double>(acc.count);
        const double var = std::max(0.0, (acc.sumsq - acc.sum * acc.sum / n) / (n - 1.0));
        rep.mean_se = std::sqrt(var / n);
    }
    return rep;
}

RoundingReport round_sdp(const SdpSolution& sol, const MaxQCutInstance& g, int repeats,
                         std::uint64_t seed, int workers) {
    return round_sdp(sol, g, GaussianPartition::simplex(g.q()), repeats, seed, workers);
}

// ----- worst-case rounding ratio -----

nlohmann::json AlphaReport::to_json() const {
    return {{"q", q},
            {"alpha", alpha},
            {"rho_star", rho_star},
            {"std_error", std_error},
            {"method", method},
            {"full_range", full_range},
            {"n_samples", n_samples},
            {"seed", seed}};
}

AlphaReport alpha_q(int q, std::uint64_t n_samples, std::uint64_t seed, bool full_range,
                    bool force_mc, int workers) {
    if (q < 2) throw DomainError("need at least 2 parts");
    AlphaReport rep;
    rep.q = q;
    rep.full_range = full_range;
    rep.seed = seed;

    if (q == 2 && !force_mc) {
        // Hyperplane rounding: the ratio (2/pi) * theta / (1 - cos theta) is
        // minimized at the root of (1 - cos t) - t sin t on (pi/2, pi).
        double t = 2.33;
        for (int i = 0; i < 64; ++i) {
            const double h = 1.0 - std::cos(t) - t * std::sin(t);
            const double dh = -t * std::cos(t);
            const double next = t - h / dh;
            if (std::abs(next - t) < 1e-15) {
                t = next;
                break;
            }
            t = next;
        }
        rep.alpha = (2.0 / std::numbers::pi) * t / (1.0 - std::cos(t));
        rep.rho_star = std::cos(t);
        rep.method = "closed_form";
        return rep;
    }

    if (n_samples == 0) n_samples = 1'000'000;
    rep.n_samples = n_samples;
    rep.method = "grid_mc";
    const double lo = -1.0 / (q - 1.0);
    const double hi = full_range ? 0.95 : 0.0;
    const double c = static_cast<double>(q) / (q - 1.0);

    double best_val = std::numeric_limits<double>::infinity();
    double best_rho = lo, best_se = 0.0;
    // Every evaluation replays the same seed, so the empirical curve is a
    // fixed function of rho and the section search below is well posed.
    auto eval = [&](double rho, std::uint64_t n) {
        auto s = simplex_pair_stability(q, rho, n, seed, workers);
        const double val = c * (1.0 - s.value) / (1.0 - rho);
        if (val < best_val) {
            best_val = val;
            best_rho = rho;
            best_se = c * s.std_error / (1.0 - rho);
        }
        return val;
    };

    constexpr int kGridPoints = 64;
    const std::uint64_t n_grid =
        std::max<std::uint64_t>(n_samples / 8, std::min<std::uint64_t>(n_samples, 100'000));
    int best_idx = 0;
    double best_grid = std::numeric_limits<double>::infinity();
    for (int i = 0; i < kGridPoints; ++i) {
        const double rho = lo + (hi - lo) * i / (kGridPoints - 1);
        const double v = eval(rho, n_grid);
        if (v < best_grid) {
            best_grid = v;
            best_idx = i;
        }
    }
    const double span = (hi - lo) / (kGridPoints - 1);
    double a = std::max(lo, lo + span * (best_idx - 1));
    double b = std::min(hi, lo + span * (best_idx + 1));
    const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
    double x1 = b - inv_phi * (b - a);
    double x2 = a + inv_phi * (b - a);
    double f1 = eval(x1, n_samples);
    double f2 = eval(x2, n_samples);
    for (int i = 0; i < 20; ++i) {
        if (f1 < f2) {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - inv_phi * (b - a);
            f1 = eval(x1, n_samples);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + inv_phi * (b - a);
            f2 = eval(x2, n_samples);
        }
    }
    rep.alpha = best_val;
    rep.rho_star = best_rho;
    rep.std_error = best_se;
    return rep;
}

// ----- benchmark harness -----

nlohmann::json RatioCase::to_json() const {
    return {{"generator", generator},
            {"vertices", vertices},
            {"edges", edge_count},
            {"opt", opt},
            {"sdp_val", sdp_val},
            {"delta", delta},
            {"rounded_best", rounded_best},
            {"rounded_mean", rounded_mean},
            {"rounded_se", rounded_se},
            {"best_over_opt", best_over_opt},
            {"mean_over_sdp", mean_over_sdp},
            {"sdp_over_opt", sdp_over_opt},
            {"dominance_ok", dominance_ok},
            {"flagged", flagged}};
}

nlohmann::json RatioReport::to_json() const {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& c : cases) arr.push_back(c.to_json());
    return {{"q", q},
            {"alpha_ref", alpha_ref},
            {"trials", trials},
            {"repeats", repeats},
            {"seed", seed},
            {"flagged_count", flagged_count},
            {"dominance_all", dominance_all},
            {"cases", arr}};
}

RatioReport approx_ratio_harness(int q, int trials, int repeats, double alpha_ref,
                                 std::uint64_t seed, int workers) {
    if (q < 2) throw DomainError("need at least 2 parts");
    if (trials < 1 || repeats < 1) throw DomainError("trials and repeats must be positive");
    RngStream rng(seed, kHarnessStream);
    RatioReport rep;
    rep.q = q;
    rep.alpha_ref = alpha_ref;
    rep.trials = trials;
    rep.repeats = repeats;
    rep.seed = seed;
    rep.dominance_all = true;

    for (int t = 0; t < trials; ++t) {
        RatioCase rc;
        std::optional<MaxQCutInstance> g;
        switch (t % 4) {
            case 0: {
                rc.generator = "gnp";
                const int n = 5 + static_cast<int>(rng.next_below(5));
                do {
                    g.emplace(random_gnp_instance(n, 0.5, q, false, rng));
                } while (g->edges().empty());
                break;
            }
            case 1: {
                rc.generator = "complete";
                const int n = 4 + static_cast<int>(rng.next_below(4));
                g.emplace(complete_instance(n, q, false, rng));
                break;
            }
            case 2: {
                rc.generator = "bipartite";
                const int l = 2 + static_cast<int>(rng.next_below(3));
                const int r = 2 + static_cast<int>(rng.next_below(3));
                do {
                    g.emplace(bipartite_instance(l, r, 0.8, q, true, rng));
                } while (g->edges().empty());
                break;
            }
            default:
                rc.generator = "petersen";
                g.emplace(petersen_instance(q));
                break;
        }
        rc.vertices = g->vertices();
        rc.edge_count = static_cast<int>(g->edges().size());
        const std::uint64_t case_seed = rng.next_u64();

        const auto exact = brute_force_opt(*g);
        const auto sol = sdp_solve(*g, -1.0, case_seed);
        const auto round = round_sdp(sol, *g, repeats, case_seed + 1, workers);

        rc.opt = exact.value;
        rc.sdp_val = sol.objective;
        rc.delta = sol.delta;
        rc.rounded_best = round.best_value;
        rc.rounded_mean = round.mean_value;
        rc.rounded_se = round.mean_se;
        rc.best_over_opt = rc.opt > 0 ? rc.rounded_best / rc.opt : 1.0;
        rc.mean_over_sdp = rc.sdp_val > 0 ? rc.rounded_mean / rc.sdp_val : 1.0;
        rc.sdp_over_opt = rc.opt > 0 ? rc.sdp_val / rc.opt : 1.0;
        rc.dominance_ok = rc.sdp_val + rc.delta >= rc.opt - 1e-12 * (1.0 + rc.opt);
        const double se_ratio = rc.sdp_val > 0 ? rc.rounded_se / rc.sdp_val : 0.0;
        rc.flagged = rc.sdp_val > 0 && rc.mean_over_sdp < alpha_ref - 3.0 * se_ratio;

        rep.dominance_all = rep.dominance_all && rc.dominance_ok;
        if (rc.flagged) ++rep.flagged_count;
        rep.cases.push_back(std::move(rc));
    }
    return rep;
}

}  // namespace nstab
