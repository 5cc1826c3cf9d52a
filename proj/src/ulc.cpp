#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <utility>

#include <boost/rational.hpp>

#include "nstab/errors.hpp"
#include "nstab/fourier.hpp"
#include "nstab/maxqcut.hpp"

namespace nstab {
namespace {

std::uint64_t pow_capped(std::uint64_t base, int exp, std::uint64_t limit) {
    std::uint64_t r = 1;
    for (int i = 0; i < exp; ++i) {
        if (r > limit / base) return limit + 1;
        r *= base;
    }
    return r;
}

std::uint64_t mul_capped(std::uint64_t a, std::uint64_t b, std::uint64_t limit) {
    if (a != 0 && b > limit / a) return limit + 1;
    return a * b;
}

// Best fraction for x by continued fractions, stopping at max_den; empty when
// no convergent lands within tol.
std::optional<std::pair<long long, long long>> rationalize(double x, long long max_den,
                                                           double tol) {
    long long h2 = 0, h1 = 1, k2 = 1, k1 = 0;  // h/k convergents
    double rest = x;
    for (int it = 0; it < 64; ++it) {
        const double fa = std::floor(rest);
        if (std::abs(fa) > 1e15) break;
        const auto a = static_cast<long long>(fa);
        const long long h = a * h1 + h2;
        const long long k = a * k1 + k2;
        if (k > max_den || k < 0) break;
        h2 = h1;
        h1 = h;
        k2 = k1;
        k1 = k;
        if (std::abs(x - static_cast<double>(h) / static_cast<double>(k)) <= tol)
            return std::make_pair(h, k);
        const double frac = rest - fa;
        if (frac < 1e-15) break;
        rest = 1.0 / frac;
    }
    return std::nullopt;
}

struct NeuSum {
    double s = 0.0, c = 0.0;
    void add(double x) {
        const double t = s + x;
        c += std::abs(s) >= std::abs(x) ? (s - t) + x : (x - t) + s;
        s = t;
    }
    double get() const { return s + c; }
};

// Point digits in the DiscreteFunction order: coordinate 0 most significant.
std::vector<int> all_digits(int q, int m, std::uint64_t points) {
    std::vector<int> d(points * m);
    for (std::uint64_t x = 0; x < points; ++x) {
        std::uint64_t rem = x;
        for (int i = m - 1; i >= 0; --i) {
            d[x * m + i] = static_cast<int>(rem % q);
            rem /= q;
        }
    }
    return d;
}

// perm_map[e][x] = index of P_sigma(x), the point with digit j = x[perm[j]].
std::vector<std::vector<std::uint32_t>> permutation_maps(const UlcInstance& l, int q,
                                                         std::uint64_t points,
                                                         std::span<const int> digits) {
    const int m = l.label_size();
    std::vector<std::vector<std::uint32_t>> maps(l.edges().size());
    for (std::size_t e = 0; e < l.edges().size(); ++e) {
        const auto& perm = l.edges()[e].perm;
        auto& map = maps[e];
        map.resize(points);
        for (std::uint64_t x = 0; x < points; ++x) {
            std::uint64_t idx = 0;
            for (int j = 0; j < m; ++j) idx = idx * q + digits[x * m + perm[j]];
            map[x] = static_cast<std::uint32_t>(idx);
        }
    }
    return maps;
}

struct VerifierPlan {
    int q = 0, m = 0;
    std::uint64_t points = 0;  // q^m
    std::vector<int> digits;
    std::vector<std::vector<std::uint32_t>> perm_map;
};

VerifierPlan verifier_plan(const UlcInstance& l, int q) {
    if (q < 2) throw DomainError("need at least 2 parts");
    VerifierPlan p;
    p.q = q;
    p.m = l.label_size();
    p.points = pow_capped(q, p.m, kMaxReductionVertices);
    if (mul_capped(p.points, l.w_count(), kMaxReductionVertices) > kMaxReductionVertices)
        throw ScaleError("proof table exceeds the reduction budget");
    const std::uint64_t terms =
        mul_capped(mul_capped(static_cast<std::uint64_t>(l.v_count()),
                              static_cast<std::uint64_t>(l.v_degree()) * l.v_degree(),
                              kMaxVerifierTerms),
                   p.points * p.points, kMaxVerifierTerms);
    if (terms > kMaxVerifierTerms)
        throw ScaleError("verifier outcome enumeration exceeds the budget");
    p.digits = all_digits(q, p.m, p.points);
    p.perm_map = permutation_maps(l, q, p.points, p.digits);
    return p;
}

// Calls term(edge_i, edge_j, x, y, eq) for every verifier outcome, where eq
// counts coordinates with x_i == y_i. The outcome probability is
// 1/(|V| d^2 q^m) * mu_same^eq * mu_diff^(m-eq).
template <class Fn>
void enumerate_outcomes(const UlcInstance& l, const VerifierPlan& p, Fn&& term) {
    const int m = p.m;
    for (int v = 0; v < l.v_count(); ++v) {
        const auto slots = l.edges_of(v);
        for (int ei : slots)
            for (int ej : slots)
                for (std::uint64_t x = 0; x < p.points; ++x) {
                    const int* dx = p.digits.data() + x * m;
                    for (std::uint64_t y = 0; y < p.points; ++y) {
                        const int* dy = p.digits.data() + y * m;
                        int eq = 0;
                        for (int i = 0; i < m; ++i) eq += dx[i] == dy[i];
                        term(ei, ej, x, y, eq);
                    }
                }
    }
}

struct ExactSetup {
    long long num = 0, den = 1;           // rho
    std::uint64_t scale = 0;              // |V| d^2 q^m (q den)^m
    std::vector<std::uint64_t> pow_same;  // (den + (q-1) num)^i
    std::vector<std::uint64_t> pow_diff;  // (den - num)^i
};

constexpr std::uint64_t kExactCap = std::uint64_t{1} << 62;

// Integer bookkeeping for the exact path; empty when the budget is exceeded.
std::optional<ExactSetup> exact_setup(const UlcInstance& l, int q, long long num,
                                      long long den) {
    const int m = l.label_size();
    if (pow_capped(q, m, 4096) * static_cast<std::uint64_t>(m) > 4096) return std::nullopt;
    if (den + (q - 1) * num < 0 || num > den) return std::nullopt;  // rounded out of range
    ExactSetup s;
    s.num = num;
    s.den = den;
    const auto same = static_cast<std::uint64_t>(den + (q - 1) * num);
    const auto diff = static_cast<std::uint64_t>(den - num);
    const std::uint64_t qm = pow_capped(q, m, kExactCap);
    const std::uint64_t qden_m =
        pow_capped(static_cast<std::uint64_t>(q) * den, m, kExactCap);
    std::uint64_t scale = mul_capped(static_cast<std::uint64_t>(l.v_count()),
                                     static_cast<std::uint64_t>(l.v_degree()) * l.v_degree(),
                                     kExactCap);
    scale = mul_capped(scale, qm, kExactCap);
    scale = mul_capped(scale, qden_m, kExactCap);
    if (scale > kExactCap) return std::nullopt;
    s.scale = scale;
    s.pow_same.resize(m + 1);
    s.pow_diff.resize(m + 1);
    s.pow_same[0] = s.pow_diff[0] = 1;
    for (int i = 1; i <= m; ++i) {
        s.pow_same[i] = s.pow_same[i - 1] * same;
        s.pow_diff[i] = s.pow_diff[i - 1] * diff;
    }
    return s;
}

void check_rho_range(int q, double rho) {
    if (!(rho >= -1.0 / (q - 1.0) - 1e-15 && rho <= 1.0 + 1e-15))
        throw RangeError("correlation must lie in [-1/(q-1), 1]");
}

void check_tables(const UlcInstance& l, const std::vector<std::vector<int>>& tables, int q,
                  std::uint64_t points) {
    if (tables.size() != static_cast<std::size_t>(l.w_count()))
        throw DimensionError("need one proof table per W vertex");
    for (const auto& t : tables) {
        if (t.size() != points) throw DimensionError("proof table has the wrong size");
        for (int v : t)
            if (v < 0 || v >= q) throw DomainError("proof table entries must lie in [0, q)");
    }
}

std::vector<std::vector<int>> dictator_tables(const UlcInstance& l, std::span<const int> labels_w,
                                              int q) {
    const int m = l.label_size();
    if (static_cast<int>(labels_w.size()) != l.w_count())
        throw DimensionError("need one label per W vertex");
    for (int lw : labels_w)
        if (lw < 0 || lw >= m) throw DomainError("labels must lie in [0, label_size)");
    const std::uint64_t points = pow_capped(q, m, kMaxReductionVertices);
    if (mul_capped(points, l.w_count(), kMaxReductionVertices) > kMaxReductionVertices)
        throw ScaleError("proof table exceeds the reduction budget");
    const auto digits = all_digits(q, m, points);
    std::vector<std::vector<int>> tables(l.w_count());
    for (int w = 0; w < l.w_count(); ++w) {
        tables[w].resize(points);
        for (std::uint64_t x = 0; x < points; ++x)
            tables[w][x] = digits[x * m + labels_w[w]];
    }
    return tables;
}

}  // namespace

// ----- instance -----

UlcInstance::UlcInstance(int label_size, int v_count, int w_count, std::vector<UlcEdge> edges)
    : m_(label_size), n_v_(v_count), n_w_(w_count), edges_(std::move(edges)) {
    if (m_ < 1) throw DomainError("label alphabet must be nonempty");
    if (n_v_ < 1 || n_w_ < 1) throw DomainError("both sides must be nonempty");
    if (edges_.empty()) throw DomainError("need at least one edge");
    std::vector<int> degree(n_v_, 0);
    std::vector<char> seen_pair(static_cast<std::size_t>(n_v_) * n_w_, 0);
    std::vector<char> hit(m_);
    for (const auto& e : edges_) {
        if (e.v < 0 || e.v >= n_v_ || e.w < 0 || e.w >= n_w_)
            throw IndexError("edge endpoint out of range");
        auto& dup = seen_pair[static_cast<std::size_t>(e.v) * n_w_ + e.w];
        if (dup) throw DomainError("duplicate edge");
        dup = 1;
        if (static_cast<int>(e.perm.size()) != m_)
            throw DimensionError("permutation size must equal the label alphabet");
        std::fill(hit.begin(), hit.end(), 0);
        for (int x : e.perm) {
            if (x < 0 || x >= m_ || hit[x]) throw DomainError("edge map is not a bijection");
            hit[x] = 1;
        }
        ++degree[e.v];
    }
    degree_ = degree[0];
    for (int d : degree)
        if (d != degree_) throw DomainError("the V side must be regular");
    by_v_.resize(edges_.size());
    std::iota(by_v_.begin(), by_v_.end(), 0);
    std::stable_sort(by_v_.begin(), by_v_.end(),
                     [&](int a, int b) { return edges_[a].v < edges_[b].v; });
}

std::span<const int> UlcInstance::edges_of(int v) const {
    if (v < 0 || v >= n_v_) throw IndexError("vertex out of range");
    return {by_v_.data() + static_cast<std::size_t>(v) * degree_,
            static_cast<std::size_t>(degree_)};
}

double UlcInstance::value(std::span<const int> labels_v, std::span<const int> labels_w) const {
    if (static_cast<int>(labels_v.size()) != n_v_ ||
        static_cast<int>(labels_w.size()) != n_w_)
        throw DimensionError("labeling sizes must match the two sides");
    for (int l : labels_v)
        if (l < 0 || l >= m_) throw DomainError("labels must lie in [0, label_size)");
    for (int l : labels_w)
        if (l < 0 || l >= m_) throw DomainError("labels must lie in [0, label_size)");
    int satisfied = 0;
    for (const auto& e : edges_)
        if (e.perm[labels_w[e.w]] == labels_v[e.v]) ++satisfied;
    return static_cast<double>(satisfied) / static_cast<double>(edges_.size());
}

nlohmann::json UlcInstance::to_json() const {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& e : edges_) arr.push_back({{"v", e.v}, {"w", e.w}, {"perm", e.perm}});
    return {{"label_size", m_}, {"v_count", n_v_}, {"w_count", n_w_}, {"edges", arr}};
}

UlcInstance UlcInstance::from_json(const nlohmann::json& j) {
    std::vector<UlcEdge> edges;
    for (const auto& je : j.at("edges"))
        edges.push_back({je.at("v").get<int>(), je.at("w").get<int>(),
                         je.at("perm").get<std::vector<int>>()});
    return UlcInstance(j.at("label_size").get<int>(), j.at("v_count").get<int>(),
                       j.at("w_count").get<int>(), std::move(edges));
}

UlcInstance random_satisfiable_ulc(int label_size, int v_count, int w_count, int degree,
                                   RngStream& rng) {
    if (degree < 1 || degree > w_count)
        throw DomainError("degree must lie in [1, w_count]");
    std::vector<int> lv(v_count), lw(w_count);
    for (int& x : lv) x = static_cast<int>(rng.next_below(label_size));
    for (int& x : lw) x = static_cast<int>(rng.next_below(label_size));
    std::vector<int> pool(w_count);
    std::vector<UlcEdge> edges;
    for (int v = 0; v < v_count; ++v) {
        std::iota(pool.begin(), pool.end(), 0);
        rng.shuffle(pool.begin(), pool.end());
        for (int k = 0; k < degree; ++k) {
            const int w = pool[k];
            UlcEdge e;
            e.v = v;
            e.w = w;
            e.perm.resize(label_size);
            std::iota(e.perm.begin(), e.perm.end(), 0);
            rng.shuffle(e.perm.begin(), e.perm.end());
            // Force satisfaction under the planted labeling.
            const auto at = std::find(e.perm.begin(), e.perm.end(), lv[v]) - e.perm.begin();
            std::swap(e.perm[at], e.perm[lw[w]]);
            edges.push_back(std::move(e));
        }
    }
    return UlcInstance(label_size, v_count, w_count, std::move(edges));
}

// ----- verifier reduction -----

nlohmann::json UlcReduction::metadata() const {
    return {{"q", q},
            {"label_size", label_size},
            {"w_count", w_count},
            {"rho", rho},
            {"exact", exact},
            {"vertices", graph.vertices()},
            {"edges", graph.edges().size()},
            {"total_weight", graph.total_weight()}};
}

UlcReduction ulc_reduce(const UlcInstance& l, int q, double rho) {
    check_rho_range(q, rho);
    rho = std::clamp(rho, -1.0 / (q - 1.0), 1.0);
    const VerifierPlan plan = verifier_plan(l, q);
    const std::uint64_t points = plan.points;
    const int vertices = static_cast<int>(points * l.w_count());

    const auto rat = rationalize(rho, 1'000'000, 1e-12);
    std::optional<ExactSetup> ex;
    if (rat) ex = exact_setup(l, q, rat->first, rat->second);

    std::map<std::pair<int, int>, std::uint64_t> mass_int;
    std::map<std::pair<int, int>, NeuSum> mass_fp;
    std::vector<double> mu(plan.m + 1);
    if (!ex) {
        const double mu_same = rho + (1.0 - rho) / q;
        const double mu_diff = (1.0 - rho) / q;
        const double base = 1.0 / (static_cast<double>(l.v_count()) * l.v_degree() *
                                   l.v_degree() * static_cast<double>(points));
        for (int eq = 0; eq <= plan.m; ++eq)
            mu[eq] = base * std::pow(std::max(mu_same, 0.0), eq) *
                     std::pow(mu_diff, plan.m - eq);
    }

    enumerate_outcomes(l, plan, [&](int ei, int ej, std::uint64_t x, std::uint64_t y, int eq) {
        const auto& edge_i = l.edges()[ei];
        const auto& edge_j = l.edges()[ej];
        const int a = static_cast<int>(edge_i.w * points + plan.perm_map[ei][x]);
        const int b = static_cast<int>(edge_j.w * points + plan.perm_map[ej][y]);
        const auto key = std::minmax(a, b);
        if (ex) {
            const std::uint64_t t = ex->pow_same[eq] * ex->pow_diff[plan.m - eq];
            if (t != 0) mass_int[key] += t;
        } else {
            if (mu[eq] != 0.0) mass_fp[key].add(mu[eq]);
        }
    });

    std::vector<WeightedEdge> edges;
    double total;
    if (ex) {
        std::uint64_t sum = 0;
        for (const auto& [key, num] : mass_int) {
            sum += num;
            edges.push_back({key.first, key.second,
                             static_cast<double>(num) / static_cast<double>(ex->scale)});
        }
        if (sum != ex->scale) throw InvariantError("verifier outcome mass does not sum to 1");
        total = 1.0;
    } else {
        NeuSum sum;
        for (const auto& [key, m] : mass_fp) {
            const double w = m.get();
            if (w <= 0.0) continue;
            sum.add(w);
            edges.push_back({key.first, key.second, std::min(w, 1.0)});
        }
        total = sum.get();
        if (std::abs(total - 1.0) > 1e-12)
            throw InvariantError("verifier outcome mass does not sum to 1");
    }

    return {MaxQCutInstance(q, vertices, std::move(edges)),
            q, plan.m, l.w_count(), rho, ex.has_value()};
}

double proof_acceptance(const UlcInstance& l, const std::vector<std::vector<int>>& tables,
                        int q, double rho) {
    check_rho_range(q, rho);
    rho = std::clamp(rho, -1.0 / (q - 1.0), 1.0);
    const auto rat = rationalize(rho, 1'000'000, 1e-12);
    if (rat) {
        if (const auto ex = exact_setup(l, q, rat->first, rat->second)) {
            const auto f = proof_acceptance_exact(l, tables, q, rat->first, rat->second);
            return static_cast<double>(f.first) / static_cast<double>(f.second);
        }
    }
    const VerifierPlan plan = verifier_plan(l, q);
    check_tables(l, tables, q, plan.points);
    const double mu_same = rho + (1.0 - rho) / q;
    const double mu_diff = (1.0 - rho) / q;
    const double base = 1.0 / (static_cast<double>(l.v_count()) * l.v_degree() *
                               l.v_degree() * static_cast<double>(plan.points));
    std::vector<double> mu(plan.m + 1);
    for (int eq = 0; eq <= plan.m; ++eq)
        mu[eq] =
            base * std::pow(std::max(mu_same, 0.0), eq) * std::pow(mu_diff, plan.m - eq);
    NeuSum accept;
    enumerate_outcomes(l, plan, [&](int ei, int ej, std::uint64_t x, std::uint64_t y, int eq) {
        const auto& edge_i = l.edges()[ei];
        const auto& edge_j = l.edges()[ej];
        if (tables[edge_i.w][plan.perm_map[ei][x]] != tables[edge_j.w][plan.perm_map[ej][y]])
            accept.add(mu[eq]);
    });
    return accept.get();
}

std::pair<long long, long long> proof_acceptance_exact(
    const UlcInstance& l, const std::vector<std::vector<int>>& tables, int q,
    long long rho_num, long long rho_den) {
    if (rho_den == 0) throw DomainError("zero denominator");
    if (rho_den < 0) {
        rho_den = -rho_den;
        rho_num = -rho_num;
    }
    if ((q - 1) * rho_num < -rho_den || rho_num > rho_den)
        throw RangeError("correlation must lie in [-1/(q-1), 1]");
    const auto g = std::gcd(std::abs(rho_num), rho_den);
    if (g > 1) {
        rho_num /= g;
        rho_den /= g;
    }
    const auto ex = exact_setup(l, q, rho_num, rho_den);
    if (!ex) throw ScaleError("instance exceeds the exact rational budget");
    const VerifierPlan plan = verifier_plan(l, q);
    check_tables(l, tables, q, plan.points);
    std::uint64_t accept = 0;
    enumerate_outcomes(l, plan, [&](int ei, int ej, std::uint64_t x, std::uint64_t y, int eq) {
        const auto& edge_i = l.edges()[ei];
        const auto& edge_j = l.edges()[ej];
        if (tables[edge_i.w][plan.perm_map[ei][x]] != tables[edge_j.w][plan.perm_map[ej][y]])
            accept += ex->pow_same[eq] * ex->pow_diff[plan.m - eq];
    });
    const boost::rational<long long> frac(static_cast<long long>(accept),
                                          static_cast<long long>(ex->scale));
    return {frac.numerator(), frac.denominator()};
}

double long_code_value(const UlcInstance& l, std::span<const int> labels_w, int q,
                       double rho) {
    return proof_acceptance(l, dictator_tables(l, labels_w, q), q, rho);
}

std::vector<int> long_code_cut(const UlcInstance& l, std::span<const int> labels_w, int q) {
    const auto tables = dictator_tables(l, labels_w, q);
    std::vector<int> cut;
    cut.reserve(tables.size() * tables[0].size());
    for (const auto& t : tables) cut.insert(cut.end(), t.begin(), t.end());
    return cut;
}

// ----- decoding a cut back into labels -----

nlohmann::json DecodeResult::to_json() const {
    return {{"labels_v", labels_v},         {"labels_w", labels_w},
            {"influence_v", influence_v},   {"influence_w", influence_w},
            {"degree", degree},             {"tau", tau},
            {"ulc_value", ulc_value}};
}

DecodeResult influence_decode(const UlcReduction& red, const UlcInstance& l,
                              std::span<const int> cut_labels, int d, double tau) {
    const int q = red.q;
    const int m = red.label_size;
    if (l.label_size() != m || l.w_count() != red.w_count)
        throw MetadataError("reduction metadata does not match the instance");
    const std::uint64_t points = pow_capped(q, m, kMaxReductionVertices);
    if (red.graph.q() != q ||
        red.graph.vertices() != static_cast<int>(points * red.w_count))
        throw MetadataError("reduction graph does not match its metadata");
    if (cut_labels.size() != static_cast<std::size_t>(red.graph.vertices()))
        throw DimensionError("cut labeling size must match the graph");
    for (int c : cut_labels)
        if (c < 0 || c >= q) throw DomainError("labels must lie in [0, q)");
    if (d < 1) throw DomainError("influence degree must be positive");
    if (tau < 0.0) throw DomainError("threshold must be nonnegative");

    DecodeResult res;
    res.degree = d;
    res.tau = tau;
    res.labels_w.resize(l.w_count());
    res.influence_w.resize(l.w_count());
    res.labels_v.resize(l.v_count());
    res.influence_v.resize(l.v_count());

    const auto digits = all_digits(q, m, points);
    auto argmax_influence = [&](const MultilinearPoly& poly, int& label, double& inf) {
        label = 0;
        inf = -1.0;
        for (int i = 0; i < m; ++i) {
            const double v = low_degree_influence(poly, i, d);
            if (v > inf + 1e-15) {
                inf = v;
                label = i;
            }
        }
        inf = std::max(inf, 0.0);
    };

    for (int w = 0; w < l.w_count(); ++w) {
        const int* slice = cut_labels.data() + static_cast<std::uint64_t>(w) * points;
        auto table = DiscreteFunction::vertex_from_labels(
            q, m, q, [&](std::span<const int> omega) {
                std::uint64_t idx = 0;
                for (int x : omega) idx = idx * q + x;
                return slice[idx];
            });
        const auto poly = transform(table);
        argmax_influence(poly, res.labels_w[w], res.influence_w[w]);
    }

    // g_v averages the sigma-permuted neighbor tables; permuting coordinates
    // permutes influences, so the argmax matches the verifier's view.
    std::vector<double> tab;
    for (int v = 0; v < l.v_count(); ++v) {
        tab.assign(points * q, 0.0);
        const auto slots = l.edges_of(v);
        const double share = 1.0 / static_cast<double>(slots.size());
        for (int ei : slots) {
            const auto& e = l.edges()[ei];
            const int* slice = cut_labels.data() + static_cast<std::uint64_t>(e.w) * points;
            for (std::uint64_t x = 0; x < points; ++x) {
                std::uint64_t z = 0;
                for (int j = 0; j < m; ++j) z = z * q + digits[x * m + e.perm[j]];
                tab[x * q + slice[z]] += share;
            }
        }
        DiscreteFunction g(q, m, q, RangeTag::simplex, tab);
        const auto poly = transform(g);
        argmax_influence(poly, res.labels_v[v], res.influence_v[v]);
    }

    res.ulc_value = l.value(res.labels_v, res.labels_w);
    return res;
}

}  // namespace nstab
