#include "nstab/partition.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "nstab/errors.hpp"
#include "nstab/gauss.hpp"

namespace nstab {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Gaussian mass of [lo, hi); uses the survival function on the upper tail to
// dodge cancellation.
double norm_mass(double lo, double hi) {
    if (!(hi > lo)) return 0.0;
    if (lo >= 0.0) {
        auto sf = [](double x) { return 0.5 * std::erfc(x / 1.4142135623730950488); };
        return std::max(0.0, sf(lo) - sf(hi));
    }
    return std::max(0.0, normal_cdf(hi) - normal_cdf(lo));
}

double json_to_bound(const nlohmann::json& v) {
    if (v.is_string()) {
        const auto s = v.get<std::string>();
        if (s == "inf") return kInf;
        if (s == "-inf") return -kInf;
        throw MetadataError("unrecognized bound string: " + s);
    }
    return v.get<double>();
}

nlohmann::json bound_to_json(double v) {
    if (v == kInf) return "inf";
    if (v == -kInf) return "-inf";
    return v;
}

}  // namespace

std::vector<double> simplex_vectors(int q) {
    if (q < 2) throw DomainError("simplex_vectors: q must be >= 2, got " + std::to_string(q));
    const int d = q - 1;
    // a_i = sqrt(q/(q-1)) (e_i - 1/q sum e_j) in R^q, expressed in the
    // orthonormal Helmert basis h_j of the zero-sum hyperplane.
    std::vector<double> out(static_cast<std::size_t>(q) * d, 0.0);
    const double scale = std::sqrt(static_cast<double>(q) / (q - 1));
    for (int i = 0; i < q; ++i) {
        for (int j = 1; j <= d; ++j) {
            // h_j has entries 1/sqrt(j(j+1)) at positions < j, -j/sqrt(j(j+1))
            // at position j, 0 after. Dot against a_i (whose mean term is
            // orthogonal to the hyperplane and drops out).
            const double norm = std::sqrt(static_cast<double>(j) * (j + 1));
            double hj_i = 0.0;
            if (i < j)
                hj_i = 1.0 / norm;
            else if (i == j)
                hj_i = -static_cast<double>(j) / norm;
            out[static_cast<std::size_t>(i) * d + (j - 1)] = scale * hj_i;
        }
    }
    return out;
}

int classify_by_vectors(std::span<const double> x, std::span<const double> vecs, int q,
                        int dim) {
    int best = 0;
    double best_dot = -kInf;
    for (int i = 0; i < q; ++i) {
        double dot = 0.0;
        for (int d = 0; d < dim; ++d)
            dot += x[static_cast<std::size_t>(d)] * vecs[static_cast<std::size_t>(i) * dim + d];
        if (dot > best_dot) {
            best_dot = dot;
            best = i;
        }
    }
    return best;
}

GaussianPartition GaussianPartition::halfspace_stack(std::vector<double> measures, int n) {
    const int q = static_cast<int>(measures.size());
    if (q < 2) throw DomainError("halfspace_stack: need at least 2 cells");
    if (n < 1) throw DimensionError("halfspace_stack: n must be >= 1");
    double sum = 0.0;
    for (double m : measures) {
        if (!(m >= 0.0)) throw DomainError("halfspace_stack: negative cell measure");
        sum += m;
    }
    if (std::abs(sum - 1.0) > 1e-9)
        throw DomainError("halfspace_stack: measures sum to " + std::to_string(sum));

    StackData d;
    d.measures = std::move(measures);
    double cum = 0.0;
    for (int i = 0; i + 1 < q; ++i) {
        cum += d.measures[static_cast<std::size_t>(i)];
        d.cuts.push_back(normal_inv_cdf(std::clamp(cum, 0.0, 1.0)));
    }
    GaussianPartition p;
    p.kind_ = Kind::halfspace_stack;
    p.n_ = n;
    p.q_ = q;
    p.label_ = "halfspace_stack";
    p.data_ = std::move(d);
    return p;
}

GaussianPartition GaussianPartition::simplex(int q) {
    return simplex_with_vectors(q, simplex_vectors(q));
}

GaussianPartition GaussianPartition::simplex_with_vectors(int q, std::vector<double> vectors) {
    if (q < 2) throw DomainError("simplex_with_vectors: q must be >= 2");
    const int d = q - 1;
    if (vectors.size() != static_cast<std::size_t>(q) * d)
        throw DimensionError("simplex_with_vectors: expected q*(q-1) entries");
    const double off = -1.0 / (q - 1);
    for (int i = 0; i < q; ++i) {
        for (int j = i; j < q; ++j) {
            double dot = 0.0;
            for (int t = 0; t < d; ++t)
                dot += vectors[static_cast<std::size_t>(i) * d + t] *
                       vectors[static_cast<std::size_t>(j) * d + t];
            const double want = i == j ? 1.0 : off;
            if (std::abs(dot - want) > 1e-9)
                throw InvariantError("simplex_with_vectors: Gram entry (" + std::to_string(i) +
                                     "," + std::to_string(j) + ") = " + std::to_string(dot));
        }
    }
    GaussianPartition p;
    p.kind_ = Kind::simplex;
    p.n_ = d;
    p.q_ = q;
    p.label_ = "simplex";
    p.data_ = SimplexData{std::move(vectors)};
    return p;
}

GaussianPartition GaussianPartition::box_union(int n, int q, std::vector<Box> boxes) {
    if (n < 1) throw DimensionError("box_union: n must be >= 1");
    if (q < 2) throw DomainError("box_union: q must be >= 2");
    for (const auto& b : boxes) {
        if (b.lo.size() != static_cast<std::size_t>(n) || b.hi.size() != static_cast<std::size_t>(n))
            throw DimensionError("box_union: box bounds must have dimension n");
        if (b.cell < 0 || b.cell >= q - 1)
            throw IndexError("box_union: explicit boxes may only label cells 0..q-2, got " +
                             std::to_string(b.cell));
        for (int d = 0; d < n; ++d)
            if (!(b.lo[static_cast<std::size_t>(d)] < b.hi[static_cast<std::size_t>(d)]))
                throw DomainError("box_union: box with empty extent on axis " + std::to_string(d));
    }
    for (std::size_t i = 0; i < boxes.size(); ++i) {
        for (std::size_t j = i + 1; j < boxes.size(); ++j) {
            bool overlap = true;
            for (int d = 0; d < n; ++d) {
                if (!(boxes[i].lo[static_cast<std::size_t>(d)] < boxes[j].hi[static_cast<std::size_t>(d)] &&
                      boxes[j].lo[static_cast<std::size_t>(d)] < boxes[i].hi[static_cast<std::size_t>(d)])) {
                    overlap = false;
                    break;
                }
            }
            if (overlap)
                throw InvariantError("box_union: boxes " + std::to_string(i) + " and " +
                                     std::to_string(j) + " overlap");
        }
    }
    GaussianPartition p;
    p.kind_ = Kind::box_union;
    p.n_ = n;
    p.q_ = q;
    p.label_ = "box_union";
    p.data_ = BoxData{std::move(boxes)};
    return p;
}

GaussianPartition GaussianPartition::callback(int n, int q,
                                              std::function<int(std::span<const double>)> fn,
                                              std::string label) {
    if (n < 1) throw DimensionError("callback: n must be >= 1");
    if (q < 2) throw DomainError("callback: q must be >= 2");
    GaussianPartition p;
    p.kind_ = Kind::callback;
    p.n_ = n;
    p.q_ = q;
    p.label_ = std::move(label);
    p.data_ = CallbackData{std::move(fn)};
    return p;
}

int GaussianPartition::classify(std::span<const double> x) const {
    if (x.size() != static_cast<std::size_t>(n_))
        throw DimensionError("classify: point has dimension " + std::to_string(x.size()) +
                             ", partition lives in " + std::to_string(n_));
    switch (kind_) {
        case Kind::halfspace_stack: {
            const auto& d = std::get<StackData>(data_);
            const double v = x[0];
            for (int i = 0; i < static_cast<int>(d.cuts.size()); ++i)
                if (v < d.cuts[static_cast<std::size_t>(i)]) return i;
            return q_ - 1;
        }
        case Kind::simplex: {
            const auto& d = std::get<SimplexData>(data_);
            return classify_by_vectors(x, d.vectors, q_, n_);
        }
        case Kind::box_union: {
            const auto& d = std::get<BoxData>(data_);
            for (const auto& b : d.boxes) {
                bool in = true;
                for (int t = 0; t < n_; ++t) {
                    const double v = x[static_cast<std::size_t>(t)];
                    if (!(v >= b.lo[static_cast<std::size_t>(t)] && v < b.hi[static_cast<std::size_t>(t)])) {
                        in = false;
                        break;
                    }
                }
                if (in) return b.cell;
            }
            return q_ - 1;
        }
        case Kind::callback: {
            const auto& d = std::get<CallbackData>(data_);
            const int c = d.fn(x);
            if (c < 0 || c >= q_)
                throw IndexError("callback partition returned cell " + std::to_string(c));
            return c;
        }
    }
    throw InvariantError("classify: corrupt partition kind");
}

std::vector<double> GaussianPartition::cell_measures() const {
    switch (kind_) {
        case Kind::halfspace_stack:
            return std::get<StackData>(data_).measures;
        case Kind::simplex:
            return std::vector<double>(static_cast<std::size_t>(q_), 1.0 / q_);
        case Kind::box_union: {
            const auto& d = std::get<BoxData>(data_);
            std::vector<double> m(static_cast<std::size_t>(q_), 0.0);
            double covered = 0.0;
            for (const auto& b : d.boxes) {
                double mass = 1.0;
                for (int t = 0; t < n_; ++t)
                    mass *= norm_mass(b.lo[static_cast<std::size_t>(t)], b.hi[static_cast<std::size_t>(t)]);
                m[static_cast<std::size_t>(b.cell)] += mass;
                covered += mass;
            }
            m[static_cast<std::size_t>(q_ - 1)] = std::max(0.0, 1.0 - covered);
            return m;
        }
        case Kind::callback:
            throw MetadataError("cell_measures: callback partition '" + label_ +
                                "' has no closed-form measures");
    }
    throw InvariantError("cell_measures: corrupt partition kind");
}

nlohmann::json GaussianPartition::to_json() const {
    nlohmann::json j;
    j["q"] = q_;
    j["n"] = n_;
    switch (kind_) {
        case Kind::halfspace_stack:
            j["kind"] = "halfspace_stack";
            j["parameters"] = {{"measures", std::get<StackData>(data_).measures}};
            break;
        case Kind::simplex:
            j["kind"] = "simplex";
            j["parameters"] = {{"vectors", std::get<SimplexData>(data_).vectors}};
            break;
        case Kind::box_union: {
            j["kind"] = "box_union";
            nlohmann::json boxes = nlohmann::json::array();
            for (const auto& b : std::get<BoxData>(data_).boxes) {
                nlohmann::json lo = nlohmann::json::array(), hi = nlohmann::json::array();
                for (double v : b.lo) lo.push_back(bound_to_json(v));
                for (double v : b.hi) hi.push_back(bound_to_json(v));
                boxes.push_back({{"lo", lo}, {"hi", hi}, {"cell", b.cell}});
            }
            j["parameters"] = {{"boxes", boxes}};
            break;
        }
        case Kind::callback:
            j["kind"] = "callback";
            j["parameters"] = {{"serializable", false}, {"label", label_}};
            break;
    }
    return j;
}

GaussianPartition GaussianPartition::from_json(const nlohmann::json& j) {
    const auto kind = j.at("kind").get<std::string>();
    const int q = j.at("q").get<int>();
    const int n = j.at("n").get<int>();
    const auto& params = j.at("parameters");
    if (kind == "halfspace_stack")
        return halfspace_stack(params.at("measures").get<std::vector<double>>(), n);
    if (kind == "simplex")
        return simplex_with_vectors(q, params.at("vectors").get<std::vector<double>>());
    if (kind == "box_union") {
        std::vector<Box> boxes;
        for (const auto& bj : params.at("boxes")) {
            Box b;
            for (const auto& v : bj.at("lo")) b.lo.push_back(json_to_bound(v));
            for (const auto& v : bj.at("hi")) b.hi.push_back(json_to_bound(v));
            b.cell = bj.at("cell").get<int>();
            boxes.push_back(std::move(b));
        }
        return box_union(n, q, std::move(boxes));
    }
    if (kind == "callback")
        throw MetadataError("from_json: callback partitions are not serializable");
    throw MetadataError("from_json: unknown partition kind '" + kind + "'");
}

FuzzyPartition::FuzzyPartition(
    int n, int q, std::function<void(std::span<const double>, std::span<double>)> weights)
    : n_(n), q_(q), fn_(std::move(weights)) {
    if (n < 1) throw DimensionError("FuzzyPartition: n must be >= 1");
    if (q < 2) throw DomainError("FuzzyPartition: q must be >= 2");
}

FuzzyPartition FuzzyPartition::from_partition(GaussianPartition p) {
    const int q = p.cells();
    const int n = p.dim();
    return FuzzyPartition(n, q,
                          [part = std::move(p), q](std::span<const double> x, std::span<double> out) {
                              std::fill(out.begin(), out.end(), 0.0);
                              out[static_cast<std::size_t>(part.classify(x))] = 1.0;
                              (void)q;
                          });
}

void FuzzyPartition::weights(std::span<const double> x, std::span<double> out) const {
    if (x.size() != static_cast<std::size_t>(n_))
        throw DimensionError("FuzzyPartition::weights: bad point dimension");
    if (out.size() != static_cast<std::size_t>(q_))
        throw DimensionError("FuzzyPartition::weights: bad output size");
    fn_(x, out);
    double sum = 0.0;
    for (auto& v : out) {
        if (v < 0.0) {
            if (v < -1e-9) throw DomainError("FuzzyPartition: negative weight " + std::to_string(v));
            v = 0.0;
        }
        sum += v;
    }
    if (std::abs(sum - 1.0) > 1e-6)
        throw DomainError("FuzzyPartition: weights sum to " + std::to_string(sum));
    for (auto& v : out) v /= sum;
}

DefuzzifyResult defuzzify(const FuzzyPartition& g, double delta,
                          const std::vector<double>* targets) {
    const int n = g.dim();
    const int q = g.cells();
    if (n > 3) throw ScaleError("defuzzify: supports n <= 3, got " + std::to_string(n));
    if (!(delta > 0.0 && delta <= 2.0 * kGaussWindow))
        throw DomainError("defuzzify: delta must lie in (0, " + std::to_string(2 * kGaussWindow) + "]");
    if (targets) {
        if (targets->size() != static_cast<std::size_t>(q))
            throw DimensionError("defuzzify: targets size mismatch");
        double s = 0.0;
        for (double t : *targets) {
            if (!(t >= 0.0)) throw DomainError("defuzzify: negative target");
            s += t;
        }
        if (std::abs(s - 1.0) > 1e-9) throw DomainError("defuzzify: targets must sum to 1");
    }

    const int half = static_cast<int>(std::ceil(kGaussWindow / delta));
    const int m = 2 * half;  // cubes per axis, covering [-half*delta, half*delta)
    double cubes_d = 1.0;
    for (int d = 0; d < n; ++d) cubes_d *= m;
    if (cubes_d > static_cast<double>(1 << 23))
        throw ScaleError("defuzzify: grid of " + std::to_string(cubes_d) + " cubes is too fine");
    const std::size_t n_cubes = static_cast<std::size_t>(cubes_d);
    const double edge = half * delta;

    // per-axis 1D masses (all axes share them)
    std::vector<double> mass1(m);
    for (int i = 0; i < m; ++i)
        mass1[static_cast<std::size_t>(i)] = norm_mass(-edge + i * delta, -edge + (i + 1) * delta);

    // 3-point Gauss-Legendre nodes on [0, delta], density-weighted per axis
    const double gl_off = 0.5 * delta * std::sqrt(3.0 / 5.0);
    const double gl_w[3] = {5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0};
    const double gl_x[3] = {0.5 * delta - gl_off, 0.5 * delta, 0.5 * delta + gl_off};

    std::vector<double> avg(n_cubes * static_cast<std::size_t>(q), 0.0);
    std::vector<double> cube_mass(n_cubes, 0.0);

    std::vector<int> idx(static_cast<std::size_t>(n), 0);
    std::vector<double> pt(static_cast<std::size_t>(n));
    std::vector<double> w(static_cast<std::size_t>(q));
    std::vector<int> node(static_cast<std::size_t>(n), 0);

    for (std::size_t c = 0; c < n_cubes; ++c) {
        // decode cube index (axis 0 fastest)
        std::size_t rem = c;
        double cmass = 1.0;
        for (int d = 0; d < n; ++d) {
            idx[static_cast<std::size_t>(d)] = static_cast<int>(rem % m);
            rem /= m;
            cmass *= mass1[static_cast<std::size_t>(idx[static_cast<std::size_t>(d)])];
        }
        cube_mass[c] = cmass;
        double* a = &avg[c * static_cast<std::size_t>(q)];
        if (cmass <= 0.0) {
            a[0] = 1.0;  // arbitrary but valid; carries no mass
            continue;
        }
        // density-weighted average of g over the cube
        std::fill(node.begin(), node.end(), 0);
        double norm = 0.0;
        while (true) {
            double wt = 1.0;
            for (int d = 0; d < n; ++d) {
                const double x0 = -edge + idx[static_cast<std::size_t>(d)] * delta +
                                  gl_x[node[static_cast<std::size_t>(d)]];
                pt[static_cast<std::size_t>(d)] = x0;
                wt *= gl_w[node[static_cast<std::size_t>(d)]] * normal_pdf(x0);
            }
            g.weights(pt, w);
            for (int t = 0; t < q; ++t) a[t] += wt * w[static_cast<std::size_t>(t)];
            norm += wt;
            int d = 0;
            while (d < n && ++node[static_cast<std::size_t>(d)] == 3) {
                node[static_cast<std::size_t>(d)] = 0;
                ++d;
            }
            if (d == n) break;
        }
        double s = 0.0;
        for (int t = 0; t < q; ++t) {
            a[t] = std::max(0.0, a[t] / norm);
            s += a[t];
        }
        for (int t = 0; t < q; ++t) a[t] /= s;
    }

    double covered = 0.0;
    for (double v : cube_mass) covered += v;

    if (targets) {
        // Greedy mass transfer: walk the cubes once, moving weight from
        // over-full to under-full cells until global masses hit the targets.
        std::vector<double> deficit(static_cast<std::size_t>(q));
        for (int t = 0; t < q; ++t) {
            double cur = 0.0;
            for (std::size_t c = 0; c < n_cubes; ++c)
                cur += cube_mass[c] * avg[c * static_cast<std::size_t>(q) + static_cast<std::size_t>(t)];
            deficit[static_cast<std::size_t>(t)] =
                (*targets)[static_cast<std::size_t>(t)] * covered - cur;
        }
        for (std::size_t c = 0; c < n_cubes; ++c) {
            const double wcube = cube_mass[c];
            if (wcube <= 0.0) continue;
            double* a = &avg[c * static_cast<std::size_t>(q)];
            for (int o = 0; o < q; ++o) {
                if (deficit[static_cast<std::size_t>(o)] >= -1e-15 || a[o] <= 0.0) continue;
                for (int u = 0; u < q && a[o] > 0.0; ++u) {
                    if (deficit[static_cast<std::size_t>(u)] <= 1e-15) continue;
                    const double t = std::min({a[o] * wcube, -deficit[static_cast<std::size_t>(o)],
                                               deficit[static_cast<std::size_t>(u)]});
                    a[o] -= t / wcube;
                    a[u] += t / wcube;
                    deficit[static_cast<std::size_t>(o)] += t;
                    deficit[static_cast<std::size_t>(u)] -= t;
                }
                if (a[o] < 0.0) a[o] = 0.0;
            }
        }
    }

    // Slab thresholds along axis 0 realizing the per-cube weights.
    std::vector<double> cuts(n_cubes * static_cast<std::size_t>(q - 1));
    for (std::size_t c = 0; c < n_cubes; ++c) {
        const int i0 = static_cast<int>(c % m);
        const double lo = -edge + i0 * delta;
        const double f_lo = normal_cdf(lo);
        const double span = normal_cdf(lo + delta) - f_lo;
        const double* a = &avg[c * static_cast<std::size_t>(q)];
        double cum = 0.0;
        for (int t = 0; t + 1 < q; ++t) {
            cum += a[t];
            cuts[c * static_cast<std::size_t>(q - 1) + static_cast<std::size_t>(t)] =
                normal_inv_cdf(std::clamp(f_lo + span * std::min(cum, 1.0), 0.0, 1.0));
        }
    }

    std::vector<double> measures(static_cast<std::size_t>(q), 0.0);
    for (std::size_t c = 0; c < n_cubes; ++c)
        for (int t = 0; t < q; ++t)
            measures[static_cast<std::size_t>(t)] +=
                cube_mass[c] * avg[c * static_cast<std::size_t>(q) + static_cast<std::size_t>(t)];

    // classification closure: cube lookup inside the window, argmax outside
    auto shared_cuts = std::make_shared<std::vector<double>>(std::move(cuts));
    const FuzzyPartition gcopy = g;
    auto fn = [shared_cuts, gcopy, n, q, m, edge, delta](std::span<const double> x) -> int {
        for (int d = 0; d < n; ++d)
            if (!(x[static_cast<std::size_t>(d)] >= -edge && x[static_cast<std::size_t>(d)] < edge)) {
                std::vector<double> wloc(static_cast<std::size_t>(q));
                gcopy.weights(x, wloc);
                int best = 0;
                for (int t = 1; t < q; ++t)
                    if (wloc[static_cast<std::size_t>(t)] > wloc[static_cast<std::size_t>(best)]) best = t;
                return best;
            }
        std::size_t c = 0, stride = 1;
        for (int d = 0; d < n; ++d) {
            const int i = std::min(m - 1, static_cast<int>((x[static_cast<std::size_t>(d)] + edge) / delta));
            c += stride * static_cast<std::size_t>(i);
            stride *= static_cast<std::size_t>(m);
        }
        const double* cu = &(*shared_cuts)[c * static_cast<std::size_t>(q - 1)];
        const double v = x[0];
        for (int t = 0; t + 1 < q; ++t)
            if (v < cu[t]) return t;
        return q - 1;
    };

    DefuzzifyResult res{GaussianPartition::callback(n, q, std::move(fn), "defuzzified"),
                        std::move(measures), std::max(0.0, 1.0 - covered)};
    return res;
}

}  // namespace nstab
