// Batch front end: every public operation behind one subcommand, reproducible
// seeding, one JSON record per result on stdout (csv/pretty on request).
// Exit codes: 0 success, 1 error, 2 flagged property violation.
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "nstab/errors.hpp"
#include "nstab/estimate.hpp"
#include "nstab/fourier.hpp"
#include "nstab/gauss.hpp"
#include "nstab/maxqcut.hpp"
#include "nstab/partition.hpp"
#include "nstab/rng.hpp"
#include "nstab/social_choice.hpp"
#include "nstab/stability.hpp"

using nlohmann::json;
using namespace nstab;

namespace {

int env_workers() {
    const char* s = std::getenv("NSTAB_WORKERS");
    if (!s) return 1;
    const int w = std::atoi(s);
    return w >= 1 ? w : 1;
}

std::vector<double> parse_doubles(const std::string& csv) {
    std::vector<double> out;
    std::istringstream in(csv);
    std::string tok;
    while (std::getline(in, tok, ',')) out.push_back(std::stod(tok));
    return out;
}

std::vector<int> parse_ints(const std::string& csv) {
    std::vector<int> out;
    std::istringstream in(csv);
    std::string tok;
    while (std::getline(in, tok, ',')) out.push_back(std::stoi(tok));
    return out;
}

std::string read_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw MetadataError("cannot open " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path);
    if (!out) throw MetadataError("cannot write " + path);
    out << content;
}

void emit_csv(const json& j) {
    // Reports with a case table become one row per case; anything else is a
    // single row of its scalar fields. Nested values stay JSON-encoded.
    auto scalar_keys = [](const json& o) {
        std::vector<std::string> keys;
        for (auto it = o.begin(); it != o.end(); ++it)
            if (!it.value().is_object() && !it.value().is_array()) keys.push_back(it.key());
        return keys;
    };
    auto put_row = [](const json& o, const std::vector<std::string>& keys) {
        for (std::size_t i = 0; i < keys.size(); ++i) {
            if (i) std::cout << ',';
            std::cout << (o.contains(keys[i]) ? o.at(keys[i]).dump() : "");
        }
        std::cout << '\n';
    };
    const json* rows = nullptr;
    if (j.contains("cases") && j.at("cases").is_array() && !j.at("cases").empty())
        rows = &j.at("cases");
    const json& first = rows ? (*rows)[0] : j;
    const auto keys = scalar_keys(first);
    for (std::size_t i = 0; i < keys.size(); ++i) std::cout << (i ? "," : "") << keys[i];
    std::cout << '\n';
    if (rows)
        for (const auto& row : *rows) put_row(row, keys);
    else
        put_row(j, keys);
}

void emit(const json& j, const std::string& format) {
    if (format == "pretty")
        std::cout << j.dump(2) << '\n';
    else if (format == "csv")
        emit_csv(j);
    else
        std::cout << j.dump() << '\n';
}

json estimate_json(const StabilityEstimate& e) {
    return {{"value", e.value},
            {"std_error", e.std_error},
            {"n_samples", e.n_samples},
            {"method", e.method},
            {"seed", e.seed}};
}

DiscreteFunction named_function(const std::string& func, int q, int n, std::uint64_t seed) {
    if (func == "majority") {
        if (q != 2) throw DomainError("majority needs q = 2");
        if (n % 2 == 0) throw DomainError("majority needs odd n");
        // Points are in {0,1}^n; the vote convention maps 0 -> +1.
        return DiscreteFunction::vertex_from_labels(2, n, 2, [n](std::span<const int> w) {
            int s = 0;
            for (int i = 0; i < n; ++i) s += w[i] == 0 ? 1 : -1;
            return s > 0 ? 0 : 1;
        });
    }
    if (func == "dictator")
        return DiscreteFunction::vertex_from_labels(q, n, q,
                                                    [](std::span<const int> x) { return x[0]; });
    if (func == "plurality") return plurality_table(q, n);
    if (func == "random") {
        std::uint64_t pts = 1;
        for (int i = 0; i < n; ++i) {
            pts *= static_cast<std::uint64_t>(q);
            if (pts > (1u << 20)) throw ScaleError("function table exceeds 2^20 points");
        }
        RngStream rng(seed, 0xf1);
        std::vector<int> labels(pts);
        for (int& l : labels) l = static_cast<int>(rng.next_below(q));
        return DiscreteFunction::vertex_from_labels(
            q, n, q, [&](std::span<const int> x) {
                std::uint64_t idx = 0;
                for (int v : x) idx = idx * q + static_cast<std::uint64_t>(v);
                return labels[idx];
            });
    }
    throw DomainError("unknown function: " + func);
}

// Reference worst-case rounding ratios for the small part counts; other q
// fall back to a fresh estimate.
const std::map<int, double> kAlphaRef = {{2, 0.8785672058}, {3, 0.836008}, {4, 0.857487}};

struct SelfTest {
    std::string format;
    int count = 0;
    int failures = 0;

    void report(const std::string& name, bool ok, const json& got, const json& want) {
        ++count;
        if (!ok) ++failures;
        emit({{"op", "selftest"}, {"check", name}, {"pass", ok}, {"got", got}, {"want", want}},
             format);
    }
    void close(const std::string& name, double got, double want, double tol) {
        report(name, std::abs(got - want) <= tol, got, want);
    }
    void below(const std::string& name, double got, double bound) {
        report(name, got <= bound, got, bound);
    }
};

int run_selftest(const std::string& format) {
    SelfTest t{format};

    t.close("normal_cdf_at_zero", normal_cdf(0.0), 0.5, 1e-15);
    t.close("normal_inv_cdf_roundtrip", normal_inv_cdf(normal_cdf(1.234)), 1.234, 1e-9);
    t.close("orthant_independent", bivariate_orthant(0.0, 0.0, 0.0), 0.25, 1e-12);
    t.close("orthant_sheppard_half", bivariate_orthant(0.0, 0.0, 0.5), 1.0 / 3.0, 1e-9);
    {
        std::vector<double> zz = {0.0, 0.0};
        t.close("orthant_pair_negative", exchangeable_orthant(zz, -0.3),
                bivariate_orthant(0.0, 0.0, -0.3), 1e-10);
    }
    t.close("stability_two_cells_closed",
            simplex_pair_stability(2, 0.6, 0, 0).value,
            0.5 + std::asin(0.6) / std::numbers::pi, 1e-12);
    t.close("stability_full_correlation", simplex_pair_stability(3, 1.0, 20000, 1).value, 1.0,
            1e-12);

    {
        auto maj3 = named_function("majority", 2, 3, 0);
        t.close("majority3_agreement", noise_stability_fourier(maj3, 0.5),
                0.5 + 3.0 * 0.5 / 8.0 + 0.125 / 8.0, 1e-10);
    }
    {
        auto f = named_function("random", 3, 3, 2718);
        t.close("transform_vs_brute", noise_stability_fourier(f, 0.35),
                noise_stability_brute(f, 0.35), 1e-10);
        auto p = transform(f);
        auto back = inverse_transform(p, f.tag());
        double diff = 0.0;
        for (std::size_t i = 0; i < f.table().size(); ++i)
            diff = std::max(diff, std::abs(f.table()[i] - back.table()[i]));
        t.close("transform_roundtrip", diff, 0.0, 1e-10);
        double sum = 0.0;
        for (int i = 0; i < 3; ++i) sum += low_degree_influence(p, i, 2);
        t.below("influence_degree_bound", sum, 2.0 * p.variance() + 1e-10);
    }

    {
        auto rep = unique_best_prob(majority_rule(3), 3, 3, EstimateMode::exact, 0, 0);
        t.close("condorcet_exact_three", rep.prob.value, 17.0 / 18.0, 1e-12);
        t.close("condorcet_majority_limit", majority_unique_best_limit(3),
                3.0 * (0.25 + std::asin(1.0 / 3.0) / (2.0 * std::numbers::pi)), 1e-9);
        auto coin = cosmic_coin_prob(majority_rule(1), 2, 1, 0.6, EstimateMode::exact, 0, 0);
        t.close("coin_identity_bit", coin.value, (1.0 + 0.36) / 2.0, 1e-12);
    }

    {
        MaxQCutInstance k3(2, 3, {{0, 1}, {1, 2}, {0, 2}});
        t.close("brute_force_triangle", brute_force_opt(k3).value, 2.0, 1e-12);
        MaxQCutInstance edge(2, 2, {{0, 1}});
        t.close("sdp_single_edge", sdp_solve(edge, -1.0, 1).objective, 1.0, 1e-6);
        t.close("sdp_triangle_two_parts", sdp_solve(k3, -1.0, 1).objective, 2.25, 1e-4);
        MaxQCutInstance k3q3(3, 3, {{0, 1}, {1, 2}, {0, 2}});
        t.close("sdp_triangle_three_parts", sdp_solve(k3q3, -1.0, 1).objective, 3.0, 1e-4);
        t.close("alpha_two_parts", alpha_q(2).alpha, 0.8785672058, 1e-6);
    }

    {
        UlcInstance l(1, 1, 1, {{0, 0, {0}}});
        std::vector<std::vector<int>> tabs{{0, 1}};
        auto a = proof_acceptance_exact(l, tabs, 2, -1, 1);
        t.report("verifier_anticorrelated", a == std::make_pair(1LL, 1LL),
                 json{a.first, a.second}, json{1, 1});
        auto b = proof_acceptance_exact(l, tabs, 2, 0, 1);
        t.report("verifier_independent", b == std::make_pair(1LL, 2LL),
                 json{b.first, b.second}, json{1, 2});

        RngStream rng(11, 0);
        UlcInstance inst = random_satisfiable_ulc(2, 2, 2, 2, rng);
        UlcReduction red = ulc_reduce(inst, 2, -1.0);
        t.close("reduction_total_weight", red.graph.total_weight(), 1.0, 1e-12);
        std::vector<int> lw(inst.w_count(), 0);
        bool found = false;
        for (int i = 0; i < 4 && !found; ++i) {
            lw = {i / 2, i % 2};
            for (int a0 = 0; a0 < 2 && !found; ++a0)
                for (int a1 = 0; a1 < 2 && !found; ++a1) {
                    std::vector<int> lv = {a0, a1};
                    if (inst.value(lv, lw) == 1.0) found = true;
                }
        }
        auto cut = long_code_cut(inst, lw, 2);
        t.close("reduction_honest_cut", red.graph.cut_value(cut),
                long_code_value(inst, lw, 2, -1.0), 1e-12);
    }

    emit({{"op", "selftest"}, {"checks", t.count}, {"failures", t.failures},
          {"pass", t.failures == 0}},
         format);
    return t.failures == 0 ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"noise-stability and graph-partition toolbox"};
    app.require_subcommand(1);

    std::uint64_t seed = 0;
    std::uint64_t samples = 1'000'000;
    int workers = env_workers();
    std::string format = "json";
    std::string out_path;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--seed", seed, "random seed (default 0)");
        sub->add_option("--samples", samples, "sample budget (default 1e6)");
        sub->add_option("--workers", workers, "worker threads (default NSTAB_WORKERS or 1)")
            ->check(CLI::PositiveNumber);
        sub->add_option("--format", format, "output format")
            ->check(CLI::IsMember({"json", "csv", "pretty"}));
        sub->add_option("--out", out_path, "write the op's artifact to this file");
    };

    int exit_code = 0;

    // ---- orthant ----
    double rho = 0.0, a_thr = 0.0, b_thr = 0.0;
    std::string thresholds_csv;
    {
        auto* sub = app.add_subcommand("orthant", "lower-orthant mass of correlated normals");
        sub->add_option("--rho", rho, "pairwise correlation")->required();
        sub->add_option("--a", a_thr, "first threshold (default 0)");
        sub->add_option("--b", b_thr, "second threshold (default 0)");
        sub->add_option("--thresholds", thresholds_csv, "comma list; k > 2 uses the exchangeable family");
        add_common(sub);
        sub->callback([&] {
            std::vector<double> t =
                thresholds_csv.empty() ? std::vector<double>{a_thr, b_thr}
                                       : parse_doubles(thresholds_csv);
            json j{{"op", "orthant"}, {"rho", rho},       {"thresholds", t},
                   {"seed", seed},    {"samples", samples}};
            if (t.size() == 2) {
                j["value"] = bivariate_orthant(t[0], t[1], rho);
                j["method"] = "quadrature";
                j["std_error"] = 0.0;
            } else if (rho >= 0.0) {
                j["value"] = exchangeable_orthant(t, rho);
                j["method"] = "quadrature";
                j["std_error"] = 0.0;
            } else {
                auto est = exchangeable_orthant_mc(t, rho, samples, seed, workers);
                j["value"] = est.value;
                j["method"] = est.method;
                j["std_error"] = est.std_error;
            }
            emit(j, format);
        });
    }

    // ---- stability ----
    int q = 2;
    {
        auto* sub = app.add_subcommand("stability", "pair agreement of the simplex partition");
        sub->add_option("--q", q, "number of cells")->required();
        sub->add_option("--rho", rho, "correlation")->required();
        add_common(sub);
        sub->callback([&] {
            auto est = simplex_pair_stability(q, rho, samples, seed, workers);
            json j = estimate_json(est);
            j["op"] = "stability";
            j["q"] = q;
            j["rho"] = rho;
            j["workers"] = workers;
            emit(j, format);
        });
    }

    // ---- egt-check ----
    int k = 2, dim = 2, families = 100;
    std::string measures_csv;
    {
        auto* sub = app.add_subcommand("egt-check",
                                       "joint-agreement bound audit on random set families");
        sub->add_option("--k", k, "family size (default 2)");
        sub->add_option("--rho", rho, "correlation")->required();
        sub->add_option("--measures", measures_csv, "comma list of k target measures")->required();
        sub->add_option("--dim", dim, "ambient dimension (default 2)");
        sub->add_option("--families", families, "number of random families (default 100)");
        add_common(sub);
        sub->callback([&] {
            const auto measures = parse_doubles(measures_csv);
            auto rep = halfspace_bound_audit(k, rho, measures, dim, families, samples, seed,
                                             workers);
            json j = rep.to_json();
            j["op"] = "egt-check";
            emit(j, format);
            if (rep.violations > 0) exit_code = 2;
        });
    }

    // ---- ssc-probe ----
    int candidates = 200;
    {
        auto* sub = app.add_subcommand(
            "ssc-probe", "compare random balanced 3-cell partitions against the simplex");
        sub->add_option("--rho", rho, "correlation")->required();
        sub->add_option("--dim", dim, "ambient dimension (default 2)");
        sub->add_option("--candidates", candidates, "number of candidates (default 200)");
        add_common(sub);
        sub->callback([&] {
            auto rep = balanced_partition_probe(3, dim, rho, candidates, samples, seed, workers);
            json j = rep.to_json();
            j["op"] = "ssc-probe";
            emit(j, format);
            if (rep.violations > 0) exit_code = 2;
        });
    }

    // ---- fourier ----
    int n = 3;
    std::string func = "majority";
    {
        auto* sub = app.add_subcommand("fourier",
                                       "noise stability through the transform and by brute force");
        sub->add_option("--q", q, "alphabet size (default 2)");
        sub->add_option("--n", n, "coordinates (default 3)");
        sub->add_option("--func", func, "majority | dictator | plurality | random");
        sub->add_option("--rho", rho, "correlation")->required();
        add_common(sub);
        sub->callback([&] {
            auto f = named_function(func, q, n, seed);
            auto p = transform(f);
            const double sf = noise_stability_fourier(f, rho);
            const double sb = noise_stability_brute(f, rho);
            emit({{"op", "fourier"},
                  {"q", q},
                  {"n", n},
                  {"func", func},
                  {"rho", rho},
                  {"seed", seed},
                  {"stability_fourier", sf},
                  {"stability_brute", sb},
                  {"diff", std::abs(sf - sb)},
                  {"degree", p.degree()},
                  {"variance", p.variance()}},
                 format);
        });
    }

    // ---- influence ----
    int degree_cap = 0;
    {
        auto* sub = app.add_subcommand("influence",
                                       "per-coordinate influences and the low-degree bound");
        sub->add_option("--q", q, "alphabet size (default 2)");
        sub->add_option("--n", n, "coordinates (default 3)");
        sub->add_option("--func", func, "majority | dictator | plurality | random");
        sub->add_option("--d", degree_cap, "degree cap (default n)");
        add_common(sub);
        sub->callback([&] {
            auto f = named_function(func, q, n, seed);
            auto p = transform(f);
            const int d = degree_cap > 0 ? degree_cap : n;
            std::vector<double> inf(n), low(n);
            double sum_low = 0.0;
            for (int i = 0; i < n; ++i) {
                inf[i] = influence(p, i);
                low[i] = low_degree_influence(p, i, d);
                sum_low += low[i];
            }
            const double bound = d * p.variance();
            const bool ok = sum_low <= bound + 1e-10;
            emit({{"op", "influence"},
                  {"q", q},
                  {"n", n},
                  {"func", func},
                  {"d", d},
                  {"seed", seed},
                  {"influences", inf},
                  {"low_degree_influences", low},
                  {"sum_low_degree", sum_low},
                  {"bound", bound},
                  {"bound_ok", ok}},
                 format);
            if (!ok) exit_code = 2;
        });
    }

    // ---- invariance ----
    std::string psi_name = "clamp";
    {
        auto* sub = app.add_subcommand(
            "invariance", "discrete-vs-Gaussian test-functional gap of a vote rule");
        sub->add_option("--n", n, "coordinates (default 3)");
        sub->add_option("--rho", rho, "correlation")->required();
        sub->add_option("--func", func, "majority | dictator");
        sub->add_option("--psi", psi_name, "clamp | simplex")
            ->check(CLI::IsMember({"clamp", "simplex"}));
        add_common(sub);
        sub->callback([&] {
            const TestFunctional psi = psi_name == "clamp" ? TestFunctional::clamp_product
                                                           : TestFunctional::simplex_inner;
            InvarianceReport rep = [&] {
                if (func == "majority")
                    return majority_invariance_gap(n, psi, rho, samples, seed, workers);
                if (func == "dictator") {
                    // Scalar +-1 encoding: the dictator's gap is an O(1)
                    // constant here, the contrast case to vanishing-influence
                    // rules.
                    if (n > 20) throw ScaleError("dictator table needs n <= 20");
                    auto f = DiscreteFunction::from_evaluator(
                        2, n, 1, RangeTag::real,
                        [](std::span<const int> w, std::span<double> out) {
                            out[0] = w[0] == 0 ? 1.0 : -1.0;
                        });
                    return invariance_gap(f, psi, rho, samples, seed, workers);
                }
                throw DomainError("unknown function: " + func);
            }();
            json j = rep.to_json();
            j["op"] = "invariance";
            j["func"] = func;
            j["n"] = n;
            emit(j, format);
        });
    }

    // ---- condorcet ----
    std::string rule = "majority", mode_name = "auto";
    {
        auto* sub = app.add_subcommand("condorcet",
                                       "probability of a unique tournament winner");
        sub->add_option("--k", k, "candidates (default 2)");
        sub->add_option("--n", n, "voters (default 3)");
        sub->add_option("--f", rule, "aggregation rule (majority)");
        sub->add_option("--mode", mode_name, "auto | exact | mc")
            ->check(CLI::IsMember({"auto", "exact", "mc"}));
        add_common(sub);
        sub->callback([&] {
            if (rule != "majority") throw DomainError("unknown rule: " + rule);
            bool exact = mode_name == "exact";
            if (mode_name == "auto") {
                // Exact when the profile space (k!)^n stays within the budget.
                double fact = 1.0;
                for (int i = 2; i <= k; ++i) fact *= i;
                exact = n * std::log2(fact) <= 24.0;
            }
            auto rep = unique_best_prob(majority_rule(n), k, n,
                                        exact ? EstimateMode::exact : EstimateMode::monte_carlo,
                                        samples, seed, workers);
            json j = rep.to_json();
            j["op"] = "condorcet";
            j["f"] = rule;
            const double limit = majority_unique_best_limit(k);
            j["limit"] = limit;
            j["limit_distance"] = std::abs(rep.prob.value - limit);
            emit(j, format);
        });
    }

    // ---- coin ----
    {
        auto* sub = app.add_subcommand(
            "coin", "agreement probability of noisy copies of a shared coin");
        sub->add_option("--k", k, "players (default 2)");
        sub->add_option("--n", n, "bits per player (default 3)");
        sub->add_option("--rho", rho, "copy correlation")->required();
        sub->add_option("--mode", mode_name, "auto | exact | mc")
            ->check(CLI::IsMember({"auto", "exact", "mc"}));
        add_common(sub);
        sub->callback([&] {
            bool exact = mode_name == "exact" || (mode_name == "auto" && n <= 20);
            auto est = cosmic_coin_prob(majority_rule(n), k, n, rho,
                                        exact ? EstimateMode::exact : EstimateMode::monte_carlo,
                                        samples, seed, workers);
            json j = estimate_json(est);
            j["op"] = "coin";
            j["k"] = k;
            j["n"] = n;
            j["rho"] = rho;
            const double limit = majority_coin_limit(k, rho);
            j["limit"] = limit;
            j["limit_distance"] = std::abs(est.value - limit);
            emit(j, format);
        });
    }

    // ---- plurality ----
    {
        auto* sub = app.add_subcommand(
            "plurality", "noise stability of plurality against its large-n limit");
        sub->add_option("--q", q, "candidates (default 2)");
        sub->add_option("--n", n, "voters (default 3)");
        sub->add_option("--rho", rho, "correlation")->required();
        add_common(sub);
        sub->callback([&] {
            auto est = plurality_noise_stability(q, n, rho, samples, seed, workers);
            auto lim = plurality_stability_limit(q, rho, samples, seed, workers);
            json j = estimate_json(est);
            j["op"] = "plurality";
            j["q"] = q;
            j["n"] = n;
            j["rho"] = rho;
            j["limit"] = lim.value;
            j["limit_se"] = lim.std_error;
            j["limit_distance"] = std::abs(est.value - lim.value);
            emit(j, format);
        });
    }

    // ---- alpha ----
    bool full_range = false, force_mc = false;
    {
        auto* sub = app.add_subcommand("alpha", "worst-case simplex rounding ratio");
        sub->add_option("--q", q, "number of parts")->required();
        sub->add_flag("--full-range", full_range, "search correlations up to 0.95");
        sub->add_flag("--force-mc", force_mc, "skip the two-part closed form");
        add_common(sub);
        sub->callback([&] {
            auto rep = alpha_q(q, samples, seed, full_range, force_mc, workers);
            json j = rep.to_json();
            j["op"] = "alpha";
            emit(j, format);
        });
    }

    // ---- maxqcut-solve ----
    std::string graph_path;
    double delta = -1.0;
    int restarts = 8;
    {
        auto* sub = app.add_subcommand("maxqcut-solve", "vector relaxation of a weighted graph");
        sub->add_option("--graph", graph_path, "edge-list file (u v w per line)")->required();
        sub->add_option("--q", q, "number of parts")->required();
        sub->add_option("--delta", delta, "objective slack (default 1e-4 * total weight)");
        sub->add_option("--restarts", restarts, "solver restarts (default 8)");
        add_common(sub);
        sub->callback([&] {
            auto g = MaxQCutInstance::from_text(read_file(graph_path), q);
            auto sol = sdp_solve(g, delta, seed, restarts);
            json j = sol.to_json();
            j["op"] = "maxqcut-solve";
            j["graph"] = graph_path;
            j["edges"] = g.edges().size();
            j["total_weight"] = g.total_weight();
            j["seed"] = seed;
            if (!out_path.empty()) write_file(out_path, j.dump(2) + "\n");
            emit(j, format);
        });
    }

    // ---- maxqcut-round ----
    int repeats = 1000;
    {
        auto* sub = app.add_subcommand("maxqcut-round",
                                       "solve the relaxation and round it to labelings");
        sub->add_option("--graph", graph_path, "edge-list file (u v w per line)")->required();
        sub->add_option("--q", q, "number of parts")->required();
        sub->add_option("--repeats", repeats, "rounding repeats (default 1000)");
        sub->add_option("--delta", delta, "objective slack (default 1e-4 * total weight)");
        sub->add_option("--restarts", restarts, "solver restarts (default 8)");
        add_common(sub);
        sub->callback([&] {
            auto g = MaxQCutInstance::from_text(read_file(graph_path), q);
            auto sol = sdp_solve(g, delta, seed, restarts);
            auto rep = round_sdp(sol, g, repeats, seed, workers);
            json j = rep.to_json();
            j["op"] = "maxqcut-round";
            j["graph"] = graph_path;
            j["q"] = q;
            j["sdp_objective"] = sol.objective;
            j["delta"] = sol.delta;
            j["mean_over_sdp"] = sol.objective > 0 ? rep.mean_value / sol.objective : 1.0;
            j["workers"] = workers;
            if (!out_path.empty()) write_file(out_path, j.dump(2) + "\n");
            emit(j, format);
        });
    }

    // ---- maxqcut-bench ----
    int trials = 12;
    double alpha_ref = 0.0;
    {
        auto* sub = app.add_subcommand(
            "maxqcut-bench", "exact-vs-relaxed-vs-rounded ratios on generated instances");
        sub->add_option("--q", q, "number of parts")->required();
        sub->add_option("--trials", trials, "instances to generate (default 12)");
        sub->add_option("--repeats", repeats, "rounding repeats per instance (default 1000)");
        sub->add_option("--alpha-ref", alpha_ref,
                        "flagging threshold (default: known ratio for q, else estimated)");
        add_common(sub);
        sub->callback([&] {
            double ref = alpha_ref;
            if (ref <= 0.0) {
                auto it = kAlphaRef.find(q);
                ref = it != kAlphaRef.end()
                          ? it->second
                          : alpha_q(q, samples, seed, false, false, workers).alpha;
            }
            auto rep = approx_ratio_harness(q, trials, repeats, ref, seed, workers);
            json j = rep.to_json();
            j["op"] = "maxqcut-bench";
            j["workers"] = workers;
            emit(j, format);
            if (rep.flagged_count > 0 || !rep.dominance_all) exit_code = 2;
        });
    }

    // ---- ulc-reduce ----
    std::string ulc_path, gen_csv, labels_csv;
    int decode_degree = 2;
    double tau = 0.01;
    {
        auto* sub = app.add_subcommand("ulc-reduce",
                                       "verifier reduction from label cover to graph partition");
        sub->add_option("--ulc", ulc_path, "instance JSON file");
        sub->add_option("--gen", gen_csv,
                        "generate a planted instance: label_size,v_count,w_count,degree");
        sub->add_option("--q", q, "number of parts")->required();
        sub->add_option("--rho", rho, "query correlation")->required();
        sub->add_option("--labels-w", labels_csv,
                        "honest proof labels; adds cut diagnostics and decoding");
        sub->add_option("--d", decode_degree, "decode influence degree (default 2)");
        sub->add_option("--tau", tau, "decode influence threshold (default 0.01)");
        add_common(sub);
        sub->callback([&] {
            if (ulc_path.empty() == gen_csv.empty())
                throw DomainError("pass exactly one of --ulc or --gen");
            auto l = [&] {
                if (!ulc_path.empty())
                    return UlcInstance::from_json(json::parse(read_file(ulc_path)));
                const auto p = parse_ints(gen_csv);
                if (p.size() != 4)
                    throw DomainError("--gen needs label_size,v_count,w_count,degree");
                RngStream rng(seed, 0x756c63);
                return random_satisfiable_ulc(p[0], p[1], p[2], p[3], rng);
            }();
            auto red = ulc_reduce(l, q, rho);
            json j{{"op", "ulc-reduce"}, {"seed", seed}};
            j["metadata"] = red.metadata();
            if (!gen_csv.empty()) j["instance"] = l.to_json();
            if (!labels_csv.empty()) {
                const auto lw = parse_ints(labels_csv);
                const auto cut = long_code_cut(l, lw, q);
                j["honest"] = {{"acceptance", long_code_value(l, lw, q, rho)},
                               {"cut_value", red.graph.cut_value(cut)}};
                j["decode"] = influence_decode(red, l, cut, decode_degree, tau).to_json();
            }
            if (!out_path.empty()) write_file(out_path, red.graph.to_text());
            emit(j, format);
        });
    }

    // ---- selftest ----
    {
        auto* sub = app.add_subcommand("selftest", "quick closed-form checks of every module");
        sub->add_option("--format", format, "output format")
            ->check(CLI::IsMember({"json", "csv", "pretty"}));
        sub->callback([&] { exit_code = run_selftest(format); });
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        // --help lands here with code 0; real usage errors collapse to 1.
        return app.exit(e) == 0 ? 0 : 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return exit_code;
}
