#include "nstab/social_choice.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <utility>

#include "nstab/errors.hpp"
#include "nstab/gauss.hpp"
#include "nstab/stability.hpp"

namespace nstab {

namespace {

struct HitAcc {
    std::uint64_t hits = 0;
    HitAcc& operator+=(const HitAcc& o) {
        hits += o.hits;
        return *this;
    }
};

struct MeanAcc {
    double sum = 0.0, sumsq = 0.0;
    void add(double v) {
        sum += v;
        sumsq += v * v;
    }
    MeanAcc& operator+=(const MeanAcc& o) {
        sum += o.sum;
        sumsq += o.sumsq;
        return *this;
    }
};

std::pair<double, double> mean_and_se(const MeanAcc& a, std::uint64_t n) {
    const double mean = a.sum / static_cast<double>(n);
    if (n < 2) return {mean, 0.0};
    const double var = std::max(0.0, (a.sumsq - a.sum * a.sum / static_cast<double>(n)) /
                                         static_cast<double>(n - 1));
    return {mean, std::sqrt(var / static_cast<double>(n))};
}

void require_samples(std::uint64_t n) {
    if (n == 0) throw DomainError("monte carlo estimate needs n_samples >= 1");
}

int checked_bit(const VoteRule& f, std::span<const int> votes) {
    const int v = f(votes);
    if (v != 0 && v != 1)
        throw DomainError("vote rule must return 0 or 1, got " + std::to_string(v));
    return v;
}

// Unordered candidate pairs (a, b) with a < b, in row-major order.
std::vector<std::pair<int, int>> all_pairs(int k) {
    std::vector<std::pair<int, int>> pairs;
    pairs.reserve(static_cast<std::size_t>(k) * (k - 1) / 2);
    for (int a = 0; a < k; ++a)
        for (int b = a + 1; b < k; ++b) pairs.emplace_back(a, b);
    return pairs;
}

// f(-x) = 1 - f(x); exhaustive over 2^n sign vectors when that fits, a fixed
// deterministic sample otherwise.
void require_antisymmetric(const VoteRule& f, int n) {
    std::vector<int> x(static_cast<std::size_t>(n));
    std::vector<int> neg(static_cast<std::size_t>(n));
    if (n <= 20) {
        const std::uint64_t total = std::uint64_t{1} << n;
        for (std::uint64_t mask = 0; mask < total; ++mask) {
            for (int j = 0; j < n; ++j) {
                const int bit = static_cast<int>((mask >> j) & 1);
                x[j] = 2 * bit - 1;
                neg[j] = -x[j];
            }
            if (checked_bit(f, x) + checked_bit(f, neg) != 1)
                throw AntiSymmetryError("rule is not anti-symmetric at a vote vector of size " +
                                        std::to_string(n));
        }
        return;
    }
    RngStream rng(0x616e7469, static_cast<std::uint64_t>(n));
    for (int rep = 0; rep < 256; ++rep) {
        for (int j = 0; j < n; ++j) {
            x[j] = rng.next_bool() ? 1 : -1;
            neg[j] = -x[j];
        }
        if (checked_bit(f, x) + checked_bit(f, neg) != 1)
            throw AntiSymmetryError("rule is not anti-symmetric on sampled vote vectors of size " +
                                    std::to_string(n));
    }
}

// (k!)^n, or ScaleError when it exceeds the exact-enumeration budget.
std::uint64_t exact_profile_count(int k, int n) {
    std::uint64_t fact = 1;
    for (int i = 2; i <= k; ++i) {
        fact *= static_cast<std::uint64_t>(i);
        if (fact > kMaxExactProfiles)
            throw ScaleError("exact mode needs (k!)^n <= 2^24; k = " + std::to_string(k) +
                             " is already past that");
    }
    std::uint64_t total = 1;
    for (int i = 0; i < n; ++i) {
        if (total > kMaxExactProfiles / fact)
            throw ScaleError("exact mode needs (k!)^n <= 2^24, got k = " + std::to_string(k) +
                             ", n = " + std::to_string(n));
        total *= fact;
    }
    return total;
}

// All k! rank assignments (candidate -> rank) in lexicographic order.
std::vector<std::vector<int>> all_rank_orders(int k) {
    std::vector<int> perm(static_cast<std::size_t>(k));
    std::iota(perm.begin(), perm.end(), 0);
    std::vector<std::vector<int>> orders;
    do {
        orders.push_back(perm);
    } while (std::next_permutation(perm.begin(), perm.end()));
    return orders;
}

// Winner tally for one profile: the candidate beating all others, or -1.
int champion_of(std::span<const int> wins, int k) {
    for (int c = 0; c < k; ++c)
        if (wins[c] == k - 1) return c;
    return -1;
}

void fill_shares(std::span<const int> counts, std::span<double> out) {
    const int top = *std::max_element(counts.begin(), counts.end());
    int winners = 0;
    for (int c : counts) winners += (c == top);
    for (std::size_t c = 0; c < counts.size(); ++c)
        out[c] = counts[c] == top ? 1.0 / winners : 0.0;
}

constexpr std::uint64_t kUniqueBestStream = 0x736f6331;
constexpr std::uint64_t kCoinStream = 0x736f6332;
constexpr std::uint64_t kPluralityStream = 0x736f6333;

}  // namespace

VoteRule majority_rule(int n) {
    if (n < 1) throw DimensionError("majority_rule: need at least one voter");
    return [n](std::span<const int> votes) -> int {
        if (static_cast<int>(votes.size()) != n)
            throw DimensionError("majority_rule: expected " + std::to_string(n) + " votes, got " +
                                 std::to_string(votes.size()));
        long long sum = 0;
        for (int v : votes) sum += v;
        return sum >= 0 ? 1 : 0;
    };
}

RankingProfile::RankingProfile(int n_, int k_, std::vector<std::vector<int>> orders_)
    : n(n_), k(k_), orders(std::move(orders_)) {
    if (k < 2) throw DimensionError("RankingProfile: need at least two candidates");
    if (n < 1) throw DimensionError("RankingProfile: need at least one voter");
    if (static_cast<int>(orders.size()) != n)
        throw DimensionError("RankingProfile: expected " + std::to_string(n) + " orders, got " +
                             std::to_string(orders.size()));
    std::vector<char> seen(static_cast<std::size_t>(k));
    for (const auto& row : orders) {
        if (static_cast<int>(row.size()) != k)
            throw DimensionError("RankingProfile: each order must rank all " + std::to_string(k) +
                                 " candidates");
        std::fill(seen.begin(), seen.end(), 0);
        for (int r : row) {
            if (r < 0 || r >= k || seen[r])
                throw DomainError("RankingProfile: order is not a permutation of 0.." +
                                  std::to_string(k - 1));
            seen[r] = 1;
        }
    }
}

RankingProfile RankingProfile::random(int k, int n, RngStream& rng) {
    if (k < 2) throw DimensionError("RankingProfile: need at least two candidates");
    if (n < 1) throw DimensionError("RankingProfile: need at least one voter");
    std::vector<std::vector<int>> orders(static_cast<std::size_t>(n));
    for (auto& row : orders) {
        row.resize(static_cast<std::size_t>(k));
        std::iota(row.begin(), row.end(), 0);
        rng.shuffle(row.begin(), row.end());
    }
    return RankingProfile(n, k, std::move(orders));
}

nlohmann::json RankingProfile::to_json() const {
    return {{"n", n}, {"k", k}, {"orders", orders}};
}

RankingProfile RankingProfile::from_json(const nlohmann::json& j) {
    return RankingProfile(j.at("n").get<int>(), j.at("k").get<int>(),
                          j.at("orders").get<std::vector<std::vector<int>>>());
}

std::vector<int> pairwise_votes(const RankingProfile& p, int a, int b) {
    if (a < 0 || a >= p.k || b < 0 || b >= p.k || a == b)
        throw IndexError("pairwise_votes: candidates must be distinct indices in [0, k)");
    std::vector<int> x(static_cast<std::size_t>(p.n));
    for (int i = 0; i < p.n; ++i) x[i] = p.orders[i][a] > p.orders[i][b] ? 1 : -1;
    return x;
}

Tournament::Tournament(int k, std::vector<std::uint8_t> wins)
    : k_(k), wins_(std::move(wins)) {
    if (k_ < 2) throw DimensionError("Tournament: need at least two candidates");
    if (wins_.size() != static_cast<std::size_t>(k_) * k_)
        throw DimensionError("Tournament: wins must be a k x k matrix");
    for (int a = 0; a < k_; ++a) {
        if (wins_[static_cast<std::size_t>(a) * k_ + a] != 0)
            throw DomainError("Tournament: diagonal must be zero");
        for (int b = a + 1; b < k_; ++b) {
            const int ab = wins_[static_cast<std::size_t>(a) * k_ + b];
            const int ba = wins_[static_cast<std::size_t>(b) * k_ + a];
            if (ab > 1 || ba > 1 || ab + ba != 1)
                throw DomainError("Tournament: each pair needs exactly one direction");
        }
    }
}

bool Tournament::beats(int a, int b) const {
    if (a < 0 || a >= k_ || b < 0 || b >= k_ || a == b)
        throw IndexError("Tournament::beats: candidates must be distinct indices in [0, k)");
    return wins_[static_cast<std::size_t>(a) * k_ + b] != 0;
}

std::optional<int> Tournament::unique_best() const {
    for (int a = 0; a < k_; ++a) {
        int outdeg = 0;
        for (int b = 0; b < k_; ++b) outdeg += wins_[static_cast<std::size_t>(a) * k_ + b];
        if (outdeg == k_ - 1) return a;
    }
    return std::nullopt;
}

nlohmann::json Tournament::to_json() const {
    nlohmann::json rows = nlohmann::json::array();
    for (int a = 0; a < k_; ++a) {
        nlohmann::json row = nlohmann::json::array();
        for (int b = 0; b < k_; ++b)
            row.push_back(static_cast<int>(wins_[static_cast<std::size_t>(a) * k_ + b]));
        rows.push_back(std::move(row));
    }
    nlohmann::json j = {{"k", k_}, {"wins", std::move(rows)}};
    const auto best = unique_best();
    j["unique_best"] = best ? nlohmann::json(*best) : nlohmann::json(nullptr);
    return j;
}

Tournament aggregate(const RankingProfile& p, const VoteRule& f) {
    require_antisymmetric(f, p.n);
    std::vector<std::uint8_t> wins(static_cast<std::size_t>(p.k) * p.k, 0);
    for (const auto& [a, b] : all_pairs(p.k)) {
        const auto x = pairwise_votes(p, a, b);
        if (checked_bit(f, x))
            wins[static_cast<std::size_t>(a) * p.k + b] = 1;
        else
            wins[static_cast<std::size_t>(b) * p.k + a] = 1;
    }
    return Tournament(p.k, std::move(wins));
}

namespace {

struct UniqueBestAcc {
    std::uint64_t hits = 0;
    std::vector<std::uint64_t> by_candidate;
    UniqueBestAcc& operator+=(const UniqueBestAcc& o) {
        hits += o.hits;
        if (by_candidate.size() < o.by_candidate.size())
            by_candidate.resize(o.by_candidate.size(), 0);
        for (std::size_t c = 0; c < o.by_candidate.size(); ++c)
            by_candidate[c] += o.by_candidate[c];
        return *this;
    }
};

UniqueBestReport exact_unique_best(const VoteRule& f, int k, int n, std::uint64_t seed) {
    const std::uint64_t total = exact_profile_count(k, n);
    const auto orders = all_rank_orders(k);
    const auto pairs = all_pairs(k);
    const int n_pairs = static_cast<int>(pairs.size());

    // signs[o * n_pairs + pr] = vote of rank order o on pair pr.
    std::vector<std::int8_t> signs(orders.size() * pairs.size());
    for (std::size_t o = 0; o < orders.size(); ++o)
        for (int pr = 0; pr < n_pairs; ++pr) {
            const auto [a, b] = pairs[pr];
            signs[o * pairs.size() + pr] = orders[o][a] > orders[o][b] ? 1 : -1;
        }

    std::vector<int> digits(static_cast<std::size_t>(n), 0);
    std::vector<int> xs(pairs.size() * static_cast<std::size_t>(n));
    std::vector<int> wins(static_cast<std::size_t>(k));
    std::uint64_t hits = 0;
    std::vector<std::uint64_t> by_candidate(static_cast<std::size_t>(k), 0);

    for (std::uint64_t t = 0; t < total; ++t) {
        for (int i = 0; i < n; ++i) {
            const std::int8_t* row = signs.data() + static_cast<std::size_t>(digits[i]) * n_pairs;
            for (int pr = 0; pr < n_pairs; ++pr)
                xs[static_cast<std::size_t>(pr) * n + i] = row[pr];
        }
        std::fill(wins.begin(), wins.end(), 0);
        for (int pr = 0; pr < n_pairs; ++pr) {
            const std::span<const int> x{xs.data() + static_cast<std::size_t>(pr) * n,
                                         static_cast<std::size_t>(n)};
            if (checked_bit(f, x))
                ++wins[pairs[pr].first];
            else
                ++wins[pairs[pr].second];
        }
        const int c = champion_of(wins, k);
        if (c >= 0) {
            ++hits;
            ++by_candidate[c];
        }
        for (int i = n - 1; i >= 0; --i) {
            if (++digits[i] < static_cast<int>(orders.size())) break;
            digits[i] = 0;
        }
    }

    UniqueBestReport report;
    report.k = k;
    report.n = n;
    report.prob = {static_cast<double>(hits) / static_cast<double>(total), 0.0, 0, "exact", seed};
    report.per_candidate.resize(static_cast<std::size_t>(k));
    for (int c = 0; c < k; ++c)
        report.per_candidate[c] =
            static_cast<double>(by_candidate[c]) / static_cast<double>(total);
    return report;
}

}  // namespace

UniqueBestReport unique_best_prob(const VoteRule& f, int k, int n, EstimateMode mode,
                                  std::uint64_t n_samples, std::uint64_t seed, int workers) {
    if (k < 2) throw DimensionError("unique_best_prob: need at least two candidates");
    if (n < 1) throw DimensionError("unique_best_prob: need at least one voter");
    if (mode == EstimateMode::exact) return exact_unique_best(f, k, n, seed);

    require_samples(n_samples);
    const auto pairs = all_pairs(k);
    const auto acc = parallel_accumulate(
        n_samples, workers, seed, kUniqueBestStream,
        [&](RngStream& rng, std::uint64_t count) {
            UniqueBestAcc a;
            a.by_candidate.assign(static_cast<std::size_t>(k), 0);
            std::vector<std::vector<int>> ord(static_cast<std::size_t>(n),
                                              std::vector<int>(static_cast<std::size_t>(k)));
            std::vector<int> x(static_cast<std::size_t>(n));
            std::vector<int> wins(static_cast<std::size_t>(k));
            for (std::uint64_t s = 0; s < count; ++s) {
                for (auto& row : ord) {
                    std::iota(row.begin(), row.end(), 0);
                    rng.shuffle(row.begin(), row.end());
                }
                std::fill(wins.begin(), wins.end(), 0);
                for (const auto& [ca, cb] : pairs) {
                    for (int i = 0; i < n; ++i) x[i] = ord[i][ca] > ord[i][cb] ? 1 : -1;
                    if (checked_bit(f, x))
                        ++wins[ca];
                    else
                        ++wins[cb];
                }
                const int c = champion_of(wins, k);
                if (c >= 0) {
                    ++a.hits;
                    ++a.by_candidate[c];
                }
            }
            return a;
        });

    UniqueBestReport report;
    report.k = k;
    report.n = n;
    const double p = static_cast<double>(acc.hits) / static_cast<double>(n_samples);
    report.prob = {p, binomial_se(p, n_samples), n_samples, "monte_carlo", seed};
    report.per_candidate.resize(static_cast<std::size_t>(k));
    for (int c = 0; c < k; ++c)
        report.per_candidate[c] =
            static_cast<double>(acc.by_candidate[c]) / static_cast<double>(n_samples);
    return report;
}

nlohmann::json UniqueBestReport::to_json() const {
    return {{"k", k},
            {"n", n},
            {"prob", prob.value},
            {"std_error", prob.std_error},
            {"n_samples", prob.n_samples},
            {"method", prob.method},
            {"seed", prob.seed},
            {"per_candidate", per_candidate}};
}

double majority_unique_best_limit(int k) {
    if (k < 2) throw DomainError("majority_unique_best_limit: need at least two candidates");
    const std::vector<double> zeros(static_cast<std::size_t>(k - 1), 0.0);
    return k * exchangeable_orthant(zeros, 1.0 / 3.0);
}

StabilityEstimate cosmic_coin_prob(const VoteRule& f, int k, int n, double rho,
                                   EstimateMode mode, std::uint64_t n_samples,
                                   std::uint64_t seed, int workers) {
    if (k < 1) throw DimensionError("cosmic_coin_prob: need at least one player");
    if (n < 1) throw DimensionError("cosmic_coin_prob: need at least one source bit");
    if (!(rho >= 0.0 && rho <= 1.0))
        throw RangeError("cosmic_coin_prob: rho must lie in [0, 1], got " + std::to_string(rho));

    if (mode == EstimateMode::exact) {
        if (n > 20)
            throw ScaleError("cosmic_coin_prob: exact mode needs 2^n <= 2^20, got n = " +
                             std::to_string(n));
        std::vector<int> votes(static_cast<std::size_t>(n));
        const auto tab = DiscreteFunction::from_evaluator(
            2, n, 1, RangeTag::real,
            [&](std::span<const int> pt, std::span<double> out) {
                for (int j = 0; j < n; ++j) votes[j] = 2 * pt[j] - 1;
                out[0] = checked_bit(f, votes);
            });
        // Conditioned on the source x, players answer 1 independently with
        // probability p(x) = (T_rho f)(x); agreement mass is p^k + (1-p)^k.
        const auto ps = inverse_transform(noise_operator(transform(tab), rho));
        double acc = 0.0;
        for (std::uint64_t idx = 0; idx < ps.size(); ++idx) {
            const double p = std::clamp(ps.value(idx)[0], 0.0, 1.0);
            double pk = 1.0, qk = 1.0;
            for (int i = 0; i < k; ++i) {
                pk *= p;
                qk *= 1.0 - p;
            }
            acc += pk + qk;
        }
        return {acc / static_cast<double>(ps.size()), 0.0, 0, "exact", seed};
    }

    require_samples(n_samples);
    const double flip = (1.0 - rho) / 2.0;
    const auto acc = parallel_accumulate(
        n_samples, workers, seed, kCoinStream, [&](RngStream& rng, std::uint64_t count) {
            HitAcc a;
            std::vector<int> x(static_cast<std::size_t>(n));
            std::vector<int> y(static_cast<std::size_t>(n));
            for (std::uint64_t s = 0; s < count; ++s) {
                for (int j = 0; j < n; ++j) x[j] = rng.next_bool() ? 1 : -1;
                bool agree = true;
                int first = 0;
                for (int player = 0; player < k && agree; ++player) {
                    for (int j = 0; j < n; ++j)
                        y[j] = rng.next_bernoulli(flip) ? -x[j] : x[j];
                    const int v = checked_bit(f, y);
                    if (player == 0)
                        first = v;
                    else
                        agree = (v == first);
                }
                a.hits += agree;
            }
            return a;
        });
    const double p = static_cast<double>(acc.hits) / static_cast<double>(n_samples);
    return {p, binomial_se(p, n_samples), n_samples, "monte_carlo", seed};
}

double majority_coin_limit(int k, double rho) {
    if (k < 2) throw DomainError("majority_coin_limit: need at least two players");
    if (!(rho >= 0.0 && rho <= 1.0))
        throw RangeError("majority_coin_limit: rho must lie in [0, 1], got " +
                         std::to_string(rho));
    const std::vector<double> zeros(static_cast<std::size_t>(k), 0.0);
    return 2.0 * exchangeable_orthant(zeros, rho * rho);
}

void plurality_shares(std::span<const int> votes, int q, std::span<double> out) {
    if (q < 2) throw DimensionError("plurality_shares: q must be >= 2");
    if (votes.empty()) throw DimensionError("plurality_shares: need at least one vote");
    if (out.size() != static_cast<std::size_t>(q))
        throw DimensionError("plurality_shares: output must have size q");
    std::vector<int> counts(static_cast<std::size_t>(q), 0);
    for (int v : votes) {
        if (v < 0 || v >= q)
            throw DomainError("plurality_shares: vote " + std::to_string(v) +
                              " outside [0, " + std::to_string(q) + ")");
        ++counts[v];
    }
    fill_shares(counts, out);
}

DiscreteFunction plurality_table(int q, int n) {
    if (q < 2) throw DimensionError("plurality_table: q must be >= 2");
    if (n < 1) throw DimensionError("plurality_table: n must be >= 1");
    std::uint64_t points = 1;
    for (int i = 0; i < n; ++i) {
        if (points > kMaxVoteTablePoints / static_cast<std::uint64_t>(q))
            throw ScaleError("plurality_table: q^n must be <= 2^20, got q = " +
                             std::to_string(q) + ", n = " + std::to_string(n));
        points *= static_cast<std::uint64_t>(q);
    }
    return DiscreteFunction::from_evaluator(
        q, n, q, RangeTag::simplex,
        [q](std::span<const int> pt, std::span<double> out) { plurality_shares(pt, q, out); });
}

StabilityEstimate plurality_noise_stability(int q, int n, double rho, std::uint64_t n_samples,
                                            std::uint64_t seed, int workers) {
    if (q < 2) throw DimensionError("plurality_noise_stability: q must be >= 2");
    if (n < 1) throw DimensionError("plurality_noise_stability: n must be >= 1");
    if (!(rho >= -1.0 / (q - 1) - 1e-15 && rho <= 1.0 + 1e-15))
        throw RangeError("plurality_noise_stability: rho must lie in [-1/(q-1), 1]");
    require_samples(n_samples);

    const auto acc = parallel_accumulate(
        n_samples, workers, seed, kPluralityStream, [&](RngStream& rng, std::uint64_t count) {
            MeanAcc a;
            std::vector<int> omega(static_cast<std::size_t>(n));
            std::vector<int> lambda(static_cast<std::size_t>(n));
            std::vector<int> c1(static_cast<std::size_t>(q));
            std::vector<int> c2(static_cast<std::size_t>(q));
            std::vector<double> s1(static_cast<std::size_t>(q));
            std::vector<double> s2(static_cast<std::size_t>(q));
            for (std::uint64_t s = 0; s < count; ++s) {
                sample_correlated_pair(q, n, rho, rng, omega, lambda);
                std::fill(c1.begin(), c1.end(), 0);
                std::fill(c2.begin(), c2.end(), 0);
                for (int j = 0; j < n; ++j) {
                    ++c1[omega[j]];
                    ++c2[lambda[j]];
                }
                fill_shares(c1, s1);
                fill_shares(c2, s2);
                double dot = 0.0;
                for (int c = 0; c < q; ++c) dot += s1[c] * s2[c];
                a.add(dot);
            }
            return a;
        });
    const auto [mean, se] = mean_and_se(acc, n_samples);
    return {mean, se, n_samples, "monte_carlo", seed};
}

StabilityEstimate plurality_stability_limit(int q, double rho, std::uint64_t n_samples,
                                            std::uint64_t seed, int workers) {
    if (q < 2) throw DimensionError("plurality_stability_limit: q must be >= 2");
    if (!(rho >= -1.0 / (q - 1) - 1e-15 && rho <= 1.0 + 1e-15))
        throw RangeError("plurality_stability_limit: rho must lie in [-1/(q-1), 1]");
    return simplex_pair_stability(q, rho, n_samples, seed, workers);
}

}  // namespace nstab
