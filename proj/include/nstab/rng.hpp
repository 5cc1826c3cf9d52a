#pragma once

#include <cmath>
#include <cstdint>
#include <thread>
#include <utility>
#include <vector>

namespace nstab {

// Counter-based pseudo-random stream. A stream is addressed by (seed, stream):
// the same pair always replays the same sequence, independent of what other
// streams were drawn in between. That gives two properties the estimators
// rely on: deterministic splitting across workers (worker w uses stream
// base+w) and common-random-number replay (re-create the stream, get the
// same draws).
class RngStream {
public:
    RngStream(std::uint64_t seed, std::uint64_t stream)
        : state_(mix(mix(seed + 0x9e3779b97f4a7c15ull) ^ stream)) {}

    std::uint64_t next_u64() {
        state_ += 0x9e3779b97f4a7c15ull;
        return mix(state_);
    }

    // uniform in [0,1), 53-bit resolution
    double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // uniform in (0,1], safe as log() argument
    double next_double_pos() { return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53; }

    // unbiased-enough bounded draw (widening multiply); bound must be > 0
    std::uint64_t next_below(std::uint64_t bound) {
        return static_cast<std::uint64_t>(
            (static_cast<unsigned __int128>(next_u64()) * bound) >> 64);
    }

    bool next_bool() { return (next_u64() >> 63) != 0; }

    bool next_bernoulli(double p) { return next_double() < p; }

    // Marsaglia polar method; caches the spare deviate.
    double next_normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u, v, s;
        do {
            u = 2.0 * next_double() - 1.0;
            v = 2.0 * next_double() - 1.0;
            s = u * u + v * v;
        } while (s >= 1.0 || s == 0.0);
        const double m = std::sqrt(-2.0 * std::log(s) / s);
        spare_ = v * m;
        have_spare_ = true;
        return u * m;
    }

    template <class It>
    void shuffle(It first, It last) {
        const auto n = static_cast<std::uint64_t>(last - first);
        for (std::uint64_t i = n; i > 1; --i)
            std::swap(first[i - 1], first[next_below(i)]);
    }

private:
    static std::uint64_t mix(std::uint64_t x) {
        x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
        x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
        return x ^ (x >> 31);
    }

    std::uint64_t state_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

// Splits n draws over `workers` streams (seed, stream_base + w). fn receives
// the worker stream and its sample count and returns an accumulator; partials
// are merged with += in worker order, so the result is bit-identical for a
// fixed (seed, workers) no matter how threads are scheduled.
template <class Fn>
auto parallel_accumulate(std::uint64_t n, int workers, std::uint64_t seed,
                         std::uint64_t stream_base, Fn fn) {
    using Acc = decltype(fn(std::declval<RngStream&>(), std::uint64_t{0}));
    if (workers < 1) workers = 1;
    const auto w = static_cast<std::uint64_t>(workers);
    if (w == 1 || n < w) {
        RngStream rng(seed, stream_base);
        return fn(rng, n);
    }
    std::vector<Acc> parts(w);
    std::vector<std::thread> pool;
    pool.reserve(w);
    for (std::uint64_t i = 0; i < w; ++i) {
        const std::uint64_t count = n / w + (i < n % w ? 1 : 0);
        pool.emplace_back([&, i, count] {
            RngStream rng(seed, stream_base + i);
            parts[i] = fn(rng, count);
        });
    }
    for (auto& t : pool) t.join();
    Acc total = std::move(parts[0]);
    for (std::uint64_t i = 1; i < w; ++i) total += parts[i];
    return total;
}

inline double binomial_se(double p_hat, std::uint64_t n) {
    if (n == 0) return 0.0;
    const double v = p_hat * (1.0 - p_hat);
    return std::sqrt((v > 0.0 ? v : 0.0) / static_cast<double>(n));
}

}  // namespace nstab
