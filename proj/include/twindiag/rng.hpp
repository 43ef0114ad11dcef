#pragma once

#include <cmath>
#include <cstdint>

namespace twindiag {

// Deterministic, platform-stable random primitives. Episode/mirror noise is
// derived from (seed, step, channel) counters rather than call order, so a
// mirror simulation reproduces the exact same noise stream as its fault run.

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t hash_combine(std::uint64_t a, std::uint64_t b) {
    return splitmix64(a ^ (0x9e3779b97f4a7c15ULL + (b << 6) + (b >> 2)));
}

inline double uniform01(std::uint64_t bits) {
    return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

// Counter-based draws: pure functions of the key tuple.
inline double counter_uniform(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
    return uniform01(splitmix64(hash_combine(hash_combine(seed, a), b)));
}

inline double counter_normal(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
    const double u1 = counter_uniform(seed, a, 2 * b);
    const double u2 = counter_uniform(seed, a, 2 * b + 1);
    const double r = std::sqrt(-2.0 * std::log(u1 > 0.0 ? u1 : 0x1.0p-53));
    return r * std::cos(2.0 * M_PI * u2);
}

// Sequential stream for setup-time sampling (targets, t0, shuffles, weights).
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(splitmix64(seed ^ 0xd1b54a32d192ed03ULL)) {}

    std::uint64_t next_u64() {
        state_ += 0x9e3779b97f4a7c15ULL;
        return splitmix64(state_);
    }

    double uniform() { return uniform01(next_u64()); }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    double normal() {
        const double u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1 > 0.0 ? u1 : 0x1.0p-53));
        return r * std::cos(2.0 * M_PI * u2);
    }

    // Fisher-Yates; std::shuffle is implementation-defined, this is not.
    template <typename Vec>
    void shuffle(Vec& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            const std::size_t j = static_cast<std::size_t>(next_u64() % i);
            std::swap(v[i - 1], v[j]);
        }
    }

    Rng fork(std::uint64_t tag) { return Rng(hash_combine(state_, tag)); }

private:
    std::uint64_t state_;
};

}  // namespace twindiag
