#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

namespace gridsec {

inline constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

/// Maps 64 random bits to a double in [0, 1) using the top 53 bits.
inline constexpr double unit_interval(std::uint64_t bits) noexcept {
    return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

inline constexpr std::uint64_t hash_combine(std::uint64_t seed, std::uint64_t value) noexcept {
    return splitmix64(seed ^ (value + 0x9E3779B97F4A7C15ULL + (seed << 6) + (seed >> 2)));
}

/// Stateless generator: the n-th draw of stream `key` depends only on (key, n),
/// so Monte Carlo estimates are reproducible regardless of evaluation order.
inline constexpr double counter_uniform(std::uint64_t key, std::uint64_t counter) noexcept {
    return unit_interval(splitmix64(key ^ splitmix64(counter)));
}

/// Sequential generator used by the GA and the load-model sampler.
///
/// Only the raw mt19937_64 output is used; the distributions below are written
/// out so that draws are identical across standard library implementations.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next() { return engine_(); }

    double uniform() { return unit_interval(engine_()); }

    /// Uniform integer in [0, n). Rejection keeps it unbiased.
    std::uint64_t below(std::uint64_t n) {
        if (n <= 1) return 0;
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t x = engine_();
        while (x >= limit) x = engine_();
        return x % n;
    }

    /// Standard normal by Box-Muller; consumes exactly two uniforms per call.
    double normal() {
        const double u1 = 1.0 - uniform();  // (0, 1]
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

private:
    std::mt19937_64 engine_;
};

}  // namespace gridsec
