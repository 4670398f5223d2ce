#pragma once

// Seeded deterministic randomness. Each run owns one master seed; consumers
// derive named sub-streams so adding a consumer never shifts the draws seen
// by another. mt19937_64's output sequence is fixed by the standard, but the
// stdlib distributions are not, so the distribution helpers live here.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string_view>

namespace locsim {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

inline std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001B3ULL;
    }
    return h;
}

// Seed for sub-stream `stream`/`index` of a run. Distinct names or indices
// give statistically independent engines.
inline std::uint64_t derive_seed(std::uint64_t run_seed, std::string_view stream,
                                 std::uint64_t index = 0) {
    std::uint64_t h = splitmix64(run_seed);
    h = splitmix64(h ^ fnv1a64(stream));
    h = splitmix64(h ^ index);
    return h;
}

class Rng {
public:
    explicit Rng(std::uint64_t seed) : m_engine(seed) {}
    Rng(std::uint64_t run_seed, std::string_view stream, std::uint64_t index = 0)
        : m_engine(derive_seed(run_seed, stream, index)) {}

    std::uint64_t next_u64() { return m_engine(); }

    // Uniform in [0, 1), 53-bit resolution.
    double uniform() { return static_cast<double>(m_engine() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n); n must be positive. Bounded rejection keeps
    // the draw unbiased without relying on library internals.
    std::uint64_t uniform_index(std::uint64_t n) {
        if (n == 0) throw std::invalid_argument("uniform_index: n == 0");
        const std::uint64_t threshold = (0ULL - n) % n;
        for (;;) {
            const std::uint64_t r = m_engine();
            if (r >= threshold) return r % n;
        }
    }

    double exponential(double rate) {
        if (rate <= 0.0) throw std::invalid_argument("exponential: rate <= 0");
        return -std::log1p(-uniform()) / rate;
    }

    // Standard normal via Box-Muller; the second variate is cached.
    double gaussian() {
        if (m_has_spare) {
            m_has_spare = false;
            return m_spare;
        }
        double u1;
        do {
            u1 = uniform();
        } while (u1 <= 0.0);
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 2.0 * std::numbers::pi_v<double> * u2;
        m_spare = r * std::sin(a);
        m_has_spare = true;
        return r * std::cos(a);
    }

    double gaussian(double mean, double stddev) { return mean + stddev * gaussian(); }

private:
    std::mt19937_64 m_engine;
    double m_spare = 0.0;
    bool m_has_spare = false;
};

}  // namespace locsim
