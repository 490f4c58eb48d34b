#pragma once

#include <cstdint>
#include <cmath>
#include <numbers>
#include <vector>

namespace cgd {

// SplitMix64. Every stochastic component in the library draws from this
// generator so that seeded runs are bit-reproducible across platforms and
// trivially reimplementable in other languages (the weight-conversion
// procedure relies on that).
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        state_ += 0x9E3779B97F4A7C15ULL;
        std::uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    // uniform in [0, 1) with 24 bits, exact in float32
    float next_float() {
        return static_cast<float>(next_u64() >> 40) * (1.0f / 16777216.0f);
    }

    // uniform in [0, 1) with 53 bits
    double next_double() {
        return static_cast<double>(next_u64() >> 11) * (1.0 / 9007199254740992.0);
    }

    float uniform(float lo, float hi) { return lo + next_float() * (hi - lo); }
    double uniform(double lo, double hi) { return lo + next_double() * (hi - lo); }

    // unbiased integer in [0, n)
    std::uint64_t next_below(std::uint64_t n) {
        const std::uint64_t threshold = (0 - n) % n;
        for (;;) {
            const std::uint64_t r = next_u64();
            if (r >= threshold) return r % n;
        }
    }

    // Box-Muller; one draw per call, the twin is discarded for simplicity
    double gaussian() {
        double u1 = next_double();
        if (u1 < 1e-300) u1 = 1e-300;
        const double u2 = next_double();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::swap(v[i - 1], v[next_below(i)]);
        }
    }

private:
    std::uint64_t state_;
};

// FNV-1a, used to derive independent substreams from (seed, name) pairs.
inline std::uint64_t hash_name(std::uint64_t seed, const char* name) {
    std::uint64_t h = 14695981039346656037ULL ^ seed;
    for (const char* p = name; *p; ++p) {
        h = (h ^ static_cast<std::uint8_t>(*p)) * 1099511628211ULL;
    }
    return h;
}

} // namespace cgd
