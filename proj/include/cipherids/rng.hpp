#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>

namespace cipherids {

// splitmix64 finalizer; used for seed derivation and keyed position hashing.
inline std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t mix64(std::uint64_t a, std::uint64_t b) {
    return mix64(mix64(a) ^ (b + 0x9e3779b97f4a7c15ULL));
}

// FNV-1a over a string; stable across platforms. Used to key per-stage seeds.
inline std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

// One pipeline seed, split per stage by a fixed derivation.
inline std::uint64_t stage_seed(std::uint64_t root_seed, std::string_view stage) {
    return mix64(root_seed, fnv1a(stage));
}

// Deterministic RNG. mt19937_64 output is fully specified by the standard;
// all distribution shaping is done here by hand because the std distribution
// adaptors are implementation-defined and would break the cross-run
// bitwise-reproducibility contract.
class DetRng {
public:
    explicit DetRng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    // Uniform in [0, 1) with 53 bits of precision.
    double unit_double() {
        return static_cast<double>(engine_() >> 11) * (1.0 / 9007199254740992.0);
    }

    // Uniform integer in [0, bound) via rejection sampling.
    std::uint64_t below(std::uint64_t bound) {
        if (bound == 0) return 0;
        const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                    std::numeric_limits<std::uint64_t>::max() % bound;
        std::uint64_t v = engine_();
        while (v >= limit) v = engine_();
        return v % bound;
    }

    // Box-Muller, no cached spare: two uniforms per draw, stateless between calls.
    double gaussian(double mean = 0.0, double stddev = 1.0) {
        const double u = 1.0 - unit_double();
        const double v = unit_double();
        const double r = std::sqrt(-2.0 * std::log(u));
        return mean + stddev * r * std::cos(2.0 * M_PI * v);
    }

    // In-place Fisher-Yates.
    template <typename Vec>
    void shuffle(Vec& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::mt19937_64 engine_;
};

} // namespace cipherids
