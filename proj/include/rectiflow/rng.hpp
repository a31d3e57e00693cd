#pragma once

#include <cstdint>
#include <random>
#include <string>

namespace rectiflow {

/// Seeded deterministic generator used for every random draw in the toolkit.
/// mt19937_64 has a pinned algorithm in the standard; uniform doubles are derived
/// from the raw 64-bit stream directly (53 mantissa bits) instead of
/// std::uniform_real_distribution, whose output is implementation-defined.
class rng {
public:
    static constexpr const char* algorithm = "mt19937_64/canonical53";

    explicit rng(std::uint64_t seed) : engine_(seed) {}

    /// Uniform on [0,1).
    double uniform() {
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    /// Uniform on [lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n) {
        // rejection sampling keeps the draw unbiased
        std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t v = engine_();
        while (v >= limit) v = engine_();
        return v % n;
    }

    std::uint64_t raw() { return engine_(); }

    /// Stable per-subtask seed derivation (splitmix64 step on seed ^ index).
    static std::uint64_t derive(std::uint64_t seed, std::uint64_t index) {
        std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (index + 1);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

private:
    std::mt19937_64 engine_;
};

}  // namespace rectiflow
