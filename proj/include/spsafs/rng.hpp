#pragma once

#include <cstdint>
#include <string_view>

namespace spsafs {

// Fixed, platform-independent generators. Every stochastic component of the
// toolkit (perturbation draws, CV fold shuffles, synthetic data) runs off
// these so that traces reproduce bit-for-bit across runs and platforms.
//
// mix64 is the SplitMix64 finalizer (Steele, Lea & Flood 2014):
//   z += 0x9E3779B97F4A7C15
//   z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
//   z = (z ^ (z >> 27)) * 0x94D049BB133111EB
//   return z ^ (z >> 31)
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
    z += 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

// Derives an independent 64-bit seed for a named stream. Pure function of
// (root, label, index); distinct labels or indices give distinct streams.
// The recurrence folds each label byte through mix64 and finishes with the
// index, so the result is stable across platforms and releases.
std::uint64_t derive_seed(std::uint64_t root, std::string_view label,
                          std::uint64_t index) noexcept;

// xoshiro256++ 1.0 (Blackman & Vigna 2019). State seeded from SplitMix64.
class Xoshiro256 {
public:
    explicit Xoshiro256(std::uint64_t seed) noexcept {
        std::uint64_t sm = seed;
        for (auto& word : state_) {
            sm += 0x9E3779B97F4A7C15ULL;
            word = mix64(sm);
        }
    }

    std::uint64_t next() noexcept {
        const std::uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
        const std::uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    // Uniform double in [0, 1): top 53 bits scaled by 2^-53.
    double uniform() noexcept {
        return static_cast<double>(next() >> 11) * 0x1.0p-53;
    }

    // Standard normal via Box-Muller; consumes two uniforms per pair and
    // caches the second deviate.
    double normal() noexcept;

    // Signed Bernoulli: +1 or -1 with probability 1/2 each (top bit).
    int sign() noexcept { return (next() >> 63) ? 1 : -1; }

    // Uniform integer in [0, bound) by rejection (unbiased).
    std::uint64_t below(std::uint64_t bound) noexcept;

private:
    static constexpr std::uint64_t rotl(std::uint64_t x, int k) noexcept {
        return (x << k) | (x >> (64 - k));
    }

    std::uint64_t state_[4]{};
    double cached_normal_ = 0.0;
    bool has_cached_normal_ = false;
};

}  // namespace spsafs
