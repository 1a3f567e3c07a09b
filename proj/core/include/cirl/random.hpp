#pragma once

#include <array>
#include <cstdint>
#include <span>

namespace cirl {

/// SplitMix64 step. Used to expand a single 64-bit seed into generator state
/// and to derive child seeds (per rollout, per session).
constexpr std::uint64_t splitmix64(std::uint64_t& state) noexcept {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Derives an independent seed from a parent seed and a stream index.
constexpr std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t index) noexcept {
    std::uint64_t s = parent ^ (0xd1b54a32d192ed03ULL * (index + 1));
    return splitmix64(s);
}

/// xoshiro256** 1.0 (Blackman & Vigna), seeded through SplitMix64.
///
/// Every stochastic quantity in the toolkit (rollouts, start states, slip
/// outcomes in the demo service) is drawn from this generator, so a seed
/// reproduces the same bytes on any platform with IEEE doubles.
class Rng {
public:
    using result_type = std::uint64_t;

    explicit Rng(std::uint64_t seed) noexcept {
        std::uint64_t sm = seed;
        for (auto& word : state_) word = splitmix64(sm);
    }

    static constexpr result_type min() noexcept { return 0; }
    static constexpr result_type max() noexcept { return ~result_type{0}; }

    result_type operator()() noexcept { return next(); }

    result_type next() noexcept {
        const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
        const std::uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    /// Uniform double in [0, 1) with 53 bits of randomness.
    double uniform() noexcept { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    /// Uniform integer in [0, n). Lemire's nearly-divisionless rejection.
    std::uint64_t below(std::uint64_t n) noexcept;

    /// Samples an index from unnormalised non-negative weights by inverse CDF.
    /// Returns the last index with positive weight if rounding leaves a gap.
    std::size_t categorical(std::span<const double> weights) noexcept;

private:
    static constexpr std::uint64_t rotl(std::uint64_t x, int k) noexcept {
        return (x << k) | (x >> (64 - k));
    }

    std::array<std::uint64_t, 4> state_{};
};

}  // namespace cirl
