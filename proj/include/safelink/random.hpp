#pragma once

#include <array>
#include <cstdint>
#include <string_view>

namespace safelink::sim
{

/// SplitMix64 step. Used to expand a 64-bit seed into generator state and to
/// derive independent sub-streams.
std::uint64_t splitmix64(std::uint64_t& state) noexcept;

/// Seeded pseudo-random source: xoshiro256** 1.0 (Blackman & Vigna), state
/// expanded from the seed with SplitMix64. Every derived quantity (uniform
/// doubles, normals, bounded integers) is computed here from the raw 64-bit
/// outputs, so a given seed yields the same draws on every platform and
/// standard library.
class RandomSource
{
public:
    explicit RandomSource(std::uint64_t seed = 0) noexcept;

    std::uint64_t seed() const noexcept { return seed_; }

    std::uint64_t next_u64() noexcept;

    /// Uniform in [0, 1) with 53 bits of resolution.
    double uniform01() noexcept;

    /// Uniform integer in [lo, hi] (inclusive), unbiased (Lemire's method).
    std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) noexcept;

    /// Bernoulli(p); always consumes exactly one draw.
    bool bernoulli(double p) noexcept;

    /// Standard normal via Box-Muller. Consumes two uniforms per call; the
    /// second variate is discarded so the stream position is independent of
    /// call history.
    double normal() noexcept;

    /// Independent stream derived from this source's seed and a label. Does not
    /// advance this source.
    RandomSource fork(std::string_view label) const noexcept;
    RandomSource fork(std::uint64_t stream) const noexcept;

private:
    std::uint64_t seed_;
    std::array<std::uint64_t, 4> s_{};
};

} // namespace safelink::sim
