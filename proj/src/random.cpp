#include "safelink/random.hpp"

#include <bit>
#include <cmath>
#include <numbers>

namespace safelink::sim
{

namespace
{
__extension__ typedef unsigned __int128 u128;
}

std::uint64_t splitmix64(std::uint64_t& state) noexcept
{
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

RandomSource::RandomSource(std::uint64_t seed) noexcept : seed_(seed)
{
    std::uint64_t sm = seed;
    for (auto& word : s_)
    {
        word = splitmix64(sm);
    }
}

std::uint64_t RandomSource::next_u64() noexcept
{
    const std::uint64_t result = std::rotl(s_[1] * 5, 7) * 9;
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = std::rotl(s_[3], 45);
    return result;
}

double RandomSource::uniform01() noexcept
{
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

std::int64_t RandomSource::uniform_int(std::int64_t lo, std::int64_t hi) noexcept
{
    if (hi <= lo)
    {
        return lo;
    }
    const std::uint64_t range = static_cast<std::uint64_t>(hi - lo) + 1;
    if (range == 0)
    {
        // full 64-bit span
        return static_cast<std::int64_t>(next_u64());
    }
    u128 m = static_cast<u128>(next_u64()) * range;
    auto low = static_cast<std::uint64_t>(m);
    if (low < range)
    {
        const std::uint64_t threshold = (0 - range) % range;
        while (low < threshold)
        {
            m = static_cast<u128>(next_u64()) * range;
            low = static_cast<std::uint64_t>(m);
        }
    }
    return lo + static_cast<std::int64_t>(m >> 64);
}

bool RandomSource::bernoulli(double p) noexcept
{
    return uniform01() < p;
}

double RandomSource::normal() noexcept
{
    // 1 - u keeps the log argument in (0, 1]
    const double u1 = 1.0 - uniform01();
    const double u2 = uniform01();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

RandomSource RandomSource::fork(std::string_view label) const noexcept
{
    // FNV-1a over the label
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const char c : label)
    {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    return fork(h);
}

RandomSource RandomSource::fork(std::uint64_t stream) const noexcept
{
    std::uint64_t sm = seed_ ^ (stream * 0xd1b54a32d192ed03ULL);
    const std::uint64_t derived = splitmix64(sm) ^ splitmix64(sm);
    return RandomSource(derived);
}

} // namespace safelink::sim
