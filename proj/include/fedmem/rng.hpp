#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace fedmem {

/// SplitMix64 finalizer. Used to derive independent stream seeds.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept
{
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

constexpr std::uint64_t mix64(std::uint64_t a, std::uint64_t b) noexcept
{
    return mix64(a ^ mix64(b + 0x632be59bd9b4e019ULL));
}

/// 64-bit FNV-1a. Stable across platforms, used for string-keyed streams.
constexpr std::uint64_t fnv1a(std::string_view s) noexcept
{
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

/// Maps 64 random bits to [0, 1) with 53 bits of precision.
constexpr double to_unit(std::uint64_t bits) noexcept
{
    return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

/// Counter-based uniform draw: a pure function of (seed, stream, counter).
constexpr double counter_uniform(std::uint64_t seed, std::uint64_t stream, std::uint64_t counter) noexcept
{
    return to_unit(mix64(mix64(seed, stream), counter));
}

/// Sequential generator on top of mt19937_64. The standard distributions are
/// implementation-defined, so every variate is derived here from raw engine
/// output to keep results identical across standard libraries.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : m_engine(seed) {}

    std::uint64_t next() { return m_engine(); }

    double uniform() { return to_unit(m_engine()); }

    /// Uniform integer in [0, n), rejection-sampled to avoid modulo bias.
    std::uint64_t below(std::uint64_t n);

    double normal();

    /// Marsaglia-Tsang gamma(shape, 1).
    double gamma(double shape);

  private:
    std::mt19937_64 m_engine;
    bool m_has_spare = false;
    double m_spare = 0.0;
};

}  // namespace fedmem
