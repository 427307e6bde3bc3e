#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace linkcorr {

using Rng = std::mt19937_64;

// splitmix64 finalizer
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Stream tags keep the derived seeds of unrelated replicate families disjoint.
enum class Stream : std::uint64_t {
    Ledger = 1,
    Variance = 2,
    OrResample = 3,
    Simulation = 4,
};

// Seed for one replicate identified by a path of indices below a master seed.
// Independent of evaluation order, so replicates can run on any thread.
inline std::uint64_t derive_seed(std::uint64_t master, Stream stream,
                                 std::initializer_list<std::uint64_t> path) noexcept {
    std::uint64_t h = mix64(master ^ mix64(static_cast<std::uint64_t>(stream)));
    for (std::uint64_t v : path) h = mix64(h ^ mix64(v + 0x632be59bd9b4e019ULL));
    return h;
}

// Bernoulli threshold on a 32-bit uniform: draw < threshold  <=>  success.
inline std::uint64_t bernoulli_threshold(double p) noexcept {
    return static_cast<std::uint64_t>(p * 4294967296.0);
}

// Unbiased-enough bounded integer in [0, n) via multiply-shift on the top 32 bits.
inline std::size_t bounded_index(Rng& rng, std::size_t n) noexcept {
    return static_cast<std::size_t>(((rng() >> 32) * static_cast<std::uint64_t>(n)) >> 32);
}

} // namespace linkcorr
