#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace salm {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Deterministic stream derivation: every consumer of randomness hashes the
/// base seed with its own tags, so adding or reordering consumers never
/// shifts another stream.
inline std::mt19937_64 derive_rng(std::uint64_t seed, std::initializer_list<std::uint64_t> tags) {
    std::uint64_t h = splitmix64(seed);
    for (std::uint64_t t : tags) h = splitmix64(h ^ t);
    return std::mt19937_64(h);
}

}  // namespace salm
