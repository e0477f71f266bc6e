#pragma once

#include <cstdint>

// Counter-based pseudo-random primitives. Every draw is a pure function of
// 64-bit keys, so samples are reproducible bit-for-bit across platforms and
// independent of evaluation order or thread count.

namespace anderson {

inline constexpr std::uint64_t kGolden64 = 0x9e3779b97f4a7c15ULL;

// splitmix64 finalizer.
inline std::uint64_t mix64(std::uint64_t x) {
    x += kGolden64;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Combines a key with a subkey; chain() calls nest to derive seeds for
// (base_seed, L), (level_seed, realization), (realization_seed, site), ...
inline std::uint64_t chain(std::uint64_t key, std::uint64_t sub) {
    return mix64(key ^ mix64(sub + kGolden64));
}

// Uniform double in [0, 1) from the top 53 bits.
inline double uniform01(std::uint64_t bits) {
    return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

} // namespace anderson
