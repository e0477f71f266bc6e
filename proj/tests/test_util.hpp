#pragma once

#include <cstdint>

#include "anderson/lattice.hpp"
#include "anderson/rng.hpp"

// Deterministic draw helpers for property tests.

namespace testutil {

struct Rng {
    std::uint64_t key;
    std::uint64_t counter = 0;
    explicit Rng(std::uint64_t seed) : key(anderson::mix64(seed)) {}

    std::uint64_t bits() { return anderson::mix64(anderson::chain(key, counter++)); }
    double uniform() { return anderson::uniform01(bits()); }                 // [0, 1)
    double symmetric(double scale = 1.0) { return scale * (2.0 * uniform() - 1.0); }
    long index(long n) { return static_cast<long>(bits() % static_cast<std::uint64_t>(n)); }
};

inline anderson::Matrix random_symmetric(Rng& rng, long n, double scale = 1.0) {
    anderson::Matrix a(n, n);
    for (long i = 0; i < n; ++i) {
        a(i, i) = rng.symmetric(scale);
        for (long j = i + 1; j < n; ++j) {
            a(i, j) = rng.symmetric(scale);
            a(j, i) = a(i, j);
        }
    }
    return a;
}

} // namespace testutil
