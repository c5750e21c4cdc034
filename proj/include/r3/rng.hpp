#pragma once

#include <cstddef>
#include <cstdint>
#include <random>

namespace r3 {

/// Seeded random stream. Draws are derived from raw engine bits so that
/// sequences are identical across standard library implementations.
class Rng {
public:
    explicit Rng(std::uint64_t seed, std::uint64_t stream = 0);

    std::uint64_t next() { return engine_(); }

    /// Uniform double in [0, 1) with 53 random bits.
    double uniform();

    /// Uniform double in [lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n). n must be positive.
    std::size_t below(std::size_t n);

    /// Uniform integer in [lo, hi] inclusive.
    int between(int lo, int hi);

    bool coin() { return (next() >> 63) != 0; }

    /// Independent child stream, deterministic in (this stream's state, tag).
    Rng fork(std::uint64_t tag);

private:
    std::mt19937_64 engine_;
};

}  // namespace r3
