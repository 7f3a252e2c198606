#pragma once

#include <cstdint>
#include <random>

#include "mmadoa/types.hpp"

namespace mmadoa {

/// Seeded generator with platform-stable output: the engine is std::mt19937_64
/// (its sequence is fixed by the standard) and all variates are derived from
/// raw engine words here, because the standard distributions are
/// implementation-defined.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }
    /// Uniform on [0, 1) with 53 random bits.
    double uniform();
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    /// Standard normal via the Box-Muller transform (pairs are cached).
    double normal();
    /// Circular complex Gaussian with E|z|^2 = variance.
    cplx complex_normal(double variance);

private:
    std::mt19937_64 engine_;
    double cached_ = 0.0;
    bool has_cached_ = false;
};

/// SplitMix64 finaliser.
std::uint64_t mix64(std::uint64_t x);

/// Child seed for (parent, a, b, ...); used to give every sweep point and
/// Monte-Carlo trial an independent stream.
std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t a);
std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t a, std::uint64_t b);

}  // namespace mmadoa
