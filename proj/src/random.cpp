#include "mmadoa/random.hpp"

#include <cmath>

namespace mmadoa {

double Rng::uniform()
{
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

double Rng::normal()
{
    if (has_cached_) {
        has_cached_ = false;
        return cached_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    cached_ = radius * std::sin(kTwoPi * u2);
    has_cached_ = true;
    return radius * std::cos(kTwoPi * u2);
}

cplx Rng::complex_normal(double variance)
{
    const double s = std::sqrt(variance / 2.0);
    const double re = normal();
    const double im = normal();
    return {s * re, s * im};
}

std::uint64_t mix64(std::uint64_t x)
{
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t a)
{
    return mix64(mix64(parent) ^ mix64(a + 0x632be59bd9b4e019ULL));
}

std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t a, std::uint64_t b)
{
    return derive_seed(derive_seed(parent, a), b);
}

}  // namespace mmadoa
