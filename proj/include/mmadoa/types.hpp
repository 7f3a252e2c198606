#pragma once

#include <complex>
#include <numbers>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace mmadoa {

using cplx = std::complex<double>;

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kTwoPi = 2.0 * std::numbers::pi;
inline constexpr cplx kJ{0.0, 1.0};

inline constexpr double deg2rad(double deg) { return deg * kPi / 180.0; }
inline constexpr double rad2deg(double rad) { return rad * 180.0 / kPi; }

// Wraps an angle into [-pi, pi).
double wrap_pi(double angle);
// Wraps an angle into [0, 2pi).
double wrap_two_pi(double angle);

/// Planar models live in the x-z cut and read only `theta`, a signed angle in
/// [-pi, pi) measured from the z axis towards +x. Spherical models use the
/// inclination/azimuth pair.
enum class Geometry { Planar, Spherical };

struct Direction {
    double theta = 0.0;
    double phi = 0.0;

    /// Inclination reflected into [0, pi] (crossing a pole flips the azimuth by
    /// pi) and azimuth wrapped into [0, 2pi).
    static Direction on_sphere(double theta, double phi);
    static Direction planar(double theta) { return {wrap_pi(theta), 0.0}; }

    Direction normalized(Geometry geometry) const;
};

/// Auxiliary polarisation angle gamma in [0, pi/2] and phase beta in [-pi, pi).
struct PolarizationState {
    double gamma = kPi / 2.0;
    double beta = 0.0;
};

// Error categories. The CLI maps ConfigError to exit code 2 and DataError to 3.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct PoleError : std::domain_error {
    using std::domain_error::domain_error;
};
struct FovError : std::out_of_range {
    using std::out_of_range::out_of_range;
};
struct RankError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace mmadoa
