#pragma once

// Discrete antenna calibration data (co- and cross-polarised samples on a
// regular direction grid), its JSON file format, and a generator of
// band-limited synthetic multi-port antennas with a continuous ground truth.

#include <cstdint>
#include <filesystem>
#include <string>

#include "mmadoa/basis.hpp"
#include "mmadoa/types.hpp"

namespace mmadoa {

enum class PolSlot { Co, Cross };

/// Regular grid, enumerated theta-major: q = i_theta * phi_count + i_phi.
/// Angles are kept in degrees (the file unit) so that files round-trip
/// exactly; the accessors return radians. A grid with phi_count == 1 is a
/// planar x-z cut whose theta runs over the full circle.
struct CalibrationGrid {
    double theta_start_deg = 0.0;
    double theta_step_deg = 5.0;
    int theta_count = 1;
    double phi_start_deg = 0.0;
    double phi_step_deg = 5.0;
    int phi_count = 1;

    int size() const { return theta_count * phi_count; }
    bool planar() const { return phi_count == 1; }
    Geometry geometry() const { return planar() ? Geometry::Planar : Geometry::Spherical; }
    int index(int i_theta, int i_phi) const { return i_theta * phi_count + i_phi; }
    std::pair<int, int> split(int q) const { return {q / phi_count, q % phi_count}; }
    double theta(int i_theta) const { return deg2rad(theta_start_deg + i_theta * theta_step_deg); }
    double phi(int i_phi) const { return deg2rad(phi_start_deg + i_phi * phi_step_deg); }
    /// Direction of sample q in the geometry of the grid.
    Direction direction(int q) const;
    void validate() const;

    bool operator==(const CalibrationGrid&) const = default;
};

struct CalibrationSet {
    int num_ports = 0;
    CalibrationGrid grid;
    Eigen::MatrixXcd co;     // M x Q
    Eigen::MatrixXcd cross;  // M x Q
    double frequency_hz = 7.25e9;
    double enclosing_radius_m = 0.0;

    double wavelength() const;
    double wavenumber() const { return kTwoPi / wavelength(); }
    double kappa_rs() const { return wavenumber() * enclosing_radius_m; }
    const Eigen::MatrixXcd& samples(PolSlot slot) const { return slot == PolSlot::Co ? co : cross; }

    /// Throws DataError on inconsistent dimensions or non-finite samples.
    void validate() const;
};

inline constexpr double kSpeedOfLight = 299792458.0;

CalibrationSet load_calibration(const std::filesystem::path& path);
CalibrationSet parse_calibration(const std::string& text);
std::string serialize_calibration(const CalibrationSet& cal);
void save_calibration(const CalibrationSet& cal, const std::filesystem::path& path);

/// Reference-polarisation gain |co_{m,q}|^2.
double gain_of(const CalibrationSet& cal, int port, int q);

enum class SynthMode { Sphere3D, Cut2D };

struct SynthOptions {
    std::uint64_t seed = 1;
    int ports = 4;
    int degree = 5;  // L_truth
    SynthMode mode = SynthMode::Sphere3D;
    double grid_step_deg = 5.0;
    /// Scale of the coefficient component that breaks the mirror symmetry
    /// g(theta, phi) = g(theta, phi + pi). 1 leaves the random draw untouched,
    /// 0 gives exactly mirror-symmetric gains (with asymmetric phases).
    double asymmetry = 1.0;
    /// Cross-polarised coefficient level relative to co-polarised.
    double cross_level_db = 0.0;
    double frequency_hz = 7.25e9;
};

/// Continuous ground truth a(theta, phi) = G b(theta, phi) with a complex SH
/// basis of degree L_truth.
struct SyntheticAntennaTruth {
    Eigen::MatrixXcd g_co;
    Eigen::MatrixXcd g_cross;
    BasisSpec basis;
    std::uint64_t seed = 0;
    SynthMode mode = SynthMode::Sphere3D;

    const Eigen::MatrixXcd& sampling_matrix(PolSlot slot) const { return slot == PolSlot::Co ? g_co : g_cross; }
    int degree() const { return basis.max_order(); }
    /// Response at a spherical direction.
    Eigen::VectorXcd response(PolSlot slot, const Direction& dir) const;
    /// Response at a signed x-z cut angle.
    Eigen::VectorXcd cut_response(PolSlot slot, double theta) const;
    /// Exact Fourier1D sampling matrix (U = 2L+1) of the x-z cut.
    Eigen::MatrixXcd cut_coefficients(PolSlot slot) const;
};

/// Spherical direction of a signed x-z cut angle.
Direction cut_to_sphere(double theta);

struct SynthResult {
    CalibrationSet calibration;
    SyntheticAntennaTruth truth;
};

SynthResult synth_antenna(const SynthOptions& options);

}  // namespace mmadoa
