#pragma once

// Basis functions for wavefield modelling: Legendre polynomials, complex and
// real spherical harmonics, one- and two-dimensional Fourier series, together
// with their angular derivatives.

#include <string>
#include <utility>
#include <vector>

#include "mmadoa/types.hpp"

namespace mmadoa {

/// Minimum distance (rad) to a pole for spherical-harmonic derivatives, which
/// contain cot(theta).
inline constexpr double kPoleEpsilon = 1e-6;

enum class BasisKind {
    Fourier1D,      // complex, planar
    RealFourier1D,  // cos/sin pairs, planar; real
    ComplexSH,      // spherical
    RealSH,         // spherical; real
    Fourier2D,      // complex, torus (theta-major Kronecker product)
};

std::string to_string(BasisKind kind);
BasisKind basis_kind_from_string(const std::string& name);

struct BasisSpec {
    BasisKind kind = BasisKind::Fourier1D;
    int size = 1;  // U

    /// Spherical-harmonic basis with maximum degree `max_degree`, U = (L+1)^2.
    static BasisSpec spherical(BasisKind kind, int max_degree);
    /// Fourier basis with highest harmonic `max_order` (U = 2K+1 for 1D,
    /// (2K+1)^2 for 2D).
    static BasisSpec fourier(BasisKind kind, int max_order);

    bool is_real() const { return kind == BasisKind::RealFourier1D || kind == BasisKind::RealSH; }
    Geometry geometry() const;
    /// L for SH kinds, K for Fourier kinds.
    int max_order() const;
    /// Throws std::invalid_argument when `size` is not admissible for `kind`.
    void validate() const;

    bool operator==(const BasisSpec&) const = default;
};

// u = (l+1)l + m (zero based) for the spherical-harmonic enumeration.
inline constexpr int sh_index(int l, int m) { return (l + 1) * l + m; }

/// Legendre polynomial P_l(x) by upward recurrence.
double legendre(int l, double x);

/// Associated Legendre function P_l^m(x) including the Condon-Shortley phase.
double assoc_legendre(int l, int m, double x);

/// All P_l^m(x) for 0 <= m <= l <= max_degree, stored at index sh_index(l, m).
std::vector<double> assoc_legendre_table(int max_degree, double x);

/// Complex spherical harmonic Y_l^m with unit L2 norm on the sphere.
cplx sh_complex(int l, int m, const Direction& dir);
std::pair<cplx, cplx> sh_complex_grad(int l, int m, const Direction& dir);

/// Real spherical harmonic (cosine branch for m > 0, sine branch for m < 0).
double sh_real(int l, int m, const Direction& dir);
std::pair<double, double> sh_real_grad(int l, int m, const Direction& dir);

/// Derivative of P_l^m(cos theta) with respect to theta.
double assoc_legendre_dtheta(int l, int m, double theta);

// Basis vectors. Complex kinds go through basis_eval; real kinds through
// basis_eval_real. Calling the wrong variant throws std::invalid_argument.
Eigen::VectorXcd basis_eval(const BasisSpec& spec, const Direction& dir);
std::pair<Eigen::VectorXcd, Eigen::VectorXcd> basis_grad(const BasisSpec& spec, const Direction& dir);

Eigen::VectorXd basis_eval_real(const BasisSpec& spec, const Direction& dir);
std::pair<Eigen::VectorXd, Eigen::VectorXd> basis_grad_real(const BasisSpec& spec, const Direction& dir);

}  // namespace mmadoa
