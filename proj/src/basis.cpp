#include "mmadoa/basis.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace mmadoa {
namespace {

constexpr double kDomainSlack = 1e-12;

double clamp_unit(double x)
{
    if (!(std::abs(x) <= 1.0 + kDomainSlack)) {
        throw std::domain_error("Legendre argument outside [-1, 1]: " + std::to_string(x));
    }
    return std::clamp(x, -1.0, 1.0);
}

double sh_norm(int l, int m)
{
    return std::sqrt((2.0 * l + 1.0) / (4.0 * kPi) *
                     std::exp(std::lgamma(l - m + 1.0) - std::lgamma(l + m + 1.0)));
}

void check_pole(double theta)
{
    if (theta < kPoleEpsilon || theta > kPi - kPoleEpsilon) {
        throw PoleError("spherical-harmonic derivative requested within " +
                        std::to_string(kPoleEpsilon) + " rad of a pole");
    }
}

int integer_sqrt(int n)
{
    int r = static_cast<int>(std::lround(std::sqrt(static_cast<double>(n))));
    return r * r == n ? r : -1;
}

// Complex SH values for all (l, m), l <= L.
Eigen::VectorXcd sh_complex_all(int max_degree, const Direction& dir)
{
    const auto table = assoc_legendre_table(max_degree, std::cos(dir.theta));
    Eigen::VectorXcd out((max_degree + 1) * (max_degree + 1));
    for (int l = 0; l <= max_degree; ++l) {
        for (int m = 0; m <= l; ++m) {
            const cplx y = sh_norm(l, m) * table[sh_index(l, m)] * std::polar(1.0, m * dir.phi);
            out[sh_index(l, m)] = y;
            if (m > 0) out[sh_index(l, -m)] = (m % 2 == 0 ? 1.0 : -1.0) * std::conj(y);
        }
    }
    return out;
}

}  // namespace

std::string to_string(BasisKind kind)
{
    switch (kind) {
    case BasisKind::Fourier1D: return "fourier1d";
    case BasisKind::RealFourier1D: return "realfourier1d";
    case BasisKind::ComplexSH: return "complexsh";
    case BasisKind::RealSH: return "realsh";
    case BasisKind::Fourier2D: return "fourier2d";
    }
    return "unknown";
}

BasisKind basis_kind_from_string(const std::string& name)
{
    for (auto k : {BasisKind::Fourier1D, BasisKind::RealFourier1D, BasisKind::ComplexSH, BasisKind::RealSH,
                   BasisKind::Fourier2D}) {
        if (to_string(k) == name) return k;
    }
    throw std::invalid_argument("unknown basis kind '" + name + "'");
}

BasisSpec BasisSpec::spherical(BasisKind kind, int max_degree)
{
    BasisSpec s{kind, (max_degree + 1) * (max_degree + 1)};
    s.validate();
    return s;
}

BasisSpec BasisSpec::fourier(BasisKind kind, int max_order)
{
    const int side = 2 * max_order + 1;
    BasisSpec s{kind, kind == BasisKind::Fourier2D ? side * side : side};
    s.validate();
    return s;
}

Geometry BasisSpec::geometry() const
{
    return (kind == BasisKind::Fourier1D || kind == BasisKind::RealFourier1D) ? Geometry::Planar
                                                                               : Geometry::Spherical;
}

int BasisSpec::max_order() const
{
    switch (kind) {
    case BasisKind::Fourier1D:
    case BasisKind::RealFourier1D: return (size - 1) / 2;
    case BasisKind::ComplexSH:
    case BasisKind::RealSH: return integer_sqrt(size) - 1;
    case BasisKind::Fourier2D: return (integer_sqrt(size) - 1) / 2;
    }
    return -1;
}

void BasisSpec::validate() const
{
    if (size < 1) throw std::invalid_argument("basis size must be positive");
    switch (kind) {
    case BasisKind::Fourier1D:
    case BasisKind::RealFourier1D:
        if (size % 2 == 0) throw std::invalid_argument("Fourier1D basis size must be odd");
        break;
    case BasisKind::ComplexSH:
    case BasisKind::RealSH:
        if (integer_sqrt(size) < 0) throw std::invalid_argument("SH basis size must be a perfect square");
        break;
    case BasisKind::Fourier2D: {
        const int r = integer_sqrt(size);
        if (r < 0 || r % 2 == 0) throw std::invalid_argument("Fourier2D basis size must be an odd square");
        break;
    }
    }
}

double legendre(int l, double x)
{
    if (l < 0) throw std::invalid_argument("Legendre degree must be non-negative");
    x = clamp_unit(x);
    if (l == 0) return 1.0;
    double p0 = 1.0;
    double p1 = x;
    for (int k = 2; k <= l; ++k) {
        const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    return p1;
}

std::vector<double> assoc_legendre_table(int max_degree, double x)
{
    if (max_degree < 0) throw std::invalid_argument("Legendre degree must be non-negative");
    x = clamp_unit(x);
    std::vector<double> table((max_degree + 1) * (max_degree + 1), 0.0);
    const double s = std::sqrt(std::max(0.0, 1.0 - x * x));
    double pmm = 1.0;
    for (int m = 0; m <= max_degree; ++m) {
        if (m > 0) pmm *= -(2.0 * m - 1.0) * s;
        table[sh_index(m, m)] = pmm;
        if (m + 1 > max_degree) continue;
        double prev = pmm;
        double cur = x * (2.0 * m + 1.0) * pmm;
        table[sh_index(m + 1, m)] = cur;
        for (int l = m + 2; l <= max_degree; ++l) {
            const double next = (x * (2.0 * l - 1.0) * cur - (l + m - 1.0) * prev) / (l - m);
            table[sh_index(l, m)] = next;
            prev = cur;
            cur = next;
        }
    }
    return table;
}

double assoc_legendre(int l, int m, double x)
{
    if (l < 0 || m < 0 || m > l) throw std::invalid_argument("assoc_legendre requires 0 <= m <= l");
    return assoc_legendre_table(l, x)[sh_index(l, m)];
}

double assoc_legendre_dtheta(int l, int m, double theta)
{
    if (m < 0 || m > l) throw std::invalid_argument("assoc_legendre_dtheta requires 0 <= m <= l");
    check_pole(theta);
    const auto table = assoc_legendre_table(l + 1, std::cos(theta));
    return (l - m + 1.0) * table[sh_index(l + 1, m)] / std::sin(theta) -
           (l + 1.0) / std::tan(theta) * table[sh_index(l, m)];
}

cplx sh_complex(int l, int m, const Direction& dir)
{
    if (l < 0 || std::abs(m) > l) throw std::invalid_argument("sh_complex requires |m| <= l");
    const int am = std::abs(m);
    const cplx y = sh_norm(l, am) * assoc_legendre(l, am, std::cos(dir.theta)) * std::polar(1.0, am * dir.phi);
    if (m >= 0) return y;
    return (am % 2 == 0 ? 1.0 : -1.0) * std::conj(y);
}

std::pair<cplx, cplx> sh_complex_grad(int l, int m, const Direction& dir)
{
    if (l < 0 || std::abs(m) > l) throw std::invalid_argument("sh_complex_grad requires |m| <= l");
    check_pole(dir.theta);
    const cplx y = sh_complex(l, m, dir);
    cplx dtheta = static_cast<double>(m) / std::tan(dir.theta) * y;
    if (m < l) {
        dtheta += std::sqrt(static_cast<double>((l - m) * (l + m + 1))) * std::polar(1.0, -dir.phi) *
                  sh_complex(l, m + 1, dir);
    }
    return {dtheta, kJ * static_cast<double>(m) * y};
}

double sh_real(int l, int m, const Direction& dir)
{
    if (l < 0 || std::abs(m) > l) throw std::invalid_argument("sh_real requires |m| <= l");
    const int am = std::abs(m);
    const double p = sh_norm(l, am) * assoc_legendre(l, am, std::cos(dir.theta));
    if (m > 0) return std::sqrt(2.0) * std::cos(m * dir.phi) * p;
    if (m < 0) return std::sqrt(2.0) * std::sin(am * dir.phi) * p;
    return p;
}

std::pair<double, double> sh_real_grad(int l, int m, const Direction& dir)
{
    if (l < 0 || std::abs(m) > l) throw std::invalid_argument("sh_real_grad requires |m| <= l");
    check_pole(dir.theta);
    const int am = std::abs(m);
    const double n = sh_norm(l, am);
    const double dp = n * assoc_legendre_dtheta(l, am, dir.theta);
    const double p = n * assoc_legendre(l, am, std::cos(dir.theta));
    if (m > 0) {
        return {std::sqrt(2.0) * std::cos(m * dir.phi) * dp, -std::sqrt(2.0) * m * std::sin(m * dir.phi) * p};
    }
    if (m < 0) {
        return {std::sqrt(2.0) * std::sin(am * dir.phi) * dp, std::sqrt(2.0) * am * std::cos(am * dir.phi) * p};
    }
    return {dp, 0.0};
}

Eigen::VectorXcd basis_eval(const BasisSpec& spec, const Direction& dir)
{
    spec.validate();
    const double inv_sqrt_2pi = 1.0 / std::sqrt(kTwoPi);
    switch (spec.kind) {
    case BasisKind::Fourier1D: {
        const int k = spec.max_order();
        Eigen::VectorXcd b(spec.size);
        for (int u = -k; u <= k; ++u) b[u + k] = inv_sqrt_2pi * std::polar(1.0, u * dir.theta);
        return b;
    }
    case BasisKind::ComplexSH: return sh_complex_all(spec.max_order(), dir);
    case BasisKind::Fourier2D: {
        const int k = spec.max_order();
        const int side = 2 * k + 1;
        Eigen::VectorXcd b(spec.size);
        for (int i = 0; i < side; ++i) {
            const cplx bt = inv_sqrt_2pi * std::polar(1.0, (i - k) * dir.theta);
            for (int j = 0; j < side; ++j) b[i * side + j] = bt * inv_sqrt_2pi * std::polar(1.0, (j - k) * dir.phi);
        }
        return b;
    }
    default: throw std::invalid_argument("basis_eval: " + to_string(spec.kind) + " is a real basis");
    }
}

std::pair<Eigen::VectorXcd, Eigen::VectorXcd> basis_grad(const BasisSpec& spec, const Direction& dir)
{
    spec.validate();
    switch (spec.kind) {
    case BasisKind::Fourier1D: {
        const int k = spec.max_order();
        Eigen::VectorXcd b = basis_eval(spec, dir);
        for (int u = -k; u <= k; ++u) b[u + k] *= kJ * static_cast<double>(u);
        return {b, Eigen::VectorXcd::Zero(spec.size)};
    }
    case BasisKind::ComplexSH: {
        check_pole(dir.theta);
        const int big_l = spec.max_order();
        const Eigen::VectorXcd y = sh_complex_all(big_l, dir);
        Eigen::VectorXcd dt(spec.size);
        Eigen::VectorXcd dp(spec.size);
        const double cot = 1.0 / std::tan(dir.theta);
        const cplx rot = std::polar(1.0, -dir.phi);
        for (int l = 0; l <= big_l; ++l) {
            for (int m = -l; m <= l; ++m) {
                const cplx v = y[sh_index(l, m)];
                cplx d = m * cot * v;
                if (m < l) d += std::sqrt(static_cast<double>((l - m) * (l + m + 1))) * rot * y[sh_index(l, m + 1)];
                dt[sh_index(l, m)] = d;
                dp[sh_index(l, m)] = kJ * static_cast<double>(m) * v;
            }
        }
        return {dt, dp};
    }
    case BasisKind::Fourier2D: {
        const int k = spec.max_order();
        const int side = 2 * k + 1;
        const Eigen::VectorXcd b = basis_eval(spec, dir);
        Eigen::VectorXcd dt(spec.size);
        Eigen::VectorXcd dp(spec.size);
        for (int i = 0; i < side; ++i) {
            for (int j = 0; j < side; ++j) {
                dt[i * side + j] = kJ * static_cast<double>(i - k) * b[i * side + j];
                dp[i * side + j] = kJ * static_cast<double>(j - k) * b[i * side + j];
            }
        }
        return {dt, dp};
    }
    default: throw std::invalid_argument("basis_grad: " + to_string(spec.kind) + " is a real basis");
    }
}

Eigen::VectorXd basis_eval_real(const BasisSpec& spec, const Direction& dir)
{
    spec.validate();
    switch (spec.kind) {
    case BasisKind::RealFourier1D: {
        const int k = spec.max_order();
        Eigen::VectorXd b(spec.size);
        b[0] = 1.0 / std::sqrt(kTwoPi);
        const double c = 1.0 / std::sqrt(kPi);
        for (int u = 1; u <= k; ++u) {
            b[2 * u - 1] = c * std::cos(u * dir.theta);
            b[2 * u] = c * std::sin(u * dir.theta);
        }
        return b;
    }
    case BasisKind::RealSH: {
        const int big_l = spec.max_order();
        const auto table = assoc_legendre_table(big_l, std::cos(dir.theta));
        Eigen::VectorXd b(spec.size);
        for (int l = 0; l <= big_l; ++l) {
            b[sh_index(l, 0)] = sh_norm(l, 0) * table[sh_index(l, 0)];
            for (int m = 1; m <= l; ++m) {
                const double p = std::sqrt(2.0) * sh_norm(l, m) * table[sh_index(l, m)];
                b[sh_index(l, m)] = p * std::cos(m * dir.phi);
                b[sh_index(l, -m)] = p * std::sin(m * dir.phi);
            }
        }
        return b;
    }
    default: throw std::invalid_argument("basis_eval_real: " + to_string(spec.kind) + " is a complex basis");
    }
}

std::pair<Eigen::VectorXd, Eigen::VectorXd> basis_grad_real(const BasisSpec& spec, const Direction& dir)
{
    spec.validate();
    switch (spec.kind) {
    case BasisKind::RealFourier1D: {
        const int k = spec.max_order();
        Eigen::VectorXd dt = Eigen::VectorXd::Zero(spec.size);
        const double c = 1.0 / std::sqrt(kPi);
        for (int u = 1; u <= k; ++u) {
            dt[2 * u - 1] = -c * u * std::sin(u * dir.theta);
            dt[2 * u] = c * u * std::cos(u * dir.theta);
        }
        return {dt, Eigen::VectorXd::Zero(spec.size)};
    }
    case BasisKind::RealSH: {
        check_pole(dir.theta);
        const int big_l = spec.max_order();
        const auto table = assoc_legendre_table(big_l + 1, std::cos(dir.theta));
        const double sin_t = std::sin(dir.theta);
        const double cot = 1.0 / std::tan(dir.theta);
        Eigen::VectorXd dt(spec.size);
        Eigen::VectorXd dp(spec.size);
        for (int l = 0; l <= big_l; ++l) {
            for (int m = 0; m <= l; ++m) {
                const double dleg = (l - m + 1.0) * table[sh_index(l + 1, m)] / sin_t -
                                    (l + 1.0) * cot * table[sh_index(l, m)];
                const double n = sh_norm(l, m);
                if (m == 0) {
                    dt[sh_index(l, 0)] = n * dleg;
                    dp[sh_index(l, 0)] = 0.0;
                    continue;
                }
                const double s2n = std::sqrt(2.0) * n;
                const double p = table[sh_index(l, m)];
                dt[sh_index(l, m)] = s2n * std::cos(m * dir.phi) * dleg;
                dt[sh_index(l, -m)] = s2n * std::sin(m * dir.phi) * dleg;
                dp[sh_index(l, m)] = -s2n * m * std::sin(m * dir.phi) * p;
                dp[sh_index(l, -m)] = s2n * m * std::cos(m * dir.phi) * p;
            }
        }
        return {dt, dp};
    }
    default: throw std::invalid_argument("basis_grad_real: " + to_string(spec.kind) + " is a complex basis");
    }
}

}  // namespace mmadoa
