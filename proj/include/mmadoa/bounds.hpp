#pragma once

// Fisher information and Cramer-Rao bounds for the non-coherent (RSS), the
// coherent (deterministic-signal) and the polarimetric signal models. Angles
// are in radians throughout.

#include <string>
#include <vector>

#include "mmadoa/response.hpp"
#include "mmadoa/types.hpp"

namespace mmadoa {

struct CrbResult {
    Eigen::MatrixXd fim;
    Eigen::MatrixXd crb;        // inverse, or pseudo-inverse when degenerate
    Eigen::VectorXd std_dev;    // sqrt(diag(crb)); infinite for unidentifiable parameters
    std::vector<std::string> labels;
    bool degenerate = false;
    std::vector<std::string> flags;

    /// Position of `label`; throws std::out_of_range when absent.
    int index(const std::string& label) const;
    double variance(const std::string& label) const { return crb(index(label), index(label)); }
};

/// Inverts a FIM after scaling it to unit diagonal. Parameters in the
/// numerical null space are flagged and get an infinite std_dev.
CrbResult invert_fim(Eigen::MatrixXd fim, std::vector<std::string> labels);

/// Non-coherent FIM from the gain vector and its angular derivatives (one
/// column per angle). Parameters: the angles, then the signal power and, unless
/// `reduced`, the noise power.
CrbResult fim_noncoherent(const Eigen::VectorXd& gain, const Eigen::MatrixXd& gain_derivatives,
                          const std::vector<std::string>& angle_labels, double signal_power, double noise_power,
                          int snapshots, bool reduced);

/// As above for a direction of a gain model; planar models drop phi.
CrbResult fim_noncoherent(const Direction& dir, double signal_power, double noise_power, const GainModel& model,
                          int snapshots, bool reduced);

/// Deterministic-signal bound (sigma^2 / 2N) Re{(D^H P D) o (Z^T R_s Z)^T}^{-1}.
/// `owner[k]` is the signal whose response column D(:, k) differentiates.
CrbResult crb_deterministic(const Eigen::MatrixXcd& a, const Eigen::MatrixXcd& d, const std::vector<int>& owner,
                            std::vector<std::string> labels, const Eigen::MatrixXcd& signal_cov, double noise_power,
                            int snapshots);

/// Parameters ordered (theta_1..P, phi_1..P); planar models use theta only.
CrbResult crb_coherent(const std::vector<Direction>& dirs, const ResponseModel& model,
                       const Eigen::MatrixXcd& signal_cov, double noise_power, int snapshots);

/// Parameters ordered (theta_1..P, phi_1..P, gamma_1..P, beta_1..P); planar
/// models drop phi.
CrbResult crb_polarimetric(const std::vector<Direction>& dirs, const std::vector<PolarizationState>& pols,
                           const PolarimetricModel& model, const Eigen::MatrixXcd& signal_cov, double noise_power,
                           int snapshots);

}  // namespace mmadoa
