#pragma once

// Narrowband snapshot generation r(n) = A s(n) + w(n), the received signal
// strength statistic, the sample covariance and the Gaussian moments of the
// RSS under the noncentral chi-square model.

#include <cstdint>
#include <vector>

#include "mmadoa/random.hpp"
#include "mmadoa/response.hpp"
#include "mmadoa/types.hpp"

namespace mmadoa {

enum class WaveformKind { UnitModulus, Gaussian };

struct Scenario {
    std::vector<Direction> directions;
    /// Empty means pure co-polarised reception.
    std::vector<PolarizationState> polarizations;
    std::vector<double> powers;  // W
    WaveformKind waveform = WaveformKind::UnitModulus;
    int snapshots = 1000;
    double noise_power = 0.0;  // W

    int num_signals() const { return static_cast<int>(directions.size()); }
    /// Throws ConfigError on inconsistent fields.
    void validate() const;
};

struct SnapshotBlock {
    Eigen::MatrixXcd r;  // M x N
    Eigen::MatrixXcd s;  // P x N realised waveforms
    std::uint64_t seed = 0;

    int snapshots() const { return static_cast<int>(r.cols()); }
    /// Realised signal covariance (1/N) S S^H.
    Eigen::MatrixXcd signal_covariance() const;
};

/// Steering matrix of the scenario: co-polarised columns from `model`, or
/// polarimetric columns when the scenario carries polarisations.
Eigen::MatrixXcd steering_matrix(const Scenario& scenario, const ResponseModel& model);
Eigen::MatrixXcd steering_matrix(const Scenario& scenario, const PolarimetricModel& model);

SnapshotBlock gen_snapshots(const Scenario& scenario, const Eigen::MatrixXcd& steering, std::uint64_t seed);
SnapshotBlock gen_snapshots(const Scenario& scenario, const ResponseModel& model, std::uint64_t seed);
SnapshotBlock gen_snapshots(const Scenario& scenario, const PolarimetricModel& model, std::uint64_t seed);

/// M x K block of circular complex Gaussian noise (an unoccupied slot).
Eigen::MatrixXcd noise_block(int ports, int samples, double noise_power, Rng& rng);

/// r_m = (1/N) sum_n |r_m(n)|^2.
Eigen::VectorXd rss(const Eigen::MatrixXcd& r);
Eigen::VectorXd rss(const SnapshotBlock& block);

/// (1/N) sum_n r(n) r(n)^H.
Eigen::MatrixXcd sample_cov(const Eigen::MatrixXcd& r);
Eigen::MatrixXcd sample_cov(const SnapshotBlock& block);

struct RssMoments {
    Eigen::VectorXd mean;      // g s + sigma^2
    Eigen::VectorXd variance;  // diagonal of the covariance: (sigma^4 + 2 sigma^2 s g) / N
};

RssMoments rss_moments(const Eigen::VectorXd& gain, double signal_power, double noise_power, int snapshots);

/// Lambda = N g s.
double noncentrality(double gain, double signal_power, int snapshots);

/// Thermal noise power k_B T B.
double thermal_noise_power(double temperature_k = 290.0, double bandwidth_hz = 1e6);

}  // namespace mmadoa
