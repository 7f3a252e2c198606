#include "mmadoa/signal.hpp"

#include <cmath>

namespace mmadoa {

void Scenario::validate() const
{
    const auto p = directions.size();
    if (p == 0) throw ConfigError("scenario needs at least one signal");
    if (powers.size() != p) throw ConfigError("scenario needs one power per signal");
    if (!polarizations.empty() && polarizations.size() != p)
        throw ConfigError("scenario needs one polarisation per signal");
    if (snapshots < 1) throw ConfigError("scenario needs N >= 1 snapshots");
    if (!(noise_power >= 0.0)) throw ConfigError("noise power must be non-negative");
    for (double s : powers)
        if (!(s > 0.0)) throw ConfigError("signal powers must be positive");
}

Eigen::MatrixXcd SnapshotBlock::signal_covariance() const
{
    return s * s.adjoint() / static_cast<double>(s.cols());
}

Eigen::MatrixXcd steering_matrix(const Scenario& scenario, const ResponseModel& model)
{
    if (!scenario.polarizations.empty())
        throw ConfigError("polarised scenario needs a polarimetric model");
    Eigen::MatrixXcd a(model.num_ports(), scenario.num_signals());
    for (int p = 0; p < scenario.num_signals(); ++p) {
        if (!model.covers(scenario.directions[p])) throw FovError("signal direction outside the model field of view");
        a.col(p) = model.response(scenario.directions[p]);
    }
    return a;
}

Eigen::MatrixXcd steering_matrix(const Scenario& scenario, const PolarimetricModel& model)
{
    Eigen::MatrixXcd a(model.num_ports(), scenario.num_signals());
    for (int p = 0; p < scenario.num_signals(); ++p) {
        const Direction& d = scenario.directions[p];
        if (!model.covers(d)) throw FovError("signal direction outside the model field of view");
        const PolarizationState pol = scenario.polarizations.empty() ? PolarizationState{} : scenario.polarizations[p];
        a.col(p) = polarimetric_response(model, d, pol);
    }
    return a;
}

SnapshotBlock gen_snapshots(const Scenario& scenario, const Eigen::MatrixXcd& steering, std::uint64_t seed)
{
    scenario.validate();
    const int p_count = scenario.num_signals();
    if (steering.cols() != p_count) throw std::invalid_argument("steering matrix does not match the scenario");
    const int n = scenario.snapshots;
    Rng rng(seed);

    SnapshotBlock block;
    block.seed = seed;
    block.s.resize(p_count, n);
    for (int k = 0; k < n; ++k) {
        for (int p = 0; p < p_count; ++p) {
            if (scenario.waveform == WaveformKind::UnitModulus)
                block.s(p, k) = std::sqrt(scenario.powers[p]) * std::exp(kJ * (kTwoPi * rng.uniform()));
            else
                block.s(p, k) = rng.complex_normal(scenario.powers[p]);
        }
    }
    block.r = steering * block.s;
    if (scenario.noise_power > 0.0) block.r += noise_block(static_cast<int>(steering.rows()), n, scenario.noise_power, rng);
    return block;
}

SnapshotBlock gen_snapshots(const Scenario& scenario, const ResponseModel& model, std::uint64_t seed)
{
    return gen_snapshots(scenario, steering_matrix(scenario, model), seed);
}

SnapshotBlock gen_snapshots(const Scenario& scenario, const PolarimetricModel& model, std::uint64_t seed)
{
    return gen_snapshots(scenario, steering_matrix(scenario, model), seed);
}

Eigen::MatrixXcd noise_block(int ports, int samples, double noise_power, Rng& rng)
{
    Eigen::MatrixXcd w(ports, samples);
    for (int k = 0; k < samples; ++k)
        for (int m = 0; m < ports; ++m) w(m, k) = rng.complex_normal(noise_power);
    return w;
}

Eigen::VectorXd rss(const Eigen::MatrixXcd& r)
{
    if (r.cols() == 0) return Eigen::VectorXd::Zero(r.rows());
    return r.cwiseAbs2().rowwise().sum() / static_cast<double>(r.cols());
}

Eigen::VectorXd rss(const SnapshotBlock& block)
{
    return rss(block.r);
}

Eigen::MatrixXcd sample_cov(const Eigen::MatrixXcd& r)
{
    if (r.cols() == 0) return Eigen::MatrixXcd::Zero(r.rows(), r.rows());
    return r * r.adjoint() / static_cast<double>(r.cols());
}

Eigen::MatrixXcd sample_cov(const SnapshotBlock& block)
{
    return sample_cov(block.r);
}

RssMoments rss_moments(const Eigen::VectorXd& gain, double signal_power, double noise_power, int snapshots)
{
    if (snapshots < 1) throw std::invalid_argument("N must be at least 1");
    const double n = snapshots;
    RssMoments m;
    m.mean = gain * signal_power + Eigen::VectorXd::Constant(gain.size(), noise_power);
    m.variance = (Eigen::VectorXd::Constant(gain.size(), noise_power * noise_power) +
                  2.0 * noise_power * signal_power * gain) /
                 n;
    return m;
}

double noncentrality(double gain, double signal_power, int snapshots)
{
    return snapshots * gain * signal_power;
}

double thermal_noise_power(double temperature_k, double bandwidth_hz)
{
    constexpr double kBoltzmann = 1.380649e-23;
    return kBoltzmann * temperature_k * bandwidth_hz;
}

}  // namespace mmadoa
