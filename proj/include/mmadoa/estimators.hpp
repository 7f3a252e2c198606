#pragma once

// Maximum-likelihood DoA estimators over fitted response models. Every
// estimator seeds a Nelder-Mead refinement from an exhaustive coarse grid;
// the grid tables (gains, responses) are built once per estimator object and
// shared read-only between calls.

#include <memory>
#include <vector>

#include "mmadoa/response.hpp"
#include "mmadoa/types.hpp"

namespace mmadoa {

struct SearchOptions {
    double grid_step_deg = 1.0;
    double tolerance = 1e-6;  // simplex size, radians for angles
    int max_iterations = 500;
    // Search region. Planar: signed theta. Spherical: inclination, plus an
    // azimuth interval (a full circle when phi_max - phi_min >= 360).
    double theta_min_deg = -90.0;
    double theta_max_deg = 90.0;
    double phi_min_deg = 0.0;
    double phi_max_deg = 360.0;
    /// Multi-signal coarse stage: rounds of coordinate-wise grid sweeps.
    int alternating_rounds = 3;
    /// Replace the coordinate-wise sweeps by an exhaustive pair search (P = 2).
    bool brute_force_pairs = false;
    /// Non-coherent and single-signal polarimetric estimators refine this many
    /// separated grid minima and keep the best; at high SNR the true peak can
    /// be narrower than a grid cell, or lose to a near-tie on the grid.
    int refine_candidates = 3;

    static SearchOptions planar(double theta_min_deg, double theta_max_deg);
    static SearchOptions spherical(double theta_max_deg);
    void validate(Geometry geometry) const;
};

/// Coarse grid of the search region, enumerated theta-major in ascending order.
std::vector<Direction> search_grid(const SearchOptions& options, Geometry geometry);

struct EstimationDiagnostics {
    std::vector<Direction> grid_best;  // coarse-stage solution
    int iterations = 0;                // simplex iterations of the final refinement
    bool converged = false;
    double condition = 0.0;            // condition number of the estimated steering matrix
};

struct EstimationResult {
    std::vector<Direction> directions;
    std::vector<PolarizationState> polarizations;  // P-ML only
    std::vector<double> powers;                    // W
    double noise_power = 0.0;                      // W
    double objective = 0.0;                        // minimised cost (negative log-likelihood for NC-ML)
    EstimationDiagnostics diagnostics;
};

// ----------------------------------------------------------- non-coherent

inline constexpr double kPowerFloor = 1e-18;

/// -ln det S - (r - mu)^T S^{-1} (r - mu) with the Gaussian RSS moments.
double nc_loglik(const Eigen::VectorXd& rss, const Eigen::VectorXd& gain, double signal_power, double noise_power,
                 int snapshots);

/// (1/MK) sum |w|^2 over a noise-only block.
double noise_power_estimate(const Eigen::MatrixXcd& noise);

class NoncoherentEstimator {
public:
    NoncoherentEstimator(std::shared_ptr<const GainModel> model, SearchOptions options);

    /// Joint ML over direction, signal power and noise power (needs M >= 3).
    EstimationResult ml(const Eigen::VectorXd& rss, int snapshots) const;
    /// Reduced-complexity estimator with a separately estimated noise power.
    EstimationResult rc(const Eigen::VectorXd& rss, double noise_power) const;

    /// Log-likelihood at `dir` maximised over the signal and noise powers.
    double profile_loglik(const Eigen::VectorXd& rss, int snapshots, const Direction& dir) const;

    /// ||r'||^2 - (g^T r')^2 / ||g||^2 with r' = r - noise_power.
    static double rc_objective(const Eigen::VectorXd& rss_minus_noise, const Eigen::VectorXd& gain);

    const GainModel& model() const { return *model_; }
    const SearchOptions& options() const { return options_; }
    const std::vector<Direction>& grid() const { return dirs_; }
    const Eigen::MatrixXd& grid_gains() const { return gains_; }

private:
    struct NuisanceFit {
        double cost;  // negative log-likelihood
        double log_s;
        double log_n;
    };
    static NuisanceFit fit_nuisance(const Eigen::VectorXd& r, const Eigen::VectorXd& g, int snapshots, double floor);

    std::shared_ptr<const GainModel> model_;
    SearchOptions options_;
    std::vector<Direction> dirs_;
    Eigen::MatrixXd gains_;  // M x G
};

EstimationResult nc_ml(const Eigen::VectorXd& rss, int snapshots, std::shared_ptr<const GainModel> model,
                       const SearchOptions& options);
EstimationResult nc_rc(const Eigen::VectorXd& rss, double noise_power, std::shared_ptr<const GainModel> model,
                       const SearchOptions& options);

// --------------------------------------------------------------- coherent

/// I - A A^+ through a rank-revealing decomposition.
Eigen::MatrixXcd noise_projector(const Eigen::MatrixXcd& a);

/// Re tr{(I - A A^+) R}.
double cml_objective(const Eigen::MatrixXcd& r, const Eigen::MatrixXcd& a);

class CoherentEstimator {
public:
    CoherentEstimator(std::shared_ptr<const ResponseModel> model, SearchOptions options);

    EstimationResult ml(const Eigen::MatrixXcd& r, int signals) const;
    double objective(const Eigen::MatrixXcd& r, const std::vector<Direction>& dirs) const;

    const ResponseModel& model() const { return *model_; }
    const std::vector<Direction>& grid() const { return dirs_; }

private:
    std::shared_ptr<const ResponseModel> model_;
    SearchOptions options_;
    std::vector<Direction> dirs_;
    Eigen::MatrixXcd units_;  // normalised responses a / ||a||, M x G
};

class PolarimetricEstimator {
public:
    PolarimetricEstimator(PolarimetricModel model, SearchOptions options);

    EstimationResult ml(const Eigen::MatrixXcd& r, int signals) const;
    double objective(const Eigen::MatrixXcd& r, const std::vector<Direction>& dirs,
                     const std::vector<PolarizationState>& pols) const;

    const PolarimetricModel& model() const { return model_; }

private:
    PolarimetricModel model_;
    SearchOptions options_;
    std::vector<Direction> dirs_;
    Eigen::MatrixXcd co_;     // M x G
    Eigen::MatrixXcd cross_;  // M x G
};

EstimationResult c_ml(const Eigen::MatrixXcd& r, std::shared_ptr<const ResponseModel> model, int signals,
                      const SearchOptions& options);
EstimationResult p_ml(const Eigen::MatrixXcd& r, const PolarimetricModel& model, int signals,
                      const SearchOptions& options);

/// Maps an unconstrained (gamma, beta) onto gamma in [0, pi/2], beta in
/// [-pi, pi) with the same response up to a global phase.
PolarizationState canonical_polarization(double gamma, double beta);

}  // namespace mmadoa
