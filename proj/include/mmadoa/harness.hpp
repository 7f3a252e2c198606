#pragma once

// Config-driven Monte-Carlo campaigns: sweeps over SNR, direction or signal
// separation, RMSE surfaces over a direction grid, and likelihood maps.
//
// A config is a JSON document merged over default_config_json(); dotted
// overrides ("scenario.snr_db=10") are applied before parsing. Every trial
// draws from its own stream derived from (seed, point, trial), so results do
// not depend on the number of worker threads.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mmadoa/bounds.hpp"
#include "mmadoa/calibration.hpp"
#include "mmadoa/estimators.hpp"
#include "mmadoa/response.hpp"
#include "mmadoa/signal.hpp"

namespace mmadoa {

inline constexpr int kCsvSchemaVersion = 1;

enum class EstimatorKind { CML, NCML, NCRC, PML };

/// "<kind>-<model>", e.g. "cml-wm", "ncml-ait", "pml-truth".
struct EstimatorSpec {
    std::string id;
    EstimatorKind kind = EstimatorKind::CML;
    std::string model;  // wm | ait | truth | wmgain (non-coherent only)
};

struct HarnessConfig {
    nlohmann::json doc;  // merged document, echoed into sidecars and hashed

    // antenna
    std::string antenna_file;  // empty: synthesise
    SynthOptions synth;

    // models
    int wm_order = 0;  // 0: truncation rule
    int wm_gain_order = 0;
    SectorLayout ait_layout;
    IdealArray ait_ideal;

    std::vector<EstimatorSpec> estimators;

    // scenario
    int signals = 1;
    int snapshots = 1000;
    WaveformKind waveform = WaveformKind::UnitModulus;
    double snr_db = 20.0;
    std::optional<double> theta_deg, phi_deg;
    double separation_deg = 40.0;
    std::vector<double> power_offsets_db{0.0};
    bool polarized = false;
    std::optional<double> gamma_deg, beta_deg;
    double gamma_min_deg = 10.0, gamma_max_deg = 80.0;
    double beta_min_deg = -180.0, beta_max_deg = 180.0;
    int noise_samples = 1000;

    // noise
    double noise_power = 0.0;  // W; also the reference for SNR
    bool noiseless = false;    // generate data without noise (SNR still refers to noise_power)

    // field of view: where truths are drawn, and where estimators search
    double truth_theta_min_deg = -85.0, truth_theta_max_deg = 85.0;
    double truth_phi_min_deg = 0.0, truth_phi_max_deg = 360.0;
    SearchOptions search;

    // sweep
    std::string axis = "snr_db";  // snr_db | theta_deg | separation_deg | none
    std::vector<double> axis_values;

    // surface and likelihood map grids (degrees)
    std::vector<double> surface_theta, surface_phi;
    double likemap_theta_deg = 30.0, likemap_phi_deg = 0.0;
    double likemap_step_deg = 1.0;
    std::string likemap_model = "wm";

    int trials = 100;
    std::uint64_t seed = 1;
    int threads = 1;
    double outlier_deg = 10.0;
    std::string output;

    Geometry geometry() const { return synth.mode == SynthMode::Cut2D ? Geometry::Planar : Geometry::Spherical; }
    /// FNV-1a of the canonical dump of `doc`, as 16 hex digits.
    std::string hash() const;
};

nlohmann::json default_config_json();
/// Sets a dotted key; the value is parsed as JSON when possible, else kept as a string.
void apply_override(nlohmann::json& doc, const std::string& key, const std::string& value);
/// Merges `doc` over the defaults and validates. Throws ConfigError.
HarnessConfig parse_config(const nlohmann::json& doc);
HarnessConfig load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides = {});

/// Calibration data of the configured antenna: loaded from file or synthesised.
CalibrationSet config_antenna(const HarnessConfig& config);
/// WM basis of the configured order; order 0 applies the truncation rule to `cal`.
BasisSpec config_wm_basis(const HarnessConfig& config, const CalibrationSet& cal);

/// One realisation of the configured scenario with every configured estimator.
struct SingleRun {
    Scenario scenario;
    std::vector<std::string> estimators;
    std::vector<std::optional<EstimationResult>> estimates;  // empty when the estimator failed
    std::vector<std::string> errors;
    std::vector<std::optional<CrbResult>> bounds;             // with the nominal signal covariance
};

/// Draws the truth from derive_seed(seed, 0, 0). Estimators run only when `estimate` is set.
SingleRun run_single(const HarnessConfig& config, bool estimate = true);

struct SweepRecord {
    std::string axis;
    double axis_value = 0.0;
    std::string estimator;
    std::string parameter;
    double rmse = 0.0;      // degrees
    double crb_mean = 0.0;  // degrees^2
    double ratio = 0.0;     // rmse / sqrt(crb_mean)
    int trials = 0;
    int failures = 0;
    int outliers = 0;
};

struct SurfaceRecord {
    double theta = 0.0;  // degrees
    double phi = 0.0;
    std::string estimator;
    std::string metric;  // rmse_<param> | sqrt_crb_<param> | ratio_<param>
    double value = 0.0;
};

struct LikelihoodMap {
    std::vector<double> theta, phi;  // degrees
    Eigen::MatrixXd noncoherent;     // theta x phi, normalised to [-1, 0]
    Eigen::MatrixXd coherent;
    Direction truth;

    /// Local maxima (over the 4- or 2-neighbourhood) with value above `level`.
    int peaks(const Eigen::MatrixXd& map, double level) const;
    /// Cells with value above `level`.
    static int cells_above(const Eigen::MatrixXd& map, double level);
};

std::vector<SweepRecord> run_sweep(const HarnessConfig& config);
std::vector<SurfaceRecord> run_surface(const HarnessConfig& config);
LikelihoodMap run_likelihood_map(const HarnessConfig& config);

std::string sweep_csv(const std::vector<SweepRecord>& records, const std::string& config_hash);
std::string surface_csv(const std::vector<SurfaceRecord>& records, const std::string& config_hash);
std::string likemap_csv(const LikelihoodMap& map, const std::string& config_hash);

/// Writes `csv` to `path` and a JSON sidecar (config echo, hash, versions) to `path` + ".json".
void write_outputs(const std::filesystem::path& path, const std::string& csv, const HarnessConfig& config,
                   const std::string& kind);

}  // namespace mmadoa
