#pragma once

// Continuous antenna-response models fitted to calibration data: wavefield
// modelling (a = G b), real gain expansions (g = G_r b_r), sectorised array
// interpolation onto a virtual ULA/URA (a = H a_ideal), and the polarimetric
// combination of co- and cross-polarised responses.

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "mmadoa/basis.hpp"
#include "mmadoa/calibration.hpp"
#include "mmadoa/types.hpp"

namespace mmadoa {

struct ResponseGradient {
    Eigen::VectorXcd d_theta;
    Eigen::VectorXcd d_phi;
};

struct GainGradient {
    Eigen::VectorXd d_theta;
    Eigen::VectorXd d_phi;
};

class ResponseModel {
public:
    virtual ~ResponseModel() = default;
    virtual int num_ports() const = 0;
    virtual Geometry geometry() const = 0;
    /// True when `dir` lies inside the model's field of view.
    virtual bool covers(const Direction& dir) const { return (void)dir, true; }
    virtual Eigen::VectorXcd response(const Direction& dir) const = 0;
    virtual ResponseGradient gradient(const Direction& dir) const = 0;
    virtual std::string describe() const = 0;
};

class GainModel {
public:
    virtual ~GainModel() = default;
    virtual int num_ports() const = 0;
    virtual Geometry geometry() const = 0;
    virtual bool covers(const Direction& dir) const { return (void)dir, true; }
    virtual Eigen::VectorXd gain(const Direction& dir) const = 0;
    virtual GainGradient gain_gradient(const Direction& dir) const = 0;
};

struct FitDiagnostics {
    double max_residual = 0.0;   // max |E - fitted| over the samples used
    double condition = 0.0;      // condition number of the normal matrix
    std::vector<std::string> warnings;
};

struct FitOptions {
    /// Weight spherical samples by sin(theta). Off by default (plain least
    /// squares on the regular grid).
    bool area_weighting = false;
};

/// Rule-of-thumb expansion size for kappa*R_s, rounded up to a valid size.
int truncation_order(double kappa_rs, BasisKind kind);

/// a(theta, phi) = G b(theta, phi).
class WmModel final : public ResponseModel {
public:
    WmModel(Eigen::MatrixXcd sampling, BasisSpec basis, PolSlot slot = PolSlot::Co);

    int num_ports() const override { return static_cast<int>(g_.rows()); }
    Geometry geometry() const override { return basis_.geometry(); }
    Eigen::VectorXcd response(const Direction& dir) const override;
    ResponseGradient gradient(const Direction& dir) const override;
    std::string describe() const override;

    const Eigen::MatrixXcd& sampling_matrix() const { return g_; }
    const BasisSpec& basis() const { return basis_; }
    PolSlot slot() const { return slot_; }

    FitDiagnostics diagnostics;

private:
    Eigen::MatrixXcd g_;
    BasisSpec basis_;
    PolSlot slot_;
};

/// g(theta, phi) = G_r b_r(theta, phi) with a real basis.
class WmGainModel final : public GainModel {
public:
    WmGainModel(Eigen::MatrixXd sampling, BasisSpec basis);

    int num_ports() const override { return static_cast<int>(g_.rows()); }
    Geometry geometry() const override { return basis_.geometry(); }
    Eigen::VectorXd gain(const Direction& dir) const override;
    GainGradient gain_gradient(const Direction& dir) const override;

    const Eigen::MatrixXd& sampling_matrix() const { return g_; }
    const BasisSpec& basis() const { return basis_; }

    FitDiagnostics diagnostics;

private:
    Eigen::MatrixXd g_;
    BasisSpec basis_;
};

/// Gain |a|^2 of a complex response model.
class ResponseGainModel final : public GainModel {
public:
    explicit ResponseGainModel(std::shared_ptr<const ResponseModel> response);

    int num_ports() const override { return response_->num_ports(); }
    Geometry geometry() const override { return response_->geometry(); }
    bool covers(const Direction& dir) const override { return response_->covers(dir); }
    Eigen::VectorXd gain(const Direction& dir) const override;
    GainGradient gain_gradient(const Direction& dir) const override;

private:
    std::shared_ptr<const ResponseModel> response_;
};

WmModel fit_wm(const CalibrationSet& cal, const BasisSpec& basis, PolSlot slot, const FitOptions& options = {});
WmGainModel fit_wm_gain(const CalibrationSet& cal, const BasisSpec& basis, const FitOptions& options = {});

// Ideal steering vectors.
Eigen::VectorXcd ideal_ula(int elements, double spacing, double wavelength, double theta);
Eigen::VectorXcd ideal_ula_dtheta(int elements, double spacing, double wavelength, double theta);
Eigen::VectorXcd ideal_ura(int mx, int my, double spacing, double wavelength, const Direction& dir);
std::pair<Eigen::VectorXcd, Eigen::VectorXcd> ideal_ura_grad(int mx, int my, double spacing, double wavelength,
                                                             const Direction& dir);

struct IdealArray {
    enum class Kind { ULA, URA } kind = Kind::ULA;
    int mx = 4;  // ULA element count, or URA size along x
    int my = 1;  // URA size along y
    double spacing_wavelengths = 0.25;

    int elements() const { return kind == Kind::ULA ? mx : mx * my; }
};

struct SectorLayout {
    double width_deg = 30.0;
    double overlap_deg = 15.0;
    /// Planar: theta interval of the field of view. Spherical: inclination
    /// interval; azimuth always covers the full circle.
    double fov_min_deg = -90.0;
    double fov_max_deg = 90.0;
};

struct AitSector {
    double center_theta = 0.0;
    double center_phi = 0.0;
    Eigen::MatrixXcd h;  // M x M_ideal
    int sample_count = 0;
    double residual = 0.0;  // Frobenius norm of the sector fit residual
};

/// Sector-wise linear map of a virtual ideal array onto the measured response.
class AitModel final : public ResponseModel {
public:
    AitModel(Geometry geometry, IdealArray ideal, SectorLayout layout, double wavelength,
             std::vector<AitSector> sectors);

    int num_ports() const override;
    Geometry geometry() const override { return geometry_; }
    bool covers(const Direction& dir) const override;
    Eigen::VectorXcd response(const Direction& dir) const override;
    ResponseGradient gradient(const Direction& dir) const override;
    std::string describe() const override;

    /// Index of the sector used at `dir`: nearest centre, ties to the lower centre.
    std::size_t select_sector(const Direction& dir) const;
    Eigen::VectorXcd ideal_response(const Direction& dir) const;
    const std::vector<AitSector>& sectors() const { return sectors_; }
    const IdealArray& ideal() const { return ideal_; }
    const SectorLayout& layout() const { return layout_; }
    double wavelength() const { return wavelength_; }

private:
    Geometry geometry_;
    IdealArray ideal_;
    SectorLayout layout_;
    double wavelength_;
    std::vector<AitSector> sectors_;
};

AitModel fit_ait(const CalibrationSet& cal, PolSlot slot, const SectorLayout& layout, const IdealArray& ideal);

struct PolarimetricModel {
    std::shared_ptr<const ResponseModel> co;
    std::shared_ptr<const ResponseModel> cross;

    int num_ports() const { return co->num_ports(); }
    Geometry geometry() const { return co->geometry(); }
    bool covers(const Direction& dir) const { return co->covers(dir) && cross->covers(dir); }
};

struct PolarimetricResponse {
    Eigen::VectorXcd value;
    Eigen::VectorXcd d_theta;
    Eigen::VectorXcd d_phi;
    Eigen::VectorXcd d_gamma;
    Eigen::VectorXcd d_beta;
};

/// sin(gamma) e^{j beta} a_co + cos(gamma) a_cross.
Eigen::VectorXcd polarimetric_response(const PolarimetricModel& model, const Direction& dir,
                                       const PolarizationState& pol);
PolarimetricResponse eval_polarimetric(const PolarimetricModel& model, const Direction& dir,
                                       const PolarizationState& pol);

/// Continuous ground-truth models of a synthetic antenna: complex SH on the
/// sphere, or the exact Fourier1D expansion of the x-z cut.
PolarimetricModel truth_model(const SyntheticAntennaTruth& truth);

// Model persistence (versioned JSON).
nlohmann::json model_to_json(const ResponseModel& model);
std::shared_ptr<ResponseModel> model_from_json(const nlohmann::json& doc);
nlohmann::json gain_model_to_json(const WmGainModel& model);
WmGainModel gain_model_from_json(const nlohmann::json& doc);

}  // namespace mmadoa
