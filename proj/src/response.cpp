#include "mmadoa/response.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include <nlohmann/json.hpp>

namespace mmadoa {

namespace {

constexpr double kSvdCutoff = 1e-12;
constexpr double kMaxNormalCondition = 1e12;
constexpr double kAngleSlack = 1e-9;

int round_up_odd(double x)
{
    int n = static_cast<int>(std::ceil(x - 1e-9));
    if (n < 1) n = 1;
    return n % 2 == 0 ? n + 1 : n;
}

// Least-squares solve of X in  A X = Y  (A tall, column count = unknowns)
// through a truncated SVD. Returns the condition number of A^H A.
template <class MatA, class MatY>
auto lstsq(const MatA& a, const MatY& y, double& normal_condition)
{
    Eigen::BDCSVD<MatA> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const auto& s = svd.singularValues();
    const double smax = s.size() ? s(0) : 0.0;
    const double smin = s.size() ? s(s.size() - 1) : 0.0;
    normal_condition = smin > 0.0 ? (smax / smin) * (smax / smin) : std::numeric_limits<double>::infinity();
    svd.setThreshold(kSvdCutoff);
    return MatY(svd.solve(y));
}

void check_condition(double normal_condition, const std::string& what)
{
    if (!(normal_condition <= kMaxNormalCondition)) {
        std::ostringstream os;
        os << what << ": normal matrix condition number " << normal_condition << " exceeds 1e12";
        throw RankError(os.str());
    }
}

Eigen::MatrixXcd matrix_from_json(const nlohmann::json& rows)
{
    const auto m = static_cast<Eigen::Index>(rows.size());
    const auto n = m ? static_cast<Eigen::Index>(rows.at(0).size()) : 0;
    Eigen::MatrixXcd out(m, n);
    for (Eigen::Index i = 0; i < m; ++i) {
        if (static_cast<Eigen::Index>(rows[i].size()) != n) throw DataError("ragged matrix in model file");
        for (Eigen::Index j = 0; j < n; ++j) {
            const auto& z = rows[i][j];
            out(i, j) = {z.at(0).get<double>(), z.at(1).get<double>()};
        }
    }
    return out;
}

nlohmann::json matrix_to_json(const Eigen::MatrixXcd& mat)
{
    auto rows = nlohmann::json::array();
    for (Eigen::Index i = 0; i < mat.rows(); ++i) {
        auto row = nlohmann::json::array();
        for (Eigen::Index j = 0; j < mat.cols(); ++j) row.push_back({mat(i, j).real(), mat(i, j).imag()});
        rows.push_back(std::move(row));
    }
    return rows;
}

nlohmann::json basis_to_json(const BasisSpec& b)
{
    return {{"kind", to_string(b.kind)}, {"size", b.size}};
}

BasisSpec basis_from_json(const nlohmann::json& j)
{
    BasisSpec b{basis_kind_from_string(j.at("kind").get<std::string>()), j.at("size").get<int>()};
    b.validate();
    return b;
}

// Samples used by a WM fit: the grid directions, plus the mirrored copies on
// the torus theta in [pi, 2pi) when a Fourier2D basis is fitted to sphere data.
struct FitSamples {
    std::vector<Direction> dirs;
    std::vector<int> source;  // grid index of each sample
};

FitSamples fit_samples(const CalibrationGrid& grid, const BasisSpec& basis)
{
    if (basis.geometry() != grid.geometry())
        throw ConfigError("basis " + to_string(basis.kind) + " does not match the calibration grid geometry");
    FitSamples s;
    const int q_count = grid.size();
    for (int q = 0; q < q_count; ++q) {
        s.dirs.push_back(grid.direction(q));
        s.source.push_back(q);
    }
    if (basis.kind == BasisKind::Fourier2D) {
        for (int q = 0; q < q_count; ++q) {
            const Direction d = grid.direction(q);
            s.dirs.push_back({kTwoPi - d.theta, wrap_two_pi(d.phi + kPi)});
            s.source.push_back(q);
        }
    }
    return s;
}

void check_sizes(int ports, int u, int q, FitDiagnostics& diag)
{
    if (u > q) throw ConfigError("basis size U exceeds the number of calibration samples Q");
    if (ports > u) diag.warnings.push_back("fewer basis functions than ports (U < M)");
    if (4 * u > q) diag.warnings.push_back("U is not much smaller than Q (U > Q/4)");
}

double row_weight(const Direction& d, Geometry g, bool area)
{
    if (!area || g != Geometry::Spherical) return 1.0;
    return std::sqrt(std::max(std::abs(std::sin(d.theta)), 1e-3));
}

}  // namespace

int truncation_order(double kappa_rs, BasisKind kind)
{
    if (!(kappa_rs > 0.0)) throw std::invalid_argument("kappa*R_s must be positive");
    switch (kind) {
    case BasisKind::Fourier1D:
    case BasisKind::RealFourier1D: return round_up_odd(4.0 * kappa_rs + 1.0);
    case BasisKind::ComplexSH:
    case BasisKind::RealSH: {
        const double u = 8.0 * kappa_rs * kappa_rs + 4.0 * kappa_rs + 1.0;
        int root = static_cast<int>(std::ceil(std::sqrt(u) - 1e-9));
        while (root * root < u - 1e-9) ++root;
        return root * root;
    }
    case BasisKind::Fourier2D: {
        const int side = round_up_odd(4.0 * kappa_rs + 1.0);
        return side * side;
    }
    }
    return 1;
}

// ---------------------------------------------------------------- WmModel

WmModel::WmModel(Eigen::MatrixXcd sampling, BasisSpec basis, PolSlot slot)
    : g_(std::move(sampling)), basis_(basis), slot_(slot)
{
    basis_.validate();
    if (basis_.is_real()) throw std::invalid_argument("WmModel needs a complex basis");
    if (g_.cols() != basis_.size) throw std::invalid_argument("sampling matrix width does not match basis size");
}

Eigen::VectorXcd WmModel::response(const Direction& dir) const
{
    return g_ * basis_eval(basis_, dir.normalized(geometry()));
}

ResponseGradient WmModel::gradient(const Direction& dir) const
{
    const auto [bt, bp] = basis_grad(basis_, dir.normalized(geometry()));
    return {g_ * bt, g_ * bp};
}

std::string WmModel::describe() const
{
    return "wm/" + to_string(basis_.kind) + "/U=" + std::to_string(basis_.size);
}

WmModel fit_wm(const CalibrationSet& cal, const BasisSpec& basis, PolSlot slot, const FitOptions& options)
{
    cal.validate();
    basis.validate();
    if (basis.is_real()) throw ConfigError("fit_wm needs a complex basis; use fit_wm_gain for real bases");
    const FitSamples s = fit_samples(cal.grid, basis);
    const auto rows = static_cast<Eigen::Index>(s.dirs.size());
    FitDiagnostics diag;
    check_sizes(cal.num_ports, basis.size, static_cast<int>(rows), diag);

    const Eigen::MatrixXcd& e = cal.samples(slot);
    Eigen::MatrixXcd bt(rows, basis.size);  // B^T
    Eigen::MatrixXcd et(rows, cal.num_ports);
    for (Eigen::Index r = 0; r < rows; ++r) {
        const double w = row_weight(s.dirs[r], basis.geometry(), options.area_weighting);
        bt.row(r) = w * basis_eval(basis, s.dirs[r]).transpose();
        et.row(r) = w * e.col(s.source[r]).transpose();
    }
    const Eigen::MatrixXcd gt = lstsq(bt, et, diag.condition);
    check_condition(diag.condition, "fit_wm");

    WmModel model(gt.transpose(), basis, slot);
    for (Eigen::Index r = 0; r < rows; ++r) {
        const Eigen::VectorXcd fitted = model.sampling_matrix() * basis_eval(basis, s.dirs[r]);
        diag.max_residual = std::max(diag.max_residual, (fitted - e.col(s.source[r])).cwiseAbs().maxCoeff());
    }
    model.diagnostics = std::move(diag);
    return model;
}

// ------------------------------------------------------------ gain models

WmGainModel::WmGainModel(Eigen::MatrixXd sampling, BasisSpec basis) : g_(std::move(sampling)), basis_(basis)
{
    basis_.validate();
    if (!basis_.is_real()) throw std::invalid_argument("WmGainModel needs a real basis");
    if (g_.cols() != basis_.size) throw std::invalid_argument("sampling matrix width does not match basis size");
}

Eigen::VectorXd WmGainModel::gain(const Direction& dir) const
{
    return g_ * basis_eval_real(basis_, dir.normalized(geometry()));
}

GainGradient WmGainModel::gain_gradient(const Direction& dir) const
{
    const auto [bt, bp] = basis_grad_real(basis_, dir.normalized(geometry()));
    return {g_ * bt, g_ * bp};
}

WmGainModel fit_wm_gain(const CalibrationSet& cal, const BasisSpec& basis, const FitOptions& options)
{
    cal.validate();
    basis.validate();
    if (!basis.is_real()) throw ConfigError("fit_wm_gain needs a real basis (realsh or realfourier1d)");
    const FitSamples s = fit_samples(cal.grid, basis);
    const auto rows = static_cast<Eigen::Index>(s.dirs.size());
    FitDiagnostics diag;
    check_sizes(cal.num_ports, basis.size, static_cast<int>(rows), diag);

    Eigen::MatrixXd bt(rows, basis.size);
    Eigen::MatrixXd gains(rows, cal.num_ports);
    for (Eigen::Index r = 0; r < rows; ++r) {
        const double w = row_weight(s.dirs[r], basis.geometry(), options.area_weighting);
        bt.row(r) = w * basis_eval_real(basis, s.dirs[r]).transpose();
        gains.row(r) = w * cal.co.col(s.source[r]).cwiseAbs2().transpose();
    }
    const Eigen::MatrixXd gt = lstsq(bt, gains, diag.condition);
    check_condition(diag.condition, "fit_wm_gain");

    WmGainModel model(gt.transpose(), basis);
    for (Eigen::Index r = 0; r < rows; ++r) {
        const Eigen::VectorXd fitted = model.gain(s.dirs[r]);
        const Eigen::VectorXd truth = cal.co.col(s.source[r]).cwiseAbs2();
        diag.max_residual = std::max(diag.max_residual, (fitted - truth).cwiseAbs().maxCoeff());
    }
    model.diagnostics = std::move(diag);
    return model;
}

ResponseGainModel::ResponseGainModel(std::shared_ptr<const ResponseModel> response) : response_(std::move(response))
{
    if (!response_) throw std::invalid_argument("null response model");
}

Eigen::VectorXd ResponseGainModel::gain(const Direction& dir) const
{
    return response_->response(dir).cwiseAbs2();
}

GainGradient ResponseGainModel::gain_gradient(const Direction& dir) const
{
    const Eigen::VectorXcd a = response_->response(dir);
    const ResponseGradient d = response_->gradient(dir);
    return {2.0 * (a.conjugate().cwiseProduct(d.d_theta)).real(), 2.0 * (a.conjugate().cwiseProduct(d.d_phi)).real()};
}

// ---------------------------------------------------------- ideal arrays

Eigen::VectorXcd ideal_ula(int elements, double spacing, double wavelength, double theta)
{
    if (!(spacing > 0.0)) throw std::invalid_argument("ULA spacing must be positive");
    const double k = kTwoPi / wavelength;
    Eigen::VectorXcd a(elements);
    for (int m = 0; m < elements; ++m) a(m) = std::exp(kJ * (k * m * spacing * std::sin(theta)));
    return a;
}

Eigen::VectorXcd ideal_ula_dtheta(int elements, double spacing, double wavelength, double theta)
{
    const double k = kTwoPi / wavelength;
    Eigen::VectorXcd a = ideal_ula(elements, spacing, wavelength, theta);
    for (int m = 0; m < elements; ++m) a(m) *= kJ * (k * m * spacing * std::cos(theta));
    return a;
}

Eigen::VectorXcd ideal_ura(int mx, int my, double spacing, double wavelength, const Direction& dir)
{
    if (!(spacing > 0.0)) throw std::invalid_argument("URA spacing must be positive");
    const double k = kTwoPi / wavelength;
    const double ux = std::sin(dir.theta) * std::cos(dir.phi);
    const double uy = std::sin(dir.theta) * std::sin(dir.phi);
    Eigen::VectorXcd a(mx * my);
    for (int i = 0; i < mx; ++i)
        for (int j = 0; j < my; ++j) a(i * my + j) = std::exp(kJ * (k * spacing * (i * ux + j * uy)));
    return a;
}

std::pair<Eigen::VectorXcd, Eigen::VectorXcd> ideal_ura_grad(int mx, int my, double spacing, double wavelength,
                                                             const Direction& dir)
{
    const double k = kTwoPi / wavelength;
    const double st = std::sin(dir.theta), ct = std::cos(dir.theta);
    const double sp = std::sin(dir.phi), cp = std::cos(dir.phi);
    const Eigen::VectorXcd a = ideal_ura(mx, my, spacing, wavelength, dir);
    Eigen::VectorXcd dt(a.size()), dp(a.size());
    for (int i = 0; i < mx; ++i) {
        for (int j = 0; j < my; ++j) {
            const int n = i * my + j;
            dt(n) = a(n) * kJ * (k * spacing * (i * ct * cp + j * ct * sp));
            dp(n) = a(n) * kJ * (k * spacing * (-i * st * sp + j * st * cp));
        }
    }
    return {dt, dp};
}

// --------------------------------------------------------------- AitModel

namespace {

std::vector<double> sector_centers(double lo, double hi, double width, double overlap)
{
    const double step = width - overlap;
    if (!(width > 0.0) || !(step > 0.0)) throw ConfigError("sector width must exceed the overlap");
    if (hi - lo < width - kAngleSlack) throw ConfigError("field of view narrower than one sector");
    std::vector<double> centers;
    for (double c = lo + width / 2.0; c + width / 2.0 <= hi + 1e-9; c += step) centers.push_back(c);
    if (centers.back() + width / 2.0 < hi - 1e-9) centers.push_back(hi - width / 2.0);
    return centers;
}

// Angular distance in degrees on the azimuth circle.
double circular_deg(double a, double b)
{
    double d = std::fmod(std::abs(a - b), 360.0);
    return d > 180.0 ? 360.0 - d : d;
}

}  // namespace

AitModel::AitModel(Geometry geometry, IdealArray ideal, SectorLayout layout, double wavelength,
                   std::vector<AitSector> sectors)
    : geometry_(geometry), ideal_(ideal), layout_(layout), wavelength_(wavelength), sectors_(std::move(sectors))
{
    if (sectors_.empty()) throw std::invalid_argument("AIT model without sectors");
}

int AitModel::num_ports() const
{
    return static_cast<int>(sectors_.front().h.rows());
}

bool AitModel::covers(const Direction& dir) const
{
    if (geometry_ == Geometry::Planar) {
        const double t = rad2deg(wrap_pi(dir.theta));
        return t >= layout_.fov_min_deg - kAngleSlack && t <= layout_.fov_max_deg + kAngleSlack;
    }
    const double t = rad2deg(dir.normalized(Geometry::Spherical).theta);
    return t >= layout_.fov_min_deg - kAngleSlack && t <= layout_.fov_max_deg + kAngleSlack;
}

std::size_t AitModel::select_sector(const Direction& dir) const
{
    if (!covers(dir)) throw FovError("direction outside the AIT field of view");
    const Direction d = dir.normalized(geometry_);
    const double t = rad2deg(d.theta);
    const double p = rad2deg(d.phi);
    // Sectors are stored sorted by (theta centre, phi centre); strict
    // comparison keeps the lower centre on ties.
    std::size_t best = 0;
    double best_dt = std::numeric_limits<double>::infinity();
    double best_dp = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < sectors_.size(); ++i) {
        const double dt = std::abs(t - sectors_[i].center_theta);
        const double dp = geometry_ == Geometry::Planar ? 0.0 : circular_deg(p, sectors_[i].center_phi);
        if (dt < best_dt - 1e-12 || (std::abs(dt - best_dt) <= 1e-12 && dp < best_dp - 1e-12)) {
            best = i;
            best_dt = dt;
            best_dp = dp;
        }
    }
    return best;
}

Eigen::VectorXcd AitModel::ideal_response(const Direction& dir) const
{
    const double d = ideal_.spacing_wavelengths * wavelength_;
    if (ideal_.kind == IdealArray::Kind::ULA) return ideal_ula(ideal_.mx, d, wavelength_, dir.theta);
    return ideal_ura(ideal_.mx, ideal_.my, d, wavelength_, dir);
}

Eigen::VectorXcd AitModel::response(const Direction& dir) const
{
    const Direction d = dir.normalized(geometry_);
    return sectors_[select_sector(d)].h * ideal_response(d);
}

ResponseGradient AitModel::gradient(const Direction& dir) const
{
    const Direction d = dir.normalized(geometry_);
    const Eigen::MatrixXcd& h = sectors_[select_sector(d)].h;
    const double spacing = ideal_.spacing_wavelengths * wavelength_;
    if (ideal_.kind == IdealArray::Kind::ULA) {
        const Eigen::VectorXcd dt = h * ideal_ula_dtheta(ideal_.mx, spacing, wavelength_, d.theta);
        return {dt, Eigen::VectorXcd::Zero(dt.size())};
    }
    const auto [dt, dp] = ideal_ura_grad(ideal_.mx, ideal_.my, spacing, wavelength_, d);
    return {h * dt, h * dp};
}

std::string AitModel::describe() const
{
    std::ostringstream os;
    os << "ait/" << (ideal_.kind == IdealArray::Kind::ULA ? "ula" : "ura") << "/sectors=" << sectors_.size();
    return os.str();
}

AitModel fit_ait(const CalibrationSet& cal, PolSlot slot, const SectorLayout& layout, const IdealArray& ideal)
{
    cal.validate();
    const Geometry geometry = cal.grid.geometry();
    if ((geometry == Geometry::Planar) != (ideal.kind == IdealArray::Kind::ULA))
        throw ConfigError("AIT needs a ULA for planar data and a URA for spherical data");
    const int m_ideal = ideal.elements();
    const double lambda = cal.wavelength();
    const double spacing = ideal.spacing_wavelengths * lambda;
    const Eigen::MatrixXcd& e = cal.samples(slot);

    const std::vector<double> theta_centers =
        sector_centers(layout.fov_min_deg, layout.fov_max_deg, layout.width_deg, layout.overlap_deg);
    std::vector<double> phi_centers{0.0};
    if (geometry == Geometry::Spherical) {
        phi_centers.clear();
        for (double c = 0.0; c < 360.0 - 1e-9; c += layout.width_deg - layout.overlap_deg) phi_centers.push_back(c);
    }
    const double half = layout.width_deg / 2.0;

    std::vector<AitSector> sectors;
    for (double tc : theta_centers) {
        for (double pc : phi_centers) {
            std::vector<int> members;
            for (int q = 0; q < cal.grid.size(); ++q) {
                const Direction d = cal.grid.direction(q);
                const double t = rad2deg(d.theta);
                if (std::abs(t - tc) > half + 1e-9) continue;
                if (geometry == Geometry::Spherical && circular_deg(rad2deg(d.phi), pc) > half + 1e-9) continue;
                members.push_back(q);
            }
            if (static_cast<int>(members.size()) < m_ideal)
                throw ConfigError("AIT sector has fewer samples than virtual elements");
            const auto n = static_cast<Eigen::Index>(members.size());
            Eigen::MatrixXcd at(n, m_ideal);  // A_ideal^T
            Eigen::MatrixXcd et(n, cal.num_ports);
            for (Eigen::Index i = 0; i < n; ++i) {
                const Direction d = cal.grid.direction(members[i]);
                at.row(i) = (ideal.kind == IdealArray::Kind::ULA ? ideal_ula(m_ideal, spacing, lambda, d.theta)
                                                                : ideal_ura(ideal.mx, ideal.my, spacing, lambda, d))
                                .transpose();
                et.row(i) = e.col(members[i]).transpose();
            }
            double cond = 0.0;
            const Eigen::MatrixXcd ht = lstsq(at, et, cond);
            check_condition(cond, "fit_ait");
            AitSector s;
            s.center_theta = tc;
            s.center_phi = pc;
            s.h = ht.transpose();
            s.sample_count = static_cast<int>(n);
            s.residual = (at * ht - et).norm();
            sectors.push_back(std::move(s));
        }
    }
    return AitModel(geometry, ideal, layout, lambda, std::move(sectors));
}

// ----------------------------------------------------------- polarimetric

Eigen::VectorXcd polarimetric_response(const PolarimetricModel& model, const Direction& dir,
                                       const PolarizationState& pol)
{
    return std::sin(pol.gamma) * std::exp(kJ * pol.beta) * model.co->response(dir) +
           std::cos(pol.gamma) * model.cross->response(dir);
}

PolarimetricResponse eval_polarimetric(const PolarimetricModel& model, const Direction& dir,
                                       const PolarizationState& pol)
{
    const Eigen::VectorXcd co = model.co->response(dir);
    const Eigen::VectorXcd cross = model.cross->response(dir);
    const ResponseGradient dco = model.co->gradient(dir);
    const ResponseGradient dcross = model.cross->gradient(dir);
    const cplx w_co = std::sin(pol.gamma) * std::exp(kJ * pol.beta);
    const double w_cross = std::cos(pol.gamma);
    PolarimetricResponse r;
    r.value = w_co * co + w_cross * cross;
    r.d_theta = w_co * dco.d_theta + w_cross * dcross.d_theta;
    r.d_phi = w_co * dco.d_phi + w_cross * dcross.d_phi;
    r.d_gamma = std::cos(pol.gamma) * std::exp(kJ * pol.beta) * co - std::sin(pol.gamma) * cross;
    r.d_beta = kJ * w_co * co;
    return r;
}

PolarimetricModel truth_model(const SyntheticAntennaTruth& truth)
{
    PolarimetricModel pm;
    if (truth.mode == SynthMode::Cut2D) {
        const BasisSpec b = BasisSpec::fourier(BasisKind::Fourier1D, truth.degree());
        pm.co = std::make_shared<WmModel>(truth.cut_coefficients(PolSlot::Co), b, PolSlot::Co);
        pm.cross = std::make_shared<WmModel>(truth.cut_coefficients(PolSlot::Cross), b, PolSlot::Cross);
    } else {
        pm.co = std::make_shared<WmModel>(truth.g_co, truth.basis, PolSlot::Co);
        pm.cross = std::make_shared<WmModel>(truth.g_cross, truth.basis, PolSlot::Cross);
    }
    return pm;
}

// ------------------------------------------------------------ persistence

namespace {
constexpr int kModelFormatVersion = 1;
}

nlohmann::json model_to_json(const ResponseModel& model)
{
    nlohmann::json doc{{"format", "mmadoa-model"}, {"version", kModelFormatVersion}};
    if (const auto* wm = dynamic_cast<const WmModel*>(&model)) {
        doc["type"] = "wm";
        doc["slot"] = wm->slot() == PolSlot::Co ? "co" : "cross";
        doc["basis"] = basis_to_json(wm->basis());
        doc["G"] = matrix_to_json(wm->sampling_matrix());
        return doc;
    }
    if (const auto* ait = dynamic_cast<const AitModel*>(&model)) {
        doc["type"] = "ait";
        doc["geometry"] = ait->geometry() == Geometry::Planar ? "planar" : "spherical";
        doc["wavelength_m"] = ait->wavelength();
        const auto& ideal = ait->ideal();
        doc["ideal"] = {{"kind", ideal.kind == IdealArray::Kind::ULA ? "ula" : "ura"},
                        {"mx", ideal.mx},
                        {"my", ideal.my},
                        {"spacing_wavelengths", ideal.spacing_wavelengths}};
        const auto& lay = ait->layout();
        doc["layout"] = {{"width_deg", lay.width_deg},
                         {"overlap_deg", lay.overlap_deg},
                         {"fov_min_deg", lay.fov_min_deg},
                         {"fov_max_deg", lay.fov_max_deg}};
        auto sectors = nlohmann::json::array();
        for (const auto& s : ait->sectors()) {
            sectors.push_back({{"center_theta_deg", s.center_theta},
                               {"center_phi_deg", s.center_phi},
                               {"sample_count", s.sample_count},
                               {"residual", s.residual},
                               {"H", matrix_to_json(s.h)}});
        }
        doc["sectors"] = std::move(sectors);
        return doc;
    }
    throw std::invalid_argument("model type cannot be serialised");
}

std::shared_ptr<ResponseModel> model_from_json(const nlohmann::json& doc)
{
    try {
        if (doc.at("format").get<std::string>() != "mmadoa-model") throw DataError("not a model file");
        if (doc.at("version").get<int>() != kModelFormatVersion) throw DataError("unsupported model file version");
        const auto type = doc.at("type").get<std::string>();
        if (type == "wm") {
            const PolSlot slot = doc.at("slot").get<std::string>() == "cross" ? PolSlot::Cross : PolSlot::Co;
            return std::make_shared<WmModel>(matrix_from_json(doc.at("G")), basis_from_json(doc.at("basis")), slot);
        }
        if (type == "ait") {
            const Geometry g = doc.at("geometry").get<std::string>() == "planar" ? Geometry::Planar : Geometry::Spherical;
            IdealArray ideal;
            const auto& ij = doc.at("ideal");
            ideal.kind = ij.at("kind").get<std::string>() == "ula" ? IdealArray::Kind::ULA : IdealArray::Kind::URA;
            ideal.mx = ij.at("mx").get<int>();
            ideal.my = ij.at("my").get<int>();
            ideal.spacing_wavelengths = ij.at("spacing_wavelengths").get<double>();
            SectorLayout lay;
            const auto& lj = doc.at("layout");
            lay.width_deg = lj.at("width_deg").get<double>();
            lay.overlap_deg = lj.at("overlap_deg").get<double>();
            lay.fov_min_deg = lj.at("fov_min_deg").get<double>();
            lay.fov_max_deg = lj.at("fov_max_deg").get<double>();
            std::vector<AitSector> sectors;
            for (const auto& sj : doc.at("sectors")) {
                AitSector s;
                s.center_theta = sj.at("center_theta_deg").get<double>();
                s.center_phi = sj.at("center_phi_deg").get<double>();
                s.sample_count = sj.at("sample_count").get<int>();
                s.residual = sj.at("residual").get<double>();
                s.h = matrix_from_json(sj.at("H"));
                sectors.push_back(std::move(s));
            }
            return std::make_shared<AitModel>(g, ideal, lay, doc.at("wavelength_m").get<double>(), std::move(sectors));
        }
        throw DataError("unknown model type '" + type + "'");
    } catch (const nlohmann::json::exception& ex) {
        throw DataError(std::string("malformed model file: ") + ex.what());
    } catch (const std::invalid_argument& ex) {
        throw DataError(std::string("invalid model file: ") + ex.what());
    }
}

nlohmann::json gain_model_to_json(const WmGainModel& model)
{
    auto rows = nlohmann::json::array();
    for (Eigen::Index i = 0; i < model.sampling_matrix().rows(); ++i) {
        auto row = nlohmann::json::array();
        for (Eigen::Index j = 0; j < model.sampling_matrix().cols(); ++j) row.push_back(model.sampling_matrix()(i, j));
        rows.push_back(std::move(row));
    }
    return {{"format", "mmadoa-model"},
            {"version", kModelFormatVersion},
            {"type", "wm-gain"},
            {"basis", basis_to_json(model.basis())},
            {"G", std::move(rows)}};
}

WmGainModel gain_model_from_json(const nlohmann::json& doc)
{
    try {
        if (doc.at("type").get<std::string>() != "wm-gain") throw DataError("not a gain model file");
        if (doc.at("version").get<int>() != kModelFormatVersion) throw DataError("unsupported model file version");
        const auto& rows = doc.at("G");
        const auto m = static_cast<Eigen::Index>(rows.size());
        const auto n = m ? static_cast<Eigen::Index>(rows.at(0).size()) : 0;
        Eigen::MatrixXd g(m, n);
        for (Eigen::Index i = 0; i < m; ++i)
            for (Eigen::Index j = 0; j < n; ++j) g(i, j) = rows.at(i).at(j).get<double>();
        return WmGainModel(std::move(g), basis_from_json(doc.at("basis")));
    } catch (const nlohmann::json::exception& ex) {
        throw DataError(std::string("malformed gain model file: ") + ex.what());
    } catch (const std::invalid_argument& ex) {
        throw DataError(std::string("invalid gain model file: ") + ex.what());
    }
}

}  // namespace mmadoa
