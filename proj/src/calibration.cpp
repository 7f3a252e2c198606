#include "mmadoa/calibration.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "mmadoa/random.hpp"

namespace mmadoa {

using nlohmann::json;

Direction CalibrationGrid::direction(int q) const
{
    const auto [it, ip] = split(q);
    if (planar()) return Direction::planar(theta(it));
    return {theta(it), phi(ip)};
}

void CalibrationGrid::validate() const
{
    if (theta_count < 1 || phi_count < 1) throw DataError("calibration grid needs at least one sample");
    if (!(theta_step_deg > 0.0) || !(phi_step_deg > 0.0)) throw DataError("calibration grid steps must be positive");
    if (!std::isfinite(theta_start_deg) || !std::isfinite(phi_start_deg)) {
        throw DataError("calibration grid start angles must be finite");
    }
}

double CalibrationSet::wavelength() const
{
    return kSpeedOfLight / frequency_hz;
}

void CalibrationSet::validate() const
{
    grid.validate();
    if (num_ports < 1) throw DataError("calibration set needs at least one port");
    const auto q = grid.size();
    if (co.rows() != num_ports || co.cols() != q) {
        throw DataError("co-polar samples are " + std::to_string(co.rows()) + "x" + std::to_string(co.cols()) +
                        ", expected " + std::to_string(num_ports) + "x" + std::to_string(q));
    }
    if (cross.rows() != co.rows() || cross.cols() != co.cols()) {
        throw DataError("cross-polar samples do not match co-polar dimensions");
    }
    if (!co.allFinite() || !cross.allFinite()) throw DataError("calibration samples contain non-finite values");
    if (!(frequency_hz > 0.0) || !std::isfinite(frequency_hz)) throw DataError("carrier frequency must be positive");
    if (!(enclosing_radius_m > 0.0) || !std::isfinite(enclosing_radius_m)) {
        throw DataError("enclosing radius must be positive");
    }
}

namespace {

template <typename T>
T field(const json& obj, const std::string& key, const std::string& context)
{
    if (!obj.is_object() || !obj.contains(key)) throw DataError("missing field '" + context + key + "'");
    try {
        return obj.at(key).get<T>();
    } catch (const json::exception& e) {
        throw DataError("field '" + context + key + "': " + e.what());
    }
}

Eigen::RowVectorXcd read_samples(const json& arr, int expected, const std::string& context)
{
    if (!arr.is_array()) throw DataError("field '" + context + "' must be an array");
    if (static_cast<int>(arr.size()) != expected) {
        throw DataError("field '" + context + "' has " + std::to_string(arr.size()) + " entries, expected " +
                        std::to_string(expected));
    }
    Eigen::RowVectorXcd out(expected);
    for (int q = 0; q < expected; ++q) {
        const auto& e = arr[q];
        if (!e.is_array() || e.size() != 2 || !e[0].is_number() || !e[1].is_number()) {
            throw DataError("field '" + context + "[" + std::to_string(q) + "]' must be [re, im]");
        }
        out[q] = {e[0].get<double>(), e[1].get<double>()};
        if (!std::isfinite(out[q].real()) || !std::isfinite(out[q].imag())) {
            throw DataError("field '" + context + "[" + std::to_string(q) + "]' is not finite");
        }
    }
    return out;
}

json write_samples(const Eigen::RowVectorXcd& row)
{
    json arr = json::array();
    for (Eigen::Index q = 0; q < row.size(); ++q) arr.push_back({row[q].real(), row[q].imag()});
    return arr;
}

}  // namespace

CalibrationSet parse_calibration(const std::string& text)
{
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw DataError(std::string("calibration file is not valid JSON: ") + e.what());
    }
    if (field<int>(doc, "version", "") != 1) throw DataError("unsupported calibration file version");
    CalibrationSet cal;
    cal.frequency_hz = field<double>(doc, "frequency_hz", "");
    cal.num_ports = field<int>(doc, "num_ports", "");
    cal.enclosing_radius_m = field<double>(doc, "enclosing_radius_m", "");
    const json grid = field<json>(doc, "grid", "");
    cal.grid.theta_start_deg = field<double>(grid, "theta_start_deg", "grid.");
    cal.grid.theta_step_deg = field<double>(grid, "theta_step_deg", "grid.");
    cal.grid.theta_count = field<int>(grid, "theta_count", "grid.");
    cal.grid.phi_start_deg = field<double>(grid, "phi_start_deg", "grid.");
    cal.grid.phi_step_deg = field<double>(grid, "phi_step_deg", "grid.");
    cal.grid.phi_count = field<int>(grid, "phi_count", "grid.");
    cal.grid.validate();

    const json ports = field<json>(doc, "ports", "");
    if (!ports.is_array() || static_cast<int>(ports.size()) != cal.num_ports) {
        throw DataError("field 'ports' must hold num_ports entries");
    }
    const int q = cal.grid.size();
    cal.co.resize(cal.num_ports, q);
    cal.cross.resize(cal.num_ports, q);
    for (int m = 0; m < cal.num_ports; ++m) {
        const std::string ctx = "ports[" + std::to_string(m) + "].";
        cal.co.row(m) = read_samples(field<json>(ports[m], "co", ctx), q, ctx + "co");
        cal.cross.row(m) = read_samples(field<json>(ports[m], "cross", ctx), q, ctx + "cross");
    }
    cal.validate();
    return cal;
}

CalibrationSet load_calibration(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) throw DataError("cannot open calibration file " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_calibration(buf.str());
}

std::string serialize_calibration(const CalibrationSet& cal)
{
    cal.validate();
    json doc;
    doc["version"] = 1;
    doc["frequency_hz"] = cal.frequency_hz;
    doc["num_ports"] = cal.num_ports;
    doc["enclosing_radius_m"] = cal.enclosing_radius_m;
    doc["grid"] = {{"theta_start_deg", cal.grid.theta_start_deg}, {"theta_step_deg", cal.grid.theta_step_deg},
                   {"theta_count", cal.grid.theta_count},         {"phi_start_deg", cal.grid.phi_start_deg},
                   {"phi_step_deg", cal.grid.phi_step_deg},       {"phi_count", cal.grid.phi_count}};
    json ports = json::array();
    for (int m = 0; m < cal.num_ports; ++m) {
        ports.push_back({{"co", write_samples(cal.co.row(m))}, {"cross", write_samples(cal.cross.row(m))}});
    }
    doc["ports"] = std::move(ports);
    return doc.dump();
}

void save_calibration(const CalibrationSet& cal, const std::filesystem::path& path)
{
    std::ofstream out(path);
    if (!out) throw DataError("cannot write calibration file " + path.string());
    out << serialize_calibration(cal) << '\n';
}

double gain_of(const CalibrationSet& cal, int port, int q)
{
    if (port < 0 || port >= cal.num_ports || q < 0 || q >= cal.grid.size()) {
        throw std::out_of_range("gain_of: port or sample index out of range");
    }
    return std::norm(cal.co(port, q));
}

Direction cut_to_sphere(double theta)
{
    const double t = wrap_pi(theta);
    return t >= 0.0 ? Direction{t, 0.0} : Direction{-t, kPi};
}

Eigen::VectorXcd SyntheticAntennaTruth::response(PolSlot slot, const Direction& dir) const
{
    return sampling_matrix(slot) * basis_eval(basis, dir);
}

Eigen::VectorXcd SyntheticAntennaTruth::cut_response(PolSlot slot, double theta) const
{
    return response(slot, cut_to_sphere(theta));
}

Eigen::MatrixXcd SyntheticAntennaTruth::cut_coefficients(PolSlot slot) const
{
    // The cut of a degree-L field is a trigonometric polynomial of degree L;
    // the trapezoid rule with K > 2L nodes recovers its coefficients exactly.
    const int big_l = degree();
    const int k_nodes = 4 * big_l + 4;
    const auto& g = sampling_matrix(slot);
    Eigen::MatrixXcd coeffs = Eigen::MatrixXcd::Zero(g.rows(), 2 * big_l + 1);
    for (int k = 0; k < k_nodes; ++k) {
        const double theta = -kPi + kTwoPi * k / k_nodes;
        const Eigen::VectorXcd a = cut_response(slot, theta);
        for (int u = -big_l; u <= big_l; ++u) coeffs.col(u + big_l) += a * std::polar(1.0, -u * theta);
    }
    return coeffs * (std::sqrt(kTwoPi) / k_nodes);
}

namespace {

Eigen::MatrixXcd draw_coefficients(Rng& rng, int ports, int degree, double asymmetry, double level)
{
    const int u = (degree + 1) * (degree + 1);
    Eigen::MatrixXcd raw(ports, u);
    for (int m = 0; m < ports; ++m) {
        for (int l = 0; l <= degree; ++l) {
            const double decay = std::exp(-0.5 * l);
            for (int mm = -l; mm <= l; ++mm) raw(m, sh_index(l, mm)) = level * decay * rng.complex_normal(1.0);
        }
    }
    // Split into the part with G_{l,-m} = conj(G_{l,m}), which yields gains that
    // are invariant under phi -> phi + pi, and the remainder.
    Eigen::MatrixXcd sym(ports, u);
    for (int m = 0; m < ports; ++m) {
        for (int l = 0; l <= degree; ++l) {
            for (int mm = -l; mm <= l; ++mm) {
                sym(m, sh_index(l, mm)) = 0.5 * (raw(m, sh_index(l, mm)) + std::conj(raw(m, sh_index(l, -mm))));
            }
        }
    }
    return sym + asymmetry * (raw - sym);
}

}  // namespace

SynthResult synth_antenna(const SynthOptions& options)
{
    if (options.ports < 2) throw ConfigError("synth_antenna requires at least two ports");
    if (options.degree < 2) throw ConfigError("synth_antenna requires L_truth >= 2");
    if (!(options.grid_step_deg > 0.0) || std::fmod(360.0, options.grid_step_deg) != 0.0 ||
        std::fmod(180.0, options.grid_step_deg) != 0.0) {
        throw ConfigError("grid step must divide 180 degrees");
    }
    if (options.asymmetry < 0.0) throw ConfigError("asymmetry must be non-negative");

    Rng rng(options.seed);
    SyntheticAntennaTruth truth;
    truth.basis = BasisSpec::spherical(BasisKind::ComplexSH, options.degree);
    truth.seed = options.seed;
    truth.mode = options.mode;
    truth.g_co = draw_coefficients(rng, options.ports, options.degree, options.asymmetry, 1.0);
    truth.g_cross = draw_coefficients(rng, options.ports, options.degree, options.asymmetry,
                                      std::pow(10.0, options.cross_level_db / 20.0));

    CalibrationSet cal;
    cal.num_ports = options.ports;
    cal.frequency_hz = options.frequency_hz;
    const double step = options.grid_step_deg;
    if (options.mode == SynthMode::Sphere3D) {
        cal.grid = {0.0, step, static_cast<int>(std::lround(180.0 / step)) + 1,
                    0.0, step, static_cast<int>(std::lround(360.0 / step))};
    } else {
        cal.grid = {-180.0, step, static_cast<int>(std::lround(360.0 / step)), 0.0, step, 1};
    }
    // kappa * R_s = L_truth / 2
    cal.enclosing_radius_m = 0.5 * options.degree / cal.wavenumber();

    const int q_total = cal.grid.size();
    auto sample = [&](PolSlot slot) {
        Eigen::MatrixXcd out(options.ports, q_total);
        for (int q = 0; q < q_total; ++q) {
            const auto [it, ip] = cal.grid.split(q);
            out.col(q) = options.mode == SynthMode::Sphere3D
                             ? truth.response(slot, {cal.grid.theta(it), cal.grid.phi(ip)})
                             : truth.cut_response(slot, cal.grid.theta(it));
        }
        return out;
    };

    // Unit mean co-polar gain per port over the grid.
    const Eigen::MatrixXcd co_raw = sample(PolSlot::Co);
    for (int m = 0; m < options.ports; ++m) {
        const double mean_gain = co_raw.row(m).cwiseAbs2().mean();
        const double scale = 1.0 / std::sqrt(mean_gain);
        truth.g_co.row(m) *= scale;
        truth.g_cross.row(m) *= scale;
    }
    cal.co = sample(PolSlot::Co);
    cal.cross = sample(PolSlot::Cross);
    cal.validate();
    return {std::move(cal), std::move(truth)};
}

}  // namespace mmadoa
