#include "mmadoa/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>
#include <thread>

#include "mmadoa/bounds.hpp"
#include "mmadoa/random.hpp"

namespace mmadoa {

namespace {

using nlohmann::json;

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr const char* kLibraryVersion = "1.0.0";

// ------------------------------------------------------------ config access

const json* find(const json& doc, const std::string& dotted)
{
    const json* node = &doc;
    std::size_t start = 0;
    while (true) {
        const auto dot = dotted.find('.', start);
        const std::string key = dotted.substr(start, dot - start);
        if (!node->is_object() || !node->contains(key)) return nullptr;
        node = &(*node)[key];
        if (dot == std::string::npos) return node;
        start = dot + 1;
    }
}

template <class T>
T get(const json& doc, const std::string& key)
{
    const json* v = find(doc, key);
    if (!v || v->is_null()) throw ConfigError("missing config key '" + key + "'");
    try {
        return v->get<T>();
    } catch (const json::exception&) {
        throw ConfigError("config key '" + key + "' has the wrong type");
    }
}

template <class T>
std::optional<T> get_optional(const json& doc, const std::string& key)
{
    const json* v = find(doc, key);
    if (!v || v->is_null()) return std::nullopt;
    return get<T>(doc, key);
}

std::pair<double, double> get_range(const json& doc, const std::string& key, std::pair<double, double> fallback)
{
    const auto v = get_optional<std::vector<double>>(doc, key);
    if (!v) return fallback;
    if (v->size() != 2 || !((*v)[1] >= (*v)[0])) throw ConfigError("'" + key + "' must be an ascending [lo, hi] pair");
    return {(*v)[0], (*v)[1]};
}

// Inclusive arithmetic range; `periodic` drops a final value that repeats the first.
std::vector<double> arange(double start, double stop, double step, bool periodic = false)
{
    if (!(step > 0.0) || !(stop >= start)) throw ConfigError("invalid range [start, stop, step]");
    std::vector<double> out;
    const int n = static_cast<int>(std::floor((stop - start) / step + 1e-9));
    for (int i = 0; i <= n; ++i) {
        const double v = start + i * step;
        if (periodic && v >= start + 360.0 - 1e-9) break;
        out.push_back(v);
    }
    return out;
}

std::vector<double> get_grid(const json& doc, const std::string& key, bool periodic)
{
    const auto v = get<std::vector<double>>(doc, key);
    if (v.size() != 3) throw ConfigError("'" + key + "' must be [start, stop, step]");
    return arange(v[0], v[1], v[2], periodic);
}

EstimatorSpec parse_estimator(const std::string& id)
{
    const auto dash = id.find('-');
    if (dash == std::string::npos) throw ConfigError("estimator id '" + id + "' is not <kind>-<model>");
    const std::string kind = id.substr(0, dash);
    EstimatorSpec spec{id, EstimatorKind::CML, id.substr(dash + 1)};
    if (kind == "cml") spec.kind = EstimatorKind::CML;
    else if (kind == "ncml") spec.kind = EstimatorKind::NCML;
    else if (kind == "ncrc") spec.kind = EstimatorKind::NCRC;
    else if (kind == "pml") spec.kind = EstimatorKind::PML;
    else throw ConfigError("unknown estimator kind '" + kind + "'");
    const bool nc = spec.kind == EstimatorKind::NCML || spec.kind == EstimatorKind::NCRC;
    if (spec.model != "wm" && spec.model != "ait" && spec.model != "truth" && !(nc && spec.model == "wmgain"))
        throw ConfigError("unknown model '" + spec.model + "' in estimator '" + id + "'");
    return spec;
}

// ------------------------------------------------------------- experiment

bool non_coherent(EstimatorKind k)
{
    return k == EstimatorKind::NCML || k == EstimatorKind::NCRC;
}

struct Runner {
    EstimatorSpec spec;
    std::unique_ptr<NoncoherentEstimator> nc;
    std::unique_ptr<CoherentEstimator> coherent;
    std::unique_ptr<PolarimetricEstimator> polarimetric;
    std::vector<std::string> parameters;
};

std::vector<std::string> parameter_names(int signals, Geometry geometry, bool polarimetric)
{
    std::vector<std::string> names;
    const auto add = [&](const std::string& base) {
        for (int p = 1; p <= signals; ++p) names.push_back(signals == 1 ? base : base + "_" + std::to_string(p));
    };
    add("theta");
    if (geometry == Geometry::Spherical) add("phi");
    if (polarimetric) {
        add("gamma");
        add("beta");
    }
    return names;
}

class Experiment {
public:
    explicit Experiment(const HarnessConfig& cfg) : cfg_(cfg)
    {
        if (cfg.antenna_file.empty()) {
            const SynthResult s = synth_antenna(cfg.synth);
            cal_ = s.calibration;
            truth_ = truth_model(s.truth);
        } else {
            cal_ = config_antenna(cfg);
            truth_ = wm_models();
        }
        truth_gain_ = std::make_shared<ResponseGainModel>(truth_.co);

        for (const EstimatorSpec& spec : cfg.estimators) {
            Runner r;
            r.spec = spec;
            r.parameters = parameter_names(cfg.signals, cfg.geometry(), spec.kind == EstimatorKind::PML);
            const int m = cal_.num_ports;
            switch (spec.kind) {
            case EstimatorKind::NCML:
            case EstimatorKind::NCRC:
                if (cfg.signals != 1 || cfg.polarized)
                    throw ConfigError("non-coherent estimators handle one co-polarised signal");
                if (spec.kind == EstimatorKind::NCML && m < 3) throw ConfigError("NC-ML needs at least three ports");
                r.nc = std::make_unique<NoncoherentEstimator>(gain(spec.model), cfg.search);
                break;
            case EstimatorKind::CML:
                if (cfg.signals >= m) throw ConfigError("C-ML needs P < M");
                r.coherent = std::make_unique<CoherentEstimator>(model(spec.model).co, cfg.search);
                break;
            case EstimatorKind::PML:
                if (4 * cfg.signals >= 2 * m) throw ConfigError("P-ML needs 4P < 2M");
                r.polarimetric = std::make_unique<PolarimetricEstimator>(model(spec.model), cfg.search);
                break;
            }
            runners_.push_back(std::move(r));
        }
    }

    const HarnessConfig& config() const { return cfg_; }
    const PolarimetricModel& truth() const { return truth_; }
    const std::vector<Runner>& runners() const { return runners_; }
    int ports() const { return cal_.num_ports; }

    const PolarimetricModel& model(const std::string& name)
    {
        auto it = models_.find(name);
        if (it != models_.end()) return it->second;
        PolarimetricModel pm;
        if (name == "truth") {
            pm = truth_;
        } else if (name == "wm") {
            pm = wm_models();
        } else if (name == "ait") {
            pm.co = std::make_shared<AitModel>(fit_ait(cal_, PolSlot::Co, cfg_.ait_layout, cfg_.ait_ideal));
            pm.cross = std::make_shared<AitModel>(fit_ait(cal_, PolSlot::Cross, cfg_.ait_layout, cfg_.ait_ideal));
        } else {
            throw ConfigError("unknown model '" + name + "'");
        }
        return models_.emplace(name, pm).first->second;
    }

    std::shared_ptr<const GainModel> gain(const std::string& name)
    {
        if (name != "wmgain") return std::make_shared<ResponseGainModel>(model(name).co);
        const bool planar = cfg_.geometry() == Geometry::Planar;
        const BasisKind kind = planar ? BasisKind::RealFourier1D : BasisKind::RealSH;
        const int order = cfg_.wm_gain_order > 0 ? cfg_.wm_gain_order : 2 * wm_order();
        const BasisSpec basis = planar ? BasisSpec::fourier(kind, order) : BasisSpec::spherical(kind, order);
        return std::make_shared<WmGainModel>(fit_wm_gain(cal_, basis));
    }

    std::shared_ptr<const GainModel> truth_gain() const { return truth_gain_; }

private:
    int wm_order() const { return config_wm_basis(cfg_, cal_).max_order(); }

    PolarimetricModel wm_models() const
    {
        const BasisSpec basis = config_wm_basis(cfg_, cal_);
        PolarimetricModel pm;
        pm.co = std::make_shared<WmModel>(fit_wm(cal_, basis, PolSlot::Co));
        pm.cross = std::make_shared<WmModel>(fit_wm(cal_, basis, PolSlot::Cross));
        return pm;
    }

    const HarnessConfig& cfg_;
    CalibrationSet cal_;
    PolarimetricModel truth_;
    std::shared_ptr<const GainModel> truth_gain_;
    std::map<std::string, PolarimetricModel> models_;
    std::vector<Runner> runners_;
};

// ------------------------------------------------------------------ trials

struct PointSpec {
    double snr_db = 0.0;
    std::optional<double> theta_deg, phi_deg;
    double separation_deg = 0.0;
};

struct Truth {
    Scenario scenario;
    std::vector<double> values;  // per parameter of the polarimetric ordering, radians
};

Scenario draw_scenario(const HarnessConfig& cfg, const PointSpec& pt, Rng& rng)
{
    Scenario sc;
    sc.snapshots = cfg.snapshots;
    sc.waveform = cfg.waveform;
    sc.noise_power = cfg.noiseless ? 0.0 : cfg.noise_power;
    const int p_count = cfg.signals;
    const double span = (p_count - 1) * pt.separation_deg;
    const double theta0 = pt.theta_deg ? *pt.theta_deg
                                       : rng.uniform(cfg.truth_theta_min_deg, cfg.truth_theta_max_deg - span);
    const bool planar = cfg.geometry() == Geometry::Planar;
    const double phi0 = planar ? 0.0 : (pt.phi_deg ? *pt.phi_deg : rng.uniform(cfg.truth_phi_min_deg, cfg.truth_phi_max_deg));
    for (int p = 0; p < p_count; ++p) {
        const double t = deg2rad(theta0 + p * pt.separation_deg);
        sc.directions.push_back(planar ? Direction::planar(t) : Direction{t, wrap_two_pi(deg2rad(phi0))});
        sc.powers.push_back(cfg.noise_power * std::pow(10.0, (pt.snr_db + cfg.power_offsets_db[p]) / 10.0));
        if (cfg.polarized) {
            const double g = cfg.gamma_deg ? *cfg.gamma_deg : rng.uniform(cfg.gamma_min_deg, cfg.gamma_max_deg);
            const double b = cfg.beta_deg ? *cfg.beta_deg : rng.uniform(cfg.beta_min_deg, cfg.beta_max_deg);
            sc.polarizations.push_back({deg2rad(g), wrap_pi(deg2rad(b))});
        }
    }
    return sc;
}

// Per-parameter outcome of one estimator on one trial.
struct Outcome {
    bool failed = false;
    std::vector<double> error;  // radians
    std::vector<double> crb;    // radians^2
};

double direction_distance2(const Direction& a, const Direction& b, Geometry g)
{
    if (g == Geometry::Planar) return std::pow(wrap_pi(a.theta - b.theta), 2);
    return std::pow(a.theta - b.theta, 2) + std::pow(wrap_pi(a.phi - b.phi), 2);
}

// Assignment of estimates to truths with the least total squared error.
std::vector<int> best_assignment(const std::vector<Direction>& est, const std::vector<Direction>& truth, Geometry g)
{
    std::vector<int> perm(truth.size());
    std::iota(perm.begin(), perm.end(), 0);
    std::vector<int> best = perm;
    double best_cost = std::numeric_limits<double>::infinity();
    do {
        double cost = 0.0;
        for (std::size_t p = 0; p < truth.size(); ++p) cost += direction_distance2(est[perm[p]], truth[p], g);
        if (cost < best_cost) {
            best_cost = cost;
            best = perm;
        }
    } while (std::next_permutation(perm.begin(), perm.end()));
    return best;
}

CrbResult trial_crb(const Experiment& ex, EstimatorKind kind, const Scenario& sc, const Eigen::MatrixXcd& rs)
{
    const HarnessConfig& cfg = ex.config();
    if (non_coherent(kind))
        return fim_noncoherent(sc.directions[0], sc.powers[0], sc.noise_power, *ex.truth_gain(), sc.snapshots,
                               kind == EstimatorKind::NCRC);
    if (kind == EstimatorKind::PML || cfg.polarized) {
        const std::vector<PolarizationState> pols =
            cfg.polarized ? sc.polarizations : std::vector<PolarizationState>(sc.directions.size());
        return crb_polarimetric(sc.directions, pols, ex.truth(), rs, sc.noise_power, sc.snapshots);
    }
    return crb_coherent(sc.directions, *ex.truth().co, rs, sc.noise_power, sc.snapshots);
}

EstimationResult estimate(const Runner& run, const HarnessConfig& cfg, const Eigen::VectorXd& r_rss,
                          const Eigen::MatrixXcd& r_cov, int snapshots, double noise_hat)
{
    switch (run.spec.kind) {
    case EstimatorKind::NCML: return run.nc->ml(r_rss, snapshots);
    case EstimatorKind::NCRC: return run.nc->rc(r_rss, noise_hat);
    case EstimatorKind::CML: return run.coherent->ml(r_cov, cfg.signals);
    case EstimatorKind::PML: break;
    }
    return run.polarimetric->ml(r_cov, cfg.signals);
}

std::vector<Outcome> run_trial(const Experiment& ex, const PointSpec& pt, std::uint64_t trial_seed)
{
    const HarnessConfig& cfg = ex.config();
    const Geometry geom = cfg.geometry();
    Rng draw(derive_seed(trial_seed, 0));
    const Scenario sc = draw_scenario(cfg, pt, draw);
    const SnapshotBlock block = gen_snapshots(sc, ex.truth(), derive_seed(trial_seed, 1));
    Rng slot(derive_seed(trial_seed, 2));
    const double noise_hat = noise_power_estimate(noise_block(ex.ports(), cfg.noise_samples, sc.noise_power, slot));
    const Eigen::VectorXd r_rss = rss(block);
    const Eigen::MatrixXcd r_cov = sample_cov(block);

    std::vector<Outcome> out;
    for (const Runner& run : ex.runners()) {
        Outcome o;
        try {
            const EstimationResult res = estimate(run, cfg, r_rss, r_cov, sc.snapshots, noise_hat);
            // A bound that cannot be formed (e.g. noiseless data) does not void the estimate.
            std::optional<CrbResult> bound;
            try {
                bound = trial_crb(ex, run.spec.kind, sc, block.signal_covariance());
            } catch (const std::exception&) {
            }
            const std::vector<int> assign = best_assignment(res.directions, sc.directions, geom);
            for (const std::string& name : run.parameters) {
                const auto us = name.find('_');
                const std::string base = name.substr(0, us);
                const int p = us == std::string::npos ? 0 : std::stoi(name.substr(us + 1)) - 1;
                const int e = assign[p];
                double err = 0.0;
                if (base == "theta") {
                    err = res.directions[e].theta - sc.directions[p].theta;
                    if (geom == Geometry::Planar) err = wrap_pi(err);
                } else if (base == "phi") {
                    // Azimuth is undefined at the poles.
                    err = std::sin(sc.directions[p].theta) < 1e-12 ? kNaN
                                                                   : wrap_pi(res.directions[e].phi - sc.directions[p].phi);
                } else {
                    const PolarizationState truth_pol = cfg.polarized ? sc.polarizations[p] : PolarizationState{};
                    err = base == "gamma" ? res.polarizations[e].gamma - truth_pol.gamma
                                          : wrap_pi(res.polarizations[e].beta - truth_pol.beta);
                }
                o.error.push_back(err);
                o.crb.push_back(bound ? bound->variance(name) : kNaN);
            }
        } catch (const std::exception&) {
            o = Outcome{};
            o.failed = true;
        }
        out.push_back(std::move(o));
    }
    return out;
}

void parallel_for(int count, int threads, const std::function<void(int)>& body)
{
    if (threads <= 1 || count <= 1) {
        for (int i = 0; i < count; ++i) body(i);
        return;
    }
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    for (int t = 0; t < std::min(threads, count); ++t)
        pool.emplace_back([&] {
            for (int i = next++; i < count; i = next++) body(i);
        });
    for (auto& th : pool) th.join();
}

struct Aggregate {
    double sse = 0.0;
    double crb_sum = 0.0;
    int used = 0;
    int failures = 0;
    int outliers = 0;
};

// Runs all trials of one point and reduces them in trial order.
std::vector<std::vector<Aggregate>> run_point(const Experiment& ex, const PointSpec& pt, std::uint64_t point)
{
    const HarnessConfig& cfg = ex.config();
    std::vector<std::vector<Outcome>> trials(cfg.trials);
    parallel_for(cfg.trials, cfg.threads,
                 [&](int t) { trials[t] = run_trial(ex, pt, derive_seed(cfg.seed, point, static_cast<std::uint64_t>(t))); });

    std::vector<std::vector<Aggregate>> agg;
    for (const Runner& r : ex.runners()) agg.emplace_back(r.parameters.size());
    const double outlier = deg2rad(cfg.outlier_deg);
    for (const auto& trial : trials) {
        for (std::size_t e = 0; e < trial.size(); ++e) {
            for (std::size_t k = 0; k < agg[e].size(); ++k) {
                Aggregate& a = agg[e][k];
                if (trial[e].failed) {
                    ++a.failures;
                    continue;
                }
                const double err = trial[e].error[k];
                if (std::isnan(err)) continue;
                a.sse += err * err;
                a.crb_sum += trial[e].crb[k];
                ++a.used;
                if (std::abs(err) > outlier) ++a.outliers;
            }
        }
    }
    return agg;
}

double rmse_deg(const Aggregate& a)
{
    return a.used ? rad2deg(std::sqrt(a.sse / a.used)) : kNaN;
}

double crb_mean_deg2(const Aggregate& a)
{
    return a.used ? a.crb_sum / a.used * rad2deg(1.0) * rad2deg(1.0) : kNaN;
}

double ratio(const Aggregate& a)
{
    return a.used ? std::sqrt(a.sse / a.crb_sum) : kNaN;
}

PointSpec base_point(const HarnessConfig& cfg)
{
    return {cfg.snr_db, cfg.theta_deg, cfg.phi_deg, cfg.separation_deg};
}

std::string fmt(double v)
{
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

bool is_pole(double theta_deg)
{
    return std::abs(theta_deg) < 1e-9 || std::abs(theta_deg - 180.0) < 1e-9;
}

}  // namespace

// ------------------------------------------------------------------ config

std::string HarnessConfig::hash() const
{
    json hashed = doc;
    // Execution settings do not change results.
    hashed.erase("threads");
    hashed.erase("output");
    const std::string text = hashed.dump();
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : text) {
        h ^= c;
        h *= 1099511628211ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

json default_config_json()
{
    return json::parse(R"({
  "antenna": {
    "file": "",
    "synth": {"seed": 1, "ports": 4, "degree": 5, "mode": "2d", "grid_step_deg": 5.0,
              "asymmetry": 1.0, "cross_level_db": 0.0, "frequency_hz": 7.25e9}
  },
  "models": {
    "wm": {"order": 0, "gain_order": 0},
    "ait": {"width_deg": 30.0, "overlap_deg": 15.0, "fov_deg": [-90.0, 90.0],
            "ideal": {"kind": "auto", "mx": 0, "my": 0, "spacing_wavelengths": 0.25}}
  },
  "estimators": ["cml-wm", "ncml-wm"],
  "scenario": {
    "signals": 1, "snapshots": 1000, "waveform": "unit-modulus", "snr_db": 20.0,
    "theta_deg": null, "phi_deg": null, "separation_deg": 40.0, "power_offsets_db": [0.0],
    "polarized": false, "gamma_deg": null, "beta_deg": null,
    "gamma_range_deg": [10.0, 80.0], "beta_range_deg": [-180.0, 180.0], "noise_samples": 1000
  },
  "noise": {"power_w": null, "noiseless": false, "temperature_k": 290.0, "bandwidth_hz": 1e6},
  "fov": {"theta_deg": null, "phi_deg": [0.0, 360.0], "search_theta_deg": null, "search_phi_deg": [0.0, 360.0]},
  "search": {"grid_step_deg": 1.0, "tolerance": 1e-6, "max_iterations": 500, "alternating_rounds": 3,
             "brute_force_pairs": false, "refine_candidates": 3},
  "sweep": {"axis": "snr_db", "start": 0.0, "stop": 30.0, "step": 5.0, "values": null},
  "surface": {"theta_deg": [0.0, 90.0, 10.0], "phi_deg": [0.0, 360.0, 30.0]},
  "likemap": {"theta_deg": 30.0, "phi_deg": 0.0, "grid_step_deg": 1.0, "model": "wm"},
  "trials": 100,
  "seed": 1,
  "threads": 1,
  "outlier_deg": 10.0,
  "output": ""
})");
}

void apply_override(json& doc, const std::string& key, const std::string& value)
{
    if (key.empty()) throw ConfigError("empty override key");
    json* node = &doc;
    std::size_t start = 0;
    while (true) {
        const auto dot = key.find('.', start);
        const std::string part = key.substr(start, dot - start);
        if (part.empty()) throw ConfigError("malformed override key '" + key + "'");
        if (!node->is_object()) *node = json::object();
        node = &(*node)[part];
        if (dot == std::string::npos) break;
        start = dot + 1;
    }
    json parsed = json::parse(value, nullptr, false);
    *node = parsed.is_discarded() ? json(value) : parsed;
}

HarnessConfig parse_config(const json& user)
{
    if (!user.is_object()) throw ConfigError("config must be a JSON object");
    HarnessConfig c;
    c.doc = default_config_json();
    c.doc.merge_patch(user);
    const json& d = c.doc;

    c.antenna_file = get_optional<std::string>(d, "antenna.file").value_or("");
    c.synth.seed = get<std::uint64_t>(d, "antenna.synth.seed");
    c.synth.ports = get<int>(d, "antenna.synth.ports");
    c.synth.degree = get<int>(d, "antenna.synth.degree");
    const std::string mode = get<std::string>(d, "antenna.synth.mode");
    if (mode == "2d") c.synth.mode = SynthMode::Cut2D;
    else if (mode == "3d") c.synth.mode = SynthMode::Sphere3D;
    else throw ConfigError("antenna.synth.mode must be 2d or 3d");
    c.synth.grid_step_deg = get<double>(d, "antenna.synth.grid_step_deg");
    c.synth.asymmetry = get<double>(d, "antenna.synth.asymmetry");
    c.synth.cross_level_db = get<double>(d, "antenna.synth.cross_level_db");
    c.synth.frequency_hz = get<double>(d, "antenna.synth.frequency_hz");
    const bool planar = c.geometry() == Geometry::Planar;

    c.wm_order = get<int>(d, "models.wm.order");
    c.wm_gain_order = get<int>(d, "models.wm.gain_order");
    c.ait_layout.width_deg = get<double>(d, "models.ait.width_deg");
    c.ait_layout.overlap_deg = get<double>(d, "models.ait.overlap_deg");
    std::tie(c.ait_layout.fov_min_deg, c.ait_layout.fov_max_deg) = get_range(d, "models.ait.fov_deg", {-90.0, 90.0});
    const std::string ideal = get<std::string>(d, "models.ait.ideal.kind");
    const bool ula = ideal == "ula" || (ideal == "auto" && planar);
    if (ideal != "auto" && ideal != "ula" && ideal != "ura") throw ConfigError("models.ait.ideal.kind must be auto, ula or ura");
    c.ait_ideal.kind = ula ? IdealArray::Kind::ULA : IdealArray::Kind::URA;
    const int mx = get<int>(d, "models.ait.ideal.mx"), my = get<int>(d, "models.ait.ideal.my");
    c.ait_ideal.mx = mx > 0 ? mx : (ula ? 4 : 2);
    c.ait_ideal.my = ula ? 1 : (my > 0 ? my : 2);
    c.ait_ideal.spacing_wavelengths = get<double>(d, "models.ait.ideal.spacing_wavelengths");

    for (const auto& id : get<std::vector<std::string>>(d, "estimators")) c.estimators.push_back(parse_estimator(id));
    if (c.estimators.empty()) throw ConfigError("no estimators configured");

    c.signals = get<int>(d, "scenario.signals");
    c.snapshots = get<int>(d, "scenario.snapshots");
    const std::string wf = get<std::string>(d, "scenario.waveform");
    if (wf == "unit-modulus") c.waveform = WaveformKind::UnitModulus;
    else if (wf == "gaussian") c.waveform = WaveformKind::Gaussian;
    else throw ConfigError("scenario.waveform must be unit-modulus or gaussian");
    c.snr_db = get<double>(d, "scenario.snr_db");
    c.theta_deg = get_optional<double>(d, "scenario.theta_deg");
    c.phi_deg = get_optional<double>(d, "scenario.phi_deg");
    c.separation_deg = get<double>(d, "scenario.separation_deg");
    c.power_offsets_db = get<std::vector<double>>(d, "scenario.power_offsets_db");
    c.polarized = get<bool>(d, "scenario.polarized");
    c.gamma_deg = get_optional<double>(d, "scenario.gamma_deg");
    c.beta_deg = get_optional<double>(d, "scenario.beta_deg");
    std::tie(c.gamma_min_deg, c.gamma_max_deg) = get_range(d, "scenario.gamma_range_deg", {10.0, 80.0});
    std::tie(c.beta_min_deg, c.beta_max_deg) = get_range(d, "scenario.beta_range_deg", {-180.0, 180.0});
    c.noise_samples = get<int>(d, "scenario.noise_samples");
    if (c.signals < 1) throw ConfigError("scenario.signals must be >= 1");
    if (c.snapshots < 1 || c.noise_samples < 1) throw ConfigError("snapshot counts must be >= 1");
    if (static_cast<int>(c.power_offsets_db.size()) != c.signals)
        throw ConfigError("scenario.power_offsets_db needs one entry per signal");

    const auto power = get_optional<double>(d, "noise.power_w");
    c.noise_power = power ? *power : thermal_noise_power(get<double>(d, "noise.temperature_k"), get<double>(d, "noise.bandwidth_hz"));
    if (!(c.noise_power > 0.0)) throw ConfigError("noise power must be positive");
    c.noiseless = get<bool>(d, "noise.noiseless");

    const auto truth_theta = get_range(d, "fov.theta_deg", planar ? std::pair{-85.0, 85.0} : std::pair{0.0, 80.0});
    std::tie(c.truth_theta_min_deg, c.truth_theta_max_deg) = truth_theta;
    std::tie(c.truth_phi_min_deg, c.truth_phi_max_deg) = get_range(d, "fov.phi_deg", {0.0, 360.0});
    const auto search_theta = get_range(d, "fov.search_theta_deg", planar ? std::pair{-90.0, 90.0} : std::pair{0.0, 90.0});
    c.search = planar ? SearchOptions::planar(search_theta.first, search_theta.second)
                      : SearchOptions::spherical(search_theta.second);
    c.search.theta_min_deg = search_theta.first;
    std::tie(c.search.phi_min_deg, c.search.phi_max_deg) = get_range(d, "fov.search_phi_deg", {0.0, 360.0});
    c.search.grid_step_deg = get<double>(d, "search.grid_step_deg");
    c.search.tolerance = get<double>(d, "search.tolerance");
    c.search.max_iterations = get<int>(d, "search.max_iterations");
    c.search.alternating_rounds = get<int>(d, "search.alternating_rounds");
    c.search.brute_force_pairs = get<bool>(d, "search.brute_force_pairs");
    c.search.refine_candidates = get<int>(d, "search.refine_candidates");
    c.search.validate(c.geometry());
    if (c.truth_theta_max_deg - (c.signals - 1) * c.separation_deg < c.truth_theta_min_deg && !c.theta_deg)
        throw ConfigError("signal separation does not fit into the truth field of view");

    c.axis = get<std::string>(d, "sweep.axis");
    if (c.axis != "snr_db" && c.axis != "theta_deg" && c.axis != "separation_deg" && c.axis != "none")
        throw ConfigError("sweep.axis must be snr_db, theta_deg, separation_deg or none");
    if (const auto values = get_optional<std::vector<double>>(d, "sweep.values")) {
        c.axis_values = *values;
    } else if (c.axis != "none") {
        c.axis_values = arange(get<double>(d, "sweep.start"), get<double>(d, "sweep.stop"), get<double>(d, "sweep.step"));
    }
    if (c.axis == "none") c.axis_values = {0.0};
    if (c.axis_values.empty()) throw ConfigError("empty sweep axis");

    c.surface_theta = get_grid(d, "surface.theta_deg", false);
    c.surface_phi = planar ? std::vector<double>{0.0} : get_grid(d, "surface.phi_deg", true);
    c.likemap_theta_deg = get<double>(d, "likemap.theta_deg");
    c.likemap_phi_deg = get<double>(d, "likemap.phi_deg");
    c.likemap_step_deg = get<double>(d, "likemap.grid_step_deg");
    c.likemap_model = get<std::string>(d, "likemap.model");
    if (!(c.likemap_step_deg > 0.0)) throw ConfigError("likemap.grid_step_deg must be positive");

    c.trials = get<int>(d, "trials");
    c.seed = get<std::uint64_t>(d, "seed");
    c.threads = get<int>(d, "threads");
    c.outlier_deg = get<double>(d, "outlier_deg");
    c.output = get_optional<std::string>(d, "output").value_or("");
    if (c.trials < 1) throw ConfigError("trials must be >= 1");
    if (c.threads < 1) throw ConfigError("threads must be >= 1");
    return c;
}

HarnessConfig load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides)
{
    json doc = json::object();
    if (!path.empty()) {
        std::ifstream in(path);
        if (!in) throw ConfigError("cannot open config " + path.string());
        try {
            doc = json::parse(in);
        } catch (const json::exception& e) {
            throw ConfigError("config " + path.string() + ": " + e.what());
        }
    }
    for (const std::string& kv : overrides) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw ConfigError("override '" + kv + "' is not key=value");
        apply_override(doc, kv.substr(0, eq), kv.substr(eq + 1));
    }
    return parse_config(doc);
}

// ------------------------------------------------------------------- runs

CalibrationSet config_antenna(const HarnessConfig& cfg)
{
    CalibrationSet cal = cfg.antenna_file.empty() ? synth_antenna(cfg.synth).calibration : load_calibration(cfg.antenna_file);
    if (cal.grid.geometry() != cfg.geometry())
        throw ConfigError("antenna grid geometry does not match antenna.synth.mode");
    return cal;
}

BasisSpec config_wm_basis(const HarnessConfig& cfg, const CalibrationSet& cal)
{
    const bool planar = cfg.geometry() == Geometry::Planar;
    const BasisKind kind = planar ? BasisKind::Fourier1D : BasisKind::ComplexSH;
    int order = cfg.wm_order;
    if (order <= 0) {
        // The truncation rule gives the basis size U.
        const int u = truncation_order(cal.kappa_rs(), kind);
        order = planar ? (u - 1) / 2 : static_cast<int>(std::lround(std::sqrt(u))) - 1;
    }
    return planar ? BasisSpec::fourier(kind, order) : BasisSpec::spherical(kind, order);
}

SingleRun run_single(const HarnessConfig& cfg, bool run_estimators)
{
    const Experiment ex(cfg);
    const std::uint64_t trial_seed = derive_seed(cfg.seed, 0, 0);
    Rng draw(derive_seed(trial_seed, 0));
    SingleRun out;
    out.scenario = draw_scenario(cfg, base_point(cfg), draw);
    const Scenario& sc = out.scenario;
    const SnapshotBlock block = gen_snapshots(sc, ex.truth(), derive_seed(trial_seed, 1));
    Rng slot(derive_seed(trial_seed, 2));
    const double noise_hat = noise_power_estimate(noise_block(ex.ports(), cfg.noise_samples, sc.noise_power, slot));
    Eigen::MatrixXcd nominal = Eigen::VectorXd::Map(sc.powers.data(), sc.num_signals()).cast<cplx>().asDiagonal();
    for (const Runner& run : ex.runners()) {
        out.estimators.push_back(run.spec.id);
        std::optional<EstimationResult> est;
        std::string error;
        if (run_estimators) {
            try {
                est = estimate(run, cfg, rss(block), sample_cov(block), sc.snapshots, noise_hat);
            } catch (const std::exception& e) {
                error = e.what();
            }
        }
        std::optional<CrbResult> bound;
        try {
            bound = trial_crb(ex, run.spec.kind, sc, nominal);
        } catch (const std::exception& e) {
            if (error.empty()) error = std::string("bound: ") + e.what();
        }
        out.estimates.push_back(std::move(est));
        out.errors.push_back(error);
        out.bounds.push_back(std::move(bound));
    }
    return out;
}

std::vector<SweepRecord> run_sweep(const HarnessConfig& cfg)
{
    const Experiment ex(cfg);
    std::vector<SweepRecord> out;
    for (std::size_t i = 0; i < cfg.axis_values.size(); ++i) {
        PointSpec pt = base_point(cfg);
        const double v = cfg.axis_values[i];
        if (cfg.axis == "snr_db") pt.snr_db = v;
        else if (cfg.axis == "theta_deg") pt.theta_deg = v;
        else if (cfg.axis == "separation_deg") pt.separation_deg = v;
        const auto agg = run_point(ex, pt, i);
        for (std::size_t e = 0; e < ex.runners().size(); ++e) {
            const Runner& r = ex.runners()[e];
            for (std::size_t k = 0; k < r.parameters.size(); ++k) {
                const Aggregate& a = agg[e][k];
                out.push_back({cfg.axis, v, r.spec.id, r.parameters[k], rmse_deg(a), crb_mean_deg2(a), ratio(a),
                               cfg.trials, a.failures, a.outliers});
            }
        }
    }
    return out;
}

std::vector<SurfaceRecord> run_surface(const HarnessConfig& cfg)
{
    const Experiment ex(cfg);
    std::vector<SurfaceRecord> out;
    std::uint64_t cell = 0;
    for (double t : cfg.surface_theta) {
        for (double p : cfg.surface_phi) {
            PointSpec pt = base_point(cfg);
            pt.theta_deg = t;
            pt.phi_deg = p;
            const auto agg = run_point(ex, pt, cell++);
            for (std::size_t e = 0; e < ex.runners().size(); ++e) {
                const Runner& r = ex.runners()[e];
                for (std::size_t k = 0; k < r.parameters.size(); ++k) {
                    const Aggregate& a = agg[e][k];
                    out.push_back({t, p, r.spec.id, "rmse_" + r.parameters[k], rmse_deg(a)});
                    out.push_back({t, p, r.spec.id, "sqrt_crb_" + r.parameters[k], std::sqrt(crb_mean_deg2(a))});
                    out.push_back({t, p, r.spec.id, "ratio_" + r.parameters[k], ratio(a)});
                }
            }
            if (pt.theta_deg && is_pole(*pt.theta_deg) && cfg.geometry() == Geometry::Spherical) break;
        }
    }
    return out;
}

LikelihoodMap run_likelihood_map(const HarnessConfig& cfg)
{
    HarnessConfig single = cfg;
    single.signals = 1;
    single.power_offsets_db = {0.0};
    single.polarized = false;
    single.estimators = {parse_estimator("cml-" + cfg.likemap_model)};
    Experiment ex(single);
    const PolarimetricModel& pm = ex.model(cfg.likemap_model);
    const NoncoherentEstimator nc(std::make_shared<ResponseGainModel>(pm.co), single.search);

    PointSpec pt = base_point(single);
    pt.theta_deg = cfg.likemap_theta_deg;
    pt.phi_deg = cfg.likemap_phi_deg;
    const std::uint64_t trial_seed = derive_seed(cfg.seed, 0, 0);
    Rng draw(derive_seed(trial_seed, 0));
    const Scenario sc = draw_scenario(single, pt, draw);
    const SnapshotBlock block = gen_snapshots(sc, ex.truth(), derive_seed(trial_seed, 1));
    const Eigen::VectorXd r_rss = rss(block);
    const Eigen::MatrixXcd r_cov = sample_cov(block);

    LikelihoodMap map;
    map.truth = sc.directions[0];
    const SearchOptions& s = single.search;
    const bool planar = single.geometry() == Geometry::Planar;
    map.theta = arange(s.theta_min_deg, s.theta_max_deg, cfg.likemap_step_deg);
    map.phi = planar ? std::vector<double>{0.0}
                     : arange(s.phi_min_deg, s.phi_max_deg, cfg.likemap_step_deg,
                              s.phi_max_deg - s.phi_min_deg >= 360.0 - 1e-9);
    const auto nt = static_cast<Eigen::Index>(map.theta.size()), np = static_cast<Eigen::Index>(map.phi.size());
    map.noncoherent.setConstant(nt, np, kNaN);
    map.coherent.setConstant(nt, np, kNaN);
    for (Eigen::Index i = 0; i < nt; ++i) {
        for (Eigen::Index j = 0; j < np; ++j) {
            const Direction d = planar ? Direction::planar(deg2rad(map.theta[i]))
                                       : Direction{deg2rad(map.theta[i]), deg2rad(map.phi[j])};
            if (!pm.co->covers(d)) continue;
            map.noncoherent(i, j) = nc.profile_loglik(r_rss, sc.snapshots, d);
            map.coherent(i, j) = -cml_objective(r_cov, pm.co->response(d));
        }
    }
    for (Eigen::MatrixXd* m : {&map.noncoherent, &map.coherent}) {
        double hi = -std::numeric_limits<double>::infinity(), lo = std::numeric_limits<double>::infinity();
        for (Eigen::Index k = 0; k < m->size(); ++k) {
            const double v = (*m)(k);
            if (std::isnan(v)) continue;
            hi = std::max(hi, v);
            lo = std::min(lo, v);
        }
        // Normalise to [-1, 0]; cells outside the model's coverage sit at -1.
        for (Eigen::Index k = 0; k < m->size(); ++k)
            (*m)(k) = std::isnan((*m)(k)) ? -1.0 : (hi > lo ? ((*m)(k) - hi) / (hi - lo) : 0.0);
    }
    return map;
}

int LikelihoodMap::peaks(const Eigen::MatrixXd& map, double level) const
{
    const auto nt = map.rows(), np = map.cols();
    const bool wrap_phi = np > 1 && phi.back() - phi.front() + (phi.size() > 1 ? phi[1] - phi[0] : 0.0) >= 360.0 - 1e-9;
    int count = 0;
    for (Eigen::Index i = 0; i < nt; ++i) {
        const bool pole = np > 1 && is_pole(theta[i]);
        for (Eigen::Index j = 0; j < (pole ? 1 : np); ++j) {
            const double v = map(i, j);
            if (!(v > level)) continue;
            bool top = true;
            const auto check = [&](Eigen::Index a, Eigen::Index b) {
                if (a < 0 || a >= nt) return;
                if (np > 1 && is_pole(theta[a])) b = 0;
                if (map(a, b) > v) top = false;
            };
            if (pole) {
                for (Eigen::Index b = 0; b < np; ++b) check(i + 1, b), check(i - 1, b);
            } else {
                check(i - 1, j);
                check(i + 1, j);
                if (np > 1) {
                    if (j > 0 || wrap_phi) check(i, (j - 1 + np) % np);
                    if (j + 1 < np || wrap_phi) check(i, (j + 1) % np);
                }
            }
            if (top) ++count;
        }
    }
    return count;
}

int LikelihoodMap::cells_above(const Eigen::MatrixXd& map, double level)
{
    return static_cast<int>((map.array() > level).count());
}

// ------------------------------------------------------------------ output

std::string sweep_csv(const std::vector<SweepRecord>& records, const std::string& config_hash)
{
    std::ostringstream os;
    os << "config_hash,axis,axis_value,estimator,parameter,rmse,crb_mean,ratio,trials,failures,outliers\n";
    for (const auto& r : records)
        os << config_hash << ',' << r.axis << ',' << fmt(r.axis_value) << ',' << r.estimator << ',' << r.parameter << ','
           << fmt(r.rmse) << ',' << fmt(r.crb_mean) << ',' << fmt(r.ratio) << ',' << r.trials << ',' << r.failures << ','
           << r.outliers << '\n';
    return os.str();
}

std::string surface_csv(const std::vector<SurfaceRecord>& records, const std::string& config_hash)
{
    std::ostringstream os;
    os << "config_hash,theta,phi,estimator,metric,value\n";
    for (const auto& r : records)
        os << config_hash << ',' << fmt(r.theta) << ',' << fmt(r.phi) << ',' << r.estimator << ',' << r.metric << ','
           << fmt(r.value) << '\n';
    return os.str();
}

std::string likemap_csv(const LikelihoodMap& map, const std::string& config_hash)
{
    std::ostringstream os;
    os << "config_hash,theta,phi,map,value\n";
    for (const auto& [name, m] : {std::pair{"noncoherent", &map.noncoherent}, std::pair{"coherent", &map.coherent}})
        for (std::size_t i = 0; i < map.theta.size(); ++i)
            for (std::size_t j = 0; j < map.phi.size(); ++j)
                os << config_hash << ',' << fmt(map.theta[i]) << ',' << fmt(map.phi[j]) << ',' << name << ','
                   << fmt((*m)(i, j)) << '\n';
    return os.str();
}

void write_outputs(const std::filesystem::path& path, const std::string& csv, const HarnessConfig& config,
                   const std::string& kind)
{
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    {
        std::ofstream out(path, std::ios::binary);
        if (!out) throw DataError("cannot write " + path.string());
        out << csv;
    }
    json echo = config.doc;
    echo.erase("threads");
    echo.erase("output");
    const json sidecar = {{"kind", kind},
                          {"csv_schema_version", kCsvSchemaVersion},
                          {"library_version", kLibraryVersion},
                          {"config_hash", config.hash()},
                          {"seed", config.seed},
                          {"config", echo}};
    std::ofstream side(path.string() + ".json", std::ios::binary);
    if (!side) throw DataError("cannot write sidecar for " + path.string());
    side << sidecar.dump(2) << '\n';
}

}  // namespace mmadoa
