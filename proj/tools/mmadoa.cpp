// Command-line front end: antenna synthesis, model fitting, single-scenario
// estimation and bounds, and the Monte-Carlo campaigns.

#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "mmadoa/harness.hpp"

using namespace mmadoa;
using nlohmann::json;

namespace {

struct Common {
    std::string config;
    std::string out;
};

HarnessConfig configure(const Common& common, const CLI::App& sub)
{
    std::vector<std::string> overrides;
    for (const std::string& arg : sub.remaining()) {
        if (arg.rfind("--", 0) != 0 || arg.find('=') == std::string::npos)
            throw ConfigError("unexpected argument '" + arg + "' (overrides are --key=value)");
        overrides.push_back(arg.substr(2));
    }
    if (!common.out.empty()) overrides.push_back("output=" + json(common.out).dump());
    return load_config(common.config, overrides);
}

json angles_deg(const Direction& d, Geometry g)
{
    if (g == Geometry::Planar) return {{"theta", rad2deg(d.theta)}};
    return {{"theta", rad2deg(d.theta)}, {"phi", rad2deg(d.phi)}};
}

json bound_json(const CrbResult& crb)
{
    // Angles are reported in degrees, powers in watts.
    json angles = json::object(), powers = json::object();
    for (std::size_t k = 0; k < crb.labels.size(); ++k) {
        const std::string& label = crb.labels[k];
        const bool power = label.rfind("power", 0) == 0 || label == "noise";
        if (power) powers[label] = crb.std_dev(k);
        else angles[label] = rad2deg(crb.std_dev(k));
    }
    return {{"std_dev_deg", angles}, {"std_dev_w", powers}, {"degenerate", crb.degenerate}, {"flags", crb.flags}};
}

void emit(const HarnessConfig& cfg, const std::string& csv, const std::string& kind)
{
    if (cfg.output.empty()) {
        std::cout << csv;
        return;
    }
    write_outputs(cfg.output, csv, cfg, kind);
    std::cerr << "wrote " << cfg.output << " and " << cfg.output << ".json\n";
}

int cmd_synth(const HarnessConfig& cfg)
{
    if (cfg.output.empty()) throw ConfigError("synth needs --out");
    const SynthResult s = synth_antenna(cfg.synth);
    save_calibration(s.calibration, cfg.output);
    std::cout << "ports " << s.calibration.num_ports << ", samples " << s.calibration.grid.size() << ", kappa_rs "
              << s.calibration.kappa_rs() << "\n";
    return 0;
}

int cmd_fit(const HarnessConfig& cfg, const std::string& model)
{
    const CalibrationSet cal = config_antenna(cfg);
    json doc;
    if (model == "wm") {
        const BasisSpec basis = config_wm_basis(cfg, cal);
        const WmModel co = fit_wm(cal, basis, PolSlot::Co);
        const WmModel cross = fit_wm(cal, basis, PolSlot::Cross);
        std::cout << co.describe() << "\n";
        std::cout << "co: max residual " << co.diagnostics.max_residual << ", condition " << co.diagnostics.condition << "\n";
        std::cout << "cross: max residual " << cross.diagnostics.max_residual << ", condition "
                  << cross.diagnostics.condition << "\n";
        doc = {{"co", model_to_json(co)}, {"cross", model_to_json(cross)}};
    } else if (model == "ait") {
        const AitModel co = fit_ait(cal, PolSlot::Co, cfg.ait_layout, cfg.ait_ideal);
        const AitModel cross = fit_ait(cal, PolSlot::Cross, cfg.ait_layout, cfg.ait_ideal);
        std::cout << co.describe() << "\n";
        for (const AitSector& s : co.sectors())
            std::cout << "sector theta " << rad2deg(s.center_theta) << " phi " << rad2deg(s.center_phi) << ": "
                      << s.sample_count << " samples, residual " << s.residual << "\n";
        doc = {{"co", model_to_json(co)}, {"cross", model_to_json(cross)}};
    } else if (model == "wmgain") {
        const bool planar = cfg.geometry() == Geometry::Planar;
        const BasisKind kind = planar ? BasisKind::RealFourier1D : BasisKind::RealSH;
        const int order = cfg.wm_gain_order > 0 ? cfg.wm_gain_order : 2 * config_wm_basis(cfg, cal).max_order();
        const BasisSpec basis = planar ? BasisSpec::fourier(kind, order) : BasisSpec::spherical(kind, order);
        const WmGainModel gain = fit_wm_gain(cal, basis);
        std::cout << "gain: max residual " << gain.diagnostics.max_residual << ", condition "
                  << gain.diagnostics.condition << "\n";
        doc = gain_model_to_json(gain);
    } else {
        throw ConfigError("--model must be wm, ait or wmgain");
    }
    if (!cfg.output.empty()) {
        std::ofstream out(cfg.output);
        if (!out) throw DataError("cannot write " + cfg.output);
        out << doc.dump(2) << "\n";
    }
    return 0;
}

int cmd_single(const HarnessConfig& cfg, bool estimate)
{
    const SingleRun run = run_single(cfg, estimate);
    const Geometry g = cfg.geometry();
    json truth = json::array();
    for (int p = 0; p < run.scenario.num_signals(); ++p) {
        json t = angles_deg(run.scenario.directions[p], g);
        t["power_w"] = run.scenario.powers[p];
        if (cfg.polarized) {
            t["gamma"] = rad2deg(run.scenario.polarizations[p].gamma);
            t["beta"] = rad2deg(run.scenario.polarizations[p].beta);
        }
        truth.push_back(t);
    }
    json results = json::array();
    for (std::size_t e = 0; e < run.estimators.size(); ++e) {
        json r = {{"estimator", run.estimators[e]}};
        if (const auto& est = run.estimates[e]) {
            json sig = json::array();
            for (std::size_t p = 0; p < est->directions.size(); ++p) {
                json s = angles_deg(est->directions[p], g);
                if (p < est->powers.size()) s["power_w"] = est->powers[p];
                if (p < est->polarizations.size()) {
                    s["gamma"] = rad2deg(est->polarizations[p].gamma);
                    s["beta"] = rad2deg(est->polarizations[p].beta);
                }
                sig.push_back(s);
            }
            r["signals"] = sig;
            r["noise_power_w"] = est->noise_power;
            r["converged"] = est->diagnostics.converged;
        }
        if (!run.errors[e].empty()) r["error"] = run.errors[e];
        if (const auto& b = run.bounds[e]) r["crb"] = bound_json(*b);
        results.push_back(r);
    }
    std::cout << json{{"truth", truth}, {"results", results}}.dump(2) << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Direction-of-arrival estimation with multi-port antennas"};
    app.require_subcommand(1);
    Common common;
    std::string fit_model = "wm";

    const auto add = [&](const std::string& name, const std::string& help) {
        CLI::App* sub = app.add_subcommand(name, help);
        sub->add_option("-c,--config", common.config, "JSON config file")->check(CLI::ExistingFile);
        sub->add_option("-o,--out", common.out, "output path");
        sub->allow_extras();
        sub->footer("Any config field can be set with --key=value, e.g. --scenario.snr_db=10.");
        return sub;
    };
    CLI::App* synth = add("synth", "write a synthetic calibration file");
    CLI::App* fit = add("fit", "fit a response model and report residuals");
    fit->add_option("-m,--model", fit_model, "wm, ait or wmgain");
    CLI::App* simulate = add("simulate", "estimate one realisation of the scenario");
    CLI::App* crb = add("crb", "print Cramer-Rao bounds for the scenario");
    CLI::App* sweep = add("sweep", "Monte-Carlo sweep along one axis");
    CLI::App* surface = add("surface", "Monte-Carlo RMSE over a direction grid");
    CLI::App* likemap = add("likemap", "normalised likelihood maps of one realisation");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        const CLI::App* sub = app.get_subcommands().front();
        const HarnessConfig cfg = configure(common, *sub);
        if (sub == synth) return cmd_synth(cfg);
        if (sub == fit) return cmd_fit(cfg, fit_model);
        if (sub == simulate) return cmd_single(cfg, true);
        if (sub == crb) return cmd_single(cfg, false);
        if (sub == sweep) {
            emit(cfg, sweep_csv(run_sweep(cfg), cfg.hash()), "sweep");
        } else if (sub == surface) {
            emit(cfg, surface_csv(run_surface(cfg), cfg.hash()), "surface");
        } else if (sub == likemap) {
            const LikelihoodMap map = run_likelihood_map(cfg);
            emit(cfg, likemap_csv(map, cfg.hash()), "likemap");
            std::cerr << "peaks above -0.1: non-coherent " << map.peaks(map.noncoherent, -0.1) << ", coherent "
                      << map.peaks(map.coherent, -0.1) << "\n";
        }
        return 0;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
