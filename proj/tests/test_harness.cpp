#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "mmadoa/harness.hpp"

using namespace mmadoa;
using nlohmann::json;

namespace {

HarnessConfig config(const std::vector<std::string>& overrides)
{
    return load_config({}, overrides);
}

std::vector<std::string> lines(const std::string& text)
{
    std::vector<std::string> out;
    std::istringstream is(text);
    for (std::string l; std::getline(is, l);) out.push_back(l);
    return out;
}

}  // namespace

TEST(HarnessConfig, OverridesParseJsonOrKeepStrings)
{
    json doc = json::object();
    apply_override(doc, "scenario.snr_db", "12.5");
    apply_override(doc, "estimators", R"(["cml-ait"])");
    apply_override(doc, "antenna.file", "pattern.json");
    apply_override(doc, "scenario.theta_deg", "null");
    EXPECT_EQ(doc["scenario"]["snr_db"], 12.5);
    EXPECT_EQ(doc["estimators"][0], "cml-ait");
    EXPECT_EQ(doc["antenna"]["file"], "pattern.json");
    EXPECT_TRUE(doc["scenario"]["theta_deg"].is_null());
    EXPECT_THROW(apply_override(doc, "a..b", "1"), ConfigError);

    const HarnessConfig c = config({"scenario.snr_db=7", "trials=3", "sweep.axis=none"});
    EXPECT_EQ(c.snr_db, 7.0);
    EXPECT_EQ(c.trials, 3);
    EXPECT_EQ(c.axis_values, std::vector<double>{0.0});
}

TEST(HarnessConfig, DefaultsMirrorTheExperimentDesign)
{
    const HarnessConfig c = config({});
    EXPECT_EQ(c.snapshots, 1000);
    EXPECT_NEAR(c.noise_power, 4.0039e-15, 1e-19);
    EXPECT_EQ(c.truth_theta_min_deg, -85.0);
    EXPECT_EQ(c.truth_theta_max_deg, 85.0);
    EXPECT_EQ(c.axis_values, (std::vector<double>{0, 5, 10, 15, 20, 25, 30}));
    const HarnessConfig s = config({"antenna.synth.mode=3d"});
    EXPECT_EQ(s.truth_theta_min_deg, 0.0);
    EXPECT_EQ(s.truth_theta_max_deg, 80.0);
    EXPECT_EQ(s.search.theta_max_deg, 90.0);
}

TEST(HarnessConfig, InvalidConfigsThrow)
{
    EXPECT_THROW(config({"trials=0"}), ConfigError);
    EXPECT_THROW(config({"estimators=[\"music-wm\"]"}), ConfigError);
    EXPECT_THROW(config({"estimators=[\"cml-spline\"]"}), ConfigError);
    EXPECT_THROW(config({"estimators=[\"cml-wmgain\"]"}), ConfigError);
    EXPECT_THROW(config({"estimators=[]"}), ConfigError);
    EXPECT_THROW(config({"sweep.axis=frequency"}), ConfigError);
    EXPECT_THROW(config({"sweep.values=[]"}), ConfigError);
    EXPECT_THROW(config({"scenario.signals=2"}), ConfigError);  // one power offset only
    EXPECT_THROW(config({"scenario.snr_db=\"loud\""}), ConfigError);
    EXPECT_THROW(config({"noise.power_w=-1"}), ConfigError);
    EXPECT_THROW(config({"antenna.synth.mode=4d"}), ConfigError);
    EXPECT_THROW(config({"threads=0"}), ConfigError);
    EXPECT_THROW(load_config("/nonexistent/config.json"), ConfigError);
    // Non-coherent estimators take a single co-polarised signal.
    const HarnessConfig two = config({"scenario.signals=2", "scenario.power_offsets_db=[0,-6]", "trials=1"});
    EXPECT_THROW(run_sweep(two), ConfigError);
}

TEST(HarnessConfig, HashIgnoresExecutionSettings)
{
    const std::string h = config({}).hash();
    EXPECT_EQ(h.size(), 16u);
    EXPECT_EQ(config({"threads=4", "output=\"x.csv\""}).hash(), h);
    EXPECT_NE(config({"seed=2"}).hash(), h);
}

TEST(Sweep, NoiselessTrialsAreExact)
{
    const HarnessConfig c =
        config({"noise.noiseless=true", "trials=2", "sweep.axis=none",
                R"(estimators=["cml-wm","cml-truth","ncml-wm","ncrc-wm"])"});
    const auto records = run_sweep(c);
    ASSERT_EQ(records.size(), 4u);
    for (const auto& r : records) {
        EXPECT_EQ(r.failures, 0) << r.estimator;
        EXPECT_LT(r.rmse, 1e-3) << r.estimator;
    }
}

TEST(Sweep, NoiselessPolarimetricTrialsAreExact)
{
    const HarnessConfig c = config({"antenna.synth.mode=3d", "antenna.synth.ports=5", "noise.noiseless=true",
                                    "trials=1", "sweep.axis=none", "scenario.polarized=true",
                                    "search.grid_step_deg=3", R"(estimators=["pml-wm"])"});
    const auto records = run_sweep(c);
    ASSERT_EQ(records.size(), 4u);
    for (const auto& r : records) {
        EXPECT_EQ(r.failures, 0) << r.parameter;
        EXPECT_LT(r.rmse, 1e-3) << r.parameter;
    }
}

TEST(Sweep, RecordsAndCsv)
{
    const HarnessConfig c = config({"trials=5", "sweep.values=[5,15]", R"(estimators=["cml-wm","ncrc-wm"])"});
    const auto records = run_sweep(c);
    ASSERT_EQ(records.size(), 4u);
    for (const auto& r : records) {
        EXPECT_GE(r.rmse, 0.0);
        EXPECT_GT(r.crb_mean, 0.0);
        EXPECT_NEAR(r.ratio, r.rmse / std::sqrt(r.crb_mean), 1e-9 * r.ratio);
        EXPECT_EQ(r.trials, 5);
        EXPECT_LE(r.failures + r.outliers, r.trials);
    }
    EXPECT_EQ(records[0].axis_value, 5.0);
    EXPECT_EQ(records[3].axis_value, 15.0);

    const std::string csv = sweep_csv(records, c.hash());
    const auto rows = lines(csv);
    ASSERT_EQ(rows.size(), 5u);
    EXPECT_EQ(rows[0], "config_hash,axis,axis_value,estimator,parameter,rmse,crb_mean,ratio,trials,failures,outliers");
    for (std::size_t i = 1; i < rows.size(); ++i) EXPECT_EQ(rows[i].rfind(c.hash() + ",snr_db,", 0), 0u);
}

TEST(Sweep, DeterministicAcrossThreadCounts)
{
    const std::vector<std::string> base = {"trials=6", "sweep.values=[0,20]", "scenario.signals=2",
                                           "scenario.power_offsets_db=[0,-6]", R"(estimators=["cml-wm"])"};
    auto threaded = base;
    threaded.push_back("threads=3");
    const HarnessConfig a = config(base), b = config(threaded);
    const std::string first = sweep_csv(run_sweep(a), a.hash());
    EXPECT_EQ(first, sweep_csv(run_sweep(a), a.hash()));
    EXPECT_EQ(first, sweep_csv(run_sweep(b), b.hash()));
    auto reseeded = base;
    reseeded.push_back("seed=9");
    const HarnessConfig c = config(reseeded);
    EXPECT_NE(first, sweep_csv(run_sweep(c), c.hash()));
}

TEST(Surface, RatioIsRmseOverSqrtCrb)
{
    const HarnessConfig c = config({"trials=4", "surface.theta_deg=[-60,60,30]", R"(estimators=["cml-wm"])"});
    const auto records = run_surface(c);
    ASSERT_EQ(records.size(), 5u * 3u);
    for (std::size_t i = 0; i < records.size(); i += 3) {
        EXPECT_EQ(records[i].metric, "rmse_theta");
        EXPECT_EQ(records[i + 1].metric, "sqrt_crb_theta");
        EXPECT_EQ(records[i + 2].metric, "ratio_theta");
        EXPECT_NEAR(records[i + 2].value, records[i].value / records[i + 1].value, 1e-9 * records[i + 2].value);
    }
    EXPECT_EQ(lines(surface_csv(records, c.hash()))[0], "config_hash,theta,phi,estimator,metric,value");
}

TEST(Surface, NoiselessGridIsExact)
{
    const HarnessConfig c = config({"antenna.synth.mode=3d", "noise.noiseless=true", "trials=1",
                                    "surface.theta_deg=[0,60,30]", "surface.phi_deg=[0,360,120]",
                                    "search.grid_step_deg=3", R"(estimators=["cml-wm"])"});
    const auto records = run_surface(c);
    // The pole is a single cell, where azimuth errors are undefined.
    ASSERT_EQ(records.size(), (1u + 2u * 3u) * 6u);
    for (const auto& r : records) {
        if (r.metric == "rmse_phi" && r.theta == 0.0) EXPECT_TRUE(std::isnan(r.value));
        else if (r.metric.rfind("rmse_", 0) == 0) EXPECT_LT(r.value, 1e-3) << r.metric << " " << r.theta << " " << r.phi;
    }
}

TEST(LikelihoodMap, NormalisedWithCoherentPeakAtTruth)
{
    const HarnessConfig c = config({"scenario.snr_db=15", "likemap.theta_deg=25"});
    const LikelihoodMap map = run_likelihood_map(c);
    ASSERT_EQ(map.theta.size(), 181u);
    ASSERT_EQ(map.phi.size(), 1u);
    for (const Eigen::MatrixXd* m : {&map.noncoherent, &map.coherent}) {
        EXPECT_DOUBLE_EQ(m->maxCoeff(), 0.0);
        EXPECT_DOUBLE_EQ(m->minCoeff(), -1.0);
    }
    Eigen::Index i, j;
    map.coherent.maxCoeff(&i, &j);
    EXPECT_LE(std::abs(map.theta[i] - 25.0), 1.0);
    EXPECT_GE(map.peaks(map.coherent, -0.1), 1);
    const auto rows = lines(likemap_csv(map, c.hash()));
    EXPECT_EQ(rows.size(), 1u + 2u * 181u);
    EXPECT_EQ(rows[0], "config_hash,theta,phi,map,value");
}

TEST(LikelihoodMap, PeakCounting)
{
    LikelihoodMap map;
    map.theta = {0, 10, 20, 30};
    map.phi = {0, 90, 180, 270};
    Eigen::MatrixXd m = Eigen::MatrixXd::Constant(4, 4, -1.0);
    m.row(0).setConstant(-0.05);  // the pole: one cell however many phi samples
    m(2, 3) = 0.0;
    m(2, 0) = -0.02;  // neighbour of (2, 3) across the phi seam
    m(3, 1) = -0.08;
    EXPECT_EQ(map.peaks(m, -0.1), 3);
    EXPECT_EQ(map.peaks(m, -0.06), 2);
    EXPECT_EQ(LikelihoodMap::cells_above(m, -0.1), 7);

    LikelihoodMap line;
    line.theta = {-10, 0, 10, 20};
    line.phi = {0};
    Eigen::MatrixXd v(4, 1);
    v << -0.05, -0.5, 0.0, -0.3;
    EXPECT_EQ(line.peaks(v, -0.1), 2);
}

TEST(Outputs, CsvAndSidecar)
{
    const HarnessConfig c = config({"threads=2"});
    const auto dir = std::filesystem::temp_directory_path() / "mmadoa_outputs_test";
    std::filesystem::remove_all(dir);
    const auto path = dir / "sweep.csv";
    write_outputs(path, "a,b\n1,2\n", c, "sweep");
    std::ifstream csv(path);
    std::stringstream body;
    body << csv.rdbuf();
    EXPECT_EQ(body.str(), "a,b\n1,2\n");
    std::ifstream side(path.string() + ".json");
    const json meta = json::parse(side);
    EXPECT_EQ(meta["kind"], "sweep");
    EXPECT_EQ(meta["csv_schema_version"], kCsvSchemaVersion);
    EXPECT_EQ(meta["config_hash"], c.hash());
    EXPECT_EQ(meta["seed"], 1);
    EXPECT_FALSE(meta["config"].contains("threads"));
    EXPECT_EQ(meta["config"]["scenario"]["snapshots"], 1000);
    std::filesystem::remove_all(dir);
}
