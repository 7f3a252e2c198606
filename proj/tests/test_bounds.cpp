#include <algorithm>
#include <cmath>
#include <memory>

#include <gtest/gtest.h>

#include "mmadoa/bounds.hpp"
#include "mmadoa/calibration.hpp"
#include "mmadoa/random.hpp"
#include "oracles.hpp"

using namespace mmadoa;

namespace {

PolarimetricModel make(SynthMode mode, std::uint64_t seed, int ports = 4)
{
    SynthOptions opt;
    opt.seed = seed;
    opt.mode = mode;
    opt.ports = ports;
    opt.cross_level_db = -3.0;
    return truth_model(synth_antenna(opt).truth);
}

// Largest entry of |F - G| relative to the diagonal of G.
double normalized_error(const Eigen::MatrixXd& f, const Eigen::MatrixXd& g)
{
    double worst = 0.0;
    for (Eigen::Index i = 0; i < g.rows(); ++i)
        for (Eigen::Index j = 0; j < g.cols(); ++j)
            worst = std::max(worst, std::abs(f(i, j) - g(i, j)) / std::sqrt(g(i, i) * g(j, j)));
    return worst;
}

double min_eigenvalue(const Eigen::MatrixXd& m)
{
    return Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(m).eigenvalues().minCoeff();
}

Eigen::MatrixXcd random_waveforms(int p, int n, Rng& rng)
{
    Eigen::MatrixXcd s(p, n);
    for (int i = 0; i < s.size(); ++i) s(i) = rng.complex_normal(1.0 + i % p);
    return s;
}

std::vector<Direction> unpack_dirs(const Eigen::VectorXd& eta, int p, bool planar)
{
    std::vector<Direction> dirs;
    for (int i = 0; i < p; ++i) dirs.push_back(planar ? Direction{eta(i), 0.0} : Direction{eta(i), eta(p + i)});
    return dirs;
}

Eigen::VectorXd pack(const std::vector<Direction>& dirs, const std::vector<PolarizationState>& pols, bool planar)
{
    std::vector<double> v;
    for (const auto& d : dirs) v.push_back(d.theta);
    if (!planar)
        for (const auto& d : dirs) v.push_back(d.phi);
    for (const auto& q : pols) v.push_back(q.gamma);
    for (const auto& q : pols) v.push_back(q.beta);
    return Eigen::Map<Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace

TEST(InvertFim, RegularAndSingular)
{
    Eigen::MatrixXd f(2, 2);
    f << 4.0, 1.0, 1.0, 3.0;
    const CrbResult r = invert_fim(f, {"a", "b"});
    EXPECT_FALSE(r.degenerate);
    EXPECT_LT((r.crb * f - Eigen::MatrixXd::Identity(2, 2)).norm(), 1e-12);
    EXPECT_NEAR(r.std_dev(1), std::sqrt(4.0 / 11.0), 1e-14);
    EXPECT_EQ(r.index("b"), 1);
    EXPECT_THROW(r.index("c"), std::out_of_range);

    Eigen::MatrixXd s = Eigen::MatrixXd::Zero(3, 3);
    s(0, 0) = 2.0;
    s(1, 1) = s(2, 2) = s(1, 2) = s(2, 1) = 1.0;
    const CrbResult q = invert_fim(s, {"x", "y", "z"});
    EXPECT_TRUE(q.degenerate);
    EXPECT_NEAR(q.std_dev(0), std::sqrt(0.5), 1e-14);
    EXPECT_TRUE(std::isinf(q.std_dev(1)));
    EXPECT_TRUE(std::isinf(q.std_dev(2)));
}

TEST(NoncoherentFim, MatchesNumericOracle)
{
    for (SynthMode mode : {SynthMode::Cut2D, SynthMode::Sphere3D}) {
        const PolarimetricModel pm = make(mode, 21);
        const ResponseGainModel gm(pm.co);
        const bool planar = mode == SynthMode::Cut2D;
        const int na = planar ? 1 : 2;
        const auto gain = [&](const Eigen::VectorXd& ang) {
            return gm.gain(planar ? Direction{ang(0), 0.0} : Direction{ang(0), ang(1)});
        };
        for (bool reduced : {false, true}) {
            for (const Direction& d : {Direction{0.4, 1.1}, Direction{1.2, 4.0}}) {
                const Direction dd = planar ? Direction{d.theta, 0.0} : d;
                const double s = 0.8, noise = 0.05;
                Eigen::VectorXd zeta(na + (reduced ? 1 : 2));
                zeta(0) = dd.theta;
                if (!planar) zeta(1) = dd.phi;
                zeta(na) = s;
                if (!reduced) zeta(na + 1) = noise;
                const Eigen::MatrixXd oracle = oracle::noncoherent_fim(gain, na, zeta, noise, 1000);
                const CrbResult res = fim_noncoherent(dd, s, noise, gm, 1000, reduced);
                EXPECT_LT(normalized_error(res.fim, oracle), 1e-4) << planar << reduced;
                EXPECT_GE(min_eigenvalue(res.fim), -1e-10 * res.fim.diagonal().maxCoeff());
                EXPECT_GE(min_eigenvalue(res.crb), -1e-10 * res.crb.diagonal().maxCoeff());
            }
        }
    }
}

TEST(NoncoherentFim, IsotropicGainIsDegenerate)
{
    const CrbResult r =
        fim_noncoherent(Eigen::VectorXd::Constant(4, 1.0), Eigen::MatrixXd::Zero(4, 1), {"theta"}, 1.0, 0.1, 1000, false);
    EXPECT_TRUE(r.degenerate);
    EXPECT_EQ(r.fim.row(0).norm(), 0.0);
    EXPECT_TRUE(std::isinf(r.std_dev(r.index("theta"))));
}

TEST(NoncoherentFim, KnownNoiseTightensTheBound)
{
    const PolarimetricModel pm = make(SynthMode::Cut2D, 21);
    const ResponseGainModel gm(pm.co);
    Rng rng(3);
    for (int i = 0; i < 20; ++i) {
        const Direction d{rng.uniform(-1.4, 1.4), 0.0};
        const double s = rng.uniform(0.1, 2.0), noise = rng.uniform(0.01, 1.0);
        const double full = fim_noncoherent(d, s, noise, gm, 500, false).variance("theta");
        const double reduced = fim_noncoherent(d, s, noise, gm, 500, true).variance("theta");
        EXPECT_LE(reduced, full * (1.0 + 1e-12));
    }
}

TEST(CoherentCrb, MatchesDeterministicOracle)
{
    Rng rng(12);
    struct Case {
        SynthMode mode;
        int ports;
        std::vector<Direction> dirs;
    };
    const std::vector<Case> cases = {
        {SynthMode::Cut2D, 4, {{0.3, 0.0}}},
        {SynthMode::Cut2D, 4, {{-0.6, 0.0}, {0.5, 0.0}}},
        {SynthMode::Sphere3D, 4, {{1.0, 2.0}}},
        {SynthMode::Sphere3D, 5, {{0.7, 1.0}, {1.3, 4.5}}},
    };
    for (const Case& c : cases) {
        const PolarimetricModel pm = make(c.mode, 33, c.ports);
        const bool planar = c.mode == SynthMode::Cut2D;
        const int p = static_cast<int>(c.dirs.size());
        const Eigen::MatrixXcd s = random_waveforms(p, 20, rng);
        const double noise = 0.2;
        const auto steering = [&](const Eigen::VectorXd& eta) {
            const auto dirs = unpack_dirs(eta, p, planar);
            Eigen::MatrixXcd a(c.ports, p);
            for (int i = 0; i < p; ++i) a.col(i) = pm.co->response(dirs[i]);
            return a;
        };
        const Eigen::MatrixXd oracle = oracle::deterministic_crb(steering, pack(c.dirs, {}, planar), s, noise);
        const CrbResult res = crb_coherent(c.dirs, *pm.co, s * s.adjoint() / 20.0, noise, 20);
        EXPECT_FALSE(res.degenerate);
        EXPECT_LT(normalized_error(res.crb, oracle), 1e-3) << planar << " P=" << p;
        EXPECT_LT(normalized_error(res.crb, oracle), 1e-6) << planar << " P=" << p;
        EXPECT_GE(min_eigenvalue(res.crb), 0.0);
    }
}

TEST(CoherentCrb, ExactScaling)
{
    const PolarimetricModel pm = make(SynthMode::Sphere3D, 8);
    const std::vector<Direction> dirs = {{0.9, 0.4}};
    const Eigen::MatrixXcd rs = Eigen::MatrixXcd::Identity(1, 1);
    const Eigen::MatrixXd base = crb_coherent(dirs, *pm.co, rs, 0.1, 100).crb;
    const Eigen::MatrixXd more = crb_coherent(dirs, *pm.co, rs, 0.1, 700).crb;
    const Eigen::MatrixXd noisier = crb_coherent(dirs, *pm.co, rs, 0.35, 100).crb;
    EXPECT_LT((more * 7.0 - base).cwiseAbs().maxCoeff(), 1e-12 * base.cwiseAbs().maxCoeff());
    EXPECT_LT((noisier / 3.5 - base).cwiseAbs().maxCoeff(), 1e-12 * base.cwiseAbs().maxCoeff());
}

TEST(CoherentCrb, FlagsCoincidentSignals)
{
    const PolarimetricModel pm = make(SynthMode::Cut2D, 8);
    const CrbResult r =
        crb_coherent({{0.2, 0.0}, {0.2, 0.0}}, *pm.co, Eigen::MatrixXcd::Identity(2, 2), 0.1, 100);
    // The closed form stays finite here, so only the flag marks it as invalid.
    EXPECT_NE(std::find(r.flags.begin(), r.flags.end(), "rank_deficient_steering"), r.flags.end());
}

TEST(PolarimetricCrb, MatchesDeterministicOracle)
{
    Rng rng(19);
    struct Case {
        SynthMode mode;
        int ports;
        std::vector<Direction> dirs;
        std::vector<PolarizationState> pols;
    };
    const std::vector<Case> cases = {
        {SynthMode::Cut2D, 4, {{0.3, 0.0}}, {{0.6, 1.0}}},
        {SynthMode::Sphere3D, 4, {{1.0, 2.0}}, {{1.1, -2.0}}},
        {SynthMode::Cut2D, 6, {{-0.5, 0.0}, {0.7, 0.0}}, {{0.3, 0.5}, {1.2, -1.0}}},
    };
    for (const Case& c : cases) {
        const PolarimetricModel pm = make(c.mode, 44, c.ports);
        const bool planar = c.mode == SynthMode::Cut2D;
        const int p = static_cast<int>(c.dirs.size());
        const int na = planar ? 1 : 2;
        const Eigen::MatrixXcd s = random_waveforms(p, 20, rng);
        const auto steering = [&](const Eigen::VectorXd& eta) {
            const auto dirs = unpack_dirs(eta, p, planar);
            Eigen::MatrixXcd a(c.ports, p);
            for (int i = 0; i < p; ++i)
                a.col(i) = polarimetric_response(pm, dirs[i], {eta(na * p + i), eta((na + 1) * p + i)});
            return a;
        };
        const Eigen::MatrixXd oracle = oracle::deterministic_crb(steering, pack(c.dirs, c.pols, planar), s, 0.3);
        const CrbResult res = crb_polarimetric(c.dirs, c.pols, pm, s * s.adjoint() / 20.0, 0.3, 20);
        EXPECT_FALSE(res.degenerate);
        EXPECT_LT(normalized_error(res.crb, oracle), 1e-3) << planar << " P=" << p;
        EXPECT_GE(min_eigenvalue(res.crb), 0.0);
    }
}

TEST(PolarimetricCrb, BoundaryPolarisations)
{
    const PolarimetricModel pm = make(SynthMode::Sphere3D, 5);
    const Eigen::MatrixXcd rs = Eigen::MatrixXcd::Identity(1, 1);
    const Direction d{0.8, 2.5};
    // gamma = 0 leaves the relative phase beta unobservable.
    const CrbResult g0 = crb_polarimetric({d}, {{0.0, 0.3}}, pm, rs, 0.1, 100);
    EXPECT_TRUE(g0.degenerate);
    EXPECT_NE(std::find(g0.flags.begin(), g0.flags.end(), "gamma_at_boundary"), g0.flags.end());
    EXPECT_TRUE(std::isinf(g0.std_dev(g0.index("beta"))));

    // At gamma = pi/2 the angular FIM block reduces to the co-polarised one.
    const CrbResult co = crb_coherent({d}, *pm.co, rs, 0.1, 100);
    const CrbResult g90 = crb_polarimetric({d}, {{kPi / 2, 0.0}}, pm, rs, 0.1, 100);
    EXPECT_LT((g90.fim.topLeftCorner(2, 2) - co.fim).cwiseAbs().maxCoeff(), 1e-10 * co.fim.cwiseAbs().maxCoeff());

    // Without a cross-polarised response the whole angular bound coincides.
    const auto& wm = dynamic_cast<const WmModel&>(*pm.co);
    PolarimetricModel co_only = pm;
    co_only.cross = std::make_shared<WmModel>(Eigen::MatrixXcd::Zero(4, wm.basis().size), wm.basis());
    const CrbResult c90 = crb_polarimetric({d}, {{kPi / 2, 0.0}}, co_only, rs, 0.1, 100);
    EXPECT_LT((c90.crb.topLeftCorner(2, 2) - co.crb).cwiseAbs().maxCoeff(), 1e-10 * co.crb.cwiseAbs().maxCoeff());
}
