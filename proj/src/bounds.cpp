#include "mmadoa/bounds.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "mmadoa/estimators.hpp"

namespace mmadoa {

namespace {

constexpr double kNullTolerance = 1e-10;

std::vector<std::string> indexed(const std::string& name, int count)
{
    std::vector<std::string> out;
    for (int p = 1; p <= count; ++p) out.push_back(count == 1 ? name : name + "_" + std::to_string(p));
    return out;
}

}  // namespace

int CrbResult::index(const std::string& label) const
{
    for (std::size_t i = 0; i < labels.size(); ++i)
        if (labels[i] == label) return static_cast<int>(i);
    throw std::out_of_range("no CRB parameter '" + label + "'");
}

CrbResult invert_fim(Eigen::MatrixXd fim, std::vector<std::string> labels)
{
    const auto n = fim.rows();
    fim = 0.5 * (fim + fim.transpose());
    CrbResult res;
    res.labels = std::move(labels);
    res.fim = fim;
    res.std_dev = Eigen::VectorXd::Constant(n, std::numeric_limits<double>::infinity());

    // Scale to unit diagonal so that mixed units (rad, W) do not fake a rank loss.
    Eigen::VectorXd scale = Eigen::VectorXd::Zero(n);
    const double dmax = fim.diagonal().cwiseAbs().maxCoeff();
    for (Eigen::Index i = 0; i < n; ++i)
        if (fim(i, i) > 0.0 && fim(i, i) > 1e-300 * dmax) scale(i) = 1.0 / std::sqrt(fim(i, i));
    const Eigen::MatrixXd scaled = scale.asDiagonal() * fim * scale.asDiagonal();

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(scaled);
    const Eigen::VectorXd& ev = eig.eigenvalues();
    const double emax = ev.size() ? ev.maxCoeff() : 0.0;
    Eigen::MatrixXd pinv = Eigen::MatrixXd::Zero(n, n);
    Eigen::VectorXd null_weight = Eigen::VectorXd::Zero(n);
    for (Eigen::Index k = 0; k < n; ++k) {
        const Eigen::VectorXd v = eig.eigenvectors().col(k);
        if (ev(k) > kNullTolerance * emax) {
            pinv += v * v.transpose() / ev(k);
        } else {
            null_weight += v.cwiseAbs2();
            res.degenerate = true;
        }
    }
    res.crb = scale.asDiagonal() * pinv * scale.asDiagonal();
    res.crb = 0.5 * (res.crb + res.crb.transpose());
    for (Eigen::Index i = 0; i < n; ++i) {
        if (scale(i) == 0.0) {
            res.degenerate = true;
            continue;
        }
        if (null_weight(i) > 1e-6) continue;
        res.std_dev(i) = std::sqrt(std::max(res.crb(i, i), 0.0));
    }
    if (res.degenerate) res.flags.push_back("singular_fim");
    return res;
}

CrbResult fim_noncoherent(const Eigen::VectorXd& g, const Eigen::MatrixXd& dg, const std::vector<std::string>& angle_labels,
                          double s, double sigma2, int snapshots, bool reduced)
{
    if (!(sigma2 > 0.0)) throw std::invalid_argument("non-coherent FIM needs a positive noise power");
    const auto m = g.size();
    const auto na = dg.cols();
    const Eigen::Index np = na + (reduced ? 1 : 2);
    const double n = snapshots;

    // Columns: derivatives of mu and of the diagonal of Sigma.
    Eigen::MatrixXd dmu(m, np), dsig(m, np);
    for (Eigen::Index k = 0; k < na; ++k) {
        dmu.col(k) = s * dg.col(k);
        dsig.col(k) = 2.0 * sigma2 * s * dg.col(k) / n;
    }
    dmu.col(na) = g;
    dsig.col(na) = 2.0 * sigma2 * g / n;
    if (!reduced) {
        dmu.col(na + 1).setOnes();
        dsig.col(na + 1) = (Eigen::VectorXd::Constant(m, 2.0 * sigma2) + 2.0 * s * g) / n;
    }
    const Eigen::VectorXd var = (Eigen::VectorXd::Constant(m, sigma2 * sigma2) + 2.0 * sigma2 * s * g) / n;
    const Eigen::VectorXd inv = var.cwiseInverse();
    const Eigen::MatrixXd fim = dmu.transpose() * inv.asDiagonal() * dmu +
                                0.5 * dsig.transpose() * inv.cwiseAbs2().asDiagonal() * dsig;

    std::vector<std::string> labels = angle_labels;
    labels.push_back("power");
    if (!reduced) labels.push_back("noise");
    return invert_fim(fim, std::move(labels));
}

CrbResult fim_noncoherent(const Direction& dir, double s, double sigma2, const GainModel& model, int snapshots,
                          bool reduced)
{
    const Eigen::VectorXd g = model.gain(dir);
    const GainGradient grad = model.gain_gradient(dir);
    if (model.geometry() == Geometry::Planar) return fim_noncoherent(g, grad.d_theta, {"theta"}, s, sigma2, snapshots, reduced);
    Eigen::MatrixXd dg(g.size(), 2);
    dg.col(0) = grad.d_theta;
    dg.col(1) = grad.d_phi;
    return fim_noncoherent(g, dg, {"theta", "phi"}, s, sigma2, snapshots, reduced);
}

CrbResult crb_deterministic(const Eigen::MatrixXcd& a, const Eigen::MatrixXcd& d, const std::vector<int>& owner,
                            std::vector<std::string> labels, const Eigen::MatrixXcd& rs, double sigma2, int snapshots)
{
    const auto k = d.cols();
    if (static_cast<Eigen::Index>(owner.size()) != k || static_cast<Eigen::Index>(labels.size()) != k)
        throw std::invalid_argument("CRB parameter bookkeeping mismatch");
    if (rs.rows() != a.cols() || rs.cols() != a.cols()) throw std::invalid_argument("signal covariance size mismatch");
    if (!(sigma2 > 0.0) || snapshots < 1) throw std::invalid_argument("CRB needs sigma^2 > 0 and N >= 1");

    const Eigen::MatrixXcd x = d.adjoint() * noise_projector(a) * d;
    Eigen::MatrixXd h(k, k);
    for (Eigen::Index i = 0; i < k; ++i)
        for (Eigen::Index j = 0; j < k; ++j) h(i, j) = (x(i, j) * rs(owner[j], owner[i])).real();
    // FIM = (2N / sigma^2) h
    CrbResult res = invert_fim(2.0 * snapshots / sigma2 * h, std::move(labels));
    Eigen::JacobiSVD<Eigen::MatrixXcd> svd(a);
    const auto& sv = svd.singularValues();
    if (!(sv(sv.size() - 1) > 1e-8 * sv(0))) res.flags.push_back("rank_deficient_steering");
    return res;
}

CrbResult crb_coherent(const std::vector<Direction>& dirs, const ResponseModel& model, const Eigen::MatrixXcd& rs,
                       double sigma2, int snapshots)
{
    const int p_count = static_cast<int>(dirs.size());
    const bool planar = model.geometry() == Geometry::Planar;
    const int m = model.num_ports();
    Eigen::MatrixXcd a(m, p_count);
    Eigen::MatrixXcd d(m, (planar ? 1 : 2) * p_count);
    std::vector<int> owner;
    for (int p = 0; p < p_count; ++p) {
        a.col(p) = model.response(dirs[p]);
        const ResponseGradient g = model.gradient(dirs[p]);
        d.col(p) = g.d_theta;
        if (!planar) d.col(p_count + p) = g.d_phi;
    }
    std::vector<std::string> labels = indexed("theta", p_count);
    for (int p = 0; p < p_count; ++p) owner.push_back(p);
    if (!planar) {
        for (const auto& l : indexed("phi", p_count)) labels.push_back(l);
        for (int p = 0; p < p_count; ++p) owner.push_back(p);
    }
    return crb_deterministic(a, d, owner, std::move(labels), rs, sigma2, snapshots);
}

CrbResult crb_polarimetric(const std::vector<Direction>& dirs, const std::vector<PolarizationState>& pols,
                           const PolarimetricModel& model, const Eigen::MatrixXcd& rs, double sigma2, int snapshots)
{
    const int p_count = static_cast<int>(dirs.size());
    if (static_cast<int>(pols.size()) != p_count) throw std::invalid_argument("one polarisation per signal expected");
    const bool planar = model.geometry() == Geometry::Planar;
    const int blocks = planar ? 3 : 4;
    const int m = model.num_ports();
    Eigen::MatrixXcd a(m, p_count);
    Eigen::MatrixXcd d(m, blocks * p_count);
    std::vector<int> owner;
    bool boundary = false;
    for (int p = 0; p < p_count; ++p) {
        const PolarimetricResponse r = eval_polarimetric(model, dirs[p], pols[p]);
        a.col(p) = r.value;
        int b = 0;
        d.col(b++ * p_count + p) = r.d_theta;
        if (!planar) d.col(b++ * p_count + p) = r.d_phi;
        d.col(b++ * p_count + p) = r.d_gamma;
        d.col(b * p_count + p) = r.d_beta;
        if (pols[p].gamma <= 1e-9 || pols[p].gamma >= kPi / 2.0 - 1e-9) boundary = true;
    }
    std::vector<std::string> labels;
    for (const char* name : {"theta", "phi", "gamma", "beta"}) {
        if (planar && std::string(name) == "phi") continue;
        for (const auto& l : indexed(name, p_count)) labels.push_back(l);
        for (int p = 0; p < p_count; ++p) owner.push_back(p);
    }
    CrbResult res = crb_deterministic(a, d, owner, std::move(labels), rs, sigma2, snapshots);
    if (boundary) res.flags.push_back("gamma_at_boundary");
    return res;
}

}  // namespace mmadoa
