#include "mmadoa/estimators.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "mmadoa/optimize.hpp"

namespace mmadoa {

namespace {

constexpr double kPenalty = 1e6;
constexpr double kInf = std::numeric_limits<double>::infinity();

int angle_dims(Geometry g)
{
    return g == Geometry::Planar ? 1 : 2;
}

// Search region in radians.
struct Region {
    Geometry geometry;
    double theta_lo, theta_hi;
    double phi_lo, phi_width;
    bool full_phi;
};

Region region_of(const SearchOptions& o, Geometry g)
{
    const double width = o.phi_max_deg - o.phi_min_deg;
    return {g, deg2rad(o.theta_min_deg), deg2rad(o.theta_max_deg), deg2rad(o.phi_min_deg), deg2rad(width),
            width >= 360.0 - 1e-9};
}

double clamp_into(double v, double lo, double hi, double& excess)
{
    if (v < lo) {
        excess += (lo - v) * (lo - v);
        return lo;
    }
    if (v > hi) {
        excess += (v - hi) * (v - hi);
        return hi;
    }
    return v;
}

// Reads the direction stored at x[0] (and x[1]); directions outside the search
// region are projected onto it and the squared overshoot accumulated.
Direction decode(const Region& r, const double* x, double& excess)
{
    if (r.geometry == Geometry::Planar) return {clamp_into(x[0], r.theta_lo, r.theta_hi, excess), 0.0};
    Direction d = Direction::on_sphere(x[0], x[1]);
    d.theta = clamp_into(d.theta, r.theta_lo, r.theta_hi, excess);
    if (!r.full_phi) {
        const double rel = wrap_two_pi(d.phi - r.phi_lo);
        if (rel > r.phi_width) {
            const double over = rel - r.phi_width;
            const double under = kTwoPi - rel;
            if (over < under) {
                excess += over * over;
                d.phi = wrap_two_pi(r.phi_lo + r.phi_width);
            } else {
                excess += under * under;
                d.phi = r.phi_lo;
            }
        }
    }
    return d;
}

void encode(const Direction& d, Geometry g, std::vector<double>& x)
{
    x.push_back(d.theta);
    if (g == Geometry::Spherical) x.push_back(d.phi);
}

std::vector<double> angle_steps(const SearchOptions& o, Geometry g)
{
    return std::vector<double>(angle_dims(g), deg2rad(o.grid_step_deg));
}

// Largest generalized Rayleigh quotient w^H C w / w^H K w of 2x2 Hermitian
// matrices (K positive definite) and its maximiser.
double rayleigh2(const Eigen::Matrix2cd& c, Eigen::Matrix2cd k, Eigen::Vector2cd& w)
{
    const double reg = 1e-12 * std::max(k.trace().real(), 1e-300);
    k(0, 0) += reg;
    k(1, 1) += reg;
    // K = L L^H
    const double l11 = std::sqrt(std::max(k(0, 0).real(), 1e-300));
    const cplx l21 = k(1, 0) / l11;
    const double l22 = std::sqrt(std::max(k(1, 1).real() - std::norm(l21), 1e-300));
    Eigen::Matrix2cd linv;
    linv << 1.0 / l11, 0.0, -l21 / (l11 * l22), 1.0 / l22;
    const Eigen::Matrix2cd m = linv * c * linv.adjoint();
    const double a = m(0, 0).real(), d = m(1, 1).real();
    const cplx b = m(0, 1);
    const double half = 0.5 * (a - d);
    const double lambda = 0.5 * (a + d) + std::sqrt(half * half + std::norm(b));
    // Either row of (M - lambda I) v = 0 gives an eigenvector; take the better
    // conditioned one.
    const double n1 = std::norm(b) + (lambda - a) * (lambda - a);
    const double n2 = std::norm(b) + (lambda - d) * (lambda - d);
    Eigen::Vector2cd v;
    if (std::max(n1, n2) <= 0.0)
        v << 1.0, 0.0;
    else if (n1 >= n2)
        v << b, lambda - a;
    else
        v << lambda - d, std::conj(b);
    w = linv.adjoint() * v;
    return lambda;
}

PolarizationState polarization_from_weights(Eigen::Vector2cd w)
{
    if (std::abs(w(1)) > 0.0) w *= std::exp(-kJ * std::arg(w(1)));
    const double n = w.norm();
    if (n > 0.0) w /= n;
    return canonical_polarization(std::atan2(std::abs(w(0)), w(1).real()), std::arg(w(0)));
}

// Orthonormal basis of the column span of a (rank-revealing).
Eigen::MatrixXcd orthonormal_basis(const Eigen::MatrixXcd& a)
{
    if (a.cols() == 0) return Eigen::MatrixXcd(a.rows(), 0);
    Eigen::JacobiSVD<Eigen::MatrixXcd> svd(a, Eigen::ComputeThinU);
    const auto& s = svd.singularValues();
    Eigen::Index rank = 0;
    while (rank < s.size() && s(rank) > 1e-10 * s(0)) ++rank;
    return svd.matrixU().leftCols(rank);
}

double condition_number(const Eigen::MatrixXcd& a)
{
    Eigen::JacobiSVD<Eigen::MatrixXcd> svd(a);
    const auto& s = svd.singularValues();
    return s(s.size() - 1) > 0.0 ? s(0) / s(s.size() - 1) : kInf;
}

// Per-column value of v^H R v / ||v||^2 where v are the columns of `cols`
// projected off span(q). Columns that vanish after projection get -inf.
Eigen::VectorXd projected_power(const Eigen::MatrixXcd& r, const Eigen::MatrixXcd& q, const Eigen::MatrixXcd& cols)
{
    const Eigen::MatrixXcd v = q.cols() ? Eigen::MatrixXcd(cols - q * (q.adjoint() * cols)) : cols;
    const Eigen::MatrixXcd rv = r * v;
    const Eigen::VectorXd num = v.conjugate().cwiseProduct(rv).colwise().sum().real().transpose();
    const Eigen::VectorXd den = v.colwise().squaredNorm().transpose();
    Eigen::VectorXd out(cols.cols());
    for (Eigen::Index g = 0; g < cols.cols(); ++g) out(g) = den(g) > 1e-8 ? num(g) / den(g) : -kInf;
    return out;
}

Eigen::Index argmax_first(const Eigen::VectorXd& v)
{
    Eigen::Index best = -1;
    double best_val = -kInf;
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        if (v(i) > best_val) {
            best_val = v(i);
            best = i;
        }
    }
    return best;
}

// Coherent power estimates for a steering matrix.
void fill_powers(const Eigen::MatrixXcd& r, const Eigen::MatrixXcd& a, EstimationResult& res)
{
    const auto m = a.rows(), p = a.cols();
    const Eigen::MatrixXcd proj = noise_projector(a);
    res.noise_power = m > p ? std::max((proj * r).trace().real() / static_cast<double>(m - p), kPowerFloor) : kPowerFloor;
    const Eigen::MatrixXcd pinv = a.completeOrthogonalDecomposition().pseudoInverse();
    const Eigen::MatrixXcd s =
        pinv * (r - res.noise_power * Eigen::MatrixXcd::Identity(m, m)) * pinv.adjoint();
    res.powers.resize(p);
    for (Eigen::Index i = 0; i < p; ++i) res.powers[i] = std::max(s(i, i).real(), kPowerFloor);
    res.diagnostics.condition = condition_number(a);
}

void sort_by_theta(EstimationResult& res)
{
    const auto p = res.directions.size();
    std::vector<std::size_t> order(p);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return res.directions[a].theta < res.directions[b].theta; });
    auto permute = [&](auto& v) {
        if (v.size() != p) return;
        auto copy = v;
        for (std::size_t i = 0; i < p; ++i) v[i] = copy[order[i]];
    };
    permute(res.directions);
    permute(res.polarizations);
    permute(res.powers);
    permute(res.diagnostics.grid_best);
}

Eigen::MatrixXd gain_table(const GainModel& model, const std::vector<Direction>& dirs)
{
    Eigen::MatrixXd g(model.num_ports(), static_cast<Eigen::Index>(dirs.size()));
    for (std::size_t i = 0; i < dirs.size(); ++i) g.col(static_cast<Eigen::Index>(i)) = model.gain(dirs[i]);
    return g;
}

// Drops grid directions outside a model's field of view.
std::vector<Direction> covered(const std::vector<Direction>& dirs, auto&& covers)
{
    std::vector<Direction> out;
    for (const auto& d : dirs)
        if (covers(d)) out.push_back(d);
    if (out.empty()) throw ConfigError("search grid lies outside the model field of view");
    return out;
}

double angular_distance(const Direction& a, const Direction& b, Geometry g)
{
    if (g == Geometry::Planar) return std::abs(wrap_pi(a.theta - b.theta));
    const double c = std::cos(a.theta) * std::cos(b.theta) +
                     std::sin(a.theta) * std::sin(b.theta) * std::cos(a.phi - b.phi);
    return std::acos(std::clamp(c, -1.0, 1.0));
}

// Lowest-cost cells that lie at least `spacing` apart, best first.
std::vector<Eigen::Index> candidate_cells(const Eigen::VectorXd& cost, const std::vector<Direction>& dirs, Geometry g,
                                          double spacing, int count)
{
    std::vector<Eigen::Index> order(cost.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return cost(a) < cost(b); });
    std::vector<Eigen::Index> picked;
    for (auto c : order) {
        if (static_cast<int>(picked.size()) == count || !std::isfinite(cost(c))) break;
        bool apart = true;
        for (auto p : picked)
            if (angular_distance(dirs[c], dirs[p], g) < spacing) apart = false;
        if (apart) picked.push_back(c);
    }
    return picked;
}

}  // namespace

// ---------------------------------------------------------------- options

SearchOptions SearchOptions::planar(double theta_min_deg, double theta_max_deg)
{
    SearchOptions o;
    o.theta_min_deg = theta_min_deg;
    o.theta_max_deg = theta_max_deg;
    return o;
}

SearchOptions SearchOptions::spherical(double theta_max_deg)
{
    SearchOptions o;
    o.theta_min_deg = 0.0;
    o.theta_max_deg = theta_max_deg;
    return o;
}

void SearchOptions::validate(Geometry geometry) const
{
    if (!(grid_step_deg > 0.0)) throw ConfigError("grid step must be positive");
    if (!(tolerance > 0.0) || max_iterations < 1) throw ConfigError("invalid refinement settings");
    if (!(theta_max_deg >= theta_min_deg)) throw ConfigError("empty theta search range");
    if (geometry == Geometry::Planar) {
        if (theta_min_deg < -180.0 || theta_max_deg > 180.0) throw ConfigError("planar theta range exceeds the circle");
    } else {
        if (theta_min_deg < 0.0 || theta_max_deg > 180.0) throw ConfigError("inclination range must lie in [0, 180]");
        if (!(phi_max_deg > phi_min_deg)) throw ConfigError("empty phi search range");
    }
    if (alternating_rounds < 1) throw ConfigError("alternating_rounds must be >= 1");
    if (refine_candidates < 1) throw ConfigError("refine_candidates must be >= 1");
}

std::vector<Direction> search_grid(const SearchOptions& o, Geometry geometry)
{
    o.validate(geometry);
    const auto steps = [&](double lo, double hi) { return static_cast<int>(std::floor((hi - lo) / o.grid_step_deg + 1e-9)); };
    std::vector<Direction> dirs;
    const int nt = steps(o.theta_min_deg, o.theta_max_deg);
    if (geometry == Geometry::Planar) {
        for (int i = 0; i <= nt; ++i) dirs.push_back({deg2rad(o.theta_min_deg + i * o.grid_step_deg), 0.0});
        return dirs;
    }
    const bool full = o.phi_max_deg - o.phi_min_deg >= 360.0 - 1e-9;
    int np = steps(o.phi_min_deg, o.phi_max_deg);
    if (full && o.phi_min_deg + np * o.grid_step_deg >= o.phi_min_deg + 360.0 - 1e-9) --np;
    for (int i = 0; i <= nt; ++i) {
        const double t = o.theta_min_deg + i * o.grid_step_deg;
        // A pole is a single direction.
        const bool pole = std::abs(t) < 1e-9 || std::abs(t - 180.0) < 1e-9;
        for (int j = 0; j <= (pole ? 0 : np); ++j)
            dirs.push_back({deg2rad(t), wrap_two_pi(deg2rad(o.phi_min_deg + j * o.grid_step_deg))});
    }
    return dirs;
}

PolarizationState canonical_polarization(double gamma, double beta)
{
    double g = wrap_pi(gamma);
    double b = beta;
    if (g < 0.0) {
        g = -g;
        b += kPi;
    }
    if (g > kPi / 2.0) {
        g = kPi - g;
        b += kPi;
    }
    return {g, wrap_pi(b)};
}

// ----------------------------------------------------------- non-coherent

double nc_loglik(const Eigen::VectorXd& rss, const Eigen::VectorXd& gain, double signal_power, double noise_power,
                 int snapshots)
{
    if (!(noise_power > 0.0)) throw std::invalid_argument("noise power must be positive");
    double value = 0.0;
    const double n = snapshots;
    for (Eigen::Index m = 0; m < rss.size(); ++m) {
        const double mu = gain(m) * signal_power + noise_power;
        const double var = (noise_power * noise_power + 2.0 * noise_power * signal_power * gain(m)) / n;
        const double e = rss(m) - mu;
        value -= std::log(var) + e * e / var;
    }
    return value;
}

double noise_power_estimate(const Eigen::MatrixXcd& noise)
{
    if (noise.size() == 0) throw std::invalid_argument("empty noise block");
    return noise.cwiseAbs2().sum() / static_cast<double>(noise.size());
}

NoncoherentEstimator::NoncoherentEstimator(std::shared_ptr<const GainModel> model, SearchOptions options)
    : model_(std::move(model)), options_(options)
{
    if (!model_) throw std::invalid_argument("null gain model");
    dirs_ = covered(search_grid(options_, model_->geometry()), [&](const Direction& d) { return model_->covers(d); });
    gains_ = gain_table(*model_, dirs_);
}

NoncoherentEstimator::NuisanceFit NoncoherentEstimator::fit_nuisance(const Eigen::VectorXd& r, const Eigen::VectorXd& g,
                                                                     int snapshots, double floor)
{
    const auto cost = [&](double log_s, double log_n) {
        return -nc_loglik(r, g, std::max(std::exp(log_s), floor), std::max(std::exp(log_n), floor), snapshots);
    };
    const auto m = static_cast<double>(r.size());
    double ls = std::log(std::max(r.mean() - r.minCoeff(), floor));
    double ln = std::log(std::max(r.minCoeff(), floor));
    // Linear fit r = g s + n as a second starting point.
    const double sg = g.sum(), sgg = g.squaredNorm(), sr = r.sum(), sgr = g.dot(r);
    const double det = sgg * m - sg * sg;
    if (det > 1e-12 * sgg * m) {
        const double s_ls = (m * sgr - sg * sr) / det;
        const double n_ls = (sgg * sr - sg * sgr) / det;
        if (s_ls > floor && n_ls > floor && cost(std::log(s_ls), std::log(n_ls)) < cost(ls, ln)) {
            ls = std::log(s_ls);
            ln = std::log(n_ls);
        }
    }
    const SimplexResult inner =
        nelder_mead([&](const std::vector<double>& x) { return cost(x[0], x[1]); }, {ls, ln}, {0.3, 0.3}, 1e-5, 300);
    return {inner.value, inner.x[0], inner.x[1]};
}

double NoncoherentEstimator::profile_loglik(const Eigen::VectorXd& rss_in, int snapshots, const Direction& dir) const
{
    const double scale = rss_in.mean();
    if (!(scale > 0.0)) throw DataError("RSS vector is zero");
    const NuisanceFit fit = fit_nuisance(rss_in / scale, model_->gain(dir), snapshots, kPowerFloor / scale);
    // Undo the normalisation: det S scales with scale^(2M).
    return -fit.cost - 2.0 * static_cast<double>(rss_in.size()) * std::log(scale);
}

EstimationResult NoncoherentEstimator::ml(const Eigen::VectorXd& rss_in, int snapshots) const
{
    const int m = model_->num_ports();
    if (rss_in.size() != m) throw std::invalid_argument("RSS length does not match the model");
    if (m < 3) throw ConfigError("NC-ML needs at least three ports");
    const double scale = rss_in.mean();
    if (!(scale > 0.0)) throw DataError("RSS vector is zero");

    // Work in units of the mean RSS; the log-likelihood only shifts by a constant.
    const Eigen::VectorXd r = rss_in / scale;
    const double floor = kPowerFloor / scale;
    const auto cost = [&](const Eigen::VectorXd& g, double log_s, double log_n) {
        return -nc_loglik(r, g, std::max(std::exp(log_s), floor), std::max(std::exp(log_n), floor), snapshots);
    };

    Eigen::VectorXd grid_cost(gains_.cols());
    std::vector<NuisanceFit> nuisance;
    for (Eigen::Index c = 0; c < gains_.cols(); ++c) {
        nuisance.push_back(fit_nuisance(r, gains_.col(c), snapshots, floor));
        grid_cost(c) = nuisance.back().cost;
    }

    const Geometry geom = model_->geometry();
    const Region region = region_of(options_, geom);
    const int dims = angle_dims(geom);
    const auto starts = candidate_cells(grid_cost, dirs_, geom, deg2rad(2.5 * options_.grid_step_deg),
                                        options_.refine_candidates);
    if (starts.empty()) throw DataError("NC-ML coarse search failed");
    std::vector<double> step = angle_steps(options_, geom);
    step.push_back(0.1);
    step.push_back(0.1);
    const double penalty = kPenalty * (1.0 + std::abs(grid_cost(starts[0])));
    const auto objective = [&](const std::vector<double>& x, double& excess) {
        const Direction d = decode(region, x.data(), excess);
        return cost(model_->gain(d), x[dims], x[dims + 1]);
    };
    SimplexResult fine;
    double fine_cost = kInf;
    for (auto c : starts) {
        std::vector<double> x0;
        encode(dirs_[c], geom, x0);
        x0.push_back(nuisance[c].log_s);
        x0.push_back(nuisance[c].log_n);
        SimplexResult cand = nelder_mead(
            [&](const std::vector<double>& x) {
                double excess = 0.0;
                const double v = objective(x, excess);
                return v + penalty * excess;
            },
            x0, step, options_.tolerance, options_.max_iterations);
        double excess = 0.0;
        const double v = objective(cand.x, excess);
        if (v < fine_cost) {
            fine_cost = v;
            fine = std::move(cand);
        }
    }

    EstimationResult res;
    double excess = 0.0;
    const Direction d = decode(region, fine.x.data(), excess);
    res.directions = {d};
    res.powers = {std::max(std::exp(fine.x[dims]) * scale, kPowerFloor)};
    res.noise_power = std::max(std::exp(fine.x[dims + 1]) * scale, kPowerFloor);
    res.objective = -nc_loglik(rss_in, model_->gain(d), res.powers[0], res.noise_power, snapshots);
    res.diagnostics.grid_best = {dirs_[starts[0]]};
    res.diagnostics.iterations = fine.iterations;
    res.diagnostics.converged = fine.converged;
    return res;
}

double NoncoherentEstimator::rc_objective(const Eigen::VectorXd& rp, const Eigen::VectorXd& g)
{
    const double gg = g.squaredNorm();
    if (gg < 1e-24) return rp.squaredNorm();
    const double gr = g.dot(rp);
    return rp.squaredNorm() - gr * gr / gg;
}

EstimationResult NoncoherentEstimator::rc(const Eigen::VectorXd& rss_in, double noise_power) const
{
    if (rss_in.size() != model_->num_ports()) throw std::invalid_argument("RSS length does not match the model");
    if (!(noise_power >= 0.0)) throw std::invalid_argument("noise power must be non-negative");
    const Eigen::VectorXd rp = rss_in - Eigen::VectorXd::Constant(rss_in.size(), noise_power);

    const Eigen::VectorXd gr = gains_.transpose() * rp;
    const Eigen::VectorXd gg = gains_.colwise().squaredNorm().transpose();
    Eigen::VectorXd grid_cost(gains_.cols());
    for (Eigen::Index c = 0; c < gains_.cols(); ++c)
        grid_cost(c) = std::sqrt(gg(c)) < 1e-12 ? kInf : rp.squaredNorm() - gr(c) * gr(c) / gg(c);

    const Geometry geom = model_->geometry();
    const Region region = region_of(options_, geom);
    const auto starts = candidate_cells(grid_cost, dirs_, geom, deg2rad(2.5 * options_.grid_step_deg),
                                        options_.refine_candidates);
    if (starts.empty()) throw DataError("gain model vanishes on the whole search grid");
    const double penalty = kPenalty * (1.0 + rp.squaredNorm());
    SimplexResult fine;
    double fine_cost = kInf;
    for (auto c : starts) {
        std::vector<double> x0;
        encode(dirs_[c], geom, x0);
        SimplexResult cand = nelder_mead(
            [&](const std::vector<double>& x) {
                double excess = 0.0;
                const Direction d = decode(region, x.data(), excess);
                return rc_objective(rp, model_->gain(d)) + penalty * excess;
            },
            x0, angle_steps(options_, geom), options_.tolerance, options_.max_iterations);
        double excess = 0.0;
        const double v = rc_objective(rp, model_->gain(decode(region, cand.x.data(), excess)));
        if (v < fine_cost) {
            fine_cost = v;
            fine = std::move(cand);
        }
    }

    EstimationResult res;
    double excess = 0.0;
    const Direction d = decode(region, fine.x.data(), excess);
    const Eigen::VectorXd g = model_->gain(d);
    res.directions = {d};
    res.powers = {std::max(g.squaredNorm() > 0.0 ? g.dot(rp) / g.squaredNorm() : 0.0, kPowerFloor)};
    res.noise_power = noise_power;
    res.objective = rc_objective(rp, g);
    res.diagnostics.grid_best = {dirs_[starts[0]]};
    res.diagnostics.iterations = fine.iterations;
    res.diagnostics.converged = fine.converged;
    return res;
}

EstimationResult nc_ml(const Eigen::VectorXd& rss, int snapshots, std::shared_ptr<const GainModel> model,
                       const SearchOptions& options)
{
    return NoncoherentEstimator(std::move(model), options).ml(rss, snapshots);
}

EstimationResult nc_rc(const Eigen::VectorXd& rss, double noise_power, std::shared_ptr<const GainModel> model,
                       const SearchOptions& options)
{
    return NoncoherentEstimator(std::move(model), options).rc(rss, noise_power);
}

// --------------------------------------------------------------- coherent

Eigen::MatrixXcd noise_projector(const Eigen::MatrixXcd& a)
{
    const Eigen::MatrixXcd u = orthonormal_basis(a);
    return Eigen::MatrixXcd::Identity(a.rows(), a.rows()) - u * u.adjoint();
}

double cml_objective(const Eigen::MatrixXcd& r, const Eigen::MatrixXcd& a)
{
    const Eigen::MatrixXcd u = orthonormal_basis(a);
    return r.trace().real() - (u.adjoint() * r * u).trace().real();
}

CoherentEstimator::CoherentEstimator(std::shared_ptr<const ResponseModel> model, SearchOptions options)
    : model_(std::move(model)), options_(options)
{
    if (!model_) throw std::invalid_argument("null response model");
    dirs_ = covered(search_grid(options_, model_->geometry()), [&](const Direction& d) { return model_->covers(d); });
    units_.resize(model_->num_ports(), static_cast<Eigen::Index>(dirs_.size()));
    for (std::size_t i = 0; i < dirs_.size(); ++i) {
        Eigen::VectorXcd a = model_->response(dirs_[i]);
        const double n = a.norm();
        units_.col(static_cast<Eigen::Index>(i)) = n > 1e-12 ? Eigen::VectorXcd(a / n) : Eigen::VectorXcd::Zero(a.size());
    }
}

double CoherentEstimator::objective(const Eigen::MatrixXcd& r, const std::vector<Direction>& dirs) const
{
    Eigen::MatrixXcd a(model_->num_ports(), static_cast<Eigen::Index>(dirs.size()));
    for (std::size_t p = 0; p < dirs.size(); ++p) a.col(static_cast<Eigen::Index>(p)) = model_->response(dirs[p]);
    return cml_objective(r, a);
}

EstimationResult CoherentEstimator::ml(const Eigen::MatrixXcd& r, int signals) const
{
    const int m = model_->num_ports();
    if (r.rows() != m || r.cols() != m) throw std::invalid_argument("covariance size does not match the model");
    if (signals < 1 || signals >= m) throw ConfigError("C-ML needs 1 <= P < M");

    // Coarse stage: greedy selection followed by coordinate-wise sweeps.
    std::vector<Eigen::Index> cells;
    const auto basis_without = [&](std::size_t skip) {
        Eigen::MatrixXcd cols(m, 0);
        for (std::size_t i = 0; i < cells.size(); ++i) {
            if (i == skip) continue;
            cols.conservativeResize(Eigen::NoChange, cols.cols() + 1);
            cols.col(cols.cols() - 1) = units_.col(cells[i]);
        }
        return orthonormal_basis(cols);
    };
    if (signals == 2 && options_.brute_force_pairs) {
        double best = -kInf;
        Eigen::Index bi = 0, bj = 1;
        const Eigen::VectorXd single = projected_power(r, Eigen::MatrixXcd(m, 0), units_);
        for (Eigen::Index i = 0; i < units_.cols(); ++i) {
            if (!std::isfinite(single(i))) continue;
            const Eigen::MatrixXcd q = units_.col(i);
            const Eigen::VectorXd pair = projected_power(r, q, units_);
            for (Eigen::Index j = i + 1; j < units_.cols(); ++j) {
                if (single(i) + pair(j) > best) {
                    best = single(i) + pair(j);
                    bi = i;
                    bj = j;
                }
            }
        }
        cells = {bi, bj};
    } else {
        for (int p = 0; p < signals; ++p) {
            cells.push_back(-1);
            cells[p] = argmax_first(projected_power(r, basis_without(p), units_));
        }
        if (signals > 1) {
            for (int round = 0; round < options_.alternating_rounds; ++round) {
                bool changed = false;
                for (int p = 0; p < signals; ++p) {
                    const Eigen::Index c = argmax_first(projected_power(r, basis_without(p), units_));
                    if (c != cells[p]) changed = true;
                    cells[p] = c;
                }
                if (!changed) break;
            }
        }
    }
    for (auto c : cells)
        if (c < 0) throw DataError("C-ML coarse search failed");

    const Geometry geom = model_->geometry();
    const Region region = region_of(options_, geom);
    const int dims = angle_dims(geom);
    std::vector<double> x0, step;
    for (auto c : cells) {
        encode(dirs_[c], geom, x0);
        for (double s : angle_steps(options_, geom)) step.push_back(s);
    }
    const double penalty = kPenalty * (1.0 + std::abs(r.trace().real()));
    const auto decode_all = [&](const std::vector<double>& x, double& excess) {
        std::vector<Direction> dirs;
        for (int p = 0; p < signals; ++p) dirs.push_back(decode(region, x.data() + p * dims, excess));
        return dirs;
    };
    const SimplexResult fine = nelder_mead(
        [&](const std::vector<double>& x) {
            double excess = 0.0;
            const auto dirs = decode_all(x, excess);
            return objective(r, dirs) + penalty * excess;
        },
        x0, step, options_.tolerance, options_.max_iterations);

    EstimationResult res;
    double excess = 0.0;
    res.directions = decode_all(fine.x, excess);
    for (auto c : cells) res.diagnostics.grid_best.push_back(dirs_[c]);
    res.objective = objective(r, res.directions);
    res.diagnostics.iterations = fine.iterations;
    res.diagnostics.converged = fine.converged;
    Eigen::MatrixXcd a(m, signals);
    for (int p = 0; p < signals; ++p) a.col(p) = model_->response(res.directions[p]);
    fill_powers(r, a, res);
    sort_by_theta(res);
    return res;
}

EstimationResult c_ml(const Eigen::MatrixXcd& r, std::shared_ptr<const ResponseModel> model, int signals,
                      const SearchOptions& options)
{
    return CoherentEstimator(std::move(model), options).ml(r, signals);
}

// ----------------------------------------------------------- polarimetric

PolarimetricEstimator::PolarimetricEstimator(PolarimetricModel model, SearchOptions options)
    : model_(std::move(model)), options_(options)
{
    if (!model_.co || !model_.cross) throw std::invalid_argument("incomplete polarimetric model");
    dirs_ = covered(search_grid(options_, model_.geometry()), [&](const Direction& d) { return model_.covers(d); });
    const auto g = static_cast<Eigen::Index>(dirs_.size());
    co_.resize(model_.num_ports(), g);
    cross_.resize(model_.num_ports(), g);
    for (Eigen::Index i = 0; i < g; ++i) {
        co_.col(i) = model_.co->response(dirs_[i]);
        cross_.col(i) = model_.cross->response(dirs_[i]);
    }
}

double PolarimetricEstimator::objective(const Eigen::MatrixXcd& r, const std::vector<Direction>& dirs,
                                        const std::vector<PolarizationState>& pols) const
{
    Eigen::MatrixXcd a(model_.num_ports(), static_cast<Eigen::Index>(dirs.size()));
    for (std::size_t p = 0; p < dirs.size(); ++p)
        a.col(static_cast<Eigen::Index>(p)) = polarimetric_response(model_, dirs[p], pols[p]);
    return cml_objective(r, a);
}

EstimationResult PolarimetricEstimator::ml(const Eigen::MatrixXcd& r, int signals) const
{
    const int m = model_.num_ports();
    if (r.rows() != m || r.cols() != m) throw std::invalid_argument("covariance size does not match the model");
    if (signals < 1 || signals >= m) throw ConfigError("P-ML needs 1 <= P < M");
    if (4 * signals >= 2 * m) throw ConfigError("P-ML needs 4P < 2M for identifiability");

    struct Pick {
        Eigen::Index cell = -1;
        Eigen::Vector2cd w;
    };
    std::vector<Pick> picks(signals);
    // Per-cell cost and weights of the last sweep, used for multi-start with one signal.
    Eigen::VectorXd cell_cost = Eigen::VectorXd::Constant(co_.cols(), kInf);
    std::vector<Eigen::Vector2cd> cell_w(co_.cols());

    // Best cell and (gamma, beta) weights for signal `p` with the others fixed:
    // per cell a 2x2 generalized Rayleigh quotient in the projected co/cross pair.
    const auto sweep = [&](int p) {
        Eigen::MatrixXcd cols(m, 0);
        for (int i = 0; i < signals; ++i) {
            if (i == p || picks[i].cell < 0) continue;
            cols.conservativeResize(Eigen::NoChange, cols.cols() + 1);
            cols.col(cols.cols() - 1) = picks[i].w(0) * co_.col(picks[i].cell) + picks[i].w(1) * cross_.col(picks[i].cell);
        }
        const Eigen::MatrixXcd q = orthonormal_basis(cols);
        const Eigen::MatrixXcd v1 = q.cols() ? Eigen::MatrixXcd(co_ - q * (q.adjoint() * co_)) : co_;
        const Eigen::MatrixXcd v2 = q.cols() ? Eigen::MatrixXcd(cross_ - q * (q.adjoint() * cross_)) : cross_;
        const Eigen::MatrixXcd rv1 = r * v1, rv2 = r * v2;
        Pick best;
        double best_val = -kInf;
        for (Eigen::Index g = 0; g < co_.cols(); ++g) {
            Eigen::Matrix2cd c, k;
            c(0, 0) = v1.col(g).dot(rv1.col(g));
            c(0, 1) = v1.col(g).dot(rv2.col(g));
            c(1, 1) = v2.col(g).dot(rv2.col(g));
            c(1, 0) = std::conj(c(0, 1));
            k(0, 0) = v1.col(g).squaredNorm();
            k(0, 1) = v1.col(g).dot(v2.col(g));
            k(1, 1) = v2.col(g).squaredNorm();
            k(1, 0) = std::conj(k(0, 1));
            if (k.trace().real() < 1e-8 * (co_.col(g).squaredNorm() + cross_.col(g).squaredNorm())) continue;
            Eigen::Vector2cd w;
            const double val = rayleigh2(c, k, w);
            cell_cost(g) = -val;
            cell_w[g] = w;
            if (val > best_val) {
                best_val = val;
                best.cell = g;
                best.w = w;
            }
        }
        return best;
    };
    for (int p = 0; p < signals; ++p) picks[p] = sweep(p);
    if (signals > 1) {
        for (int round = 0; round < options_.alternating_rounds; ++round) {
            bool changed = false;
            for (int p = 0; p < signals; ++p) {
                const Pick next = sweep(p);
                if (next.cell != picks[p].cell) changed = true;
                picks[p] = next;
            }
            if (!changed) break;
        }
    }
    for (const auto& pk : picks)
        if (pk.cell < 0) throw DataError("P-ML coarse search failed");

    const Geometry geom = model_.geometry();
    const Region region = region_of(options_, geom);
    const int dims = angle_dims(geom);
    const int per = dims + 2;
    std::vector<double> step;
    for (int p = 0; p < signals; ++p) {
        for (double s : angle_steps(options_, geom)) step.push_back(s);
        step.push_back(0.05);
        step.push_back(0.1);
    }
    const auto start_of = [&](const std::vector<Pick>& ps) {
        std::vector<double> x0;
        for (const auto& pk : ps) {
            encode(dirs_[pk.cell], geom, x0);
            const PolarizationState pol = polarization_from_weights(pk.w);
            x0.push_back(pol.gamma);
            x0.push_back(pol.beta);
        }
        return x0;
    };
    std::vector<std::vector<double>> starts{start_of(picks)};
    if (signals == 1) {
        const auto cells = candidate_cells(cell_cost, dirs_, geom, deg2rad(2.5 * options_.grid_step_deg),
                                           options_.refine_candidates);
        for (std::size_t i = 1; i < cells.size(); ++i) starts.push_back(start_of({Pick{cells[i], cell_w[cells[i]]}}));
    }
    const auto decode_all = [&](const std::vector<double>& x, double& excess, std::vector<Direction>& dirs,
                                std::vector<PolarizationState>& pols) {
        dirs.clear();
        pols.clear();
        for (int p = 0; p < signals; ++p) {
            dirs.push_back(decode(region, x.data() + p * per, excess));
            pols.push_back({x[p * per + dims], x[p * per + dims + 1]});
        }
    };
    const double penalty = kPenalty * (1.0 + std::abs(r.trace().real()));
    SimplexResult fine;
    double fine_cost = kInf;
    for (const auto& x0 : starts) {
        SimplexResult cand = nelder_mead(
            [&](const std::vector<double>& x) {
                double excess = 0.0;
                std::vector<Direction> dirs;
                std::vector<PolarizationState> pols;
                decode_all(x, excess, dirs, pols);
                return objective(r, dirs, pols) + penalty * excess;
            },
            x0, step, options_.tolerance, options_.max_iterations);
        double excess = 0.0;
        std::vector<Direction> dirs;
        std::vector<PolarizationState> pols;
        decode_all(cand.x, excess, dirs, pols);
        const double v = objective(r, dirs, pols);
        if (v < fine_cost) {
            fine_cost = v;
            fine = std::move(cand);
        }
    }

    EstimationResult res;
    double excess = 0.0;
    decode_all(fine.x, excess, res.directions, res.polarizations);
    for (auto& pol : res.polarizations) pol = canonical_polarization(pol.gamma, pol.beta);
    for (const auto& pk : picks) res.diagnostics.grid_best.push_back(dirs_[pk.cell]);
    res.objective = objective(r, res.directions, res.polarizations);
    res.diagnostics.iterations = fine.iterations;
    res.diagnostics.converged = fine.converged;
    Eigen::MatrixXcd a(m, signals);
    for (int p = 0; p < signals; ++p) a.col(p) = polarimetric_response(model_, res.directions[p], res.polarizations[p]);
    fill_powers(r, a, res);
    sort_by_theta(res);
    return res;
}

EstimationResult p_ml(const Eigen::MatrixXcd& r, const PolarimetricModel& model, int signals,
                      const SearchOptions& options)
{
    return PolarimetricEstimator(model, options).ml(r, signals);
}

}  // namespace mmadoa
