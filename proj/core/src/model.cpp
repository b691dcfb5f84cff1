#include "therm/model.hpp"

#include "therm/errors.hpp"
#include "therm/probit.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

namespace therm {

namespace {

constexpr double kLog2Pi = 1.83787706640934548356;

void require(bool ok, const char* what)
{
    if (!ok) {
        throw DomainError(what);
    }
}

// log(exp(a) + exp(b)) with the weight of the first term.
double log_add(double a, double b, double* weight_a)
{
    const double hi = std::max(a, b);
    const double ea = std::exp(a - hi);
    const double eb = std::exp(b - hi);
    if (weight_a != nullptr) {
        *weight_a = ea / (ea + eb);
    }
    return hi + std::log(ea + eb);
}

// One coupling term and its partial derivatives w.r.t. (u', g).
double coupling_term(double du, double g, const ModelConstants& c, double* d_du, double* d_g)
{
    const double a = c.nu_v * du;
    const double b = c.nu_y_tilde * g;
    const double neg = log_normal_cdf(-a) + log_normal_cdf(-b);
    const double pos = log_normal_cdf(a) + log_normal_cdf(b);
    double w_neg = 0.0;
    const double value = log_add(neg, pos, &w_neg);
    if (d_du != nullptr) {
        const double w_pos = 1.0 - w_neg;
        *d_du = c.nu_v * (-w_neg * d_log_normal_cdf(-a) + w_pos * d_log_normal_cdf(a));
        *d_g = c.nu_y_tilde * (-w_neg * d_log_normal_cdf(-b) + w_pos * d_log_normal_cdf(b));
    }
    return value;
}

double gamma_log_prior(double log_x, double shape, double scale, double* d_log_x)
{
    const double x = std::exp(log_x);
    if (d_log_x != nullptr) {
        *d_log_x = shape - x / scale;
    }
    return (shape - 1.0) * log_x - x / scale - std::lgamma(shape) - shape * std::log(scale) + log_x;
}

bool on_any(const std::vector<double>& pts, double x)
{
    return std::any_of(pts.begin(), pts.end(), [x](double p) { return std::abs(p - x) <= 1e-9; });
}

Eigen::Index index_in(const std::vector<double>& pts, double x)
{
    for (std::size_t i = 0; i < pts.size(); ++i) {
        if (std::abs(pts[i] - x) <= 1e-9) {
            return static_cast<Eigen::Index>(i);
        }
    }
    return -1;
}

// Distinct off-grid points, sorted so that dataset order does not matter.
std::vector<double> extra_points(const VirtualGrid& grid, const std::vector<double>& xs)
{
    std::vector<double> out;
    for (double x : xs) {
        if (!grid.index_of(x) && !on_any(out, x)) {
            out.push_back(x);
        }
    }
    std::sort(out.begin(), out.end());
    return out;
}

std::vector<double> concat(const std::vector<double>& a, const std::vector<double>& b)
{
    std::vector<double> out(a);
    out.insert(out.end(), b.begin(), b.end());
    return out;
}

} // namespace

// ---------------------------------------------------------------------------

VirtualGrid VirtualGrid::standard()
{
    return uniform(kTempMin, kTempMax, 17);
}

VirtualGrid VirtualGrid::uniform(double lo, double hi, std::size_t count)
{
    require(count >= 2 && hi > lo, "VirtualGrid::uniform: need count >= 2 and hi > lo");
    VirtualGrid g;
    g.points.resize(count);
    const double step = (hi - lo) / static_cast<double>(count - 1);
    for (std::size_t i = 0; i < count; ++i) {
        g.points[i] = lo + step * static_cast<double>(i);
    }
    g.points.back() = hi;
    return g;
}

std::optional<std::size_t> VirtualGrid::index_of(double x, double tol) const
{
    const auto it = std::lower_bound(points.begin(), points.end(), x - tol);
    if (it != points.end() && std::abs(*it - x) <= tol) {
        return static_cast<std::size_t>(it - points.begin());
    }
    return std::nullopt;
}

void VirtualGrid::validate() const
{
    require(!points.empty(), "VirtualGrid: empty");
    for (std::size_t i = 0; i < points.size(); ++i) {
        require(std::isfinite(points[i]), "VirtualGrid: non-finite point");
        if (i > 0) {
            require(points[i] > points[i - 1], "VirtualGrid: points must be strictly increasing");
        }
    }
}

void ModelConstants::validate() const
{
    require(nu_g > 0 && nu_y_tilde > 0 && nu_v > 0 && nu_l > 0, "ModelConstants: all constants must be > 0");
    require(std::isfinite(prior_nugget) && prior_nugget >= 0.0, "ModelConstants: prior_nugget must be >= 0");
}

void PreferenceDataset::add(double temp, int response)
{
    temps.push_back(temp);
    responses.push_back(response);
}

void PreferenceDataset::validate() const
{
    require(temps.size() == responses.size(), "PreferenceDataset: length mismatch");
    for (double t : temps) {
        require(std::isfinite(t) && t >= kTempMin - 1e-12 && t <= kTempMax + 1e-12,
                "PreferenceDataset: temperature outside [20, 28]");
    }
    for (int y : responses) {
        require(y >= -1 && y <= 1, "PreferenceDataset: response must be -1, 0 or 1");
    }
}

bool LatentState::all_finite() const
{
    return u_virt.allFinite() && du_virt.allFinite() && u_obs.allFinite() && du_obs.allFinite()
           && g_virt.allFinite() && dg_virt.allFinite() && log_theta_u.allFinite()
           && log_theta_g.allFinite();
}

// ---------------------------------------------------------------------------

double log_gaussian_block(const Eigen::VectorXd& v, const JointCovariance& cov)
{
    require(v.size() == cov.size(), "log_gaussian_block: dimension mismatch");
    const CholeskyFactor chol = cholesky_with_jitter(cov);
    const Eigen::VectorXd white = chol.lower.triangularView<Eigen::Lower>().solve(v);
    return -0.5 * white.squaredNorm() - 0.5 * chol.log_det() - 0.5 * static_cast<double>(v.size()) * kLog2Pi;
}

double log_monotonic_factor(const Eigen::VectorXd& dg_virt, const ModelConstants& c)
{
    double sum = 0.0;
    for (Eigen::Index j = 0; j < dg_virt.size(); ++j) {
        sum += log_normal_cdf(-c.nu_g * dg_virt[j]);
    }
    return sum;
}

double log_sign_coupling(const Eigen::VectorXd& du_virt, const Eigen::VectorXd& g_virt, const ModelConstants& c)
{
    require(du_virt.size() == g_virt.size(), "log_sign_coupling: length mismatch");
    double sum = 0.0;
    for (Eigen::Index j = 0; j < du_virt.size(); ++j) {
        sum += coupling_term(du_virt[j], g_virt[j], c, nullptr, nullptr);
    }
    return sum;
}

double log_likelihood(const PreferenceDataset& data, const Eigen::VectorXd& du_at_obs, const ModelConstants& c)
{
    require(static_cast<Eigen::Index>(data.responses.size()) == du_at_obs.size(),
            "log_likelihood: length mismatch");
    double sum = 0.0;
    for (std::size_t i = 0; i < data.responses.size(); ++i) {
        const int y = data.responses[i];
        require(y >= -1 && y <= 1, "log_likelihood: response must be -1, 0 or 1");
        sum += log_normal_cdf(c.nu_l * y * du_at_obs[static_cast<Eigen::Index>(i)]);
    }
    return sum;
}

double log_hyperprior(const Eigen::Vector2d& log_theta, const HyperPrior& hp)
{
    return gamma_log_prior(log_theta[0], hp.shape1, hp.scale1, nullptr)
           + gamma_log_prior(log_theta[1], hp.shape2, hp.scale2, nullptr);
}

double regression_log_likelihood(const Eigen::VectorXd& y, const Eigen::VectorXd& f, double sigma)
{
    require(y.size() == f.size(), "regression_log_likelihood: length mismatch");
    require(std::isfinite(sigma) && sigma > 0.0, "regression_log_likelihood: sigma must be > 0");
    const double n = static_cast<double>(y.size());
    return -0.5 * (y - f).squaredNorm() / (sigma * sigma) - n * std::log(sigma) - 0.5 * n * kLog2Pi;
}

// ---------------------------------------------------------------------------

ConstrainedGp::ConstrainedGp(VirtualGrid grid,
                             ShapeConstraint shape,
                             Observations observations,
                             ModelConstants constants,
                             HyperPrior hyper)
    : grid_(std::move(grid)), shape_(shape), obs_(std::move(observations)), c_(constants), hp_(hyper)
{
    grid_.validate();
    c_.validate();

    std::vector<double> extra_values;
    std::vector<double> extra_derivs;
    if (const auto* pref = std::get_if<PreferenceObservations>(&obs_)) {
        require(pref->temps.size() == pref->responses.size(), "ConstrainedGp: observation length mismatch");
        for (int y : pref->responses) {
            require(y >= -1 && y <= 1, "ConstrainedGp: response must be -1, 0 or 1");
        }
        extra_derivs = extra_points(grid_, pref->temps);
    } else {
        const auto& reg = std::get<RegressionObservations>(obs_);
        require(reg.x.size() == reg.y.size(), "ConstrainedGp: observation length mismatch");
        require(reg.sigma > 0.0, "ConstrainedGp: noise sigma must be > 0");
        extra_values = extra_points(grid_, reg.x);
    }
    for (double x : extra_values) {
        require(std::isfinite(x), "ConstrainedGp: non-finite observation input");
    }
    for (double x : extra_derivs) {
        require(std::isfinite(x), "ConstrainedGp: non-finite observation input");
    }

    u_values_ = concat(grid_.points, extra_values);
    u_derivs_ = concat(grid_.points, extra_derivs);
    g_values_ = grid_.points;
    nu_ = static_cast<Eigen::Index>(u_values_.size() + u_derivs_.size());
    ng_ = has_latent_g() ? static_cast<Eigen::Index>(2 * grid_.size()) : 0;
    off_theta_u_ = nu_ + ng_;
    off_theta_g_ = off_theta_u_ + 2;
    dim_ = off_theta_u_ + (has_latent_g() ? 4 : 2);

    const auto n_values = static_cast<Eigen::Index>(u_values_.size());
    if (const auto* pref = std::get_if<PreferenceObservations>(&obs_)) {
        for (double t : pref->temps) {
            obs_index_.push_back(n_values + index_in(u_derivs_, t));
        }
    } else {
        for (double x : std::get<RegressionObservations>(obs_).x) {
            obs_index_.push_back(index_in(u_values_, x));
        }
    }
}

Eigen::VectorXd ConstrainedGp::pack(const LatentState& s) const
{
    const auto J = static_cast<Eigen::Index>(grid_.size());
    const auto n_extra_v = static_cast<Eigen::Index>(u_values_.size()) - J;
    const auto n_extra_d = static_cast<Eigen::Index>(u_derivs_.size()) - J;
    require(s.u_virt.size() == J && s.du_virt.size() == J, "LatentState: grid block size mismatch");
    require(s.u_obs.size() == n_extra_v, "LatentState: u_obs size mismatch");
    require(s.du_obs.size() == n_extra_d, "LatentState: du_obs size mismatch");
    if (has_latent_g()) {
        require(s.g_virt.size() == J && s.dg_virt.size() == J, "LatentState: g block size mismatch");
    }
    if (!s.all_finite()) {
        throw DomainError("LatentState: non-finite entry");
    }

    Eigen::VectorXd x(dim_);
    x << s.u_virt, s.u_obs, s.du_virt, s.du_obs;
    if (has_latent_g()) {
        x.segment(nu_, J) = s.g_virt;
        x.segment(nu_ + J, J) = s.dg_virt;
        x.segment<2>(off_theta_g_) = s.log_theta_g;
    }
    x.segment<2>(off_theta_u_) = s.log_theta_u;
    return x;
}

LatentState ConstrainedGp::unpack(const Eigen::VectorXd& x) const
{
    require(x.size() == dim_, "ConstrainedGp::unpack: dimension mismatch");
    const auto J = static_cast<Eigen::Index>(grid_.size());
    const auto nv = static_cast<Eigen::Index>(u_values_.size());
    const auto nd = static_cast<Eigen::Index>(u_derivs_.size());
    LatentState s;
    s.u_virt = x.segment(0, J);
    s.u_obs = x.segment(J, nv - J);
    s.du_virt = x.segment(nv, J);
    s.du_obs = x.segment(nv + J, nd - J);
    s.log_theta_u = x.segment<2>(off_theta_u_);
    if (has_latent_g()) {
        s.g_virt = x.segment(nu_, J);
        s.dg_virt = x.segment(nu_ + J, J);
        s.log_theta_g = x.segment<2>(off_theta_g_);
    }
    return s;
}

Eigen::VectorXd ConstrainedGp::observed_latents(const Eigen::VectorXd& x) const
{
    Eigen::VectorXd out(static_cast<Eigen::Index>(obs_index_.size()));
    for (std::size_t i = 0; i < obs_index_.size(); ++i) {
        out[static_cast<Eigen::Index>(i)] = x[obs_index_[i]];
    }
    return out;
}

void ConstrainedGp::prior_covariance(const std::vector<double>& values,
                                     const std::vector<double>& derivs,
                                     const KernelParams& p,
                                     Eigen::MatrixXd& cov,
                                     Eigen::MatrixXd* d_log_rho) const
{
    fill_joint(values, derivs, p, cov, d_log_rho);
    cov.diagonal().array() += c_.prior_nugget * p.signal_variance;
}

double ConstrainedGp::shape_and_data(const Eigen::VectorXd& fu,
                                     const Eigen::VectorXd& fg,
                                     Eigen::VectorXd* grad_u,
                                     Eigen::VectorXd* grad_g) const
{
    const auto J = static_cast<Eigen::Index>(grid_.size());
    const auto nv = static_cast<Eigen::Index>(u_values_.size());
    const bool want_grad = grad_u != nullptr;
    if (want_grad) {
        grad_u->setZero(nu_);
        if (grad_g != nullptr) {
            grad_g->setZero(ng_);
        }
    }

    double total = 0.0;
    switch (shape_) {
    case ShapeConstraint::None:
        break;
    case ShapeConstraint::MonotoneDecreasing:
        for (Eigen::Index j = 0; j < J; ++j) {
            const double z = -c_.nu_g * fu[nv + j];
            total += log_normal_cdf(z);
            if (want_grad) {
                (*grad_u)[nv + j] += -c_.nu_g * d_log_normal_cdf(z);
            }
        }
        break;
    case ShapeConstraint::Unimodal:
        for (Eigen::Index j = 0; j < J; ++j) {
            const double z = -c_.nu_g * fg[J + j];
            total += log_normal_cdf(z);
            double d_du = 0.0;
            double d_g = 0.0;
            total += coupling_term(fu[nv + j], fg[j], c_, want_grad ? &d_du : nullptr, &d_g);
            if (want_grad) {
                (*grad_g)[J + j] += -c_.nu_g * d_log_normal_cdf(z);
                (*grad_g)[j] += d_g;
                (*grad_u)[nv + j] += d_du;
            }
        }
        break;
    }

    if (const auto* pref = std::get_if<PreferenceObservations>(&obs_)) {
        for (std::size_t i = 0; i < obs_index_.size(); ++i) {
            const double a = c_.nu_l * pref->responses[i];
            const double z = a * fu[obs_index_[i]];
            total += log_normal_cdf(z);
            if (want_grad && a != 0.0) {
                (*grad_u)[obs_index_[i]] += a * d_log_normal_cdf(z);
            }
        }
    } else {
        const auto& reg = std::get<RegressionObservations>(obs_);
        const double inv_s2 = 1.0 / (reg.sigma * reg.sigma);
        const double n = static_cast<double>(reg.y.size());
        total += -n * std::log(reg.sigma) - 0.5 * n * kLog2Pi;
        for (std::size_t i = 0; i < obs_index_.size(); ++i) {
            const double r = reg.y[i] - fu[obs_index_[i]];
            total += -0.5 * r * r * inv_s2;
            if (want_grad) {
                (*grad_u)[obs_index_[i]] += r * inv_s2;
            }
        }
    }
    return total;
}

std::vector<ConstrainedGp::Boundary> ConstrainedGp::saturated_boundaries() const
{
    std::vector<Boundary> out;
    const auto J = static_cast<Eigen::Index>(grid_.size());
    const auto nv = static_cast<Eigen::Index>(u_values_.size());
    const bool hard_g = c_.nu_g >= kSaturated;
    const bool hard_v = c_.nu_v >= kSaturated;
    for (Eigen::Index j = 0; j < J; ++j) {
        if (shape_ == ShapeConstraint::MonotoneDecreasing && hard_g) {
            out.push_back({false, nv + j, j, true});
        }
        if (shape_ == ShapeConstraint::Unimodal) {
            if (hard_g) {
                out.push_back({true, J + j, j, true});
            }
            if (hard_v) {
                out.push_back({false, nv + j, j, false});
            }
        }
    }
    return out;
}

double ConstrainedGp::sign_switch_delta(double g, int from_sign) const
{
    const double a = c_.nu_y_tilde * g * from_sign;
    return log_normal_cdf(-a) - log_normal_cdf(a);
}

double ConstrainedGp::saturated_terms(const Eigen::VectorXd& fu,
                                      const Eigen::VectorXd& fg,
                                      std::span<const int> signs,
                                      Eigen::VectorXd& grad_u,
                                      Eigen::VectorXd& grad_g) const
{
    const auto J = static_cast<Eigen::Index>(grid_.size());
    const auto nv = static_cast<Eigen::Index>(u_values_.size());
    const bool hard_g = c_.nu_g >= kSaturated;
    const bool hard_v = c_.nu_v >= kSaturated;

    // Start from the exact terms with the saturated factors switched off,
    // then add their in-region limits: 0 for a wall, log Phi(s nu g) for a
    // sign switch.
    double total = 0.0;
    grad_u.setZero(nu_);
    grad_g.setZero(ng_);
    if (const auto* pref = std::get_if<PreferenceObservations>(&obs_)) {
        for (std::size_t i = 0; i < obs_index_.size(); ++i) {
            const double a = c_.nu_l * pref->responses[i];
            const double z = a * fu[obs_index_[i]];
            total += log_normal_cdf(z);
            if (a != 0.0) {
                grad_u[obs_index_[i]] += a * d_log_normal_cdf(z);
            }
        }
    } else {
        const auto& reg = std::get<RegressionObservations>(obs_);
        const double inv_s2 = 1.0 / (reg.sigma * reg.sigma);
        for (std::size_t i = 0; i < obs_index_.size(); ++i) {
            const double r = reg.y[i] - fu[obs_index_[i]];
            total += -0.5 * r * r * inv_s2;
            grad_u[obs_index_[i]] += r * inv_s2;
        }
    }

    std::size_t k = 0;
    for (Eigen::Index j = 0; j < J; ++j) {
        if (shape_ == ShapeConstraint::MonotoneDecreasing) {
            if (hard_g) {
                ++k;
            } else {
                const double z = -c_.nu_g * fu[nv + j];
                total += log_normal_cdf(z);
                grad_u[nv + j] += -c_.nu_g * d_log_normal_cdf(z);
            }
        } else if (shape_ == ShapeConstraint::Unimodal) {
            if (hard_g) {
                ++k;
            } else {
                const double z = -c_.nu_g * fg[J + j];
                total += log_normal_cdf(z);
                grad_g[J + j] += -c_.nu_g * d_log_normal_cdf(z);
            }
            if (hard_v) {
                const double a = c_.nu_y_tilde * signs[k] * fg[j];
                total += log_normal_cdf(a);
                grad_g[j] += c_.nu_y_tilde * signs[k] * d_log_normal_cdf(a);
                ++k;
            } else {
                double d_du = 0.0;
                double d_g = 0.0;
                total += coupling_term(fu[nv + j], fg[j], c_, &d_du, &d_g);
                grad_u[nv + j] += d_du;
                grad_g[j] += d_g;
            }
        }
    }
    return total;
}

double ConstrainedGp::exact_terms(const Eigen::VectorXd& fu, const Eigen::VectorXd& fg) const
{
    return shape_and_data(fu, fg, nullptr, nullptr);
}

void ConstrainedGp::block_factor(const Eigen::VectorXd& z, bool g_block, Eigen::MatrixXd& lower) const
{
    require(z.size() == dim_, "block_factor: dimension mismatch");
    require(!g_block || has_latent_g(), "block_factor: model has no latent g block");
    Eigen::MatrixXd cov;
    if (g_block) {
        prior_covariance(g_values_, grid_.points, KernelParams::from_log(z.segment<2>(off_theta_g_)), cov);
    } else {
        prior_covariance(u_values_, u_derivs_, KernelParams::from_log(z.segment<2>(off_theta_u_)), cov);
    }
    cholesky_with_jitter_into(cov, lower);
}

void ConstrainedGp::latent_factors(const Eigen::VectorXd& z, Eigen::MatrixXd& lu, Eigen::MatrixXd& lg) const
{
    block_factor(z, false, lu);
    if (has_latent_g()) {
        block_factor(z, true, lg);
    } else {
        lg.resize(0, 0);
    }
}

double ConstrainedGp::hyper_terms(const Eigen::VectorXd& x, Eigen::VectorXd* grad) const
{
    double total = 0.0;
    const int blocks = has_latent_g() ? 2 : 1;
    for (int b = 0; b < blocks; ++b) {
        const Eigen::Index off = b == 0 ? off_theta_u_ : off_theta_g_;
        double d0 = 0.0;
        double d1 = 0.0;
        total += gamma_log_prior(x[off], hp_.shape1, hp_.scale1, &d0);
        total += gamma_log_prior(x[off + 1], hp_.shape2, hp_.scale2, &d1);
        if (grad != nullptr) {
            (*grad)[off] += d0;
            (*grad)[off + 1] += d1;
        }
    }
    return total;
}

namespace {

struct BlockGeometry {
    const std::vector<double>* values;
    const std::vector<double>* derivs;
    Eigen::Index offset;
    Eigen::Index size;
    Eigen::Index theta_offset;
};

} // namespace

double ConstrainedGp::log_density(const Eigen::VectorXd& x, Eigen::VectorXd* grad) const
{
    require(x.size() == dim_, "log_density: dimension mismatch");
    if (!x.allFinite()) {
        throw DomainError("log_density: non-finite state");
    }
    if (grad != nullptr) {
        grad->setZero(dim_);
    }

    const std::vector<double> g_derivs = grid_.points;
    BlockGeometry blocks[2] = {
        {&u_values_, &u_derivs_, 0, nu_, off_theta_u_},
        {&g_values_, &g_derivs, nu_, ng_, off_theta_g_},
    };
    const int n_blocks = has_latent_g() ? 2 : 1;

    double total = 0.0;
    Eigen::MatrixXd cov;
    Eigen::MatrixXd d_rho;
    Eigen::MatrixXd lower;
    for (int b = 0; b < n_blocks; ++b) {
        const auto& blk = blocks[b];
        const KernelParams p = KernelParams::from_log(x.segment<2>(blk.theta_offset));
        prior_covariance(*blk.values, *blk.derivs, p, cov, grad != nullptr ? &d_rho : nullptr);
        cholesky_with_jitter_into(cov, lower);
        const auto L = lower.triangularView<Eigen::Lower>();
        const Eigen::VectorXd f = x.segment(blk.offset, blk.size);
        Eigen::VectorXd alpha = L.solve(f);
        total += -0.5 * alpha.squaredNorm() - lower.diagonal().array().log().sum()
                 - 0.5 * static_cast<double>(blk.size) * kLog2Pi;
        if (grad != nullptr) {
            lower.transpose().triangularView<Eigen::Upper>().solveInPlace(alpha);
            Eigen::MatrixXd k_inv = Eigen::MatrixXd::Identity(blk.size, blk.size);
            L.solveInPlace(k_inv);
            lower.transpose().triangularView<Eigen::Upper>().solveInPlace(k_inv);
            grad->segment(blk.offset, blk.size) -= alpha;
            // dK/dlog(nu) is the jitter-free covariance.
            const double quad_nu = alpha.dot(cov * alpha);
            const double trace_nu = (k_inv.cwiseProduct(cov)).sum();
            const double quad_rho = alpha.dot(d_rho * alpha);
            const double trace_rho = (k_inv.cwiseProduct(d_rho)).sum();
            (*grad)[blk.theta_offset] += 0.5 * (quad_nu - trace_nu);
            (*grad)[blk.theta_offset + 1] += 0.5 * (quad_rho - trace_rho);
        }
    }

    const Eigen::VectorXd fu = x.segment(0, nu_);
    const Eigen::VectorXd fg = has_latent_g() ? Eigen::VectorXd(x.segment(nu_, ng_)) : Eigen::VectorXd();
    Eigen::VectorXd gu;
    Eigen::VectorXd gg;
    total += shape_and_data(fu, fg, grad != nullptr ? &gu : nullptr, grad != nullptr ? &gg : nullptr);
    total += hyper_terms(x, grad);
    if (grad != nullptr) {
        grad->segment(0, nu_) += gu;
        if (has_latent_g()) {
            grad->segment(nu_, ng_) += gg;
        }
    }
    return total;
}

double ConstrainedGp::log_density_whitened(const Eigen::VectorXd& z, Eigen::VectorXd* grad) const
{
    require(z.size() == dim_, "log_density_whitened: dimension mismatch");
    if (!z.allFinite()) {
        throw DomainError("log_density_whitened: non-finite state");
    }
    if (grad != nullptr) {
        grad->setZero(dim_);
    }

    const std::vector<double> g_derivs = grid_.points;
    BlockGeometry blocks[2] = {
        {&u_values_, &u_derivs_, 0, nu_, off_theta_u_},
        {&g_values_, &g_derivs, nu_, ng_, off_theta_g_},
    };
    const int n_blocks = has_latent_g() ? 2 : 1;

    Eigen::MatrixXd cov[2];
    Eigen::MatrixXd d_rho[2];
    Eigen::MatrixXd lower[2];
    Eigen::VectorXd f[2];
    double total = 0.0;
    for (int b = 0; b < n_blocks; ++b) {
        const auto& blk = blocks[b];
        const KernelParams p = KernelParams::from_log(z.segment<2>(blk.theta_offset));
        prior_covariance(*blk.values, *blk.derivs, p, cov[b], grad != nullptr ? &d_rho[b] : nullptr);
        cholesky_with_jitter_into(cov[b], lower[b]);
        const auto v = z.segment(blk.offset, blk.size);
        f[b] = lower[b].triangularView<Eigen::Lower>() * v;
        total += -0.5 * v.squaredNorm() - 0.5 * static_cast<double>(blk.size) * kLog2Pi;
    }

    Eigen::VectorXd gf[2];
    total += shape_and_data(f[0], f[1], grad != nullptr ? &gf[0] : nullptr, grad != nullptr ? &gf[1] : nullptr);
    total += hyper_terms(z, grad);

    if (grad != nullptr) {
        for (int b = 0; b < n_blocks; ++b) {
            const auto& blk = blocks[b];
            const auto v = z.segment(blk.offset, blk.size);
            const Eigen::VectorXd w = lower[b].transpose().triangularView<Eigen::Upper>() * gf[b];
            grad->segment(blk.offset, blk.size) += w - v;

            // Reverse-mode Cholesky. The lower triangle of L^T tril(gf v^T)
            // is w v^T; with Phi taking it and halving the diagonal,
            // dl/dK = L^-T Phi L^-1. `upper` starts as Phi^T.
            Eigen::MatrixXd upper = Eigen::MatrixXd::Zero(blk.size, blk.size);
            for (Eigen::Index j = 0; j < blk.size; ++j) {
                for (Eigen::Index i = 0; i < j; ++i) {
                    upper(i, j) = w[j] * v[i];
                }
                upper(j, j) = 0.5 * w[j] * v[j];
            }
            lower[b].transpose().triangularView<Eigen::Upper>().solveInPlace(upper);
            Eigen::MatrixXd g_mat = upper.transpose();
            lower[b].transpose().triangularView<Eigen::Upper>().solveInPlace(g_mat);
            (*grad)[blk.theta_offset] += g_mat.cwiseProduct(cov[b]).sum();
            (*grad)[blk.theta_offset + 1] += g_mat.cwiseProduct(d_rho[b]).sum();
        }
    }
    return total;
}

Eigen::VectorXd ConstrainedGp::to_natural(const Eigen::VectorXd& z) const
{
    require(z.size() == dim_, "to_natural: dimension mismatch");
    Eigen::VectorXd x = z;
    const std::vector<double> g_derivs = grid_.points;
    Eigen::MatrixXd cov;
    Eigen::MatrixXd lower;
    prior_covariance(u_values_, u_derivs_, KernelParams::from_log(z.segment<2>(off_theta_u_)), cov);
    cholesky_with_jitter_into(cov, lower);
    x.segment(0, nu_) = lower.triangularView<Eigen::Lower>() * z.segment(0, nu_);
    if (has_latent_g()) {
        prior_covariance(g_values_, g_derivs, KernelParams::from_log(z.segment<2>(off_theta_g_)), cov);
        cholesky_with_jitter_into(cov, lower);
        x.segment(nu_, ng_) = lower.triangularView<Eigen::Lower>() * z.segment(nu_, ng_);
    }
    return x;
}

Eigen::VectorXd ConstrainedGp::to_whitened(const Eigen::VectorXd& x) const
{
    require(x.size() == dim_, "to_whitened: dimension mismatch");
    Eigen::VectorXd z = x;
    const std::vector<double> g_derivs = grid_.points;
    Eigen::MatrixXd cov;
    Eigen::MatrixXd lower;
    prior_covariance(u_values_, u_derivs_, KernelParams::from_log(x.segment<2>(off_theta_u_)), cov);
    cholesky_with_jitter_into(cov, lower);
    z.segment(0, nu_) = lower.triangularView<Eigen::Lower>().solve(x.segment(0, nu_));
    if (has_latent_g()) {
        prior_covariance(g_values_, g_derivs, KernelParams::from_log(x.segment<2>(off_theta_g_)), cov);
        cholesky_with_jitter_into(cov, lower);
        z.segment(nu_, ng_) = lower.triangularView<Eigen::Lower>().solve(x.segment(nu_, ng_));
    }
    return z;
}

Eigen::VectorXd ConstrainedGp::initial_whitened() const
{
    const double center = 0.5 * (grid_.lo() + grid_.hi());
    const double half = 0.5 * (grid_.hi() - grid_.lo());
    const Eigen::Vector2d log_theta(0.0, std::log(half / 2.0));

    // Target shapes in units of t = (x - center) / half: g = -t,
    // u' = -0.5 t (shares the sign of g), u = -0.25 half t^2.
    auto u_value = [&](double xv) {
        const double t = (xv - center) / half;
        switch (shape_) {
        case ShapeConstraint::Unimodal: return -0.25 * half * t * t;
        case ShapeConstraint::MonotoneDecreasing: return -0.5 * t * half;
        case ShapeConstraint::None: break;
        }
        return 0.0;
    };
    auto u_deriv = [&](double xv) {
        const double t = (xv - center) / half;
        switch (shape_) {
        case ShapeConstraint::Unimodal: return -0.5 * t;
        case ShapeConstraint::MonotoneDecreasing: return -0.5;
        case ShapeConstraint::None: break;
        }
        return 0.0;
    };

    Eigen::VectorXd x = Eigen::VectorXd::Zero(dim_);
    Eigen::Index k = 0;
    for (double xv : u_values_) {
        x[k++] = u_value(xv);
    }
    for (double xv : u_derivs_) {
        x[k++] = u_deriv(xv);
    }
    x.segment<2>(off_theta_u_) = log_theta;
    if (has_latent_g()) {
        const auto J = static_cast<Eigen::Index>(grid_.size());
        for (Eigen::Index j = 0; j < J; ++j) {
            x[nu_ + j] = -(grid_.points[static_cast<std::size_t>(j)] - center) / half;
            x[nu_ + J + j] = -1.0 / half;
        }
        x.segment<2>(off_theta_g_) = log_theta;
    }

    // Ridge projection onto the prior: v = L^T (K + lambda I)^-1 f0 keeps the
    // whitened norm moderate while f = L v stays close to f0.
    Eigen::VectorXd z = x;
    const std::vector<double> g_derivs = grid_.points;
    auto project = [&](const std::vector<double>& values, const std::vector<double>& derivs, Eigen::Index off,
                       Eigen::Index size, Eigen::Index theta_off) {
        Eigen::MatrixXd cov;
        Eigen::MatrixXd lower;
        prior_covariance(values, derivs, KernelParams::from_log(x.segment<2>(theta_off)), cov);
        cholesky_with_jitter_into(cov, lower);
        Eigen::MatrixXd ridge = cov;
        ridge.diagonal().array() += 1e-3;
        const Eigen::VectorXd a = ridge.ldlt().solve(x.segment(off, size));
        z.segment(off, size) = lower.triangularView<Eigen::Lower>().transpose() * a;
    };
    project(u_values_, u_derivs_, 0, nu_, off_theta_u_);
    if (has_latent_g()) {
        project(g_values_, g_derivs, nu_, ng_, off_theta_g_);
    }
    return z;
}

// ---------------------------------------------------------------------------

ConstrainedGp make_preference_model(const PreferenceDataset& data,
                                    const VirtualGrid& grid,
                                    const ModelConstants& c,
                                    const HyperPrior& hp)
{
    data.validate();
    return ConstrainedGp(grid, ShapeConstraint::Unimodal, PreferenceObservations{data.temps, data.responses}, c, hp);
}

double log_posterior(const LatentState& state,
                     const PreferenceDataset& data,
                     const VirtualGrid& grid,
                     const ModelConstants& c,
                     const HyperPrior& hp)
{
    const ConstrainedGp model = make_preference_model(data, grid, c, hp);
    return model.log_density(model.pack(state));
}

LatentState grad_log_posterior(const LatentState& state,
                               const PreferenceDataset& data,
                               const VirtualGrid& grid,
                               const ModelConstants& c,
                               const HyperPrior& hp)
{
    const ConstrainedGp model = make_preference_model(data, grid, c, hp);
    Eigen::VectorXd grad;
    model.log_density(model.pack(state), &grad);
    return model.unpack(grad);
}

RegressionData regression_d1()
{
    return {{0.0, 1.0}, {10.0, 0.0}};
}

RegressionData regression_d2()
{
    return {{0.0, 0.33, 0.66, 1.0}, {0.0, 1.33, 1.33, 0.0}};
}

ConstrainedGp build_regression_posterior(std::span<const double> x,
                                         std::span<const double> y,
                                         RegressionMode mode,
                                         const VirtualGrid& grid,
                                         const RegressionOptions& options)
{
    require(!x.empty(), "build_regression_posterior: empty data");
    require(x.size() == y.size(), "build_regression_posterior: length mismatch");
    ShapeConstraint shape = ShapeConstraint::None;
    switch (mode) {
    case RegressionMode::Unconstrained: shape = ShapeConstraint::None; break;
    case RegressionMode::MonotoneDecreasing: shape = ShapeConstraint::MonotoneDecreasing; break;
    case RegressionMode::Unimodal: shape = ShapeConstraint::Unimodal; break;
    }
    RegressionObservations obs{{x.begin(), x.end()}, {y.begin(), y.end()}, options.noise_sd};
    return ConstrainedGp(grid, shape, std::move(obs), options.constants, options.hyper);
}

} // namespace therm
