#pragma once

#include "therm/kernel.hpp"

#include <Eigen/Dense>

#include <cstddef>
#include <optional>
#include <span>
#include <variant>
#include <vector>

namespace therm {

/// Admissible indoor air temperatures, degrees C.
inline constexpr double kTempMin = 20.0;
inline constexpr double kTempMax = 28.0;

/// Dense set of points carrying the virtual derivative constraints.
struct VirtualGrid {
    std::vector<double> points;

    /// 20.0, 20.5, ..., 28.0 (17 points).
    static VirtualGrid standard();
    static VirtualGrid uniform(double lo, double hi, std::size_t count);

    [[nodiscard]] std::size_t size() const noexcept { return points.size(); }
    [[nodiscard]] double lo() const { return points.front(); }
    [[nodiscard]] double hi() const { return points.back(); }
    [[nodiscard]] std::optional<std::size_t> index_of(double x, double tol = 1e-9) const;

    /// Throws DomainError unless non-empty, finite and strictly increasing.
    void validate() const;
};

/// Probit saturation constants of the unimodal model.
struct ModelConstants {
    double nu_g = 1e6;        ///< monotonicity of the latent process g
    double nu_y_tilde = 1.0;  ///< coupling between sign(u') and g
    double nu_v = 1e6;        ///< sharpness of the sign(u') indicator
    double nu_l = 1.0;        ///< noise of occupant responses
    /// Relative nugget added to both GP prior covariances, K + nugget * nu * I.
    /// Keeps the whitened parameterization smooth when the lengthscale is
    /// long compared with the grid spacing.
    double prior_nugget = 0.0;

    void validate() const;
};

/// Gamma(shape, scale) priors on signal variance (1) and lengthscale (2).
struct HyperPrior {
    double shape1 = 1.0;
    double scale1 = 1.0;
    double shape2 = 1.0;
    double scale2 = 1.0;
};

/// Response codes: -1 prefer cooler, 0 satisfied, +1 prefer warmer.
struct PreferenceDataset {
    std::vector<double> temps;
    std::vector<int> responses;

    void add(double temp, int response);
    [[nodiscard]] std::size_t size() const noexcept { return temps.size(); }
    [[nodiscard]] bool empty() const noexcept { return temps.empty(); }

    /// Throws DomainError on length mismatch, temperature outside
    /// [20, 28] or a response outside {-1, 0, 1}.
    void validate() const;
};

/// One joint configuration of the latent variables.
///
/// `du_obs` holds u' at the distinct observed temperatures that are not
/// virtual grid points; observations on the grid share the grid coordinate
/// in `du_virt`. `u_obs` is the analogue for value observations and is only
/// used by the regression variants. `g_virt`/`dg_virt`/`log_theta_g` are
/// empty/unused for models without the latent monotonic process.
struct LatentState {
    Eigen::VectorXd u_virt;
    Eigen::VectorXd du_virt;
    Eigen::VectorXd u_obs;
    Eigen::VectorXd du_obs;
    Eigen::VectorXd g_virt;
    Eigen::VectorXd dg_virt;
    Eigen::Vector2d log_theta_u = Eigen::Vector2d::Zero();
    Eigen::Vector2d log_theta_g = Eigen::Vector2d::Zero();

    [[nodiscard]] KernelParams theta_u() const { return KernelParams::from_log(log_theta_u); }
    [[nodiscard]] KernelParams theta_g() const { return KernelParams::from_log(log_theta_g); }
    [[nodiscard]] bool all_finite() const;
};

// ---------------------------------------------------------------------------
// Density components

/// log N(v | 0, K + jitter I).
double log_gaussian_block(const Eigen::VectorXd& values_and_derivs, const JointCovariance& cov);

/// sum_j log Phi(-nu_g * dg_virt[j]).
double log_monotonic_factor(const Eigen::VectorXd& dg_virt, const ModelConstants& c);

/// sum_j log[Phi(-nu_v u'_j) Phi(-nu_y g_j) + Phi(nu_v u'_j) Phi(nu_y g_j)],
/// the sign coupling with the virtual sign labels summed out.
double log_sign_coupling(const Eigen::VectorXd& du_virt,
                         const Eigen::VectorXd& g_virt,
                         const ModelConstants& c);

/// sum_i log Phi(nu_l * y_i * du[i]); `du_at_obs` has one entry per
/// observation. A satisfied response (y = 0) contributes log 0.5.
double log_likelihood(const PreferenceDataset& data,
                      const Eigen::VectorXd& du_at_obs,
                      const ModelConstants& c);

/// Gamma log density of exp(log_theta) plus the log-Jacobian log_theta.
double log_hyperprior(const Eigen::Vector2d& log_theta, const HyperPrior& hp);

/// log N(y | f, sigma^2 I).
double regression_log_likelihood(const Eigen::VectorXd& y, const Eigen::VectorXd& f, double sigma);

// ---------------------------------------------------------------------------
// Full posterior

enum class ShapeConstraint { None, MonotoneDecreasing, Unimodal };

/// Ternary preference responses informing the sign of u' at `temps`.
struct PreferenceObservations {
    std::vector<double> temps;
    std::vector<int> responses;
};

/// Noisy function values y = u(x) + eps, eps ~ N(0, sigma^2).
struct RegressionObservations {
    std::vector<double> x;
    std::vector<double> y;
    double sigma = 0.1;
};

using Observations = std::variant<PreferenceObservations, RegressionObservations>;

/// Shape-constrained GP posterior over a flat parameter vector.
///
/// Natural layout: [u block | g block | log theta_u | log theta_g], where the
/// u block follows the JointCovariance ordering (values on grid, extra value
/// points, derivatives on grid, extra derivative points) and the g block is
/// (g on grid, g' on grid). The whitened layout is identical except that each
/// block holds v with f = L(theta) v, which is what the sampler explores.
class ConstrainedGp {
public:
    ConstrainedGp(VirtualGrid grid,
                  ShapeConstraint shape,
                  Observations observations,
                  ModelConstants constants = {},
                  HyperPrior hyper = {});

    [[nodiscard]] Eigen::Index dimension() const noexcept { return dim_; }
    [[nodiscard]] const VirtualGrid& grid() const noexcept { return grid_; }
    [[nodiscard]] ShapeConstraint shape() const noexcept { return shape_; }
    [[nodiscard]] const ModelConstants& constants() const noexcept { return c_; }
    [[nodiscard]] bool has_latent_g() const noexcept { return shape_ == ShapeConstraint::Unimodal; }
    [[nodiscard]] const std::vector<double>& u_value_points() const noexcept { return u_values_; }
    [[nodiscard]] const std::vector<double>& u_deriv_points() const noexcept { return u_derivs_; }

    [[nodiscard]] Eigen::VectorXd pack(const LatentState& state) const;
    [[nodiscard]] LatentState unpack(const Eigen::VectorXd& natural) const;

    /// Unnormalized log posterior in natural coordinates; fills `grad` if given.
    double log_density(const Eigen::VectorXd& natural, Eigen::VectorXd* grad = nullptr) const;

    /// Same posterior expressed in whitened coordinates (includes the
    /// Jacobian of f = L v, which cancels the Gaussian normalizer).
    double log_density_whitened(const Eigen::VectorXd& whitened, Eigen::VectorXd* grad = nullptr) const;

    [[nodiscard]] Eigen::VectorXd to_natural(const Eigen::VectorXd& whitened) const;
    [[nodiscard]] Eigen::VectorXd to_whitened(const Eigen::VectorXd& natural) const;

    /// Deterministic starting point: g decreasing linearly from +1 to -1
    /// across the grid, u' sharing its sign, hyperparameters at unit signal
    /// variance and a lengthscale of a quarter of the grid span.
    [[nodiscard]] Eigen::VectorXd initial_whitened() const;

    // ---- Support for the boundary-aware latent sampler ------------------
    // With hyperparameters fixed, each probit factor whose constant is at
    // least kSaturated acts as a step across a hyperplane row(L) v = 0 in
    // whitened coordinates: a hard wall (monotone factor) or a finite jump
    // (sign coupling of u' with g).

    static constexpr double kSaturated = 1e4;

    struct Boundary {
        bool in_g_block;     // row belongs to the g block, else the u block
        Eigen::Index row;    // row within that block
        Eigen::Index grid_index;
        bool wall;           // true: density vanishes past it; false: sign switch
    };

    [[nodiscard]] std::vector<Boundary> saturated_boundaries() const;

    /// Change in log density when u' at a grid point flips away from
    /// `from_sign` while the latent g there equals `g`.
    [[nodiscard]] double sign_switch_delta(double g, int from_sign) const;

    /// Non-Gaussian terms in the saturated limit given the sign of u' at
    /// every sign-switch boundary (in saturated_boundaries() order, walls
    /// included as placeholders). Gradients are w.r.t. the natural latent
    /// blocks. Constant terms are omitted.
    double saturated_terms(const Eigen::VectorXd& fu,
                           const Eigen::VectorXd& fg,
                           std::span<const int> signs,
                           Eigen::VectorXd& grad_u,
                           Eigen::VectorXd& grad_g) const;

    /// Exact non-Gaussian terms (shape factors and likelihood) at natural
    /// latent blocks, matching log_density up to the prior blocks and
    /// hyperpriors.
    [[nodiscard]] double exact_terms(const Eigen::VectorXd& fu, const Eigen::VectorXd& fg) const;

    /// Cholesky factors of both prior blocks at the hyperparameters in `whitened`.
    void latent_factors(const Eigen::VectorXd& whitened, Eigen::MatrixXd& lu, Eigen::MatrixXd& lg) const;
    /// Cholesky factor of one prior block (u, or g when `g_block`).
    void block_factor(const Eigen::VectorXd& whitened, bool g_block, Eigen::MatrixXd& lower) const;
    /// Log hyperprior on the log hyperparameters, Jacobian included.
    [[nodiscard]] double hyper_log_prior(const Eigen::VectorXd& whitened) const { return hyper_terms(whitened, nullptr); }

    [[nodiscard]] Eigen::Index u_block_size() const noexcept { return nu_; }
    [[nodiscard]] Eigen::Index g_block_size() const noexcept { return ng_; }
    [[nodiscard]] Eigen::Index theta_offset() const noexcept { return off_theta_u_; }

    /// u'(x_i) (preference) or u(x_i) (regression) for every observation.
    [[nodiscard]] Eigen::VectorXd observed_latents(const Eigen::VectorXd& natural) const;

private:
    double shape_and_data(const Eigen::VectorXd& fu,
                          const Eigen::VectorXd& fg,
                          Eigen::VectorXd* grad_u,
                          Eigen::VectorXd* grad_g) const;
    double hyper_terms(const Eigen::VectorXd& x, Eigen::VectorXd* grad) const;
    void prior_covariance(const std::vector<double>& values,
                          const std::vector<double>& derivs,
                          const KernelParams& p,
                          Eigen::MatrixXd& cov,
                          Eigen::MatrixXd* d_log_rho = nullptr) const;

    VirtualGrid grid_;
    ShapeConstraint shape_;
    Observations obs_;
    ModelConstants c_;
    HyperPrior hp_;

    std::vector<double> u_values_;
    std::vector<double> u_derivs_;
    std::vector<double> g_values_;
    std::vector<Eigen::Index> obs_index_;  // per observation, index into the u block
    Eigen::Index nu_ = 0;
    Eigen::Index ng_ = 0;
    Eigen::Index off_theta_u_ = 0;
    Eigen::Index off_theta_g_ = 0;
    Eigen::Index dim_ = 0;
};

/// Unimodal preference posterior for a dataset.
ConstrainedGp make_preference_model(const PreferenceDataset& data,
                                    const VirtualGrid& grid = VirtualGrid::standard(),
                                    const ModelConstants& c = {},
                                    const HyperPrior& hp = {});

/// Unnormalized log posterior of the unimodal preference model.
double log_posterior(const LatentState& state,
                     const PreferenceDataset& data,
                     const VirtualGrid& grid,
                     const ModelConstants& c,
                     const HyperPrior& hp);

/// Gradient of log_posterior, laid out as a LatentState.
LatentState grad_log_posterior(const LatentState& state,
                               const PreferenceDataset& data,
                               const VirtualGrid& grid,
                               const ModelConstants& c,
                               const HyperPrior& hp);

/// Regression variants on (x, y) data.
enum class RegressionMode { Unconstrained, MonotoneDecreasing, Unimodal };

struct RegressionOptions {
    double noise_sd = 0.1;
    ModelConstants constants{};
    HyperPrior hyper{};
};

/// Reference (x, y) sets: D1 falls from 10 to 0 over [0, 1]; D2 samples a
/// bump peaking at x = 0.5.
struct RegressionData {
    std::vector<double> x;
    std::vector<double> y;
};
RegressionData regression_d1();
RegressionData regression_d2();

ConstrainedGp build_regression_posterior(std::span<const double> x,
                                         std::span<const double> y,
                                         RegressionMode mode,
                                         const VirtualGrid& grid,
                                         const RegressionOptions& options = {});

} // namespace therm
