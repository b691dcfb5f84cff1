#pragma once

#include <Eigen/Dense>

#include <span>
#include <vector>

namespace therm {

/// Hyperparameters of the squared-exponential covariance.
struct KernelParams {
    double signal_variance = 1.0;
    double lengthscale = 1.0;

    /// Builds parameters from (log signal variance, log lengthscale).
    static KernelParams from_log(const Eigen::Vector2d& log_theta);

    /// Throws DomainError unless both fields are finite and positive.
    void validate() const;
};

/// k(x, x2) = signal_variance * exp(-(x - x2)^2 / (2 lengthscale^2)).
double se_kernel(double x, double x2, const KernelParams& p);

/// Covariance between u'(x) and u(x2), i.e. dk/dx.
double se_kernel_grad_x(double x, double x2, const KernelParams& p);

/// Covariance between u'(x) and u'(x2), i.e. d^2k / dx dx2.
double se_kernel_grad_xx(double x, double x2, const KernelParams& p);

/// Joint covariance of function values and derivatives.
///
/// Rows/columns are ordered as all value points first, then all derivative
/// points, each in the order given.
struct JointCovariance {
    Eigen::MatrixXd matrix;
    std::vector<double> value_points;
    std::vector<double> deriv_points;

    [[nodiscard]] Eigen::Index size() const noexcept { return matrix.rows(); }
};

JointCovariance assemble_joint(std::span<const double> value_points,
                               std::span<const double> deriv_points,
                               const KernelParams& p);

/// Fills `cov` with the joint covariance and, if requested, `d_log_rho` with
/// its elementwise derivative w.r.t. log(lengthscale). The derivative w.r.t.
/// log(signal_variance) is `cov` itself. Buffers are resized as needed.
void fill_joint(std::span<const double> value_points,
                std::span<const double> deriv_points,
                const KernelParams& p,
                Eigen::MatrixXd& cov,
                Eigen::MatrixXd* d_log_rho = nullptr);

/// Lower Cholesky factor of (matrix + jitter * I).
struct CholeskyFactor {
    Eigen::MatrixXd lower;
    double jitter = 0.0;

    /// log det(matrix + jitter * I).
    [[nodiscard]] double log_det() const;
    /// Solves (matrix + jitter * I) x = b.
    [[nodiscard]] Eigen::VectorXd solve(const Eigen::VectorXd& b) const;
};

/// Jitter schedule used by cholesky_with_jitter.
inline constexpr double kMinJitter = 1e-8;
inline constexpr double kMaxJitter = 1e-4;

/// Factorizes a symmetric matrix, escalating diagonal jitter from 1e-8 to
/// 1e-4 in decade steps until the factorization succeeds. Throws
/// NumericalError (carrying the last jitter tried) on failure.
CholeskyFactor cholesky_with_jitter(const Eigen::MatrixXd& matrix);
CholeskyFactor cholesky_with_jitter(const JointCovariance& cov);

/// In-place variant for hot loops: factorizes into `lower` and returns the
/// jitter used.
double cholesky_with_jitter_into(const Eigen::MatrixXd& matrix, Eigen::MatrixXd& lower);

} // namespace therm
