#include "therm/kernel.hpp"

#include "therm/errors.hpp"

#include <cmath>
#include <string>

namespace therm {

namespace {

void require_finite(double x, double x2)
{
    if (!std::isfinite(x) || !std::isfinite(x2)) {
        throw DomainError("kernel inputs must be finite");
    }
}

} // namespace

KernelParams KernelParams::from_log(const Eigen::Vector2d& log_theta)
{
    return KernelParams{std::exp(log_theta[0]), std::exp(log_theta[1])};
}

void KernelParams::validate() const
{
    if (!(std::isfinite(signal_variance) && signal_variance > 0.0)) {
        throw DomainError("signal_variance must be finite and > 0");
    }
    if (!(std::isfinite(lengthscale) && lengthscale > 0.0)) {
        throw DomainError("lengthscale must be finite and > 0");
    }
}

double se_kernel(double x, double x2, const KernelParams& p)
{
    require_finite(x, x2);
    p.validate();
    const double r = x - x2;
    return p.signal_variance * std::exp(-0.5 * r * r / (p.lengthscale * p.lengthscale));
}

double se_kernel_grad_x(double x, double x2, const KernelParams& p)
{
    const double inv_l2 = 1.0 / (p.lengthscale * p.lengthscale);
    return -se_kernel(x, x2, p) * (x - x2) * inv_l2;
}

double se_kernel_grad_xx(double x, double x2, const KernelParams& p)
{
    const double inv_l2 = 1.0 / (p.lengthscale * p.lengthscale);
    const double r = x - x2;
    return se_kernel(x, x2, p) * inv_l2 * (1.0 - r * r * inv_l2);
}

void fill_joint(std::span<const double> value_points,
                std::span<const double> deriv_points,
                const KernelParams& p,
                Eigen::MatrixXd& cov,
                Eigen::MatrixXd* d_log_rho)
{
    const auto nv = static_cast<Eigen::Index>(value_points.size());
    const auto nd = static_cast<Eigen::Index>(deriv_points.size());
    const Eigen::Index n = nv + nd;
    if (n == 0) {
        throw DomainError("assemble_joint: no value or derivative points");
    }
    cov.resize(n, n);
    if (d_log_rho != nullptr) {
        d_log_rho->resize(n, n);
    }

    const double nu = p.signal_variance;
    const double inv_l2 = 1.0 / (p.lengthscale * p.lengthscale);
    auto point = [&](Eigen::Index i) {
        return i < nv ? value_points[static_cast<std::size_t>(i)]
                      : deriv_points[static_cast<std::size_t>(i - nv)];
    };

    for (Eigen::Index i = 0; i < n; ++i) {
        const double xi = point(i);
        for (Eigen::Index j = 0; j <= i; ++j) {
            const double xj = point(j);
            if (!std::isfinite(xi) || !std::isfinite(xj)) {
                throw DomainError("kernel inputs must be finite");
            }
            const double r = xi - xj;
            const double s = r * r * inv_l2;
            const double k = nu * std::exp(-0.5 * s);
            double value = 0.0;
            double dlog = 0.0;
            const bool di = i >= nv;
            const bool dj = j >= nv;
            if (!di && !dj) {
                value = k;
                dlog = k * s;
            } else if (di && dj) {
                value = k * inv_l2 * (1.0 - s);
                dlog = k * inv_l2 * (-2.0 + 5.0 * s - s * s);
            } else {
                // Row index is the derivative point: C[u'(x_d), u(x_v)] = dk/dx_d.
                const double rd = di ? r : -r;
                value = -k * rd * inv_l2;
                dlog = value * (s - 2.0);
            }
            cov(i, j) = value;
            cov(j, i) = value;
            if (d_log_rho != nullptr) {
                (*d_log_rho)(i, j) = dlog;
                (*d_log_rho)(j, i) = dlog;
            }
        }
    }
}

JointCovariance assemble_joint(std::span<const double> value_points,
                               std::span<const double> deriv_points,
                               const KernelParams& p)
{
    p.validate();
    JointCovariance out;
    fill_joint(value_points, deriv_points, p, out.matrix);
    out.value_points.assign(value_points.begin(), value_points.end());
    out.deriv_points.assign(deriv_points.begin(), deriv_points.end());
    return out;
}

double CholeskyFactor::log_det() const
{
    return 2.0 * lower.diagonal().array().log().sum();
}

Eigen::VectorXd CholeskyFactor::solve(const Eigen::VectorXd& b) const
{
    Eigen::VectorXd x = lower.triangularView<Eigen::Lower>().solve(b);
    lower.triangularView<Eigen::Lower>().transpose().solveInPlace(x);
    return x;
}

double cholesky_with_jitter_into(const Eigen::MatrixXd& matrix, Eigen::MatrixXd& lower)
{
    if (matrix.rows() != matrix.cols()) {
        throw DomainError("cholesky_with_jitter: matrix must be square");
    }
    if (!matrix.allFinite()) {
        throw NumericalError("cholesky_with_jitter: matrix has non-finite entries", 0.0);
    }
    // Decade steps from kMinJitter to kMaxJitter, counted to avoid drift.
    constexpr int kSteps = 4;
    for (int step = 0;; ++step) {
        const double jitter = kMinJitter * std::pow(10.0, step);
        lower = matrix;
        lower.diagonal().array() += jitter;
        Eigen::LLT<Eigen::Ref<Eigen::MatrixXd>> llt(lower);
        if (llt.info() == Eigen::Success && lower.diagonal().allFinite()
            && (lower.diagonal().array() > 0.0).all()) {
            lower.triangularView<Eigen::StrictlyUpper>().setZero();
            return jitter;
        }
        if (step >= kSteps) {
            throw NumericalError("cholesky_with_jitter: factorization failed at jitter "
                                     + std::to_string(jitter),
                                 jitter);
        }
    }
}

CholeskyFactor cholesky_with_jitter(const Eigen::MatrixXd& matrix)
{
    CholeskyFactor out;
    out.jitter = cholesky_with_jitter_into(matrix, out.lower);
    return out;
}

CholeskyFactor cholesky_with_jitter(const JointCovariance& cov)
{
    return cholesky_with_jitter(cov.matrix);
}

} // namespace therm
