#include "therm/errors.hpp"
#include "therm/kernel.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

using namespace therm;

TEST(SeKernel, ZeroDistanceIsSignalVariance)
{
    EXPECT_DOUBLE_EQ(se_kernel(21.0, 21.0, {2.0, 1.5}), 2.0);
}

TEST(SeKernel, ScalarValues)
{
    EXPECT_NEAR(se_kernel(0.0, 1.0, {1.0, 1.0}), 0.606530659712633, 1e-14);
    EXPECT_NEAR(se_kernel(20.0, 28.0, {1.0, 1.0}), std::exp(-32.0), 1e-28);
}

TEST(SeKernel, NonFiniteInputThrows)
{
    const double nan = std::numeric_limits<double>::quiet_NaN();
    EXPECT_THROW(se_kernel(nan, 1.0, {1.0, 1.0}), DomainError);
    EXPECT_THROW(se_kernel_grad_x(1.0, nan, {1.0, 1.0}), DomainError);
    EXPECT_THROW(se_kernel_grad_xx(1.0, 1.0, {nan, 1.0}), DomainError);
    EXPECT_THROW(se_kernel(1.0, 1.0, {1.0, -1.0}), DomainError);
}

TEST(SeKernelGrad, OddAndSigned)
{
    const KernelParams p{1.0, 1.0};
    EXPECT_DOUBLE_EQ(se_kernel_grad_x(23.0, 23.0, p), 0.0);
    EXPECT_NEAR(se_kernel_grad_x(1.0, 0.0, p), -std::exp(-0.5), 1e-12);
    EXPECT_NEAR(se_kernel_grad_x(0.0, 1.0, p), std::exp(-0.5), 1e-12);

    const double h = 1e-6;
    const double fd = (se_kernel(1.0 + h, 0.0, p) - se_kernel(1.0 - h, 0.0, p)) / (2 * h);
    EXPECT_NEAR(se_kernel_grad_x(1.0, 0.0, p), fd, 1e-6);
}

TEST(SeKernelGradXX, Values)
{
    EXPECT_NEAR(se_kernel_grad_xx(22.0, 22.0, {3.0, 0.5}), 3.0 / 0.25, 1e-12);
    EXPECT_NEAR(se_kernel_grad_xx(0.0, 1.0, {1.0, 1.0}), 0.0, 1e-15);
    EXPECT_NEAR(se_kernel_grad_xx(0.0, 3.0, {1.0, 1.0}), std::exp(-4.5) * (1.0 - 9.0), 1e-12);
    EXPECT_NEAR(se_kernel_grad_xx(0.0, 3.0, {1.0, 1.0}), -0.0888711, 1e-6);
}

TEST(SeKernelGrad, RandomFiniteDifferenceSweep)
{
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> xs(18.0, 30.0);
    std::uniform_real_distribution<double> log_p(-1.5, 1.5);
    for (int t = 0; t < 1000; ++t) {
        const double x = xs(rng);
        const double x2 = xs(rng);
        const KernelParams p{std::exp(log_p(rng)), std::exp(log_p(rng))};

        const double h1 = 1e-6;
        const double fd1 = (se_kernel(x + h1, x2, p) - se_kernel(x - h1, x2, p)) / (2 * h1);
        const double a1 = se_kernel_grad_x(x, x2, p);
        EXPECT_LE(std::abs(a1 - fd1) / std::max(std::abs(a1), 1e-6), 1e-5) << x << " " << x2;

        const double h2 = 1e-4;
        const double fd2 = (se_kernel(x + h2, x2 + h2, p) - se_kernel(x + h2, x2 - h2, p)
                            - se_kernel(x - h2, x2 + h2, p) + se_kernel(x - h2, x2 - h2, p))
                           / (4 * h2 * h2);
        const double a2 = se_kernel_grad_xx(x, x2, p);
        EXPECT_LE(std::abs(a2 - fd2) / std::max(std::abs(a2), 1e-4), 1e-4) << x << " " << x2;

        EXPECT_LE(se_kernel(x, x2, p), se_kernel(x, x, p));
    }
}

TEST(AssembleJoint, SmallCases)
{
    const std::vector<double> one{21.0};
    const std::vector<double> none;
    const JointCovariance a = assemble_joint(one, none, {2.5, 1.0});
    ASSERT_EQ(a.size(), 1);
    EXPECT_DOUBLE_EQ(a.matrix(0, 0), 2.5);

    const JointCovariance b = assemble_joint(one, one, {1.0, 1.0});
    ASSERT_EQ(b.size(), 2);
    EXPECT_TRUE(b.matrix.isApprox(Eigen::Matrix2d::Identity(), 1e-15));

    EXPECT_THROW(assemble_joint(none, none, {1.0, 1.0}), DomainError);
}

TEST(AssembleJoint, CrossBlockUsesDerivativeRowConvention)
{
    // Row for u'(22) against column u(21) is dk/dx at (22, 21).
    const std::vector<double> v{21.0};
    const std::vector<double> d{22.0};
    const KernelParams p{1.3, 0.8};
    const JointCovariance c = assemble_joint(v, d, p);
    EXPECT_NEAR(c.matrix(1, 0), se_kernel_grad_x(22.0, 21.0, p), 1e-15);
    EXPECT_NEAR(c.matrix(0, 1), c.matrix(1, 0), 1e-15);
}

TEST(AssembleJoint, VirtualGridIsPsdAndSymmetric)
{
    std::vector<double> grid;
    for (int j = 0; j <= 16; ++j) {
        grid.push_back(20.0 + 0.5 * j);
    }
    const JointCovariance c = assemble_joint(grid, grid, {1.0, 2.0});
    ASSERT_EQ(c.size(), 34);
    const double scale = c.matrix.cwiseAbs().maxCoeff();
    EXPECT_LE((c.matrix - c.matrix.transpose()).cwiseAbs().maxCoeff(), 1e-12 * scale);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(c.matrix);
    EXPECT_GE(eig.eigenvalues().minCoeff(), -1e-8);
    EXPECT_NO_THROW(cholesky_with_jitter(c));
}

TEST(AssembleJoint, ExchangeSymmetric)
{
    const std::vector<double> v{20.0, 23.5, 27.0};
    const std::vector<double> d{21.0, 25.5};
    std::vector<double> vp{27.0, 20.0, 23.5};
    std::vector<double> dp{25.5, 21.0};
    const KernelParams p{0.7, 1.9};
    const Eigen::MatrixXd a = assemble_joint(v, d, p).matrix;
    const Eigen::MatrixXd b = assemble_joint(vp, dp, p).matrix;
    const std::vector<int> perm{2, 0, 1, 4, 3};
    for (int i = 0; i < 5; ++i) {
        for (int j = 0; j < 5; ++j) {
            EXPECT_DOUBLE_EQ(b(i, j), a(perm[i], perm[j]));
        }
    }
}

TEST(FillJoint, LogLengthscaleDerivativeMatchesFiniteDifference)
{
    const std::vector<double> v{20.0, 21.7, 24.0};
    const std::vector<double> d{20.5, 21.7, 26.0};
    const double log_rho = std::log(1.7);
    Eigen::MatrixXd cov;
    Eigen::MatrixXd d_rho;
    fill_joint(v, d, {1.4, std::exp(log_rho)}, cov, &d_rho);
    const double h = 1e-6;
    Eigen::MatrixXd up;
    Eigen::MatrixXd dn;
    fill_joint(v, d, {1.4, std::exp(log_rho + h)}, up);
    fill_joint(v, d, {1.4, std::exp(log_rho - h)}, dn);
    const Eigen::MatrixXd fd = (up - dn) / (2 * h);
    EXPECT_LE((fd - d_rho).cwiseAbs().maxCoeff(), 1e-7);
}

TEST(Cholesky, IdentityNeedsOnlyMinimalJitter)
{
    const CholeskyFactor f = cholesky_with_jitter(Eigen::MatrixXd::Identity(3, 3));
    EXPECT_TRUE(f.lower.isApprox(Eigen::MatrixXd::Identity(3, 3), 1e-7));
    EXPECT_DOUBLE_EQ(f.jitter, kMinJitter);
}

TEST(Cholesky, RankDeficientUsesJitterPath)
{
    Eigen::Matrix2d m;
    m << 1, 1, 1, 1;
    const CholeskyFactor f = cholesky_with_jitter(m);
    EXPECT_LE(f.jitter, 1e-6);
    Eigen::Matrix2d expect = m;
    expect.diagonal().array() += f.jitter;
    EXPECT_TRUE((f.lower * f.lower.transpose()).isApprox(expect, 1e-12));
}

TEST(Cholesky, NanAndIndefiniteFail)
{
    Eigen::Matrix2d m = Eigen::Matrix2d::Identity();
    m(0, 1) = std::numeric_limits<double>::quiet_NaN();
    EXPECT_THROW(cholesky_with_jitter(Eigen::MatrixXd(m)), NumericalError);

    Eigen::Matrix2d neg;
    neg << 1, 0, 0, -1;
    try {
        (void)cholesky_with_jitter(Eigen::MatrixXd(neg));
        FAIL() << "expected NumericalError";
    } catch (const NumericalError& e) {
        EXPECT_DOUBLE_EQ(e.jitter(), kMaxJitter);
    }
}

TEST(Cholesky, SolveAndLogDet)
{
    Eigen::Matrix3d a;
    a << 4, 1, 0.5, 1, 3, 0.2, 0.5, 0.2, 2;
    const CholeskyFactor f = cholesky_with_jitter(Eigen::MatrixXd(a));
    const Eigen::Vector3d b(1.0, -2.0, 0.5);
    Eigen::Matrix3d aj = a;
    aj.diagonal().array() += f.jitter;
    EXPECT_TRUE(f.solve(b).isApprox(aj.inverse() * b, 1e-10));
    EXPECT_NEAR(f.log_det(), std::log(aj.determinant()), 1e-10);
}
