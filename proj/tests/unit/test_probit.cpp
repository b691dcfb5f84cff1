#include "therm/probit.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace therm;

TEST(Probit, MatchesDirectEvaluationInTheBulk)
{
    for (double z = -7.5; z <= 8.0; z += 0.25) {
        EXPECT_NEAR(log_normal_cdf(z), std::log(0.5 * std::erfc(-z / std::sqrt(2.0))), 1e-12) << z;
    }
    EXPECT_NEAR(normal_cdf(1.0), 0.841344746068543, 1e-14);
    EXPECT_NEAR(normal_pdf(0.0), 0.398942280401433, 1e-14);
}

TEST(Probit, ContinuousAcrossSeriesSwitch)
{
    const double below = log_normal_cdf(-8.0 - 1e-12);
    const double above = log_normal_cdf(-8.0 + 1e-12);
    EXPECT_NEAR(below, above, 1e-10);
    EXPECT_NEAR(d_log_normal_cdf(-8.0 - 1e-12), d_log_normal_cdf(-8.0 + 1e-12), 1e-9);
    EXPECT_NEAR(log_normal_cdf(-8.0), std::log(6.22096057427178e-16), 1e-10);
}

TEST(Probit, FarTailFollowsLeadingAsymptote)
{
    const double z = -1000.0;
    const double leading = -0.5 * z * z - std::log(-z * std::sqrt(2.0 * M_PI));
    EXPECT_NEAR(log_normal_cdf(z), leading, 2e-6);
    EXPECT_NEAR(log_normal_cdf(z), -500007.826695, 1e-5);
    EXPECT_TRUE(std::isfinite(log_normal_cdf(-1e6)));
}

TEST(Probit, SaturatedPositiveTailIsZero)
{
    EXPECT_EQ(log_normal_cdf(1e6), 0.0);
    EXPECT_NEAR(log_normal_cdf(10.0), -7.61985302416e-24, 1e-30);
}

TEST(Probit, MillsRatioMatchesDerivative)
{
    for (double z : {-1e4, -40.0, -9.0, -8.0, -3.0, 0.0, 2.5, 9.0}) {
        const double h = 1e-6 * std::max(1.0, std::abs(z));
        const double fd = (log_normal_cdf(z + h) - log_normal_cdf(z - h)) / (2 * h);
        EXPECT_NEAR(d_log_normal_cdf(z), fd, 1e-6 * std::max(1.0, std::abs(fd))) << z;
    }
    // phi/Phi ~ -z in the far tail.
    EXPECT_NEAR(d_log_normal_cdf(-1e6) / 1e6, 1.0, 1e-9);
}
