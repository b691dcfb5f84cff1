#include "therm/errors.hpp"
#include "therm/predict.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace therm;

namespace {

LatentState state_with(const Eigen::VectorXd& u, double signal_variance, double lengthscale)
{
    LatentState s;
    s.u_virt = u;
    s.du_virt = Eigen::VectorXd::Zero(u.size());
    s.log_theta_u = Eigen::Vector2d(std::log(signal_variance), std::log(lengthscale));
    return s;
}

Eigen::VectorXd vec(std::initializer_list<double> xs)
{
    Eigen::VectorXd v(static_cast<Eigen::Index>(xs.size()));
    Eigen::Index i = 0;
    for (double x : xs) {
        v[i++] = x;
    }
    return v;
}

/// A one-hot utility peaking at grid index k.
LatentState peak_at(std::size_t k, std::size_t J)
{
    Eigen::VectorXd u = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(J));
    u[static_cast<Eigen::Index>(k)] = 1.0;
    return state_with(u, 1.0, 1.0);
}

} // namespace

TEST(SampleConditioner, TwoPointClosedForm)
{
    // Grid {20, 22}, x = 21 sits halfway, so the conditional is symmetric:
    //   mean = e^{-1/8} (a + b) / (1 + e^{-1/2})
    //   var  = s2 (1 - 2 e^{-1/4} / (1 + e^{-1/2}))      for rho = 2.
    // The factorization always adds kMinJitter to the diagonal, which shifts
    // both moments by O(1e-8).
    const VirtualGrid grid{{20.0, 22.0}};
    const double a = 0.7;
    const double b = -0.2;
    const double s2 = 1.5;
    const PredictiveMoments m = predictive_moments(21.0, state_with(vec({a, b}), s2, 2.0), grid);
    const double r = std::exp(-0.5);
    EXPECT_NEAR(m.mean, std::exp(-0.125) * (a + b) / (1.0 + r), 1e-7);
    EXPECT_NEAR(m.variance, s2 * (1.0 - 2.0 * std::exp(-0.25) / (1.0 + r)), 1e-7);
    EXPECT_DOUBLE_EQ(m.at, 21.0);
}

TEST(SampleConditioner, InterpolatesGridValues)
{
    const VirtualGrid grid = VirtualGrid::standard();
    Eigen::VectorXd u(17);
    for (Eigen::Index j = 0; j < 17; ++j) {
        u[j] = -0.3 * (grid.points[static_cast<std::size_t>(j)] - 24.0) * (grid.points[static_cast<std::size_t>(j)] - 24.0);
    }
    // A short lengthscale keeps K well conditioned, so no jitter is added.
    const SampleConditioner c(state_with(u, 2.0, 0.4), grid);
    for (std::size_t j = 0; j < grid.size(); ++j) {
        const PredictiveMoments m = c.at(grid.points[j]);
        EXPECT_NEAR(m.mean, u[static_cast<Eigen::Index>(j)], 1e-6);
        EXPECT_NEAR(m.variance, 0.0, 1e-6);
        EXPECT_GE(m.variance, 0.0);
    }
    EXPECT_GT(c.at(24.25).variance, 0.0);
    EXPECT_THROW((void)c.at(19.9), DomainError);
    EXPECT_THROW((void)c.mean_at(28.1), DomainError);
}

TEST(SampleConditioner, EnsembleKeepsOrder)
{
    PosteriorEnsemble e;
    e.grid = VirtualGrid{{20.0, 22.0}};
    e.samples = {state_with(vec({1.0, 1.0}), 1.0, 2.0), state_with(vec({-1.0, -1.0}), 1.0, 2.0)};
    const auto ms = predictive_ensemble(21.0, e);
    ASSERT_EQ(ms.size(), 2u);
    EXPECT_GT(ms[0].mean, 0.0);
    EXPECT_NEAR(ms[1].mean, -ms[0].mean, 1e-12);
}

TEST(GridArgmax, LowestIndexOnTies)
{
    EXPECT_EQ(grid_argmax(vec({0.0, 2.0, 1.0})), 1u);
    EXPECT_EQ(grid_argmax(vec({3.0, 1.0, 3.0})), 0u);
    EXPECT_EQ(grid_argmax(vec({1.0, 1.0, 1.0})), 0u);
}

TEST(CountLocalMaxima, Examples)
{
    EXPECT_EQ(count_local_maxima(vec({0.0, 1.0, 0.0})), 1u);
    EXPECT_EQ(count_local_maxima(vec({0.0, 1.0, 2.0})), 1u);  // rising: right end
    EXPECT_EQ(count_local_maxima(vec({2.0, 1.0, 0.0})), 1u);  // falling: left end
    EXPECT_EQ(count_local_maxima(vec({0.0, 1.0, 0.0, 1.0, 0.0})), 2u);
    EXPECT_EQ(count_local_maxima(vec({1.0, 0.0, 1.0})), 2u);
    EXPECT_EQ(count_local_maxima(vec({1.0, 1.0, 1.0})), 0u);  // plateaus are not strict
    EXPECT_EQ(count_local_maxima(vec({5.0})), 1u);
}

TEST(XBestPosterior, HistogramAndQuantiles)
{
    const VirtualGrid grid = VirtualGrid::standard();
    std::vector<LatentState> samples;
    // 40 draws: argmax at index 8 (24.0) x 20, index 9 (24.5) x 19, index 0 x 1.
    for (int i = 0; i < 20; ++i) {
        samples.push_back(peak_at(8, 17));
    }
    for (int i = 0; i < 19; ++i) {
        samples.push_back(peak_at(9, 17));
    }
    samples.push_back(peak_at(0, 17));
    const XBestPosterior xb = xbest_posterior(samples, grid);
    EXPECT_DOUBLE_EQ(xb.pmf[0], 1.0 / 40.0);
    EXPECT_DOUBLE_EQ(xb.pmf[8], 0.5);
    EXPECT_DOUBLE_EQ(xb.pmf[9], 19.0 / 40.0);
    // CDF: 0.025 at 20.0 (reaches 0.025 exactly), 0.525 at 24.0, 1.0 at 24.5.
    EXPECT_DOUBLE_EQ(xb.ci_low, 20.0);
    EXPECT_DOUBLE_EQ(xb.median, 24.0);
    EXPECT_DOUBLE_EQ(xb.ci_high, 24.5);
    EXPECT_DOUBLE_EQ(xb.ci_width(), 4.5);
    EXPECT_THROW(xbest_posterior(std::span<const LatentState>{}, grid), DomainError);
}

TEST(XBestPosterior, PointMass)
{
    const VirtualGrid grid = VirtualGrid::standard();
    const std::vector<LatentState> samples(10, peak_at(10, 17));
    const XBestPosterior xb = xbest_posterior(samples, grid);
    EXPECT_DOUBLE_EQ(xb.median, 25.0);
    EXPECT_DOUBLE_EQ(xb.ci_width(), 0.0);
    EXPECT_TRUE(ci_width_stop(xb));
}

TEST(CiWidthStop, StrictThreshold)
{
    XBestPosterior xb;
    xb.ci_low = 24.0;
    xb.ci_high = 25.0;
    EXPECT_FALSE(ci_width_stop(xb, 1.0));
    xb.ci_high = 24.5;
    EXPECT_TRUE(ci_width_stop(xb, 1.0));
}

TEST(NormalizedUtility, MinMax)
{
    const Eigen::VectorXd n = normalized_utility(vec({2.0, 4.0, 3.0}));
    EXPECT_DOUBLE_EQ(n[0], 0.0);
    EXPECT_DOUBLE_EQ(n[1], 1.0);
    EXPECT_DOUBLE_EQ(n[2], 0.5);
    EXPECT_EQ(normalized_utility(vec({1.0, 1.0})), Eigen::VectorXd::Zero(2));
}

TEST(GridSummary, MeanQuantilesAndShape)
{
    PosteriorEnsemble e;
    e.grid = VirtualGrid{{0.0, 0.5, 1.0}};
    for (int s = 0; s < 21; ++s) {
        e.samples.push_back(state_with(vec({3.0 + s, 2.0, 1.0 - s}), 1.0, 1.0));
    }
    const GridSummary g = grid_summary(e);
    EXPECT_DOUBLE_EQ(g.mean[0], 13.0);
    EXPECT_DOUBLE_EQ(g.mean[1], 2.0);
    EXPECT_DOUBLE_EQ(g.q05[0], 4.0);   // floor(0.05 * 20) = 1
    EXPECT_DOUBLE_EQ(g.q50[0], 13.0);  // index 10
    EXPECT_DOUBLE_EQ(g.q95[2], 0.0);   // sorted {-19..1}, index 19
    EXPECT_DOUBLE_EQ(g.mode_location(), 0.0);
    EXPECT_DOUBLE_EQ(g.non_increasing_fraction(), 1.0);
}
