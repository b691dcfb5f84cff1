#include "therm/errors.hpp"
#include "therm/probit.hpp"
#include "therm/simulator.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

using namespace therm;

namespace {

HmcConfig tiny_hmc()
{
    HmcConfig c;
    c.burn_in = 150;
    c.retained = 100;
    c.thin = 1;
    return c;
}

} // namespace

TEST(SyntheticOccupant, ReferenceOccupants)
{
    EXPECT_DOUBLE_EQ(synthetic_occupant(1).peak, 25.0);
    EXPECT_DOUBLE_EQ(synthetic_occupant(2).peak, 23.34);
    EXPECT_DOUBLE_EQ(synthetic_occupant(3).peak, 22.1);
    EXPECT_DOUBLE_EQ(synthetic_occupant(1).width, 2.0);
    EXPECT_DOUBLE_EQ(synthetic_occupant(2).width, 1.2);
    EXPECT_DOUBLE_EQ(synthetic_occupant(3).width, 1.0);
    EXPECT_THROW(synthetic_occupant(4), DomainError);
    EXPECT_THROW((SyntheticOccupant{28.0, 1.0, 1.0}.validate()), DomainError);
    EXPECT_THROW((SyntheticOccupant{24.0, 0.0, 1.0}.validate()), DomainError);
}

TEST(TrueUtility, ShapeExamples)
{
    const SyntheticOccupant o = synthetic_occupant(1);
    EXPECT_DOUBLE_EQ(true_utility(o, 25.0), o.amplitude);
    for (double d : {0.5, 1.0, 2.5}) {
        EXPECT_NEAR(true_utility(o, 25.0 + d), true_utility(o, 25.0 - d), 1e-12);
    }
    EXPECT_GT(true_utility_derivative(o, 24.99), 0.0);
    EXPECT_DOUBLE_EQ(true_utility_derivative(o, 25.0), 0.0);
    EXPECT_LT(true_utility_derivative(o, 25.01), 0.0);
    // Analytic derivative against a central difference.
    const double h = 1e-6;
    EXPECT_NEAR(true_utility_derivative(o, 22.3), (true_utility(o, 22.3 + h) - true_utility(o, 22.3 - h)) / (2 * h),
                1e-6);
    EXPECT_THROW(true_utility(o, 19.0), DomainError);
}

TEST(ResponseProbabilities, LimitsAndNormalization)
{
    const SyntheticOccupant o = synthetic_occupant(1);
    const auto at_peak = response_probabilities(o, 25.0);
    for (double p : at_peak) {
        EXPECT_NEAR(p, 1.0 / 3.0, 1e-15);
    }
    // Steep flank: weights (Phi(-inf), 0.5, Phi(inf)) / 1.5 -> (0, 1/3, 2/3).
    const SyntheticOccupant steep{25.0, 0.5, 1e4};
    const auto rising = response_probabilities(steep, 24.0);
    EXPECT_NEAR(rising[0], 0.0, 1e-12);
    EXPECT_NEAR(rising[1], 1.0 / 3.0, 1e-12);
    EXPECT_NEAR(rising[2], 2.0 / 3.0, 1e-12);
    const auto p = response_probabilities(o, 21.0);
    EXPECT_NEAR(p[0] + p[1] + p[2], 1.0, 1e-15);
}

TEST(SampleResponse, ChiSquareAgainstAnalyticWeights)
{
    const SyntheticOccupant o = synthetic_occupant(1);
    std::mt19937_64 rng(17);
    constexpr int kDraws = 100000;
    std::array<int, 3> counts{};
    for (int i = 0; i < kDraws; ++i) {
        counts[static_cast<std::size_t>(sample_response(o, 21.0, rng) + 1)]++;
    }
    const auto p = response_probabilities(o, 21.0);
    const double u1 = true_utility_derivative(o, 21.0);
    const double z = normal_cdf(-u1) + 0.5 + normal_cdf(u1);
    EXPECT_NEAR(p[2], normal_cdf(u1) / z, 1e-15);
    double chi2 = 0.0;
    for (std::size_t k = 0; k < 3; ++k) {
        const double e = kDraws * p[k];
        if (e > 0.0) {
            chi2 += (counts[k] - e) * (counts[k] - e) / e;
        } else {
            EXPECT_EQ(counts[k], 0);
        }
    }
    // Two degrees of freedom: P(chi2 > 13.8155) = 0.001.
    EXPECT_LT(chi2, 13.8155);
    EXPECT_NEAR(static_cast<double>(counts[2]) / kDraws, p[2], 0.01);
}

TEST(Aed, Examples)
{
    EXPECT_DOUBLE_EQ(aed(std::vector<double>{25.0, 25.0, 25.0}, 25.0), 0.0);
    EXPECT_NEAR(aed(std::vector<double>{24.0, 26.0}, 25.0), std::sqrt(2.0) / 2.0, 1e-15);
    EXPECT_DOUBLE_EQ(aed(std::vector<double>{22.5}, 25.0), 2.5);
    EXPECT_THROW(aed(std::vector<double>{}, 25.0), DomainError);

    // Histogram form: 2 draws at 24.0 and 2 at 26.0 out of S = 4.
    XBestPosterior xb;
    xb.grid = VirtualGrid::standard();
    xb.pmf.assign(17, 0.0);
    xb.pmf[8] = 0.5;
    xb.pmf[12] = 0.5;
    EXPECT_NEAR(aed(xb, 4, 25.0), std::sqrt(4.0) / 4.0, 1e-12);
}

TEST(HitRate, Examples)
{
    const std::vector<int> a{1, -1, 1, -1};
    EXPECT_DOUBLE_EQ(hit_rate_accuracy(a, a), 1.0);
    EXPECT_DOUBLE_EQ(hit_rate_accuracy(a, std::vector<int>{-1, 1, -1, 1}), 0.0);
    EXPECT_DOUBLE_EQ(hit_rate_accuracy(a, std::vector<int>{1, -1, 1, 1}), 0.75);
    EXPECT_THROW(hit_rate_accuracy(a, std::vector<int>{1}), DomainError);
    EXPECT_THROW(hit_rate_accuracy(std::vector<int>{}, std::vector<int>{}), DomainError);
}

TEST(TrueLabel, SignOfDerivative)
{
    const SyntheticOccupant o = synthetic_occupant(1);
    EXPECT_EQ(true_label(o, 21.0), 1);
    EXPECT_EQ(true_label(o, 27.0), -1);
    EXPECT_EQ(true_label(o, 25.0), -1);
}

TEST(Classify, FollowsConcentratedPeak)
{
    // Every draw is a bump at 24 C, so the classifier must recover its slope.
    PosteriorEnsemble e;
    e.grid = VirtualGrid::standard();
    LatentState s;
    s.u_virt.resize(17);
    for (Eigen::Index j = 0; j < 17; ++j) {
        const double x = e.grid.points[static_cast<std::size_t>(j)];
        s.u_virt[j] = std::exp(-0.5 * (x - 24.0) * (x - 24.0));
    }
    s.log_theta_u = Eigen::Vector2d(0.0, std::log(1.0));
    e.samples.assign(5, s);
    EXPECT_EQ(classify(e, 20.0), 1);
    EXPECT_EQ(classify(e, 22.0), 1);
    EXPECT_EQ(classify(e, 26.0), -1);
    EXPECT_EQ(classify(e, 28.0), -1);
    EXPECT_THROW(classify(e, 29.0), DomainError);
    EXPECT_THROW(classify(PosteriorEnsemble{}, 22.0), DomainError);
}

TEST(RunElicitation, DeterministicWithTraceInvariant)
{
    EngineConfig cfg;
    cfg.budget = 3;
    cfg.seed = 11;
    cfg.hmc = tiny_hmc();
    std::size_t calls = 0;
    const TrialResult a = run_elicitation(synthetic_occupant(2), cfg, [&](const ElicitationEngine&) { ++calls; });
    const TrialResult b = run_elicitation(synthetic_occupant(2), cfg);
    ASSERT_EQ(a.history.size(), a.xbest_trace.size());
    EXPECT_EQ(calls, a.history.size());
    EXPECT_LE(a.history.size(), 3u);
    EXPECT_DOUBLE_EQ(a.history.steps.front().query, 21.0);
    ASSERT_EQ(a.history.size(), b.history.size());
    for (std::size_t i = 0; i < a.history.size(); ++i) {
        EXPECT_EQ(a.history.steps[i].query, b.history.steps[i].query);
        EXPECT_EQ(a.history.steps[i].response, b.history.steps[i].response);
        EXPECT_EQ(a.history.steps[i].eui, b.history.steps[i].eui);
        EXPECT_EQ(a.xbest_trace[i].pmf, b.xbest_trace[i].pmf);
    }
    EXPECT_TRUE(a.stop.stop);
    ASSERT_TRUE(a.final_posterior);
    EXPECT_EQ(a.final_posterior->samples.size(), 100u);
}

TEST(RunElicitation, RandomSearchStaysInCandidateSet)
{
    EngineConfig cfg;
    cfg.budget = 4;
    cfg.seed = 3;
    cfg.strategy = Strategy::RandomSearch;
    cfg.honor_stopping = false;
    cfg.hmc = tiny_hmc();
    const TrialResult t = run_elicitation(synthetic_occupant(1), cfg);
    ASSERT_EQ(t.history.size(), 4u);
    EXPECT_EQ(t.stop.reason, StopReason::BudgetExhausted);
    for (std::size_t i = 1; i < t.history.size(); ++i) {
        const auto cands = candidate_set(t.history.steps[i - 1].query);
        EXPECT_NE(std::find(cands.begin(), cands.end(), t.history.steps[i].query), cands.end());
    }
}

TEST(Engine, RejectsBadInputAndFinishedLoop)
{
    EngineConfig cfg;
    cfg.budget = 1;
    cfg.hmc = tiny_hmc();
    ElicitationEngine e(cfg);
    EXPECT_THROW(e.submit(2), DomainError);
    EXPECT_TRUE(e.history().empty());
    e.submit(1);
    EXPECT_TRUE(e.finished());
    EXPECT_EQ(e.stop_decision().reason, StopReason::BudgetExhausted);
    EXPECT_THROW(e.submit(0), DomainError);

    EngineConfig bad;
    bad.init_temp = 19.0;
    EXPECT_THROW(ElicitationEngine{bad}, DomainError);
    bad.init_temp = 21.0;
    bad.budget = 0;
    EXPECT_THROW(ElicitationEngine{bad}, DomainError);
}

TEST(StepSeed, DistinctAndStable)
{
    EXPECT_EQ(step_seed(1, 2), step_seed(1, 2));
    EXPECT_NE(step_seed(1, 2), step_seed(1, 3));
    EXPECT_NE(step_seed(1, 2), step_seed(2, 2));
}
