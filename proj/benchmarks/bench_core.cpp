#include "therm/acquisition.hpp"
#include "therm/kernel.hpp"
#include "therm/model.hpp"
#include "therm/sampler.hpp"

#include <benchmark/benchmark.h>

#include <vector>

using namespace therm;

namespace {

PreferenceDataset five_answers()
{
    PreferenceDataset d;
    d.add(21.0, 1);
    d.add(24.0, 1);
    d.add(27.0, -1);
    d.add(28.0, -1);
    d.add(25.5, 0);
    return d;
}

HmcConfig short_chain(std::size_t retained)
{
    HmcConfig c;
    c.burn_in = 200;
    c.retained = retained;
    c.thin = 1;
    c.seed = 3;
    return c;
}

} // namespace

// Joint (u, u') covariance on the standard grid plus n off-grid derivatives.
void BM_FillJoint(benchmark::State& state)
{
    const VirtualGrid grid = VirtualGrid::standard();
    std::vector<double> ders = grid.points;
    for (int i = 0; i < state.range(0); ++i) {
        ders.push_back(20.25 + 0.5 * i);
    }
    const KernelParams p{1.0, 2.0};
    Eigen::MatrixXd cov;
    Eigen::MatrixXd d_rho;
    for (auto _ : state) {
        fill_joint(grid.points, ders, p, cov, &d_rho);
        benchmark::DoNotOptimize(cov.data());
    }
}
BENCHMARK(BM_FillJoint)->Arg(0)->Arg(5)->Arg(10);

void BM_CholeskyWithJitter(benchmark::State& state)
{
    const VirtualGrid grid = VirtualGrid::standard();
    const JointCovariance k = assemble_joint(grid.points, grid.points, {1.0, 2.0});
    Eigen::MatrixXd lower;
    for (auto _ : state) {
        benchmark::DoNotOptimize(cholesky_with_jitter_into(k.matrix, lower));
    }
}
BENCHMARK(BM_CholeskyWithJitter);

// One density + gradient evaluation in whitened coordinates, the inner
// cost of every leapfrog step.
void BM_LogDensityWhitened(benchmark::State& state)
{
    const ConstrainedGp m = make_preference_model(five_answers(), VirtualGrid::standard(), {}, {});
    const Eigen::VectorXd z = m.initial_whitened();
    Eigen::VectorXd grad;
    for (auto _ : state) {
        benchmark::DoNotOptimize(m.log_density_whitened(z, &grad));
    }
}
BENCHMARK(BM_LogDensityWhitened);

void BM_SamplePosterior(benchmark::State& state)
{
    const ConstrainedGp m = make_preference_model(five_answers(), VirtualGrid::standard(), {}, {});
    const HmcConfig cfg = short_chain(static_cast<std::size_t>(state.range(0)));
    for (auto _ : state) {
        benchmark::DoNotOptimize(sample_posterior(m, cfg, false).accept_rate);
    }
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(cfg.burn_in + cfg.retained));
}
BENCHMARK(BM_SamplePosterior)->Arg(200)->Unit(benchmark::kMillisecond);

void BM_EuiMap(benchmark::State& state)
{
    const PreferenceDataset data = five_answers();
    const ConstrainedGp m = make_preference_model(data, VirtualGrid::standard(), {}, {});
    const PosteriorEnsemble post = sample_posterior(m, short_chain(static_cast<std::size_t>(state.range(0))), false);
    const std::vector<double> cands = candidate_set(25.5);
    for (auto _ : state) {
        benchmark::DoNotOptimize(eui_map(cands, post, data.temps).data());
    }
}
BENCHMARK(BM_EuiMap)->Arg(100)->Arg(1000)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
