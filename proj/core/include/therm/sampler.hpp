#pragma once

#include "therm/model.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <vector>

namespace therm {

struct HmcConfig {
    std::size_t burn_in = 5000;
    std::size_t retained = 3000;
    std::size_t thin = 3;
    std::size_t leapfrog_steps = 20;
    double step_size = 0.05;            // initial value; adapted during burn-in
    double adapt_target_accept = 0.8;
    std::uint64_t seed = 0;

    void validate() const;
};

/// log density and (optionally) its gradient.
using LogDensityFn = std::function<double(const Eigen::VectorXd&, Eigen::VectorXd*)>;

struct HmcChain {
    std::vector<Eigen::VectorXd> samples;  // retained draws, in order
    double accept_rate = 0.0;              // over post-burn-in transitions
    double step_size = 0.0;                // frozen value after adaptation
    std::size_t burn_in_divergences = 0;
    std::size_t divergences = 0;           // post-burn-in
};

/// Leapfrog HMC with unit mass. A trajectory is divergent when the energy
/// error exceeds 1000 nats, goes non-finite, or the target throws a
/// DomainError/NumericalError part way through. Throws DomainError if the
/// target is not finite at `init`, NumericalError if more than 90% of
/// burn-in trajectories diverge.
HmcChain run_hmc(const LogDensityFn& target, const Eigen::VectorXd& init, const HmcConfig& cfg);

struct EssResult {
    double ess = 0.0;
    bool degenerate = false;  // constant chain
};

/// Effective sample size with Geyer's initial positive (monotone) sequence.
EssResult effective_sample_size(std::span<const double> chain);

/// Normalized autocorrelation for lags 0..max_lag.
std::vector<double> autocorrelation(std::span<const double> chain, std::size_t max_lag);

/// Split-chain potential scale reduction over equally long chains.
double split_rhat(const std::vector<std::vector<double>>& chains);

/// Retained posterior draws of the constrained model.
struct PosteriorEnsemble {
    std::vector<LatentState> samples;
    HmcConfig config;
    VirtualGrid grid;
    double accept_rate = 0.0;
    double step_size = 0.0;
    std::size_t divergences = 0;
    std::vector<double> ess;  // per natural coordinate, model layout

    [[nodiscard]] std::size_t size() const noexcept { return samples.size(); }
};

/// Samples the model posterior from its deterministic starting point and
/// maps the retained draws back to natural coordinates.
///
/// Each iteration is one HMC trajectory over the whitened latent values with
/// hyperparameters held fixed, followed by a slice-sampling sweep over the
/// log hyperparameters. With hyperparameters fixed, saturated probit factors
/// are steps across hyperplanes; the leapfrog drift reflects off monotone
/// walls and refracts (or reflects) across sign switches of u', which keeps
/// the integrator reversible and volume preserving. The Metropolis test
/// always uses the exact density. `cfg` has the same meaning as for run_hmc.
PosteriorEnsemble sample_posterior(const ConstrainedGp& model, const HmcConfig& cfg, bool compute_ess = true);

/// One row per retained sample, columns are the flattened natural state.
void write_trace_csv(std::ostream& os, const PosteriorEnsemble& ensemble, const ConstrainedGp& model);

} // namespace therm
