#pragma once

#include "therm/engine.hpp"

#include <array>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <vector>

namespace therm {

/// Gaussian-bump utility amplitude * exp(-(x - peak)^2 / (2 width^2)).
struct SyntheticOccupant {
    double peak = 25.0;
    double width = 2.0;
    double amplitude = 10.0;

    /// Peak strictly inside (20, 28), positive width and amplitude.
    void validate() const;
};

/// The three reference occupants, numbered 1..3.
SyntheticOccupant synthetic_occupant(int number);

double true_utility(const SyntheticOccupant& o, double x);
double true_utility_derivative(const SyntheticOccupant& o, double x);

/// Probabilities of responses (-1, 0, +1), proportional to
/// Phi(-nu_l u'), Phi(0), Phi(nu_l u').
std::array<double, 3> response_probabilities(const SyntheticOccupant& o, double x, double nu_l = 1.0);

int sample_response(const SyntheticOccupant& o, double x, std::mt19937_64& rng, double nu_l = 1.0);

struct TrialResult {
    Strategy strategy = Strategy::Eui;
    ElicitationHistory history;
    std::vector<XBestPosterior> xbest_trace;  // one per step
    StopDecision stop;
    std::shared_ptr<const PosteriorEnsemble> final_posterior;
};

/// Called after every answered query with the engine's updated state.
using StepObserver = std::function<void(const ElicitationEngine&)>;

/// Runs the elicitation loop against a synthetic occupant. Responses are
/// drawn from a stream seeded by cfg.seed, independent of the sampler.
TrialResult run_elicitation(const SyntheticOccupant& o, const EngineConfig& cfg, const StepObserver& observer = {});

/// (1/S) * sqrt(sum_s (x_s - x_true)^2). Throws DomainError when empty.
double aed(std::span<const double> xbest_samples, double x_true);
/// Same metric from an argmax histogram of `sample_count` draws.
double aed(const XBestPosterior& xb, std::size_t sample_count, double x_true);

/// +1 when more than half of the samples have a rising predictive mean at x
/// (central difference with h = 0.01 C, clipped to the domain), else -1.
int classify(const PosteriorEnsemble& ensemble, double x);

/// +1 where the true utility rises, else -1 (the peak itself maps to -1).
int true_label(const SyntheticOccupant& o, double x);

/// Fraction of equal entries. Throws DomainError on empty or unequal input.
double hit_rate_accuracy(std::span<const int> predicted, std::span<const int> actual);

} // namespace therm
