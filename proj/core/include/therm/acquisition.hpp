#pragma once

#include "therm/model.hpp"
#include "therm/predict.hpp"
#include "therm/sampler.hpp"

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace therm {

inline constexpr double kLatticeStep = 0.5;
inline constexpr double kCandidateReach = 3.0;
/// Predictive standard deviations below this are treated as zero.
inline constexpr double kSigmaFloor = 1e-10;

/// Lattice temperatures within 3 C of `current`, clipped to [20, 28],
/// excluding `current`. Throws DomainError outside [20, 28].
std::vector<double> candidate_set(double current);

/// Largest predictive mean over the observed temperatures.
double u_best_hat(const SampleConditioner& sample, std::span<const double> observed);
double u_best_hat(const LatentState& sample, std::span<const double> observed, const VirtualGrid& grid);

/// E[max(u - best, 0)] for u ~ N(mean, sigma^2).
double expected_improvement(double mean, double best, double sigma);

double eui_conditional(double x, const LatentState& sample, std::span<const double> observed, const VirtualGrid& grid);

/// Sample average of eui_conditional.
double eui(double x, const PosteriorEnsemble& ensemble, std::span<const double> observed);

/// eui() for several temperatures at once, factorizing each sample once.
std::vector<double> eui_map(std::span<const double> temps,
                            const PosteriorEnsemble& ensemble,
                            std::span<const double> observed);

struct CandidateScore {
    double temp = 0.0;
    double eui = 0.0;
};

struct Selection {
    double next = 0.0;
    double eui = 0.0;  // at `next`
    std::vector<CandidateScore> scores;
};

/// Argmax of EUI over candidate_set(current), lowest temperature on ties.
Selection select_next(double current, const PosteriorEnsemble& ensemble, const PreferenceDataset& data);

struct StepRecord {
    double query = 0.0;
    int response = 0;
    double eui = 0.0;                    // best EUI after this step's refit
    std::optional<double> eui_ratio;     // eui(i-1) / eui(i)
    double median = 0.0;
    double ci_low = 0.0;
    double ci_high = 0.0;
    double unimodal_fraction = 0.0;      // draws with one local max on the grid
    std::string timestamp;
};

struct ElicitationHistory {
    std::vector<StepRecord> steps;

    [[nodiscard]] std::size_t size() const noexcept { return steps.size(); }
    [[nodiscard]] bool empty() const noexcept { return steps.empty(); }
};

/// eui_prev / eui_now, absent when either is missing or eui_now is 0.
std::optional<double> eui_ratio(std::optional<double> eui_prev, double eui_now);

enum class StopReason { None, LowEui, FallingEuiRatio, BudgetExhausted, CredibleWidth };

std::string_view to_string(StopReason r) noexcept;

struct StopDecision {
    bool stop = false;
    StopReason reason = StopReason::None;
};

/// First satisfied rule among: three EUIs below 0.01 with the last two
/// queries at one temperature both answered 0; two EUI ratios below 1 with
/// the same repeat condition; the budget used up; the 95% interval narrower
/// than `ci_threshold`. Throws DomainError on an empty history.
StopDecision should_stop(const ElicitationHistory& history,
                         const XBestPosterior& xb,
                         std::size_t budget,
                         double ci_threshold = 1.0);

} // namespace therm
