#include "therm/simulator.hpp"

#include "therm/errors.hpp"
#include "therm/probit.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace therm {

void SyntheticOccupant::validate() const
{
    if (!(peak > kTempMin && peak < kTempMax)) {
        throw DomainError("SyntheticOccupant: peak must lie in (20, 28)");
    }
    if (!(width > 0.0 && amplitude > 0.0 && std::isfinite(width) && std::isfinite(amplitude))) {
        throw DomainError("SyntheticOccupant: width and amplitude must be positive");
    }
}

SyntheticOccupant synthetic_occupant(int number)
{
    switch (number) {
    case 1:
        return {25.0, 2.0, 10.0};
    case 2:
        return {23.34, 1.2, 10.0};
    case 3:
        return {22.1, 1.0, 10.0};
    default:
        throw DomainError("synthetic_occupant: expected 1, 2 or 3, got " + std::to_string(number));
    }
}

namespace {

void require_in_range(double x, const char* where)
{
    if (!(x >= kTempMin && x <= kTempMax)) {
        throw DomainError(std::string(where) + ": temperature outside [20, 28]");
    }
}

} // namespace

double true_utility(const SyntheticOccupant& o, double x)
{
    require_in_range(x, "true_utility");
    const double d = (x - o.peak) / o.width;
    return o.amplitude * std::exp(-0.5 * d * d);
}

double true_utility_derivative(const SyntheticOccupant& o, double x)
{
    return -true_utility(o, x) * (x - o.peak) / (o.width * o.width);
}

std::array<double, 3> response_probabilities(const SyntheticOccupant& o, double x, double nu_l)
{
    const double du = true_utility_derivative(o, x);
    const double down = normal_cdf(-nu_l * du);
    const double up = normal_cdf(nu_l * du);
    const double z = down + 0.5 + up;
    return {down / z, 0.5 / z, up / z};
}

int sample_response(const SyntheticOccupant& o, double x, std::mt19937_64& rng, double nu_l)
{
    const auto p = response_probabilities(o, x, nu_l);
    const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    if (u < p[0]) {
        return -1;
    }
    return u < p[0] + p[1] ? 0 : 1;
}

TrialResult run_elicitation(const SyntheticOccupant& o, const EngineConfig& cfg, const StepObserver& observer)
{
    o.validate();
    ElicitationEngine engine(cfg);
    std::mt19937_64 responses(step_seed(cfg.seed, 2'000'003));
    while (!engine.finished()) {
        engine.submit(sample_response(o, engine.current_query(), responses, cfg.constants.nu_l));
        if (observer) {
            observer(engine);
        }
    }
    TrialResult out;
    out.strategy = cfg.strategy;
    out.history = engine.history();
    out.xbest_trace = engine.xbest_trace();
    out.stop = engine.stop_decision();
    out.final_posterior = engine.posterior();
    return out;
}

double aed(std::span<const double> xs, double x_true)
{
    if (xs.empty()) {
        throw DomainError("aed: no samples");
    }
    double ss = 0.0;
    for (double x : xs) {
        ss += (x - x_true) * (x - x_true);
    }
    return std::sqrt(ss) / static_cast<double>(xs.size());
}

double aed(const XBestPosterior& xb, std::size_t sample_count, double x_true)
{
    if (sample_count == 0) {
        throw DomainError("aed: no samples");
    }
    double ss = 0.0;
    for (std::size_t j = 0; j < xb.pmf.size(); ++j) {
        const double d = xb.grid.points[j] - x_true;
        ss += xb.pmf[j] * static_cast<double>(sample_count) * d * d;
    }
    return std::sqrt(ss) / static_cast<double>(sample_count);
}

int classify(const PosteriorEnsemble& ensemble, double x)
{
    require_in_range(x, "classify");
    if (ensemble.samples.empty()) {
        throw DomainError("classify: empty ensemble");
    }
    constexpr double h = 0.01;
    const double lo = std::max(kTempMin, x - h);
    const double hi = std::min(kTempMax, x + h);
    std::size_t rising = 0;
    for (const auto& s : ensemble.samples) {
        const SampleConditioner c(s, ensemble.grid);
        rising += c.mean_at(hi) - c.mean_at(lo) > 0.0 ? 1 : 0;
    }
    return 2 * rising > ensemble.samples.size() ? 1 : -1;
}

int true_label(const SyntheticOccupant& o, double x)
{
    return true_utility_derivative(o, x) > 0.0 ? 1 : -1;
}

double hit_rate_accuracy(std::span<const int> predicted, std::span<const int> actual)
{
    if (predicted.empty() || predicted.size() != actual.size()) {
        throw DomainError("hit_rate_accuracy: inputs must be non-empty and equally long");
    }
    std::size_t hits = 0;
    for (std::size_t i = 0; i < predicted.size(); ++i) {
        hits += predicted[i] == actual[i] ? 1 : 0;
    }
    return static_cast<double>(hits) / static_cast<double>(predicted.size());
}

} // namespace therm
