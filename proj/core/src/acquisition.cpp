#include "therm/acquisition.hpp"

#include "therm/errors.hpp"
#include "therm/probit.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace therm {

std::vector<double> candidate_set(double current)
{
    if (!(current >= kTempMin && current <= kTempMax)) {
        throw DomainError("candidate_set: temperature outside [20, 28]");
    }
    // Work in lattice units so the comparisons below are exact.
    const long centre = std::lround(current / kLatticeStep);
    const long reach = std::lround(kCandidateReach / kLatticeStep);
    const long lo = std::lround(kTempMin / kLatticeStep);
    const long hi = std::lround(kTempMax / kLatticeStep);
    std::vector<double> out;
    for (long k = std::max(lo, centre - reach); k <= std::min(hi, centre + reach); ++k) {
        const double t = static_cast<double>(k) * kLatticeStep;
        if (std::abs(t - current) > 1e-9 && std::abs(t - current) <= kCandidateReach + 1e-9) {
            out.push_back(t);
        }
    }
    return out;
}

double u_best_hat(const SampleConditioner& sample, std::span<const double> observed)
{
    if (observed.empty()) {
        throw DomainError("u_best_hat: no observed temperatures");
    }
    double best = -std::numeric_limits<double>::infinity();
    for (double x : observed) {
        best = std::max(best, sample.mean_at(x));
    }
    return best;
}

double u_best_hat(const LatentState& sample, std::span<const double> observed, const VirtualGrid& grid)
{
    if (observed.empty()) {
        throw DomainError("u_best_hat: no observed temperatures");
    }
    return u_best_hat(SampleConditioner(sample, grid), observed);
}

double expected_improvement(double mean, double best, double sigma)
{
    if (sigma < kSigmaFloor) {
        return std::max(mean - best, 0.0);
    }
    const double z = (mean - best) / sigma;
    return std::max(0.0, (mean - best) * normal_cdf(z) + sigma * normal_pdf(z));
}

double eui_conditional(double x, const LatentState& sample, std::span<const double> observed, const VirtualGrid& grid)
{
    const SampleConditioner c(sample, grid);
    const PredictiveMoments m = c.at(x);
    return expected_improvement(m.mean, u_best_hat(c, observed), std::sqrt(m.variance));
}

std::vector<double> eui_map(std::span<const double> temps,
                            const PosteriorEnsemble& ensemble,
                            std::span<const double> observed)
{
    if (ensemble.samples.empty()) {
        throw DomainError("eui: empty ensemble");
    }
    if (observed.empty()) {
        throw DomainError("eui: no observed temperatures");
    }
    std::vector<double> total(temps.size(), 0.0);
    for (const auto& s : ensemble.samples) {
        const SampleConditioner c(s, ensemble.grid);
        const double best = u_best_hat(c, observed);
        for (std::size_t i = 0; i < temps.size(); ++i) {
            const PredictiveMoments m = c.at(temps[i]);
            total[i] += expected_improvement(m.mean, best, std::sqrt(m.variance));
        }
    }
    for (double& t : total) {
        t /= static_cast<double>(ensemble.samples.size());
    }
    return total;
}

double eui(double x, const PosteriorEnsemble& ensemble, std::span<const double> observed)
{
    const double xs[1] = {x};
    return eui_map(xs, ensemble, observed).front();
}

Selection select_next(double current, const PosteriorEnsemble& ensemble, const PreferenceDataset& data)
{
    if (data.empty()) {
        throw DomainError("select_next: empty dataset");
    }
    const std::vector<double> cands = candidate_set(current);
    const std::vector<double> values = eui_map(cands, ensemble, data.temps);
    Selection out;
    std::size_t best = 0;
    for (std::size_t i = 0; i < cands.size(); ++i) {
        out.scores.push_back({cands[i], values[i]});
        if (values[i] > values[best]) {
            best = i;
        }
    }
    out.next = cands[best];
    out.eui = values[best];
    return out;
}

std::optional<double> eui_ratio(std::optional<double> eui_prev, double eui_now)
{
    if (!eui_prev.has_value() || !(eui_now > 0.0)) {
        return std::nullopt;
    }
    return *eui_prev / eui_now;
}

std::string_view to_string(StopReason r) noexcept
{
    switch (r) {
    case StopReason::None:
        return "none";
    case StopReason::LowEui:
        return "low_eui";
    case StopReason::FallingEuiRatio:
        return "falling_eui_ratio";
    case StopReason::BudgetExhausted:
        return "budget_exhausted";
    case StopReason::CredibleWidth:
        return "credible_width";
    }
    return "none";
}

StopDecision should_stop(const ElicitationHistory& history,
                         const XBestPosterior& xb,
                         std::size_t budget,
                         double ci_threshold)
{
    if (history.empty()) {
        throw DomainError("should_stop: empty history");
    }
    const auto& s = history.steps;
    const std::size_t n = s.size();
    const bool settled = n >= 2 && std::abs(s[n - 1].query - s[n - 2].query) < 1e-9 && s[n - 1].response == 0
                         && s[n - 2].response == 0;
    if (settled && n >= 3 && s[n - 1].eui < 0.01 && s[n - 2].eui < 0.01 && s[n - 3].eui < 0.01) {
        return {true, StopReason::LowEui};
    }
    auto ratio_below_one = [](const StepRecord& r) { return r.eui_ratio.has_value() && *r.eui_ratio < 1.0; };
    if (settled && ratio_below_one(s[n - 1]) && ratio_below_one(s[n - 2])) {
        return {true, StopReason::FallingEuiRatio};
    }
    if (n >= budget) {
        return {true, StopReason::BudgetExhausted};
    }
    if (ci_width_stop(xb, ci_threshold)) {
        return {true, StopReason::CredibleWidth};
    }
    return {};
}

} // namespace therm
