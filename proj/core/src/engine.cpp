#include "therm/engine.hpp"

#include "therm/errors.hpp"

#include <cmath>

namespace therm {

void EngineConfig::validate() const
{
    if (!(init_temp >= kTempMin && init_temp <= kTempMax)) {
        throw DomainError("EngineConfig: init_temp outside [20, 28]");
    }
    if (budget < 1) {
        throw DomainError("EngineConfig: budget must be >= 1");
    }
    if (!(ci_threshold > 0.0)) {
        throw DomainError("EngineConfig: ci_threshold must be > 0");
    }
    hmc.validate();
    grid.validate();
    constants.validate();
}

std::uint64_t step_seed(std::uint64_t seed, std::size_t step) noexcept
{
    // splitmix64 finalizer over (seed, step).
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (static_cast<std::uint64_t>(step) + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

ElicitationEngine::ElicitationEngine(EngineConfig cfg)
    : cfg_(std::move(cfg)), current_(cfg_.init_temp), rs_rng_(step_seed(cfg_.seed, 1'000'003))
{
    cfg_.validate();
}

const StepRecord& ElicitationEngine::submit(int response, std::string timestamp)
{
    if (stop_.stop) {
        throw DomainError("submit: elicitation already finished");
    }
    if (response < -1 || response > 1) {
        throw DomainError("submit: response must be -1, 0 or 1");
    }
    // Work on a copy so a failed fit leaves the engine untouched.
    PreferenceDataset data = data_;
    data.add(current_, response);

    HmcConfig hmc = cfg_.hmc;
    hmc.seed = step_seed(cfg_.seed, data.size());
    const ConstrainedGp model = make_preference_model(data, cfg_.grid, cfg_.constants, cfg_.hyper);
    auto post = std::make_shared<PosteriorEnsemble>(sample_posterior(model, hmc, false));
    XBestPosterior xb = xbest_posterior(*post);
    Selection sel = select_next(current_, *post, data);

    StepRecord rec;
    rec.query = current_;
    rec.response = response;
    rec.eui = sel.eui;
    rec.eui_ratio = eui_ratio(history_.empty() ? std::nullopt : std::optional<double>(history_.steps.back().eui), sel.eui);
    rec.median = xb.median;
    rec.ci_low = xb.ci_low;
    rec.ci_high = xb.ci_high;
    std::size_t unimodal = 0;
    for (const auto& smp : post->samples) {
        unimodal += count_local_maxima(smp.u_virt) == 1 ? 1 : 0;
    }
    rec.unimodal_fraction = static_cast<double>(unimodal) / static_cast<double>(post->samples.size());
    rec.timestamp = std::move(timestamp);
    history_.steps.push_back(rec);

    StopDecision d = should_stop(history_, xb, cfg_.budget, cfg_.ci_threshold);
    if (!cfg_.honor_stopping && d.reason != StopReason::BudgetExhausted) {
        d = {};
    }
    if (cfg_.strategy == Strategy::RandomSearch) {
        std::uniform_int_distribution<std::size_t> pick(0, sel.scores.size() - 1);
        const std::size_t k = pick(rs_rng_);
        sel.next = sel.scores[k].temp;
        sel.eui = sel.scores[k].eui;
    }
    data_ = std::move(data);
    trace_.push_back(std::move(xb));
    posterior_ = std::move(post);
    selection_ = std::move(sel);
    stop_ = d;
    if (!stop_.stop) {
        current_ = selection_.next;
    }
    return history_.steps.back();
}

} // namespace therm
