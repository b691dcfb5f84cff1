#pragma once

#include "therm/acquisition.hpp"
#include "therm/engine.hpp"
#include "therm/predict.hpp"
#include "therm/sampler.hpp"
#include "therm/simulator.hpp"

#include <nlohmann/json.hpp>

#include <ostream>
#include <string_view>

namespace therm {

/// Version tag written into every machine-readable record.
inline constexpr std::string_view kTrialSchema = "therm.trial/1";
inline constexpr std::string_view kSessionSchema = "therm.session/1";

void to_json(nlohmann::json& j, const StepRecord& r);
void from_json(const nlohmann::json& j, StepRecord& r);
void to_json(nlohmann::json& j, const XBestPosterior& xb);
void to_json(nlohmann::json& j, const CandidateScore& c);
void to_json(nlohmann::json& j, const HmcConfig& c);
void from_json(const nlohmann::json& j, HmcConfig& c);

std::string_view to_string(Strategy s) noexcept;
/// "eui" or "rs"; throws DomainError otherwise.
Strategy parse_strategy(std::string_view s);

/// Per-grid-point quantiles of min-max normalized utility across draws.
struct UtilityBand {
    std::vector<double> temps;
    std::vector<double> q05;
    std::vector<double> q50;
    std::vector<double> q95;
};
UtilityBand utility_band(const PosteriorEnsemble& ensemble);
void to_json(nlohmann::json& j, const UtilityBand& b);

/// One JSON object per step, preceded by a header line describing the trial.
void write_trial_jsonl(std::ostream& os, const TrialResult& trial, const SyntheticOccupant& o, const EngineConfig& cfg);

/// CSV with one row per step: step, query, response, eui, eui_ratio,
/// median, ci_low, ci_high, unimodal_fraction, aed.
void write_trial_csv(std::ostream& os, const TrialResult& trial, const SyntheticOccupant& o);

} // namespace therm
