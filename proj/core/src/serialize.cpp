#include "therm/serialize.hpp"

#include "therm/errors.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace therm {

void to_json(nlohmann::json& j, const StepRecord& r)
{
    j = nlohmann::json{{"query", r.query},
                       {"response", r.response},
                       {"eui", r.eui},
                       {"eui_ratio", r.eui_ratio.has_value() ? nlohmann::json(*r.eui_ratio) : nlohmann::json(nullptr)},
                       {"median", r.median},
                       {"ci95", {r.ci_low, r.ci_high}},
                       {"unimodal_fraction", r.unimodal_fraction},
                       {"timestamp", r.timestamp}};
}

void from_json(const nlohmann::json& j, StepRecord& r)
{
    r.query = j.at("query").get<double>();
    r.response = j.at("response").get<int>();
    r.eui = j.at("eui").get<double>();
    const auto& ratio = j.at("eui_ratio");
    r.eui_ratio = ratio.is_null() ? std::nullopt : std::optional<double>(ratio.get<double>());
    r.median = j.at("median").get<double>();
    r.ci_low = j.at("ci95").at(0).get<double>();
    r.ci_high = j.at("ci95").at(1).get<double>();
    r.unimodal_fraction = j.at("unimodal_fraction").get<double>();
    r.timestamp = j.at("timestamp").get<std::string>();
}

void to_json(nlohmann::json& j, const XBestPosterior& xb)
{
    j = nlohmann::json{{"grid", xb.grid.points},
                       {"pmf", xb.pmf},
                       {"median", xb.median},
                       {"ci95", {xb.ci_low, xb.ci_high}}};
}

void to_json(nlohmann::json& j, const CandidateScore& c)
{
    j = nlohmann::json{{"temp", c.temp}, {"eui", c.eui}};
}

void to_json(nlohmann::json& j, const HmcConfig& c)
{
    j = nlohmann::json{{"burn_in", c.burn_in},
                       {"retained", c.retained},
                       {"thin", c.thin},
                       {"leapfrog_steps", c.leapfrog_steps},
                       {"step_size", c.step_size},
                       {"adapt_target_accept", c.adapt_target_accept},
                       {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, HmcConfig& c)
{
    c.burn_in = j.at("burn_in").get<std::size_t>();
    c.retained = j.at("retained").get<std::size_t>();
    c.thin = j.at("thin").get<std::size_t>();
    c.leapfrog_steps = j.at("leapfrog_steps").get<std::size_t>();
    c.step_size = j.at("step_size").get<double>();
    c.adapt_target_accept = j.at("adapt_target_accept").get<double>();
    c.seed = j.at("seed").get<std::uint64_t>();
}

std::string_view to_string(Strategy s) noexcept
{
    return s == Strategy::Eui ? "eui" : "rs";
}

Strategy parse_strategy(std::string_view s)
{
    if (s == "eui") {
        return Strategy::Eui;
    }
    if (s == "rs") {
        return Strategy::RandomSearch;
    }
    throw DomainError("unknown strategy '" + std::string(s) + "' (expected eui or rs)");
}

UtilityBand utility_band(const PosteriorEnsemble& ensemble)
{
    if (ensemble.samples.empty()) {
        throw DomainError("utility_band: empty ensemble");
    }
    const std::size_t J = ensemble.grid.size();
    const std::size_t S = ensemble.samples.size();
    UtilityBand out;
    out.temps = ensemble.grid.points;
    std::vector<std::vector<double>> cols(J, std::vector<double>(S));
    for (std::size_t s = 0; s < S; ++s) {
        const Eigen::VectorXd u = normalized_utility(ensemble.samples[s].u_virt);
        for (std::size_t j = 0; j < J; ++j) {
            cols[j][s] = u[static_cast<Eigen::Index>(j)];
        }
    }
    auto quantile = [](std::vector<double>& v, double q) {
        const auto k = static_cast<std::size_t>(std::floor(q * static_cast<double>(v.size() - 1)));
        std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(k), v.end());
        return v[k];
    };
    for (auto& c : cols) {
        out.q05.push_back(quantile(c, 0.05));
        out.q50.push_back(quantile(c, 0.5));
        out.q95.push_back(quantile(c, 0.95));
    }
    return out;
}

void to_json(nlohmann::json& j, const UtilityBand& b)
{
    j = nlohmann::json{{"temps", b.temps}, {"q05", b.q05}, {"q50", b.q50}, {"q95", b.q95}};
}

void write_trial_jsonl(std::ostream& os, const TrialResult& trial, const SyntheticOccupant& o, const EngineConfig& cfg)
{
    const nlohmann::json header{{"schema", kTrialSchema},
                                {"kind", "header"},
                                {"strategy", to_string(trial.strategy)},
                                {"occupant", {{"peak", o.peak}, {"width", o.width}, {"amplitude", o.amplitude}}},
                                {"init_temp", cfg.init_temp},
                                {"budget", cfg.budget},
                                {"seed", cfg.seed},
                                {"hmc", cfg.hmc},
                                {"stop_reason", to_string(trial.stop.reason)}};
    os << header.dump() << '\n';
    for (std::size_t i = 0; i < trial.history.size(); ++i) {
        nlohmann::json line = trial.history.steps[i];
        line["schema"] = kTrialSchema;
        line["kind"] = "step";
        line["step"] = i + 1;
        line["xbest"] = trial.xbest_trace[i];
        os << line.dump() << '\n';
    }
}

void write_trial_csv(std::ostream& os, const TrialResult& trial, const SyntheticOccupant& o)
{
    os << "step,query,response,eui,eui_ratio,median,ci_low,ci_high,unimodal_fraction,aed\n";
    const std::size_t S = trial.final_posterior ? trial.final_posterior->samples.size() : 0;
    for (std::size_t i = 0; i < trial.history.size(); ++i) {
        const auto& r = trial.history.steps[i];
        os << i + 1 << ',' << r.query << ',' << r.response << ',' << r.eui << ',';
        if (r.eui_ratio) {
            os << *r.eui_ratio;
        }
        os << ',' << r.median << ',' << r.ci_low << ',' << r.ci_high << ',' << r.unimodal_fraction << ',';
        if (S > 0) {
            os << aed(trial.xbest_trace[i], S, o.peak);
        }
        os << '\n';
    }
}

} // namespace therm
