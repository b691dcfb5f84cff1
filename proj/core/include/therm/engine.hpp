#pragma once

#include "therm/acquisition.hpp"
#include "therm/model.hpp"
#include "therm/predict.hpp"
#include "therm/sampler.hpp"

#include <cstdint>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace therm {

enum class Strategy { Eui, RandomSearch };

struct EngineConfig {
    double init_temp = 21.0;
    std::size_t budget = 10;
    std::uint64_t seed = 0;
    Strategy strategy = Strategy::Eui;
    /// When false only the budget ends the loop; the other rules are still
    /// evaluated and reported.
    bool honor_stopping = true;
    double ci_threshold = 1.0;
    HmcConfig hmc;  // hmc.seed is replaced per step
    VirtualGrid grid = VirtualGrid::standard();
    ModelConstants constants;
    HyperPrior hyper;

    void validate() const;
};

/// Seed of the posterior fit after `step` responses.
std::uint64_t step_seed(std::uint64_t seed, std::size_t step) noexcept;

/// Sequential elicitation: query, record the answer, refit, choose the next
/// temperature. Deterministic given the config and the answers.
class ElicitationEngine {
public:
    explicit ElicitationEngine(EngineConfig cfg);

    [[nodiscard]] const EngineConfig& config() const noexcept { return cfg_; }
    [[nodiscard]] double current_query() const noexcept { return current_; }
    [[nodiscard]] bool finished() const noexcept { return stop_.stop; }
    [[nodiscard]] const StopDecision& stop_decision() const noexcept { return stop_; }
    [[nodiscard]] const PreferenceDataset& data() const noexcept { return data_; }
    [[nodiscard]] const ElicitationHistory& history() const noexcept { return history_; }
    [[nodiscard]] const std::vector<XBestPosterior>& xbest_trace() const noexcept { return trace_; }
    /// Latest posterior, null before the first answer.
    [[nodiscard]] std::shared_ptr<const PosteriorEnsemble> posterior() const noexcept { return posterior_; }
    [[nodiscard]] const Selection& last_selection() const noexcept { return selection_; }

    /// Records `response` at the current query and advances the loop.
    /// Throws DomainError once finished or for a response outside {-1, 0, 1}.
    const StepRecord& submit(int response, std::string timestamp = {});

private:
    EngineConfig cfg_;
    double current_;
    PreferenceDataset data_;
    ElicitationHistory history_;
    std::vector<XBestPosterior> trace_;
    std::shared_ptr<const PosteriorEnsemble> posterior_;
    Selection selection_;
    StopDecision stop_;
    std::mt19937_64 rs_rng_;
};

} // namespace therm
