#pragma once

#include "therm/kernel.hpp"
#include "therm/model.hpp"
#include "therm/sampler.hpp"

#include <Eigen/Dense>

#include <span>
#include <vector>

namespace therm {

struct PredictiveMoments {
    double mean = 0.0;
    double variance = 0.0;  // clamped at 0
    double at = 0.0;
};

/// GP conditional of u(x*) given one sample's utilities on the virtual grid,
/// with the sample's own hyperparameters. Observations enter only through
/// the grid values they shaped. Factorizes once, then evaluates any x*.
class SampleConditioner {
public:
    SampleConditioner(const LatentState& sample, const VirtualGrid& grid);

    /// Throws DomainError if x is outside [20, 28].
    [[nodiscard]] PredictiveMoments at(double x) const;
    [[nodiscard]] double mean_at(double x) const;

private:
    std::vector<double> points_;
    KernelParams theta_;
    CholeskyFactor chol_;
    Eigen::VectorXd alpha_;  // K^-1 u
};

PredictiveMoments predictive_moments(double x, const LatentState& sample, const VirtualGrid& grid);

/// One set of moments per retained sample, in ensemble order.
std::vector<PredictiveMoments> predictive_ensemble(double x, const PosteriorEnsemble& ensemble);

/// Posterior over the grid argmax of u.
struct XBestPosterior {
    VirtualGrid grid;
    std::vector<double> pmf;
    double median = 0.0;
    double ci_low = 0.0;
    double ci_high = 0.0;

    [[nodiscard]] double ci_width() const noexcept { return ci_high - ci_low; }
};

/// Index of the largest grid value, lowest index on ties.
std::size_t grid_argmax(const Eigen::VectorXd& u_virt);

/// Number of strict local maxima of a sequence; an end point counts when it
/// exceeds its single neighbour.
std::size_t count_local_maxima(const Eigen::VectorXd& values);

/// Histogram of per-sample argmax temperatures. The median is the first grid
/// point where the CDF reaches 0.5, and the interval runs from the first
/// point reaching 0.025 to the first reaching 0.975. Throws DomainError on
/// an empty sample list.
XBestPosterior xbest_posterior(std::span<const LatentState> samples, const VirtualGrid& grid);
XBestPosterior xbest_posterior(const PosteriorEnsemble& ensemble);

/// True iff the 95% interval is strictly narrower than `threshold` degrees C.
bool ci_width_stop(const XBestPosterior& xb, double threshold = 1.0);

/// Pointwise summary of grid utilities across draws, used for regression
/// fits. Quantiles are order statistics at floor(q * (S - 1)).
struct GridSummary {
    std::vector<double> points;
    std::vector<double> mean;
    std::vector<double> q05;
    std::vector<double> q50;
    std::vector<double> q95;

    /// Grid point of the largest posterior mean, lowest on ties.
    [[nodiscard]] double mode_location() const;
    /// Fraction of adjacent grid pairs where the mean does not increase.
    [[nodiscard]] double non_increasing_fraction() const;
};
GridSummary grid_summary(const PosteriorEnsemble& ensemble);

/// Per-sample min-max normalization of grid utilities to [0, 1], for export.
Eigen::VectorXd normalized_utility(const Eigen::VectorXd& u_virt);

} // namespace therm
