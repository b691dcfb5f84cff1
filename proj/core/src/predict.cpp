#include "therm/predict.hpp"

#include "therm/errors.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace therm {

namespace {

void require_temperature(double x, const char* where)
{
    if (!(x >= kTempMin && x <= kTempMax)) {
        throw DomainError(std::string(where) + ": temperature " + std::to_string(x) + " outside [20, 28]");
    }
}

} // namespace

SampleConditioner::SampleConditioner(const LatentState& sample, const VirtualGrid& grid)
    : points_(grid.points), theta_(sample.theta_u())
{
    if (sample.u_virt.size() != static_cast<Eigen::Index>(grid.size())) {
        throw DomainError("SampleConditioner: sample does not match the grid");
    }
    const JointCovariance k = assemble_joint(grid.points, {}, theta_);
    chol_ = cholesky_with_jitter(k);
    alpha_ = chol_.solve(sample.u_virt);
}

PredictiveMoments SampleConditioner::at(double x) const
{
    require_temperature(x, "predictive_moments");
    const auto n = static_cast<Eigen::Index>(points_.size());
    Eigen::VectorXd kx(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        kx[i] = se_kernel(x, points_[i], theta_);
    }
    PredictiveMoments out;
    out.at = x;
    out.mean = kx.dot(alpha_);
    const Eigen::VectorXd w = chol_.lower.triangularView<Eigen::Lower>().solve(kx);
    out.variance = std::max(0.0, theta_.signal_variance - w.squaredNorm());
    return out;
}

double SampleConditioner::mean_at(double x) const
{
    require_temperature(x, "predictive_moments");
    double m = 0.0;
    for (std::size_t i = 0; i < points_.size(); ++i) {
        m += se_kernel(x, points_[i], theta_) * alpha_[static_cast<Eigen::Index>(i)];
    }
    return m;
}

PredictiveMoments predictive_moments(double x, const LatentState& sample, const VirtualGrid& grid)
{
    require_temperature(x, "predictive_moments");
    return SampleConditioner(sample, grid).at(x);
}

std::vector<PredictiveMoments> predictive_ensemble(double x, const PosteriorEnsemble& ensemble)
{
    require_temperature(x, "predictive_ensemble");
    std::vector<PredictiveMoments> out;
    out.reserve(ensemble.samples.size());
    for (const auto& s : ensemble.samples) {
        out.push_back(SampleConditioner(s, ensemble.grid).at(x));
    }
    return out;
}

std::size_t grid_argmax(const Eigen::VectorXd& u_virt)
{
    Eigen::Index k = 0;
    for (Eigen::Index j = 1; j < u_virt.size(); ++j) {
        if (u_virt[j] > u_virt[k]) {
            k = j;
        }
    }
    return static_cast<std::size_t>(k);
}

std::size_t count_local_maxima(const Eigen::VectorXd& v)
{
    const Eigen::Index n = v.size();
    if (n == 1) {
        return 1;
    }
    std::size_t count = 0;
    for (Eigen::Index j = 0; j < n; ++j) {
        const bool left = j == 0 || v[j] > v[j - 1];
        const bool right = j == n - 1 || v[j] > v[j + 1];
        count += (left && right) ? 1 : 0;
    }
    return count;
}

XBestPosterior xbest_posterior(std::span<const LatentState> samples, const VirtualGrid& grid)
{
    if (samples.empty()) {
        throw DomainError("xbest_posterior: empty ensemble");
    }
    XBestPosterior out;
    out.grid = grid;
    out.pmf.assign(grid.size(), 0.0);
    for (const auto& s : samples) {
        out.pmf[grid_argmax(s.u_virt)] += 1.0;
    }
    for (double& p : out.pmf) {
        p /= static_cast<double>(samples.size());
    }
    // Counts are integers over S, so a tiny slack absorbs the division.
    constexpr double kSlack = 1e-12;
    auto quantile = [&](double q) {
        double cdf = 0.0;
        for (std::size_t j = 0; j < grid.size(); ++j) {
            cdf += out.pmf[j];
            if (cdf >= q - kSlack) {
                return grid.points[j];
            }
        }
        return grid.points.back();
    };
    out.median = quantile(0.5);
    out.ci_low = quantile(0.025);
    out.ci_high = quantile(0.975);
    return out;
}

XBestPosterior xbest_posterior(const PosteriorEnsemble& ensemble)
{
    return xbest_posterior(std::span<const LatentState>(ensemble.samples), ensemble.grid);
}

bool ci_width_stop(const XBestPosterior& xb, double threshold)
{
    return xb.ci_width() < threshold;
}

Eigen::VectorXd normalized_utility(const Eigen::VectorXd& u)
{
    const double lo = u.minCoeff();
    const double span = u.maxCoeff() - lo;
    if (span <= 0.0) {
        return Eigen::VectorXd::Zero(u.size());
    }
    return (u.array() - lo) / span;
}

GridSummary grid_summary(const PosteriorEnsemble& ensemble)
{
    if (ensemble.samples.empty()) {
        throw DomainError("grid_summary: empty ensemble");
    }
    const std::size_t J = ensemble.grid.size();
    const std::size_t S = ensemble.samples.size();
    GridSummary out;
    out.points = ensemble.grid.points;
    std::vector<double> col(S);
    auto order_stat = [&](double q) {
        const auto k = static_cast<std::size_t>(std::floor(q * static_cast<double>(S - 1)));
        std::nth_element(col.begin(), col.begin() + static_cast<std::ptrdiff_t>(k), col.end());
        return col[k];
    };
    for (std::size_t j = 0; j < J; ++j) {
        double sum = 0.0;
        for (std::size_t s = 0; s < S; ++s) {
            col[s] = ensemble.samples[s].u_virt[static_cast<Eigen::Index>(j)];
            sum += col[s];
        }
        out.mean.push_back(sum / static_cast<double>(S));
        out.q05.push_back(order_stat(0.05));
        out.q50.push_back(order_stat(0.5));
        out.q95.push_back(order_stat(0.95));
    }
    return out;
}

double GridSummary::mode_location() const
{
    const auto it = std::max_element(mean.begin(), mean.end());
    return points.at(static_cast<std::size_t>(it - mean.begin()));
}

double GridSummary::non_increasing_fraction() const
{
    if (mean.size() < 2) {
        return 1.0;
    }
    std::size_t ok = 0;
    for (std::size_t j = 0; j + 1 < mean.size(); ++j) {
        ok += mean[j + 1] <= mean[j] ? 1 : 0;
    }
    return static_cast<double>(ok) / static_cast<double>(mean.size() - 1);
}

} // namespace therm
