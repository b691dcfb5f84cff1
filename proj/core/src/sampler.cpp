#include "therm/sampler.hpp"

#include "therm/errors.hpp"

#include <unsupported/Eigen/FFT>

#include <algorithm>
#include <cmath>
#include <complex>
#include <numeric>
#include <ostream>
#include <random>
#include <string>

namespace therm {

namespace {

constexpr double kDivergenceThreshold = 1000.0;

// Dual averaging of log step size (Nesterov primal-dual scheme as used for
// HMC warm-up).
class StepSizeAdapter {
public:
    StepSizeAdapter(double initial, double target) : mu_(std::log(10.0 * initial)), target_(target), log_eps_(std::log(initial)) {}

    double update(double accept_prob)
    {
        ++t_;
        const double t = static_cast<double>(t_);
        const double eta = 1.0 / (t + kT0);
        h_bar_ = (1.0 - eta) * h_bar_ + eta * (target_ - accept_prob);
        log_eps_ = mu_ - std::sqrt(t) / kGamma * h_bar_;
        const double w = std::pow(t, -kKappa);
        log_eps_bar_ = w * log_eps_ + (1.0 - w) * log_eps_bar_;
        return std::exp(log_eps_);
    }

    [[nodiscard]] double final_step() const { return std::exp(t_ > 0 ? log_eps_bar_ : log_eps_); }

private:
    static constexpr double kGamma = 0.05;
    static constexpr double kT0 = 10.0;
    static constexpr double kKappa = 0.75;
    double mu_;
    double target_;
    double log_eps_;
    double log_eps_bar_ = 0.0;
    double h_bar_ = 0.0;
    std::size_t t_ = 0;
};

struct Transition {
    bool accepted = false;
    bool divergent = false;
    double accept_prob = 0.0;
};

class Integrator {
public:
    Integrator(const LogDensityFn& target, Eigen::Index dim) : target_(target), p_(dim), grad_(dim), q_new_(dim), grad_new_(dim) {}

    void reset(const Eigen::VectorXd& q)
    {
        logp_ = target_(q, &grad_);
        if (!std::isfinite(logp_) || !grad_.allFinite()) {
            throw DomainError("run_hmc: target is not finite at the initial state");
        }
    }

    Transition step(Eigen::VectorXd& q, double eps, std::size_t n_steps, std::mt19937_64& rng)
    {
        std::normal_distribution<double> n01(0.0, 1.0);
        for (Eigen::Index i = 0; i < p_.size(); ++i) {
            p_[i] = n01(rng);
        }
        const double h0 = -logp_ + 0.5 * p_.squaredNorm();

        Transition out;
        q_new_ = q;
        grad_new_ = grad_;
        double logp_new = logp_;
        try {
            p_ += 0.5 * eps * grad_new_;
            for (std::size_t s = 0; s < n_steps; ++s) {
                q_new_ += eps * p_;
                logp_new = target_(q_new_, &grad_new_);
                if (!std::isfinite(logp_new)) {
                    break;
                }
                p_ += (s + 1 == n_steps ? 0.5 : 1.0) * eps * grad_new_;
            }
        } catch (const DomainError&) {
            logp_new = -std::numeric_limits<double>::infinity();
        } catch (const NumericalError&) {
            logp_new = -std::numeric_limits<double>::infinity();
        }

        const double delta = (-logp_new + 0.5 * p_.squaredNorm()) - h0;
        if (!std::isfinite(delta) || delta > kDivergenceThreshold) {
            out.divergent = true;
            return out;
        }
        out.accept_prob = std::min(1.0, std::exp(-delta));
        std::uniform_real_distribution<double> u01(0.0, 1.0);
        if (u01(rng) < out.accept_prob) {
            out.accepted = true;
            q = q_new_;
            grad_ = grad_new_;
            logp_ = logp_new;
        }
        return out;
    }

private:
    const LogDensityFn& target_;
    Eigen::VectorXd p_;
    Eigen::VectorXd grad_;
    Eigen::VectorXd q_new_;
    Eigen::VectorXd grad_new_;
    double logp_ = 0.0;
};

double mean_of(std::span<const double> x)
{
    return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

// Autocovariance at all lags via zero-padded FFT, normalized to lag 0.
std::vector<double> autocorr_fft(std::span<const double> chain, double& variance)
{
    const std::size_t n = chain.size();
    std::size_t m = 1;
    while (m < 2 * n) {
        m <<= 1;
    }
    const double mean = mean_of(chain);
    std::vector<double> padded(m, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        padded[i] = chain[i] - mean;
    }
    Eigen::FFT<double> fft;
    std::vector<std::complex<double>> freq;
    fft.fwd(freq, padded);
    for (auto& f : freq) {
        f = std::complex<double>(std::norm(f), 0.0);
    }
    std::vector<double> acov;
    fft.inv(acov, freq);
    acov.resize(n);
    variance = acov[0] / static_cast<double>(n);
    std::vector<double> rho(n, 0.0);
    if (acov[0] > 0.0) {
        for (std::size_t k = 0; k < n; ++k) {
            rho[k] = acov[k] / acov[0];
        }
    }
    return rho;
}

bool is_constant(std::span<const double> chain)
{
    const auto [lo, hi] = std::minmax_element(chain.begin(), chain.end());
    return *hi - *lo <= 1e-12 * std::max(1.0, std::abs(*lo));
}

} // namespace

void HmcConfig::validate() const
{
    if (retained == 0 || thin == 0 || leapfrog_steps == 0) {
        throw DomainError("HmcConfig: retained, thin and leapfrog_steps must be >= 1");
    }
    if (!(std::isfinite(step_size) && step_size > 0.0)) {
        throw DomainError("HmcConfig: step_size must be > 0");
    }
    if (!(adapt_target_accept > 0.0 && adapt_target_accept < 1.0)) {
        throw DomainError("HmcConfig: adapt_target_accept must lie in (0, 1)");
    }
}

HmcChain run_hmc(const LogDensityFn& target, const Eigen::VectorXd& init, const HmcConfig& cfg)
{
    cfg.validate();
    if (!init.allFinite()) {
        throw DomainError("run_hmc: non-finite initial state");
    }
    std::mt19937_64 rng(cfg.seed);
    Integrator integ(target, init.size());
    Eigen::VectorXd q = init;
    integ.reset(q);

    HmcChain chain;
    StepSizeAdapter adapter(cfg.step_size, cfg.adapt_target_accept);
    double eps = cfg.step_size;
    for (std::size_t it = 0; it < cfg.burn_in; ++it) {
        const Transition t = integ.step(q, eps, cfg.leapfrog_steps, rng);
        chain.burn_in_divergences += t.divergent ? 1 : 0;
        eps = adapter.update(t.accept_prob);
    }
    if (cfg.burn_in > 0) {
        if (static_cast<double>(chain.burn_in_divergences) > 0.9 * static_cast<double>(cfg.burn_in)) {
            throw NumericalError("run_hmc: " + std::to_string(chain.burn_in_divergences) + " of "
                                     + std::to_string(cfg.burn_in) + " burn-in trajectories diverged",
                                 0.0);
        }
        eps = adapter.final_step();
    }
    chain.step_size = eps;

    // Post-warm-up the step is jittered by +-10% per trajectory so a fixed
    // path length cannot lock onto a periodic orbit.
    std::uniform_real_distribution<double> jitter(0.9, 1.1);
    std::size_t accepted = 0;
    const std::size_t total = cfg.retained * cfg.thin;
    chain.samples.reserve(cfg.retained);
    for (std::size_t it = 0; it < total; ++it) {
        const Transition t = integ.step(q, eps * jitter(rng), cfg.leapfrog_steps, rng);
        accepted += t.accepted ? 1 : 0;
        chain.divergences += t.divergent ? 1 : 0;
        if ((it + 1) % cfg.thin == 0) {
            chain.samples.push_back(q);
        }
    }
    chain.accept_rate = static_cast<double>(accepted) / static_cast<double>(total);
    return chain;
}

EssResult effective_sample_size(std::span<const double> chain)
{
    if (chain.size() < 10) {
        throw DomainError("effective_sample_size: chain needs at least 10 draws");
    }
    if (is_constant(chain)) {
        return {0.0, true};
    }
    double variance = 0.0;
    const std::vector<double> rho = autocorr_fft(chain, variance);
    const std::size_t n = chain.size();

    // Pair sums Gamma_k = rho_2k + rho_2k+1, truncated at the first
    // non-positive pair and forced non-increasing.
    double tau = -1.0;
    double prev = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; 2 * k + 1 < n; ++k) {
        double gamma = rho[2 * k] + rho[2 * k + 1];
        if (gamma <= 0.0) {
            break;
        }
        gamma = std::min(gamma, prev);
        prev = gamma;
        tau += 2.0 * gamma;
    }
    const double nd = static_cast<double>(n);
    tau = std::max(tau, 1.0 / std::log10(nd));
    return {nd / tau, false};
}

std::vector<double> autocorrelation(std::span<const double> chain, std::size_t max_lag)
{
    if (chain.size() <= max_lag || chain.size() < 2) {
        throw DomainError("autocorrelation: chain must be longer than max_lag");
    }
    if (is_constant(chain)) {
        throw DomainError("autocorrelation: constant chain");
    }
    double variance = 0.0;
    std::vector<double> rho = autocorr_fft(chain, variance);
    rho.resize(max_lag + 1);
    rho[0] = 1.0;
    return rho;
}

double split_rhat(const std::vector<std::vector<double>>& chains)
{
    if (chains.empty()) {
        throw DomainError("split_rhat: no chains");
    }
    const std::size_t n = chains.front().size();
    if (n < 4) {
        throw DomainError("split_rhat: chains need at least 4 draws");
    }
    std::vector<std::span<const double>> halves;
    const std::size_t half = n / 2;
    for (const auto& c : chains) {
        if (c.size() != n) {
            throw DomainError("split_rhat: chains must have equal length");
        }
        halves.emplace_back(c.data(), half);
        halves.emplace_back(c.data() + (n - half), half);
    }
    const double m = static_cast<double>(halves.size());
    const double len = static_cast<double>(half);
    std::vector<double> means;
    double w = 0.0;
    for (auto h : halves) {
        const double mu = mean_of(h);
        means.push_back(mu);
        double ss = 0.0;
        for (double x : h) {
            ss += (x - mu) * (x - mu);
        }
        w += ss / (len - 1.0);
    }
    w /= m;
    const double grand = std::accumulate(means.begin(), means.end(), 0.0) / m;
    double b = 0.0;
    for (double mu : means) {
        b += (mu - grand) * (mu - grand);
    }
    b *= len / (m - 1.0);
    if (w <= 0.0) {
        return b <= 0.0 ? 1.0 : std::numeric_limits<double>::infinity();
    }
    const double var_plus = (len - 1.0) / len * w + b / len;
    return std::sqrt(var_plus / w);
}

namespace {

// Gibbs sampler for ConstrainedGp: boundary-aware HMC over whitened latents
// at fixed hyperparameters, then slice updates of the log hyperparameters.
class ConstrainedSampler {
public:
    ConstrainedSampler(const ConstrainedGp& model, const Eigen::VectorXd& init)
        : m_(model),
          nu_(model.u_block_size()),
          ng_(model.g_block_size()),
          boundaries_(model.saturated_boundaries()),
          signs_(boundaries_.size(), -1)
    {
        z_ = init;
        refresh();
        if (!std::isfinite(logp_)) {
            throw DomainError("sample_posterior: density is not finite at the initial state");
        }
    }

    [[nodiscard]] const Eigen::VectorXd& state() const { return z_; }

    Transition latent_step(double eps, std::size_t n_steps, std::mt19937_64& rng)
    {
        std::normal_distribution<double> n01(0.0, 1.0);
        const Eigen::Index n = nu_ + ng_;
        Eigen::VectorXd v = z_.head(n);
        Eigen::VectorXd p(n);
        for (Eigen::Index i = 0; i < n; ++i) {
            p[i] = n01(rng);
        }
        Eigen::VectorXd fu = fu_;
        Eigen::VectorXd fg = fg_;
        init_signs(fu, fg);
        const double h0 = -latent_logp(v, fu, fg) + 0.5 * p.squaredNorm();

        Transition out;
        Eigen::VectorXd grad(n);
        gradient(v, fu, fg, grad);
        bool ok = grad.allFinite();
        p += 0.5 * eps * grad;
        for (std::size_t s = 0; ok && s < n_steps; ++s) {
            ok = drift(v, p, fu, fg, eps);
            if (!ok) {
                break;
            }
            // Re-derive f from v so round-off from event handling cannot pile up.
            fu.noalias() = lu_.triangularView<Eigen::Lower>() * v.head(nu_);
            if (ng_ > 0) {
                fg.noalias() = lg_.triangularView<Eigen::Lower>() * v.tail(ng_);
            }
            gradient(v, fu, fg, grad);
            ok = grad.allFinite();
            p += (s + 1 == n_steps ? 0.5 : 1.0) * eps * grad;
        }
        if (!ok) {
            out.divergent = true;
            return out;
        }
        const double h1 = -latent_logp(v, fu, fg) + 0.5 * p.squaredNorm();
        const double delta = h1 - h0;
        if (!std::isfinite(delta) || delta > kDivergenceThreshold) {
            out.divergent = true;
            return out;
        }
        out.accept_prob = std::min(1.0, std::exp(-delta));
        std::uniform_real_distribution<double> u01(0.0, 1.0);
        if (u01(rng) < out.accept_prob) {
            out.accepted = true;
            z_.head(n) = v;
            fu_ = fu;
            fg_ = fg;
            logp_ = current_density();
        }
        return out;
    }

    // Stepping-out / shrinkage slice sampler on each log hyperparameter.
    void hyper_sweep(std::mt19937_64& rng)
    {
        std::uniform_real_distribution<double> u01(0.0, 1.0);
        constexpr double kWidth = 0.75;
        constexpr int kMaxSteps = 8;
        for (Eigen::Index k = m_.theta_offset(); k < z_.size(); ++k) {
            const double x0 = z_[k];
            const double level = logp_ + std::log(u01(rng));
            double lo = x0 - kWidth * u01(rng);
            double hi = lo + kWidth;
            int budget = kMaxSteps;
            while (budget-- > 0 && eval_at(k, lo) > level) {
                lo -= kWidth;
            }
            budget = kMaxSteps;
            while (budget-- > 0 && eval_at(k, hi) > level) {
                hi += kWidth;
            }
            for (int tries = 0; tries < 100; ++tries) {
                const double x1 = lo + (hi - lo) * u01(rng);
                const double l1 = eval_at(k, x1);
                if (l1 > level) {
                    // eval_at left the factor and latent block for x1 in scratch.
                    z_[k] = x1;
                    logp_ = l1;
                    if (scratch_g_) {
                        lg_.swap(l_scratch_);
                        fg_.swap(f_scratch_);
                    } else {
                        lu_.swap(l_scratch_);
                        fu_.swap(f_scratch_);
                    }
                    break;
                }
                (x1 < x0 ? lo : hi) = x1;
                if (tries == 99) {
                    z_[k] = x0;
                }
            }
        }
    }

private:
    // Log density up to a constant, evaluated at the cached factors. Equal
    // to log_density_whitened minus the Gaussian normalizer.
    double current_density() const
    {
        return -0.5 * z_.head(nu_ + ng_).squaredNorm() + m_.exact_terms(fu_, fg_) + m_.hyper_log_prior(z_);
    }

    // Density with z[k] = x. Only the block owning k is refactored; the new
    // factor and latent values are kept in scratch for the caller.
    double eval_at(Eigen::Index k, double x)
    {
        const double keep = z_[k];
        z_[k] = x;
        scratch_g_ = k >= m_.theta_offset() + 2;
        double l = -std::numeric_limits<double>::infinity();
        try {
            m_.block_factor(z_, scratch_g_, l_scratch_);
            if (scratch_g_) {
                f_scratch_.noalias() = l_scratch_.triangularView<Eigen::Lower>() * z_.segment(nu_, ng_);
                l = m_.exact_terms(fu_, f_scratch_);
            } else {
                f_scratch_.noalias() = l_scratch_.triangularView<Eigen::Lower>() * z_.head(nu_);
                l = m_.exact_terms(f_scratch_, fg_);
            }
            l += -0.5 * z_.head(nu_ + ng_).squaredNorm() + m_.hyper_log_prior(z_);
        } catch (const NumericalError&) {
        } catch (const DomainError&) {
        }
        z_[k] = keep;
        return std::isfinite(l) ? l : -std::numeric_limits<double>::infinity();
    }

    void refresh()
    {
        m_.latent_factors(z_, lu_, lg_);
        fu_ = lu_.triangularView<Eigen::Lower>() * z_.head(nu_);
        if (ng_ > 0) {
            fg_ = lg_.triangularView<Eigen::Lower>() * z_.segment(nu_, ng_);
        } else {
            fg_.resize(0);
        }
        logp_ = current_density();
    }

    [[nodiscard]] const Eigen::VectorXd& block_f(const ConstrainedGp::Boundary& b, const Eigen::VectorXd& fu,
                                                 const Eigen::VectorXd& fg) const
    {
        return b.in_g_block ? fg : fu;
    }

    void init_signs(const Eigen::VectorXd& fu, const Eigen::VectorXd& fg)
    {
        for (std::size_t k = 0; k < boundaries_.size(); ++k) {
            const auto& b = boundaries_[k];
            signs_[k] = b.wall ? -1 : (block_f(b, fu, fg)[b.row] >= 0.0 ? 1 : -1);
        }
    }

    // Latent part of the exact log density (hyperparameters fixed).
    double latent_logp(const Eigen::VectorXd& v, const Eigen::VectorXd& fu, const Eigen::VectorXd& fg) const
    {
        return -0.5 * v.squaredNorm() + m_.exact_terms(fu, fg);
    }

    void gradient(const Eigen::VectorXd& v, const Eigen::VectorXd& fu, const Eigen::VectorXd& fg,
                  Eigen::VectorXd& grad)
    {
        m_.saturated_terms(fu, fg, signs_, gu_, gg_);
        grad.head(nu_).noalias() = lu_.triangularView<Eigen::Lower>().transpose() * gu_;
        if (ng_ > 0) {
            grad.tail(ng_).noalias() = lg_.triangularView<Eigen::Lower>().transpose() * gg_;
        }
        grad -= v;
    }

    // Straight-line drift for time eps, handling boundary events. Returns
    // false if the event budget runs out.
    bool drift(Eigen::VectorXd& v, Eigen::VectorXd& p, Eigen::VectorXd& fu, Eigen::VectorXd& fg, double eps)
    {
        double t_left = eps;
        for (int events = 0; events < 1000; ++events) {
            du_.noalias() = lu_.triangularView<Eigen::Lower>() * p.head(nu_);
            if (ng_ > 0) {
                dg_.noalias() = lg_.triangularView<Eigen::Lower>() * p.tail(ng_);
            }
            double t_hit = t_left;
            std::size_t hit = boundaries_.size();
            for (std::size_t k = 0; k < boundaries_.size(); ++k) {
                const auto& b = boundaries_[k];
                const double c = block_f(b, fu, fg)[b.row];
                const double d = b.in_g_block ? dg_[b.row] : du_[b.row];
                // Moving toward the other side of the boundary?
                if (signs_[k] * d >= 0.0) {
                    continue;
                }
                const double t = std::max(0.0, -c / d);
                if (t < t_hit) {
                    t_hit = t;
                    hit = k;
                }
            }
            v += t_hit * p;
            fu += t_hit * du_;
            if (ng_ > 0) {
                fg += t_hit * dg_;
            }
            t_left -= t_hit;
            if (hit == boundaries_.size()) {
                return true;
            }

            const auto& b = boundaries_[hit];
            const Eigen::MatrixXd& l = b.in_g_block ? lg_ : lu_;
            const Eigen::Index off = b.in_g_block ? nu_ : 0;
            const Eigen::Index len = b.row + 1;  // lower-triangular row
            const auto normal = l.row(b.row).head(len);
            const double norm2 = normal.squaredNorm();
            const double pn = normal.dot(p.segment(off, len)) / std::sqrt(norm2);
            double new_pn = -pn;  // reflection
            if (!b.wall) {
                const double du = -m_.sign_switch_delta(fg[b.grid_index], signs_[hit]);  // potential rise
                if (0.5 * pn * pn > du) {
                    new_pn = std::copysign(std::sqrt(pn * pn - 2.0 * du), pn);
                    signs_[hit] = -signs_[hit];
                }
            }
            p.segment(off, len) += ((new_pn - pn) / std::sqrt(norm2)) * normal.transpose();
        }
        return false;
    }

    const ConstrainedGp& m_;
    Eigen::Index nu_;
    Eigen::Index ng_;
    std::vector<ConstrainedGp::Boundary> boundaries_;
    std::vector<int> signs_;
    Eigen::VectorXd z_;
    Eigen::MatrixXd lu_;
    Eigen::MatrixXd lg_;
    Eigen::VectorXd fu_;
    Eigen::VectorXd fg_;
    Eigen::VectorXd gu_;
    Eigen::VectorXd gg_;
    Eigen::VectorXd du_;
    Eigen::VectorXd dg_;
    Eigen::MatrixXd l_scratch_;
    Eigen::VectorXd f_scratch_;
    bool scratch_g_ = false;
    double logp_ = 0.0;
};

} // namespace

PosteriorEnsemble sample_posterior(const ConstrainedGp& model, const HmcConfig& cfg, bool compute_ess)
{
    cfg.validate();
    std::mt19937_64 rng(cfg.seed);
    ConstrainedSampler sampler(model, model.initial_whitened());

    HmcChain chain;
    StepSizeAdapter adapter(cfg.step_size, cfg.adapt_target_accept);
    double eps = cfg.step_size;
    for (std::size_t it = 0; it < cfg.burn_in; ++it) {
        const Transition t = sampler.latent_step(eps, cfg.leapfrog_steps, rng);
        chain.burn_in_divergences += t.divergent ? 1 : 0;
        eps = adapter.update(t.accept_prob);
        sampler.hyper_sweep(rng);
    }
    if (cfg.burn_in > 0) {
        if (static_cast<double>(chain.burn_in_divergences) > 0.9 * static_cast<double>(cfg.burn_in)) {
            throw NumericalError("sample_posterior: " + std::to_string(chain.burn_in_divergences) + " of "
                                     + std::to_string(cfg.burn_in) + " burn-in trajectories diverged",
                                 0.0);
        }
        eps = adapter.final_step();
    }
    chain.step_size = eps;

    std::uniform_real_distribution<double> jitter(0.9, 1.1);
    std::size_t accepted = 0;
    const std::size_t total = cfg.retained * cfg.thin;
    for (std::size_t it = 0; it < total; ++it) {
        const Transition t = sampler.latent_step(eps * jitter(rng), cfg.leapfrog_steps, rng);
        accepted += t.accepted ? 1 : 0;
        chain.divergences += t.divergent ? 1 : 0;
        sampler.hyper_sweep(rng);
        if ((it + 1) % cfg.thin == 0) {
            chain.samples.push_back(sampler.state());
        }
    }
    chain.accept_rate = static_cast<double>(accepted) / static_cast<double>(total);

    PosteriorEnsemble out;
    out.config = cfg;
    out.grid = model.grid();
    out.accept_rate = chain.accept_rate;
    out.step_size = chain.step_size;
    out.divergences = chain.divergences;
    out.samples.reserve(chain.samples.size());
    std::vector<Eigen::VectorXd> natural;
    natural.reserve(chain.samples.size());
    for (const auto& z : chain.samples) {
        natural.push_back(model.to_natural(z));
        out.samples.push_back(model.unpack(natural.back()));
    }
    if (compute_ess && natural.size() >= 10) {
        std::vector<double> column(natural.size());
        for (Eigen::Index d = 0; d < model.dimension(); ++d) {
            for (std::size_t s = 0; s < natural.size(); ++s) {
                column[s] = natural[s][d];
            }
            out.ess.push_back(effective_sample_size(column).ess);
        }
    }
    return out;
}

void write_trace_csv(std::ostream& os, const PosteriorEnsemble& ensemble, const ConstrainedGp& model)
{
    const auto& vals = model.u_value_points();
    const auto& ders = model.u_deriv_points();
    const std::size_t J = model.grid().size();
    std::vector<std::string> names;
    for (std::size_t i = 0; i < vals.size(); ++i) {
        names.push_back((i < J ? "u_virt@" : "u_obs@") + std::to_string(vals[i]));
    }
    for (std::size_t i = 0; i < ders.size(); ++i) {
        names.push_back((i < J ? "du_virt@" : "du_obs@") + std::to_string(ders[i]));
    }
    if (model.has_latent_g()) {
        for (double x : model.grid().points) {
            names.push_back("g_virt@" + std::to_string(x));
        }
        for (double x : model.grid().points) {
            names.push_back("dg_virt@" + std::to_string(x));
        }
    }
    names.insert(names.end(), {"log_nu_u", "log_rho_u"});
    if (model.has_latent_g()) {
        names.insert(names.end(), {"log_nu_g", "log_rho_g"});
    }
    // Layout of pack() puts theta_u before theta_g after both latent blocks.
    for (std::size_t i = 0; i < names.size(); ++i) {
        os << (i ? "," : "") << names[i];
    }
    os << '\n';
    os.precision(17);
    for (const auto& s : ensemble.samples) {
        const Eigen::VectorXd x = model.pack(s);
        for (Eigen::Index i = 0; i < x.size(); ++i) {
            os << (i ? "," : "") << x[i];
        }
        os << '\n';
    }
}

} // namespace therm
