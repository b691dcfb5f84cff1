#include "commands.hpp"

#include "http_api.hpp"

#include "therm/errors.hpp"
#include "therm/serialize.hpp"
#include "therm/session.hpp"
#include "therm/simulator.hpp"

#include <nlohmann/json.hpp>

#include <pthread.h>
#include <signal.h>
#include <unistd.h>

#include <atomic>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

namespace therm::cli {

namespace fs = std::filesystem;
using nlohmann::json;

Format parse_format(const std::string& s)
{
    if (s == "json") {
        return Format::Json;
    }
    if (s == "csv") {
        return Format::Csv;
    }
    throw UsageError("--format must be json or csv");
}

namespace {

constexpr std::string_view kCompareSchema = "therm.compare/1";
constexpr std::string_view kRegressSchema = "therm.regress/1";
constexpr std::string_view kDiagnoseSchema = "therm.diagnose/1";

SyntheticOccupant occupant_for(const SimulateOptions& o)
{
    SyntheticOccupant occ;
    try {
        occ = synthetic_occupant(o.occupant);
    } catch (const DomainError& e) {
        throw UsageError(e.what());
    }
    if (o.peak) {
        occ.peak = *o.peak;
    }
    if (o.width) {
        occ.width = *o.width;
    }
    try {
        occ.validate();
    } catch (const DomainError& e) {
        throw UsageError(e.what());
    }
    return occ;
}

/// Runs f(i) for i in [0, n) on up to `jobs` threads.
template <typename F>
void parallel_for(std::size_t n, std::size_t jobs, F&& f)
{
    jobs = std::max<std::size_t>(1, std::min(jobs, n));
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mu;
    auto worker = [&] {
        for (std::size_t i = next++; i < n; i = next++) {
            try {
                f(i);
            } catch (...) {
                std::lock_guard lock(failure_mu);
                if (!failure) {
                    failure = std::current_exception();
                }
            }
        }
    };
    std::vector<std::thread> pool;
    for (std::size_t t = 1; t < jobs; ++t) {
        pool.emplace_back(worker);
    }
    worker();
    for (auto& t : pool) {
        t.join();
    }
    if (failure) {
        std::rethrow_exception(failure);
    }
}

std::ofstream open_out(const fs::path& p)
{
    std::ofstream f(p);
    if (!f) {
        throw IoError("cannot write " + p.string());
    }
    return f;
}

void emit_trial(std::ostream& os, Format fmt, const TrialResult& t, const SyntheticOccupant& occ, const EngineConfig& cfg)
{
    if (fmt == Format::Json) {
        write_trial_jsonl(os, t, occ, cfg);
    } else {
        write_trial_csv(os, t, occ);
    }
}

/// Mean AED per step across trials; steps after an early stop carry the
/// last value forward.
std::vector<double> mean_aed_curve(const std::vector<TrialResult>& trials, double peak, std::size_t budget)
{
    std::vector<double> curve(budget, 0.0);
    for (const auto& t : trials) {
        const std::size_t S = t.final_posterior->samples.size();
        for (std::size_t k = 0; k < budget; ++k) {
            const std::size_t i = std::min(k, t.xbest_trace.size() - 1);
            curve[k] += aed(t.xbest_trace[i], S, peak);
        }
    }
    for (double& v : curve) {
        v /= static_cast<double>(trials.size());
    }
    return curve;
}

} // namespace

int run_simulate(const SimulateOptions& o, std::ostream& out)
{
    const SyntheticOccupant occ = occupant_for(o);
    if (o.seeds < 1) {
        throw UsageError("--seeds must be >= 1");
    }
    EngineConfig base;
    base.init_temp = o.init_temp;
    base.budget = o.budget;
    base.hmc = o.hmc;
    base.honor_stopping = !(o.no_stop || o.compare);
    try {
        base.strategy = parse_strategy(o.strategy);
        base.validate();
    } catch (const DomainError& e) {
        throw UsageError(e.what());
    }

    std::vector<Strategy> strategies{base.strategy};
    if (o.compare) {
        strategies = {Strategy::Eui, Strategy::RandomSearch};
    }
    std::vector<std::vector<TrialResult>> results(strategies.size(), std::vector<TrialResult>(o.seeds));
    parallel_for(strategies.size() * o.seeds, o.jobs, [&](std::size_t k) {
        const std::size_t si = k / o.seeds;
        const std::size_t seed = k % o.seeds;
        EngineConfig cfg = base;
        cfg.strategy = strategies[si];
        cfg.seed = o.seed + seed;
        results[si][seed] = run_elicitation(occ, cfg);
    });

    if (!o.out_dir.empty()) {
        fs::create_directories(o.out_dir);
        for (std::size_t si = 0; si < strategies.size(); ++si) {
            for (std::size_t s = 0; s < o.seeds; ++s) {
                EngineConfig cfg = base;
                cfg.strategy = strategies[si];
                cfg.seed = o.seed + s;
                std::ostringstream name;
                name << "trial_" << to_string(cfg.strategy) << "_seed" << cfg.seed
                     << (o.format == Format::Json ? ".jsonl" : ".csv");
                auto f = open_out(fs::path(o.out_dir) / name.str());
                emit_trial(f, o.format, results[si][s], occ, cfg);
            }
        }
    } else if (!o.compare) {
        for (std::size_t s = 0; s < o.seeds; ++s) {
            EngineConfig cfg = base;
            cfg.seed = o.seed + s;
            emit_trial(out, o.format, results[0][s], occ, cfg);
        }
    }

    if (o.compare) {
        const auto eui = mean_aed_curve(results[0], occ.peak, o.budget);
        const auto rs = mean_aed_curve(results[1], occ.peak, o.budget);
        if (o.format == Format::Json) {
            json rows = json::array();
            for (std::size_t k = 0; k < o.budget; ++k) {
                rows.push_back({{"step", k + 1}, {"aed_eui", eui[k]}, {"aed_rs", rs[k]}});
            }
            out << json{{"schema", kCompareSchema},
                        {"occupant", {{"peak", occ.peak}, {"width", occ.width}}},
                        {"seeds", o.seeds},
                        {"steps", rows}}
                       .dump()
                << '\n';
        } else {
            out << "step,aed_eui,aed_rs\n";
            for (std::size_t k = 0; k < o.budget; ++k) {
                out << k + 1 << ',' << eui[k] << ',' << rs[k] << '\n';
            }
        }
    }
    return 0;
}

namespace {

RegressionData load_xy(const std::string& name)
{
    if (name == "d1") {
        return regression_d1();
    }
    if (name == "d2") {
        return regression_d2();
    }
    std::ifstream in(name);
    if (!in) {
        throw UsageError("unknown dataset '" + name + "' (expected d1, d2 or a readable x,y CSV file)");
    }
    RegressionData d;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#') {
            continue;
        }
        std::istringstream row(line);
        std::string xs;
        std::string ys;
        if (!std::getline(row, xs, ',') || !std::getline(row, ys)) {
            throw IoError(name + ":" + std::to_string(lineno) + ": expected x,y");
        }
        try {
            const double x = std::stod(xs);
            const double y = std::stod(ys);
            d.x.push_back(x);
            d.y.push_back(y);
        } catch (const std::exception&) {
            if (lineno == 1) {
                continue;  // header
            }
            throw IoError(name + ":" + std::to_string(lineno) + ": not a number");
        }
    }
    if (d.x.empty()) {
        throw IoError(name + ": no data rows");
    }
    return d;
}

RegressionMode parse_mode(const std::string& m)
{
    if (m == "none") {
        return RegressionMode::Unconstrained;
    }
    if (m == "monotonic") {
        return RegressionMode::MonotoneDecreasing;
    }
    if (m == "unimodal") {
        return RegressionMode::Unimodal;
    }
    throw UsageError("--mode must be none, monotonic or unimodal");
}

} // namespace

int run_regress(const RegressOptions& o, std::ostream& out)
{
    const RegressionMode mode = parse_mode(o.mode);
    const RegressionData d = load_xy(o.dataset);
    if (o.grid_points < 2) {
        throw UsageError("--grid-points must be >= 2");
    }
    const auto [lo, hi] = std::minmax_element(d.x.begin(), d.x.end());
    if (!(*hi > *lo)) {
        throw UsageError("dataset needs at least two distinct x values");
    }
    const VirtualGrid grid = VirtualGrid::uniform(*lo, *hi, o.grid_points);
    RegressionOptions ropt;
    ropt.noise_sd = o.noise_sd;
    const ConstrainedGp model = build_regression_posterior(d.x, d.y, mode, grid, ropt);
    const PosteriorEnsemble post = sample_posterior(model, o.hmc);
    const GridSummary sum = grid_summary(post);

    if (!o.trace.empty()) {
        auto f = open_out(o.trace);
        write_trace_csv(f, post, model);
    }
    if (o.format == Format::Json) {
        out << json{{"schema", kRegressSchema},
                    {"dataset", o.dataset},
                    {"mode", o.mode},
                    {"grid", sum.points},
                    {"mean", sum.mean},
                    {"q05", sum.q05},
                    {"q50", sum.q50},
                    {"q95", sum.q95},
                    {"mode_location", sum.mode_location()},
                    {"non_increasing_fraction", sum.non_increasing_fraction()},
                    {"accept_rate", post.accept_rate}}
                   .dump()
            << '\n';
    } else {
        out << "x,mean,q05,q50,q95\n";
        for (std::size_t j = 0; j < sum.points.size(); ++j) {
            out << sum.points[j] << ',' << sum.mean[j] << ',' << sum.q05[j] << ',' << sum.q50[j] << ','
                << sum.q95[j] << '\n';
        }
    }
    return 0;
}

int run_diagnose(const DiagnoseOptions& o, std::ostream& out)
{
    std::ifstream in(o.trace);
    if (!in) {
        throw IoError("cannot read trace file '" + o.trace + "'");
    }
    std::string line;
    if (!std::getline(in, line)) {
        throw IoError(o.trace + ": empty file");
    }
    std::vector<std::string> names;
    {
        std::istringstream hdr(line);
        std::string cell;
        while (std::getline(hdr, cell, ',')) {
            names.push_back(cell);
        }
    }
    std::vector<std::vector<double>> cols(names.size());
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) {
            continue;
        }
        std::istringstream row(line);
        std::string cell;
        std::size_t c = 0;
        while (std::getline(row, cell, ',')) {
            if (c >= cols.size()) {
                throw IoError(o.trace + ":" + std::to_string(lineno) + ": too many columns");
            }
            try {
                cols[c++].push_back(std::stod(cell));
            } catch (const std::exception&) {
                throw IoError(o.trace + ":" + std::to_string(lineno) + ": not a number");
            }
        }
        if (c != cols.size()) {
            throw IoError(o.trace + ":" + std::to_string(lineno) + ": too few columns");
        }
    }
    if (cols.empty() || cols[0].size() < 10) {
        throw IoError(o.trace + ": need at least 10 rows");
    }

    json report = json::array();
    if (o.format == Format::Csv) {
        out << "name,n,ess,degenerate";
        for (std::size_t k = 1; k <= o.max_lag; ++k) {
            out << ",acf" << k;
        }
        out << '\n';
    }
    for (std::size_t c = 0; c < cols.size(); ++c) {
        const EssResult e = effective_sample_size(cols[c]);
        const std::size_t lag = std::min(o.max_lag, cols[c].size() - 1);
        std::vector<double> acf = e.degenerate ? std::vector<double>(lag + 1, 1.0) : autocorrelation(cols[c], lag);
        if (o.format == Format::Json) {
            report.push_back({{"name", names[c]},
                              {"n", cols[c].size()},
                              {"ess", e.ess},
                              {"degenerate", e.degenerate},
                              {"autocorrelation", acf}});
        } else {
            out << names[c] << ',' << cols[c].size() << ',' << e.ess << ',' << (e.degenerate ? 1 : 0);
            for (std::size_t k = 1; k < acf.size(); ++k) {
                out << ',' << acf[k];
            }
            out << '\n';
        }
    }
    if (o.format == Format::Json) {
        out << json{{"schema", kDiagnoseSchema}, {"file", o.trace}, {"columns", report}}.dump() << '\n';
    }
    return 0;
}

int run_serve(const ServeOptions& o, std::ostream& log)
{
    // Block the termination signals before any thread starts so that only
    // the waiter below receives them.
    sigset_t set;
    sigemptyset(&set);
    sigaddset(&set, SIGINT);
    sigaddset(&set, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &set, nullptr);

    ServiceConfig cfg;
    cfg.store_dir = o.store_dir;
    cfg.hmc = o.hmc;
    cfg.default_budget = o.budget;
    cfg.default_seed = o.seed;
    SessionService service(cfg);
    for (const auto& [id, why] : service.recovery().unrecoverable) {
        log << "session " << id << " unrecoverable: " << why << '\n';
    }
    HttpApi api(service);
    const int port = api.bind(o.host, o.port);
    log << "listening on " << o.host << ':' << port << " (store " << o.store_dir << ", "
        << service.recovery().recovered.size() << " sessions recovered)" << std::endl;

    std::atomic<bool> done{false};
    std::thread waiter([&] {
        int sig = 0;
        sigwait(&set, &sig);
        // listen() may not have started yet; keep asking until it returns.
        while (!done) {
            api.stop();
            std::this_thread::sleep_for(std::chrono::milliseconds(20));
        }
    });
    api.listen();
    done = true;
    // Wake the waiter if the server stopped on its own.
    kill(getpid(), SIGTERM);
    waiter.join();
    service.shutdown();
    log << "shut down cleanly" << std::endl;
    return 0;
}

} // namespace therm::cli
