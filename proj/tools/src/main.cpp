#include "commands.hpp"

#include "therm/errors.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <iostream>

namespace {

void add_hmc_flags(CLI::App* cmd, therm::HmcConfig& hmc)
{
    cmd->add_option("--burn-in", hmc.burn_in, "Sampler burn-in iterations")->capture_default_str();
    cmd->add_option("--retained", hmc.retained, "Retained posterior draws")->capture_default_str();
    cmd->add_option("--thin", hmc.thin, "Keep every k-th iteration")->capture_default_str();
    cmd->add_option("--leapfrog", hmc.leapfrog_steps, "Leapfrog steps per trajectory")->capture_default_str();
}

} // namespace

int main(int argc, char** argv)
{
    using namespace therm::cli;

    CLI::App app{"Thermal preference elicitation: simulation, regression, diagnostics and the session server."};
    app.require_subcommand(1);
    std::string format = "json";

    SimulateOptions sim;
    auto* simulate = app.add_subcommand("simulate", "Run elicitation trials against a synthetic occupant");
    simulate->add_option("--occupant", sim.occupant, "Reference occupant 1, 2 or 3")->capture_default_str();
    simulate->add_option("--peak", sim.peak, "Override the occupant's preferred temperature");
    simulate->add_option("--width", sim.width, "Override the occupant's utility width");
    simulate->add_option("--strategy", sim.strategy, "eui or rs")->capture_default_str();
    simulate->add_option("--seeds", sim.seeds, "Number of trials (seeds seed .. seed+n-1)")->capture_default_str();
    simulate->add_option("--seed", sim.seed, "First seed")->capture_default_str();
    simulate->add_option("--budget", sim.budget, "Maximum number of queries")->capture_default_str();
    simulate->add_option("--init-temp", sim.init_temp, "First query temperature")->capture_default_str();
    simulate->add_flag("--compare", sim.compare, "Run eui and rs and print the mean AED per step");
    simulate->add_flag("--no-stop", sim.no_stop, "Ignore stopping rules other than the budget");
    simulate->add_option("--jobs", sim.jobs, "Trials run in parallel")->capture_default_str();
    simulate->add_option("--out-dir", sim.out_dir, "Write one file per trial here instead of stdout");
    simulate->add_option("--format", format, "json or csv")->capture_default_str();
    add_hmc_flags(simulate, sim.hmc);

    RegressOptions reg;
    auto* regress = app.add_subcommand("regress", "Fit a shape-constrained GP regression");
    regress->add_option("--dataset", reg.dataset, "d1, d2 or a CSV file with x,y rows")->capture_default_str();
    regress->add_option("--mode", reg.mode, "none, monotonic or unimodal")->capture_default_str();
    regress->add_option("--grid-points", reg.grid_points, "Virtual grid size")->capture_default_str();
    regress->add_option("--noise-sd", reg.noise_sd, "Observation noise standard deviation")->capture_default_str();
    regress->add_option("--trace", reg.trace, "Also write the sampler trace CSV here");
    regress->add_option("--format", format, "json or csv")->capture_default_str();
    regress->add_option("--seed", reg.hmc.seed, "Sampler seed")->capture_default_str();
    add_hmc_flags(regress, reg.hmc);

    DiagnoseOptions diag;
    auto* diagnose = app.add_subcommand("diagnose", "ESS and autocorrelation of a sampler trace CSV");
    diagnose->add_option("trace", diag.trace, "Trace CSV (header row, one column per coordinate)")->required();
    diagnose->add_option("--max-lag", diag.max_lag, "Largest autocorrelation lag")->capture_default_str();
    diagnose->add_option("--format", format, "json or csv")->capture_default_str();

    ServeOptions srv;
    auto* serve = app.add_subcommand("serve", "Serve the session HTTP API");
    serve->add_option("--host", srv.host, "Listen address")->capture_default_str();
    serve->add_option("--port", srv.port, "Listen port (0 picks a free one)")->capture_default_str();
    serve->add_option("--store-dir", srv.store_dir, "Session log directory (THERM_ELICIT_STORE overrides)")
        ->capture_default_str();
    serve->add_option("--seed", srv.seed, "Default seed for new sessions")->capture_default_str();
    serve->add_option("--budget", srv.budget, "Default query budget for new sessions")->capture_default_str();
    add_hmc_flags(serve, srv.hmc);

    CLI11_PARSE(app, argc, argv);

    try {
        const Format fmt = parse_format(format);
        if (simulate->parsed()) {
            sim.format = fmt;
            return run_simulate(sim, std::cout);
        }
        if (regress->parsed()) {
            reg.format = fmt;
            return run_regress(reg, std::cout);
        }
        if (diagnose->parsed()) {
            diag.format = fmt;
            return run_diagnose(diag, std::cout);
        }
        if (const char* env = std::getenv("THERM_ELICIT_STORE"); env != nullptr && *env != '\0') {
            srv.store_dir = env;
        }
        return run_serve(srv, std::cerr);
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n" << app.help();
        return 2;
    } catch (const IoError& e) {
        std::cerr << "I/O error: " << e.what() << '\n';
        return 3;
    } catch (const therm::DomainError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}
