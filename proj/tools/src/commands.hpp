#pragma once

#include "therm/sampler.hpp"

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>

namespace therm::cli {

/// Bad flag values found after parsing; reported like a parse error.
class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Unreadable input or unwritable output.
class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class Format { Json, Csv };
Format parse_format(const std::string& s);

struct SimulateOptions {
    int occupant = 1;
    std::optional<double> peak;   // overrides the numbered occupant
    std::optional<double> width;
    std::string strategy = "eui";
    std::size_t seeds = 1;
    std::uint64_t seed = 0;
    std::size_t budget = 10;
    double init_temp = 21.0;
    bool compare = false;
    bool no_stop = false;
    std::size_t jobs = 1;
    std::string out_dir;  // empty: stdout
    Format format = Format::Json;
    HmcConfig hmc;
};

struct RegressOptions {
    std::string dataset = "d1";  // d1, d2 or a CSV path with x,y columns
    std::string mode = "monotonic";
    std::size_t grid_points = 21;
    double noise_sd = 0.1;
    std::string trace;  // optional trace CSV output
    Format format = Format::Json;
    HmcConfig hmc;
};

struct DiagnoseOptions {
    std::string trace;
    std::size_t max_lag = 20;
    Format format = Format::Json;
};

struct ServeOptions {
    std::string host = "127.0.0.1";
    int port = 8080;
    std::string store_dir = "therm-sessions";
    std::uint64_t seed = 0;
    std::size_t budget = 10;
    HmcConfig hmc;
};

int run_simulate(const SimulateOptions& o, std::ostream& out);
int run_regress(const RegressOptions& o, std::ostream& out);
int run_diagnose(const DiagnoseOptions& o, std::ostream& out);
/// Blocks until SIGINT or SIGTERM.
int run_serve(const ServeOptions& o, std::ostream& log);

} // namespace therm::cli
