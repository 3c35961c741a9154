// scenario.hpp - scenario configs and batch experiment runner.
//
// Config format: one section per scenario,
//
//   [born rule]
//   experiment = gambler_ruin
//   seed = 7
//   amplitudes = 0.6, 0.8
//   lambda = 1 1/s
//   t_final = 10 s
//
// '#' starts a comment. Dimensional values need a unit suffix.
#pragma once

#include "json.hpp"

#include <cstdint>
#include <iosfwd>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace cslab::scenario {

inline constexpr const char* kVersion = "1.0.0";

enum class Experiment { gambler_ruin, offdiag_decay, nonmarkov_compare, csl_rates, gravity_compare, kernel_scan, parameter_report };

std::string to_string(Experiment e);
Experiment parse_experiment(const std::string& s);  // throws std::invalid_argument

// Value kinds. Dimensional kinds are stored in CGS (s, 1/s, cm, cm^-3, g/cm^3, g) or eV.
enum class Dim { number, integer, text, list, time, rate, length, number_density, mass_density, energy, mass };

struct ParamSpec {
    std::string key;
    Dim dim = Dim::number;
    bool required = false;
    std::string default_value;  // raw text; empty = derived at run time
    std::string help;
};

const std::vector<ParamSpec>& experiment_schema(Experiment e);

struct Value {
    Dim dim = Dim::number;
    double number = 0.0;
    std::vector<double> list;
    std::string text;
    std::string raw;
};

// Parses "<number> <unit>" for dimensional kinds, a bare number otherwise.
Value parse_value(const std::string& raw, Dim dim);

class ConfigError : public std::runtime_error {
public:
    ConfigError(const std::string& source, int line, const std::string& field, const std::string& message);
    int line() const { return line_; }
    const std::string& field() const { return field_; }

private:
    int line_;
    std::string field_;
};

struct Scenario {
    std::string name;
    Experiment experiment = Experiment::gambler_ruin;
    std::uint64_t seed = 1;
    std::string output_dir;  // subdirectory; defaults to a sanitized name
    int line = 0;
    std::vector<std::pair<std::string, std::string>> raw;  // parameters as written, in order
    std::map<std::string, Value> params;                   // parsed, defaults filled in

    bool has(const std::string& key) const;
    double number(const std::string& key) const;
    long long integer(const std::string& key) const;
    const std::vector<double>& list(const std::string& key) const;
    const std::string& text(const std::string& key) const;
};

std::vector<Scenario> parse_config(std::istream& is, const std::string& source = "<config>");
std::vector<Scenario> load_config(const std::string& path);

// Inverse of parse_config for one scenario (parameters as originally written).
std::string to_config_text(const Scenario& s);

struct RunOptions {
    std::string output_root;
    int jobs = 1;
    bool deep = false;  // 10x trajectory counts
};

struct Check {
    std::string name;
    double measured = 0.0;
    double expected = 0.0;
    double tolerance = 0.0;
    bool pass = false;
};

struct ScenarioResult {
    std::string name;
    std::string directory;
    nlohmann::ordered_json results;
    std::vector<Check> checks;
    std::vector<std::string> files;

    bool passed() const;
};

// Runs the experiment and writes results.json, CSV series and report.txt into
// output_root/output_dir. Module precondition failures propagate as
// std::invalid_argument / std::domain_error.
ScenarioResult run_scenario(const Scenario& s, const RunOptions& opts);

// CSLLAB_OUTPUT_DIR if set, else "cslab_output".
std::string default_output_root();

} // namespace cslab::scenario
