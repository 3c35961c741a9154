// cslab - command-line front end.
//
//   cslab run <config> [--check] [--deep] [--jobs N] [--output DIR]
//   cslab check [--deep] [--jobs N] [--seed S] [--only ID]... [--output DIR]
//   cslab kernel-scan --kind spacelike|timelike|nonrel --a "1e-5 cm" [--x-min ..] [--x-max ..] [--points N]
//   cslab report-params [--lambda "1e-16 1/s"] [--a "1e-5 cm"]
//
// Exit status: 0 ok, 1 malformed config, 2 precondition failure, 3 failed check.
#include "CLI11.hpp"
#include "json.hpp"

#include "cslab/acceptance.hpp"
#include "cslab/csl_model.hpp"
#include "cslab/rel_kernels.hpp"
#include "cslab/scenario.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>

namespace sc = cslab::scenario;

namespace {

enum Exit { ok = 0, malformed = 1, precondition = 2, check_failed = 3 };

int cmd_run(const std::string& config, const sc::RunOptions& opts, bool check) {
    std::vector<sc::Scenario> scenarios;
    try {
        scenarios = sc::load_config(config);
    } catch (const sc::ConfigError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return malformed;
    }
    bool all = true;
    for (const auto& s : scenarios) {
        sc::ScenarioResult r;
        try {
            r = sc::run_scenario(s, opts);
        } catch (const std::invalid_argument& e) {
            std::cerr << "error: scenario '" << s.name << "' (line " << s.line << "): precondition failed: " << e.what() << '\n';
            return precondition;
        } catch (const std::domain_error& e) {
            std::cerr << "error: scenario '" << s.name << "' (line " << s.line << "): precondition failed: " << e.what() << '\n';
            return precondition;
        } catch (const std::out_of_range& e) {
            std::cerr << "error: scenario '" << s.name << "' (line " << s.line << "): precondition failed: " << e.what() << '\n';
            return precondition;
        }
        std::cout << s.name << " (" << sc::to_string(s.experiment) << ") -> " << r.directory << '\n';
        for (const auto& c : r.checks) {
            std::cout << "  " << (c.pass ? "[PASS] " : "[FAIL] ") << c.name << ": " << c.measured << " vs " << c.expected
                      << " +- " << c.tolerance << '\n';
        }
        all = all && r.passed();
    }
    return check && !all ? check_failed : ok;
}

int cmd_check(const cslab::acceptance::CheckOptions& opts, const std::vector<int>& only, const std::string& output) {
    const auto results = cslab::acceptance::run_acceptance(opts, only);
    bool all = true;
    for (const auto& r : results) {
        std::cout << cslab::acceptance::summary_line(r) << '\n';
        all = all && r.pass;
    }
    const std::filesystem::path dir = std::filesystem::path(output.empty() ? sc::default_output_root() : output);
    std::filesystem::create_directories(dir);
    std::ofstream f(dir / "check_results.json");
    f << cslab::acceptance::to_json(results, opts).dump(2) << '\n';
    std::cout << "wrote " << (dir / "check_results.json").string() << '\n';
    return all ? ok : check_failed;
}

double length_arg(const std::string& raw, const char* what) {
    try {
        return sc::parse_value(raw, sc::Dim::length).number;
    } catch (const std::invalid_argument& e) {
        throw CLI::ValidationError(what, e.what());
    }
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"cslab: stochastic collapse-model simulations"};
    app.require_subcommand(1);

    sc::RunOptions run_opts;
    std::string config;
    bool run_check = false;
    auto* run = app.add_subcommand("run", "run the scenarios of a config file");
    run->add_option("config", config, "scenario config")->required();
    run->add_flag("--check", run_check, "exit 3 if any scenario check fails");
    run->add_flag("--deep", run_opts.deep, "10x trajectory counts");
    run->add_option("--jobs", run_opts.jobs, "worker threads")->check(CLI::PositiveNumber);
    run->add_option("--output", run_opts.output_root, "output root (default: $CSLLAB_OUTPUT_DIR or ./cslab_output)");

    cslab::acceptance::CheckOptions chk;
    std::vector<int> only;
    std::string check_out;
    auto* check = app.add_subcommand("check", "run the acceptance criteria");
    check->add_flag("--deep", chk.deep, "10x trajectory counts");
    check->add_option("--jobs", chk.jobs, "worker threads")->check(CLI::PositiveNumber);
    check->add_option("--seed", chk.seed, "base seed");
    check->add_option("--only", only, "criterion ids")->check(CLI::Range(1, cslab::acceptance::kCriterionCount));
    check->add_option("--perturb-lambda", chk.lambda_scale, "scale the simulated rate of the off-diagonal criterion")
        ->check(CLI::PositiveNumber);
    check->add_option("--output", check_out, "directory for check_results.json");

    std::string kind, a_raw, xmin_raw, xmax_raw, scan_out;
    int points = 400;
    auto* scan = app.add_subcommand("kernel-scan", "tabulate a tachyon-kernel slice as CSV");
    scan->add_option("--kind", kind, "spacelike, timelike or nonrel")->required();
    scan->add_option("--a", a_raw, "kernel length with unit, e.g. \"1e-5 cm\"")->required();
    scan->add_option("--x-min", xmin_raw, "scan start with unit (default a/10)");
    scan->add_option("--x-max", xmax_raw, "scan end with unit (default 20 a)");
    scan->add_option("--points", points, "samples")->check(CLI::Range(2, 10000000));
    scan->add_option("--output", scan_out, "CSV file (default: stdout)");

    std::string lambda_raw = "1e-16 1/s", pa_raw = "1e-5 cm";
    auto* params = app.add_subcommand("report-params", "print derived parameter relations as JSON");
    params->add_option("--lambda", lambda_raw, "collapse rate with unit");
    params->add_option("--a", pa_raw, "smearing length with unit");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*run) return cmd_run(config, run_opts, run_check);
        if (*check) return cmd_check(chk, only, check_out);
        if (*scan) {
            const double a = length_arg(a_raw, "--a");
            const double lo = xmin_raw.empty() ? 0.1 * a : length_arg(xmin_raw, "--x-min");
            const double hi = xmax_raw.empty() ? 20.0 * a : length_arg(xmax_raw, "--x-max");
            const auto table = cslab::rel::kernel_scan(cslab::rel::parse_scan_kind(kind), a, lo, hi, points);
            if (scan_out.empty()) {
                cslab::rel::write_kernel_scan_csv(std::cout, table);
            } else {
                std::ofstream f(scan_out);
                cslab::rel::write_kernel_scan_csv(f, table);
            }
            return ok;
        }
        if (*params) {
            cslab::csl::CslParameters p;
            p.lambda = sc::parse_value(lambda_raw, sc::Dim::rate).number;
            p.a = sc::parse_value(pa_raw, sc::Dim::length).number;
            const auto r = cslab::csl::parameter_relations(p);
            nlohmann::ordered_json j;
            j["lambda_per_s"] = p.lambda;
            j["a_cm"] = p.a;
            j["lambda_a_over_c"] = r.lambda_a_over_c;
            j["g_mp2_over_hbar_c"] = r.g_mp2_over_hbar_c;
            j["lambda_diosi_per_s"] = r.lambda_diosi;
            j["a_planckon_cm"] = r.a_planckon;
            j["lambda_planckon_per_s"] = r.lambda_planckon;
            j["germanium_multiple_of_me_over_mp"] = cslab::csl::germanium_bound(0.2).multiple;
            std::cout << j.dump(2) << '\n';
            return ok;
        }
    } catch (const CLI::Error& e) {
        return app.exit(e);
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << '\n';
        return precondition;
    } catch (const std::domain_error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return precondition;
    }
    return ok;
}
