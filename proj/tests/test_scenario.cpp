#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"
#include "json.hpp"

#include "cslab/scenario.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace cslab::scenario;
namespace fs = std::filesystem;

namespace {

std::vector<Scenario> parse(const std::string& text) {
    std::istringstream is(text);
    return parse_config(is, "test.cfg");
}

// Line and field of the ConfigError raised by `text`.
std::pair<int, std::string> error_of(const std::string& text) {
    try {
        parse(text);
    } catch (const ConfigError& e) {
        return {e.line(), e.field()};
    }
    return {-1, "<no error>"};
}

std::string slurp(const fs::path& p) {
    std::ifstream f(p);
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

fs::path temp_root(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("cslab_test_" + name);
    fs::remove_all(p);
    return p;
}

const char* kSmall = R"(
# small versions of every experiment
[ruin]
experiment = gambler_ruin
seed = 5
amplitudes = 0.6, 0.8
lambda = 2 1/s
t_final = 2500 ms
trajectories = 300
weighted_replicas = 2
weighted_particles = 50

[decay]
experiment = offdiag_decay
seed = 6
amplitudes = 0.6, 0.8
lambda = 1 Hz
t_final = 1 s
trajectories = 200
points = 5

[ou]
experiment = nonmarkov_compare
amplitudes = 1, 1, 1
eigenvalues = 1, 0, -1
lambda = 0.5 1/s
alpha = 4 s^-1
t_final = 2 s
steps = 100

[rates]
experiment = csl_rates
cube_side = 0.5 um
clump_n = 10

[grav]
experiment = gravity_compare
cube_side = 0.2 um

[scan]
experiment = kernel_scan
kind = nonrel
a = 0.1 um
points = 50

[params]
experiment = parameter_report
lambda = 1e-17 /s
)";

} // namespace

TEST_CASE("basic parse: sections, defaults, unit conversion") {
    const auto s = parse(kSmall);
    REQUIRE(s.size() == 7);
    CHECK(s[0].name == "ruin");
    CHECK(s[0].experiment == Experiment::gambler_ruin);
    CHECK(s[0].seed == 5);
    CHECK(s[0].output_dir == "ruin");
    CHECK(s[0].number("t_final") == doctest::Approx(2.5));
    CHECK(s[0].list("eigenvalues") == std::vector<double>{1.0, -1.0});  // default
    CHECK(s[0].integer("trajectories") == 300);
    CHECK_FALSE(s[0].has("dt"));  // derived at run time
    CHECK(s[2].list("amplitudes").size() == 3);
    CHECK(s[3].number("cube_side") == doctest::Approx(0.5e-4));
    CHECK(s[3].number("lambda") == 1e-16);
    CHECK(s[3].number("particle_mass") == doctest::Approx(1.67262192369e-24));
    CHECK(s[5].text("kind") == "nonrel");
    CHECK(s[6].number("lambda") == doctest::Approx(1e-17));
    CHECK(s[6].seed == 1);
}

TEST_CASE("empty config yields no scenarios") {
    CHECK(parse("").empty());
    CHECK(parse("# only comments\n\n   # more\n").empty());
}

TEST_CASE("units: every dimension, and rejection of missing or foreign units") {
    CHECK(parse_value("3 ms", Dim::time).number == doctest::Approx(3e-3));
    CHECK(parse_value("2 ns", Dim::time).number == doctest::Approx(2e-9));
    CHECK(parse_value("5 Hz", Dim::rate).number == 5.0);
    CHECK(parse_value("1e-16 1/s", Dim::rate).number == 1e-16);
    CHECK(parse_value("2 m", Dim::length).number == 200.0);
    CHECK(parse_value("3 nm", Dim::length).number == doctest::Approx(3e-7));
    CHECK(parse_value("1e-5cm", Dim::length).number == 1e-5);
    CHECK(parse_value("1e6 m^-3", Dim::number_density).number == doctest::Approx(1.0));
    CHECK(parse_value("2000 kg/m^3", Dim::mass_density).number == doctest::Approx(2.0));
    CHECK(parse_value("2 keV", Dim::energy).number == 2000.0);
    CHECK(parse_value("1 kg", Dim::mass).number == 1000.0);
    CHECK(parse_value("1e4", Dim::integer).number == 10000.0);
    CHECK(parse_value(" 0.5 , -1,2e3 ", Dim::list).list == std::vector<double>{0.5, -1.0, 2000.0});

    CHECK_THROWS_AS(parse_value("1e-5", Dim::length), std::invalid_argument);
    CHECK_THROWS_AS(parse_value("1e-5 furlong", Dim::length), std::invalid_argument);
    CHECK_THROWS_AS(parse_value("1 s", Dim::length), std::invalid_argument);
    CHECK_THROWS_AS(parse_value("2 cm", Dim::number), std::invalid_argument);
    CHECK_THROWS_AS(parse_value("1.5", Dim::integer), std::invalid_argument);
    CHECK_THROWS_AS(parse_value("abc", Dim::number), std::invalid_argument);
    CHECK_THROWS_AS(parse_value("1, x", Dim::list), std::invalid_argument);
    CHECK_THROWS_AS(parse_value("inf", Dim::number), std::invalid_argument);
}

TEST_CASE("malformed configs report line and field") {
    CHECK(error_of("lambda = 1 1/s\n") == std::pair<int, std::string>{1, "lambda"});
    CHECK(error_of("[a]\nexperiment = kernel_scan\nkind = nonrel\nkind = spacelike\na = 1 cm\n") ==
          std::pair<int, std::string>{4, "kind"});
    CHECK(error_of("[a]\nexperiment = parameter_report\n[a]\nexperiment = parameter_report\n").first == 3);
    CHECK(error_of("[a]\nexperiment = parameter_report\nbogus = 1\n") == std::pair<int, std::string>{3, "bogus"});
    CHECK(error_of("[a]\nseed = 3\n") == std::pair<int, std::string>{1, "experiment"});
    CHECK(error_of("[a]\nexperiment = kernel_scan\nkind = nonrel\n") == std::pair<int, std::string>{1, "a"});
    CHECK(error_of("\n[a]\nexperiment = csl_rates\n\nlambda = 1e-16\n") == std::pair<int, std::string>{5, "lambda"});
    CHECK(error_of("[a]\nexperiment = warp_drive\n") == std::pair<int, std::string>{2, "experiment"});
    CHECK(error_of("[a]\nexperiment = csl_rates\nthis line has no equals sign\n").first == 3);
    CHECK(error_of("[a\n").first == 1);
    CHECK(error_of("[a]\nexperiment = csl_rates\nseed = -4\n") == std::pair<int, std::string>{3, "seed"});
    CHECK(error_of("[a]\nexperiment = csl_rates\nlambda =\n") == std::pair<int, std::string>{3, "lambda"});

    try {
        parse("[a]\nexperiment = csl_rates\nlambda = 3 furlongs\n");
        FAIL("expected an error");
    } catch (const ConfigError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("test.cfg:3") != std::string::npos);
        CHECK(msg.find("furlongs") != std::string::npos);
    }
    CHECK_THROWS_AS(load_config("/nonexistent/dir/x.cfg"), ConfigError);
}

TEST_CASE("config round trip through to_config_text") {
    for (const auto& s : parse(kSmall)) {
        const auto back = parse(to_config_text(s));
        REQUIRE(back.size() == 1);
        const auto& b = back[0];
        CHECK(b.name == s.name);
        CHECK(b.experiment == s.experiment);
        CHECK(b.seed == s.seed);
        CHECK(b.output_dir == s.output_dir);
        CHECK(b.raw == s.raw);
        REQUIRE(b.params.size() == s.params.size());
        for (const auto& [k, v] : s.params) {
            CHECK(b.params.at(k).number == v.number);
            CHECK(b.params.at(k).list == v.list);
            CHECK(b.params.at(k).text == v.text);
        }
    }
}

TEST_CASE("running every experiment writes results, series and report") {
    const fs::path root = temp_root("runs");
    RunOptions opts;
    opts.output_root = root.string();
    for (const auto& s : parse(kSmall)) {
        CAPTURE(s.name);
        const auto r = run_scenario(s, opts);
        CHECK(fs::exists(root / s.output_dir / "results.json"));
        CHECK(fs::exists(root / s.output_dir / "report.txt"));
        for (const auto& f : r.files) CHECK(fs::exists(root / s.output_dir / f));
        const auto j = nlohmann::json::parse(slurp(root / s.output_dir / "results.json"));
        CHECK(j["scenario"] == s.name);
        CHECK(j["seed"] == s.seed);
        CHECK(j["versions"]["cslab"] == kVersion);
        CHECK(j.contains("timestamp"));

        // echoed parameters reparse to an equivalent scenario
        std::string text = "[" + s.name + "]\nexperiment = " + j["experiment"].get<std::string>() +
                           "\nseed = " + std::to_string(j["seed"].get<std::uint64_t>()) + "\n";
        for (auto it = j["parameters"].begin(); it != j["parameters"].end(); ++it)
            text += it.key() + " = " + it.value().get<std::string>() + "\n";
        const auto again = parse(text);
        REQUIRE(again.size() == 1);
        CHECK(again[0].raw.size() == s.raw.size());
        for (const auto& [k, v] : s.params) CHECK(again[0].params.at(k).number == v.number);
        // checks of the deterministic experiments must hold even at this size
        if (s.experiment != Experiment::gambler_ruin && s.experiment != Experiment::offdiag_decay) CHECK(r.passed());
    }
    const auto ruin = nlohmann::json::parse(slurp(root / "ruin" / "results.json"));
    CHECK(ruin["results"].contains("fraction_0"));
    CHECK(ruin["results"].contains("weighted_fraction_0"));
    CHECK(ruin["results"]["trajectories"] == 300);
    const auto rates = nlohmann::json::parse(slurp(root / "rates" / "results.json"));
    CHECK(rates["results"]["energy_gain_eV_per_s"].get<double>() == doctest::Approx(0.15562358321005065).epsilon(1e-10));

    const std::string csv = slurp(root / "decay" / "offdiag.csv");
    CHECK(csv.rfind("time,mc_abs,mc_se,analytic_abs,fourier_abs\n", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 7);  // header + t = 0 + 5 points
    CHECK(slurp(root / "scan" / "kernel_scan.csv").rfind("x,value\n", 0) == 0);
    CHECK(slurp(root / "ruin" / "outcomes.csv").rfind("trajectory,outcome,time\n", 0) == 0);
    fs::remove_all(root);
}

TEST_CASE("identical config and seed give identical outputs, independent of worker count") {
    const auto all = parse(kSmall);
    const fs::path r1 = temp_root("det1"), r2 = temp_root("det2");
    RunOptions o1, o2;
    o1.output_root = r1.string();
    o2.output_root = r2.string();
    o2.jobs = 3;
    auto strip_time = [](std::string s) {
        const auto p = s.find("\"timestamp\"");
        REQUIRE(p != std::string::npos);
        return s.erase(p, s.find('\n', p) - p);
    };
    for (int i : {0, 1, 2}) {
        const auto a = run_scenario(all[i], o1);
        const auto b = run_scenario(all[i], o2);
        CHECK(a.files == b.files);
        for (const auto& f : a.files) {
            CAPTURE(f);
            const std::string x = slurp(r1 / all[i].output_dir / f), y = slurp(r2 / all[i].output_dir / f);
            if (f == "results.json") CHECK(strip_time(x) == strip_time(y));
            else CHECK(x == y);
        }
    }
    fs::remove_all(r1);
    fs::remove_all(r2);
}

TEST_CASE("precondition failures surface as exceptions") {
    RunOptions opts;
    opts.output_root = temp_root("pre").string();
    auto mismatch = parse("[m]\nexperiment = gambler_ruin\namplitudes = 1, 0, 0\nlambda = 1 1/s\nt_final = 1 s\n");
    CHECK_THROWS_AS(run_scenario(mismatch[0], opts), std::invalid_argument);
    auto coarse = parse("[g]\nexperiment = gravity_compare\nspacing = 1 um\n");
    CHECK_THROWS_AS(run_scenario(coarse[0], opts), std::invalid_argument);
    auto kind = parse("[k]\nexperiment = kernel_scan\nkind = lightlike\na = 1 cm\n");
    CHECK_THROWS_AS(run_scenario(kind[0], opts), std::invalid_argument);
    fs::remove_all(opts.output_root);
}

TEST_CASE("default output root honours the environment") {
    unsetenv("CSLLAB_OUTPUT_DIR");
    CHECK(default_output_root() == "cslab_output");
    setenv("CSLLAB_OUTPUT_DIR", "/tmp/somewhere", 1);
    CHECK(default_output_root() == "/tmp/somewhere");
    unsetenv("CSLLAB_OUTPUT_DIR");
}

TEST_CASE("experiment names") {
    for (auto e : {Experiment::gambler_ruin, Experiment::offdiag_decay, Experiment::nonmarkov_compare,
                   Experiment::csl_rates, Experiment::gravity_compare, Experiment::kernel_scan,
                   Experiment::parameter_report}) {
        CHECK(parse_experiment(to_string(e)) == e);
        CHECK_FALSE(experiment_schema(e).empty());
    }
    CHECK_THROWS_AS(parse_experiment("gambler-ruin"), std::invalid_argument);
}
