#include "cslab/scenario.hpp"

#include "cslab/collapse_engine.hpp"
#include "cslab/csl_model.hpp"
#include "cslab/ensemble_analysis.hpp"
#include "cslab/rel_kernels.hpp"

#include <Eigen/Core>
#include <boost/version.hpp>

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

namespace cslab::scenario {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// names and schemas

namespace {

const std::vector<std::pair<Experiment, std::string>> kExperimentNames = {
    {Experiment::gambler_ruin, "gambler_ruin"},       {Experiment::offdiag_decay, "offdiag_decay"},
    {Experiment::nonmarkov_compare, "nonmarkov_compare"}, {Experiment::csl_rates, "csl_rates"},
    {Experiment::gravity_compare, "gravity_compare"}, {Experiment::kernel_scan, "kernel_scan"},
    {Experiment::parameter_report, "parameter_report"},
};

struct Unit {
    const char* name;
    double factor;
};

const std::vector<Unit>& units_for(Dim d) {
    static const std::vector<Unit> none;
    static const std::vector<Unit> time{{"s", 1.0}, {"ms", 1e-3}, {"us", 1e-6}, {"ns", 1e-9}};
    static const std::vector<Unit> rate{{"1/s", 1.0}, {"s^-1", 1.0}, {"Hz", 1.0}, {"/s", 1.0}};
    static const std::vector<Unit> length{{"cm", 1.0}, {"m", 100.0}, {"mm", 0.1}, {"um", 1e-4}, {"nm", 1e-7}};
    static const std::vector<Unit> ndens{{"cm^-3", 1.0}, {"1/cm^3", 1.0}, {"m^-3", 1e-6}};
    static const std::vector<Unit> mdens{{"g/cm^3", 1.0}, {"kg/m^3", 1e-3}};
    static const std::vector<Unit> energy{{"eV", 1.0}, {"meV", 1e-3}, {"keV", 1e3}, {"MeV", 1e6}, {"GeV", 1e9}};
    static const std::vector<Unit> mass{{"g", 1.0}, {"kg", 1e3}};
    switch (d) {
    case Dim::time: return time;
    case Dim::rate: return rate;
    case Dim::length: return length;
    case Dim::number_density: return ndens;
    case Dim::mass_density: return mdens;
    case Dim::energy: return energy;
    case Dim::mass: return mass;
    default: return none;
    }
}

bool dimensional(Dim d) { return !units_for(d).empty(); }

std::string trim(const std::string& s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
}

// Full-string double parse; returns the unparsed remainder.
double leading_number(const std::string& s, std::string& rest) {
    const char* begin = s.c_str();
    char* end = nullptr;
    const double v = std::strtod(begin, &end);
    if (end == begin) throw std::invalid_argument("expected a number, got '" + s + "'");
    if (!std::isfinite(v)) throw std::invalid_argument("number is not finite: '" + s + "'");
    rest = trim(std::string(end));
    return v;
}

ParamSpec P(std::string key, Dim dim, bool required, std::string def, std::string help) {
    return ParamSpec{std::move(key), dim, required, std::move(def), std::move(help)};
}

} // namespace

std::string to_string(Experiment e) {
    for (const auto& [k, n] : kExperimentNames)
        if (k == e) return n;
    return "unknown";
}

Experiment parse_experiment(const std::string& s) {
    for (const auto& [k, n] : kExperimentNames)
        if (n == s) return k;
    std::string known;
    for (const auto& [k, n] : kExperimentNames) known += (known.empty() ? "" : ", ") + n;
    throw std::invalid_argument("unknown experiment '" + s + "' (expected one of: " + known + ")");
}

const std::vector<ParamSpec>& experiment_schema(Experiment e) {
    static const std::map<Experiment, std::vector<ParamSpec>> schemas = {
        {Experiment::gambler_ruin,
         {P("amplitudes", Dim::list, true, "", "initial amplitudes in the collapse basis"),
          P("eigenvalues", Dim::list, false, "1, -1", "collapse operator eigenvalues"),
          P("lambda", Dim::rate, true, "", "collapse rate"),
          P("t_final", Dim::time, true, "", "duration"),
          P("dt", Dim::time, false, "", "step (default: largest allowed by the step-size rule)"),
          P("trajectories", Dim::integer, false, "10000", "nonlinear trajectories"),
          P("epsilon", Dim::number, false, "1e-3", "outcome threshold"),
          P("dwell", Dim::integer, false, "10", "consecutive samples above threshold"),
          P("weighted_replicas", Dim::integer, false, "0", "independent weighted linear populations (0 = skip)"),
          P("weighted_particles", Dim::integer, false, "500", "particles per weighted population")}},
        {Experiment::offdiag_decay,
         {P("amplitudes", Dim::list, true, "", "initial amplitudes in the collapse basis"),
          P("eigenvalues", Dim::list, false, "1, -1", "collapse operator eigenvalues"),
          P("lambda", Dim::rate, true, "", "collapse rate"),
          P("t_final", Dim::time, true, "", "duration"),
          P("trajectories", Dim::integer, false, "10000", "nonlinear trajectories"),
          P("points", Dim::integer, false, "10", "recorded time points"),
          P("quadrature_nodes", Dim::integer, false, "64", "Gauss-Hermite nodes for the Fourier propagator")}},
        {Experiment::nonmarkov_compare,
         {P("amplitudes", Dim::list, true, "", "initial amplitudes in the collapse basis"),
          P("eigenvalues", Dim::list, false, "1, -1", "collapse operator eigenvalues"),
          P("lambda", Dim::rate, true, "", "collapse rate"),
          P("alpha", Dim::rate, true, "", "Ornstein-Uhlenbeck inverse correlation time"),
          P("t_final", Dim::time, true, "", "duration"),
          P("steps", Dim::integer, false, "400", "noise cells")}},
        {Experiment::csl_rates,
         {P("lambda", Dim::rate, false, "1e-16 1/s", "per-nucleon rate"),
          P("a", Dim::length, false, "1e-5 cm", "smearing length"),
          P("n_particles", Dim::number, false, "1e24", "particle count for the energy gain"),
          P("particle_mass", Dim::mass, false, "1.67262192369e-24 g", "particle mass for the energy gain"),
          P("clump_n", Dim::number, false, "1000", "particles per clump"),
          P("clump_separation", Dim::length, false, "1e-4 cm", "clump separation"),
          P("cube_side", Dim::length, false, "1e-4 cm", "extended cube side"),
          P("density", Dim::number_density, false, "1e25 cm^-3", "cube number density"),
          P("displacement", Dim::length, false, "", "cube displacement (default: side + 12 a)"),
          P("spacing", Dim::length, false, "", "lattice spacing (default: a/2)")}},
        {Experiment::gravity_compare,
         {P("a", Dim::length, false, "1e-5 cm", "mass-density smearing length"),
          P("cube_side", Dim::length, false, "1e-4 cm", "cube side"),
          P("mass_density", Dim::mass_density, false, "2 g/cm^3", "cube mass density"),
          P("displacement", Dim::length, false, "", "cube displacement (default: side + 12 a)"),
          P("spacing", Dim::length, false, "", "lattice spacing (default: a/2)")}},
        {Experiment::kernel_scan,
         {P("kind", Dim::text, true, "", "spacelike, timelike or nonrel"),
          P("a", Dim::length, true, "", "kernel length 1/mu"),
          P("x_min", Dim::length, false, "", "scan start (default a/10)"),
          P("x_max", Dim::length, false, "", "scan end (default 20 a)"),
          P("points", Dim::integer, false, "400", "scan points")}},
        {Experiment::parameter_report,
         {P("lambda", Dim::rate, false, "1e-16 1/s", "per-nucleon rate"),
          P("a", Dim::length, false, "1e-5 cm", "smearing length"),
          P("germanium_limit", Dim::number, false, "0.2", "measured limit for the electron-coupling bound")}},
    };
    return schemas.at(e);
}

Value parse_value(const std::string& raw_in, Dim dim) {
    const std::string raw = trim(raw_in);
    Value v;
    v.dim = dim;
    v.raw = raw;
    if (raw.empty()) throw std::invalid_argument("empty value");
    switch (dim) {
    case Dim::text: v.text = raw; return v;
    case Dim::list: {
        std::stringstream ss(raw);
        std::string item;
        while (std::getline(ss, item, ',')) {
            std::string rest;
            const double x = leading_number(trim(item), rest);
            if (!rest.empty()) throw std::invalid_argument("list entries must be plain numbers, got '" + trim(item) + "'");
            v.list.push_back(x);
        }
        if (v.list.empty()) throw std::invalid_argument("empty list");
        return v;
    }
    default: break;
    }
    std::string unit;
    const double x = leading_number(raw, unit);
    if (!dimensional(dim)) {
        if (!unit.empty()) throw std::invalid_argument("unexpected unit '" + unit + "' on a dimensionless value");
        if (dim == Dim::integer && (x != std::floor(x) || std::abs(x) > 9.0e15))
            throw std::invalid_argument("expected an integer, got '" + raw + "'");
        v.number = x;
        return v;
    }
    const auto& table = units_for(dim);
    std::string known;
    for (const auto& u : table) known += (known.empty() ? "" : ", ") + std::string(u.name);
    if (unit.empty()) throw std::invalid_argument("missing unit (expected one of: " + known + ")");
    for (const auto& u : table)
        if (unit == u.name) {
            v.number = x * u.factor;
            return v;
        }
    throw std::invalid_argument("unknown unit '" + unit + "' (expected one of: " + known + ")");
}

// ---------------------------------------------------------------------------
// config parsing

ConfigError::ConfigError(const std::string& source, int line, const std::string& field, const std::string& message)
    : std::runtime_error(source + ":" + std::to_string(line) + (field.empty() ? "" : ": '" + field + "'") + ": " +
                         message),
      line_(line), field_(field) {}

bool Scenario::has(const std::string& key) const { return params.count(key) != 0; }

namespace {
const Value& lookup(const Scenario& s, const std::string& key) {
    const auto it = s.params.find(key);
    if (it == s.params.end()) throw std::invalid_argument("scenario '" + s.name + "': parameter '" + key + "' not set");
    return it->second;
}
} // namespace

double Scenario::number(const std::string& key) const { return lookup(*this, key).number; }
long long Scenario::integer(const std::string& key) const { return static_cast<long long>(lookup(*this, key).number); }
const std::vector<double>& Scenario::list(const std::string& key) const { return lookup(*this, key).list; }
const std::string& Scenario::text(const std::string& key) const { return lookup(*this, key).text; }

namespace {

struct Pending {
    Scenario s;
    std::vector<std::pair<int, std::pair<std::string, std::string>>> lines;  // line, key, value
};

Scenario finish_section(Pending& p, const std::string& source) {
    Scenario& s = p.s;
    bool have_experiment = false;
    std::set<std::string> seen;
    std::vector<std::pair<int, std::pair<std::string, std::string>>> params;
    for (const auto& [line, kv] : p.lines) {
        const auto& [key, value] = kv;
        if (!seen.insert(key).second) throw ConfigError(source, line, key, "duplicate key");
        if (key == "experiment") {
            try {
                s.experiment = parse_experiment(value);
            } catch (const std::invalid_argument& e) {
                throw ConfigError(source, line, key, e.what());
            }
            have_experiment = true;
        } else if (key == "seed") {
            try {
                const Value v = parse_value(value, Dim::integer);
                if (v.number < 0) throw std::invalid_argument("seed must be >= 0");
                s.seed = static_cast<std::uint64_t>(v.number);
            } catch (const std::invalid_argument& e) {
                throw ConfigError(source, line, key, e.what());
            }
        } else if (key == "output_dir") {
            s.output_dir = value;
        } else {
            params.push_back({line, kv});
        }
    }
    if (!have_experiment) throw ConfigError(source, s.line, "experiment", "missing required key");
    const auto& schema = experiment_schema(s.experiment);
    for (const auto& [line, kv] : params) {
        const auto& [key, value] = kv;
        const auto it = std::find_if(schema.begin(), schema.end(), [&](const ParamSpec& ps) { return ps.key == key; });
        if (it == schema.end())
            throw ConfigError(source, line, key, "unknown key for experiment " + to_string(s.experiment));
        try {
            s.params[key] = parse_value(value, it->dim);
        } catch (const std::invalid_argument& e) {
            throw ConfigError(source, line, key, e.what());
        }
        s.raw.emplace_back(key, trim(value));
    }
    for (const auto& ps : schema) {
        if (s.params.count(ps.key)) continue;
        if (ps.required) throw ConfigError(source, s.line, ps.key, "missing required key");
        if (!ps.default_value.empty()) s.params[ps.key] = parse_value(ps.default_value, ps.dim);
    }
    if (s.output_dir.empty()) {
        for (char c : s.name) s.output_dir += std::isalnum(static_cast<unsigned char>(c)) ? c : '_';
    }
    return s;
}

} // namespace

std::vector<Scenario> parse_config(std::istream& is, const std::string& source) {
    std::vector<Scenario> out;
    std::set<std::string> names;
    std::optional<Pending> cur;
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') throw ConfigError(source, lineno, "", "unterminated section header");
            const std::string name = trim(line.substr(1, line.size() - 2));
            if (name.empty()) throw ConfigError(source, lineno, "", "empty scenario name");
            if (!names.insert(name).second) throw ConfigError(source, lineno, "", "duplicate scenario '" + name + "'");
            if (cur) out.push_back(finish_section(*cur, source));
            cur.emplace();
            cur->s.name = name;
            cur->s.line = lineno;
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError(source, lineno, "", "expected 'key = value'");
        const std::string key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
        if (key.empty()) throw ConfigError(source, lineno, "", "missing key before '='");
        if (value.empty()) throw ConfigError(source, lineno, key, "missing value");
        if (!cur) throw ConfigError(source, lineno, key, "key outside of a [scenario] section");
        cur->lines.push_back({lineno, {key, value}});
    }
    if (cur) out.push_back(finish_section(*cur, source));
    return out;
}

std::vector<Scenario> load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError(path, 0, "", "cannot open config file");
    return parse_config(in, path);
}

std::string to_config_text(const Scenario& s) {
    std::ostringstream os;
    os << '[' << s.name << "]\n";
    os << "experiment = " << to_string(s.experiment) << '\n';
    os << "seed = " << s.seed << '\n';
    os << "output_dir = " << s.output_dir << '\n';
    for (const auto& [k, v] : s.raw) os << k << " = " << v << '\n';
    return os.str();
}

std::string default_output_root() {
    const char* env = std::getenv("CSLLAB_OUTPUT_DIR");
    return env && *env ? std::string(env) : std::string("cslab_output");
}

bool ScenarioResult::passed() const {
    return std::all_of(checks.begin(), checks.end(), [](const Check& c) { return c.pass; });
}

// ---------------------------------------------------------------------------
// experiments

namespace {

struct Context {
    const Scenario& s;
    const RunOptions& opts;
    fs::path dir;
    ScenarioResult& out;

    std::ofstream open(const std::string& file) {
        std::ofstream f(dir / file);
        if (!f) throw std::runtime_error("cannot write " + (dir / file).string());
        f << std::setprecision(17);
        out.files.push_back(file);
        return f;
    }
    void check(const std::string& name, double measured, double expected, double tol) {
        out.checks.push_back({name, measured, expected, tol, std::abs(measured - expected) <= tol});
    }
    int scaled(long long n) const {
        const long long v = opts.deep ? 10 * n : n;
        if (v < 1 || v > 100000000) throw std::invalid_argument("trajectory count out of range");
        return static_cast<int>(v);
    }
    int jobs() const { return std::max(1, opts.jobs); }
};

StateVector initial_state(const Scenario& s) {
    const auto& amps = s.list("amplitudes");
    CVector v(static_cast<Eigen::Index>(amps.size()));
    for (std::size_t i = 0; i < amps.size(); ++i) v(i) = amps[i];
    return StateVector(v);
}

CollapseOperatorSet diagonal_ops(const Scenario& s, double lambda) {
    const auto& eig = s.list("eigenvalues");
    if (eig.size() != s.list("amplitudes").size())
        throw std::invalid_argument("eigenvalues and amplitudes must have the same length");
    return CollapseOperatorSet({HermitianOperator::diagonal(eig)}, lambda);
}

// Fewest steps satisfying dt lambda spread^2 <= 0.01, rounded up to a multiple of `multiple`.
int rule_steps(const CollapseOperatorSet& ops, double t, int multiple) {
    const double need = t * ops.rate() * ops.spread_squared() / 0.01;
    long long n = std::max<long long>(1, static_cast<long long>(std::ceil(need * (1.0 - 1e-12))));
    n = ((n + multiple - 1) / multiple) * multiple;
    if (n > 50000000) throw std::invalid_argument("too many steps for this lambda and duration");
    return static_cast<int>(n);
}

std::vector<double> born(const StateVector& psi) {
    const double n2 = norm_squared(psi);
    std::vector<double> p(psi.dim());
    for (int i = 0; i < psi.dim(); ++i) p[i] = std::norm(psi[i]) / n2;
    return p;
}

void gambler_ruin(Context& c) {
    const Scenario& s = c.s;
    const StateVector psi0 = initial_state(s);
    const CollapseOperatorSet ops = diagonal_ops(s, s.number("lambda"));
    const double t = s.number("t_final");
    if (!(t > 0.0)) throw std::invalid_argument("t_final must be positive");
    TimeGrid grid;
    if (s.has("dt")) {
        const int n = static_cast<int>(std::ceil(t / s.number("dt") - 1e-9));
        grid = TimeGrid(0.0, t / n, n);
    } else {
        const int n = rule_steps(ops, t, 1);
        grid = TimeGrid(0.0, t / n, n);
    }
    const int n = c.scaled(s.integer("trajectories"));
    EngineOptions eo;
    eo.detection.epsilon = s.number("epsilon");
    eo.detection.dwell_steps = static_cast<int>(s.integer("dwell"));
    eo.record_stride = 0;
    eo.stop_on_outcome = true;

    std::vector<std::optional<Outcome>> outcomes(n);
    parallel_for(n, c.jobs(), [&](int i) { outcomes[i] = evolve_nonlinear(psi0, ops, grid, s.seed, i, eo).outcome; });

    const int d = psi0.dim();
    std::vector<int> counts(d, 0);
    double tsum = 0.0;
    int resolved = 0;
    {
        auto f = c.open("outcomes.csv");
        f << "trajectory,outcome,time\n";
        for (int i = 0; i < n; ++i) {
            const auto& o = outcomes[i];
            f << i << ',' << (o ? o->index : -1) << ',' << (o ? o->time : std::nan("")) << '\n';
            if (o) {
                ++counts[o->index];
                tsum += o->time;
                ++resolved;
            }
        }
    }
    const auto p = born(psi0);
    json& r = c.out.results;
    r["trajectories"] = n;
    r["steps"] = grid.n_steps;
    r["dt_s"] = grid.dt;
    r["lambda_t_spread2"] = ops.rate() * t * ops.spread_squared();
    for (int k = 0; k < d; ++k) {
        const auto ci = proportion_interval(counts[k], n);
        const std::string key = std::to_string(k);
        r["fraction_" + key] = ci.estimate;
        r["fraction_" + key + "_ci"] = {ci.lower, ci.upper};
        r["born_" + key] = p[k];
        c.check("fraction_" + key + "_vs_born", ci.estimate, p[k], 3.0 * std::sqrt(p[k] * (1.0 - p[k]) / n));
    }
    r["unresolved_fraction"] = 1.0 - static_cast<double>(resolved) / n;
    r["mean_collapse_time_s"] = resolved ? tsum / resolved : std::nan("");

    const long long reps = s.integer("weighted_replicas");
    if (reps > 0) {
        const auto est = estimate_weighted_population(psi0, ops, grid, static_cast<int>(s.integer("weighted_particles")),
                                                      static_cast<int>(reps), s.seed, c.jobs(), eo.detection.epsilon);
        for (int k = 0; k < d; ++k) {
            const std::string key = std::to_string(k);
            const double f = r["fraction_" + key].get<double>();
            r["weighted_fraction_" + key] = est.outcome_fraction[k];
            r["weighted_error_" + key] = est.outcome_error[k];
            c.check("weighted_vs_nonlinear_" + key, est.outcome_fraction[k], f,
                    3.0 * std::hypot(est.outcome_error[k], std::sqrt(f * (1.0 - f) / n)));
        }
        r["weighted_evidence"] = est.mean_evidence;
        r["weighted_evidence_error"] = est.evidence_error;
        c.check("weighted_evidence", est.mean_evidence, 1.0, 3.0 * est.evidence_error);
    }

    // one recorded trajectory for plotting
    EngineOptions rec = eo;
    rec.stop_on_outcome = false;
    rec.record_stride = std::max(1, grid.n_steps / 400);
    auto f = c.open("trajectory.csv");
    write_trajectory_csv(f, evolve_nonlinear(psi0, ops, grid, s.seed, static_cast<std::uint64_t>(n), rec));
}

void offdiag_decay(Context& c) {
    const Scenario& s = c.s;
    const StateVector psi0 = initial_state(s);
    const CollapseOperatorSet ops = diagonal_ops(s, s.number("lambda"));
    const double t = s.number("t_final");
    if (!(t > 0.0)) throw std::invalid_argument("t_final must be positive");
    const int points = static_cast<int>(s.integer("points"));
    if (points < 1) throw std::invalid_argument("points must be >= 1");
    const int steps = rule_steps(ops, t, points);
    const TimeGrid grid(0.0, t / steps, steps);
    const int n = c.scaled(s.integer("trajectories"));
    EngineOptions eo;
    eo.record_stride = steps / points;
    std::vector<TrajectoryRecord> recs(n);
    parallel_for(n, c.jobs(), [&](int i) {
        auto r = evolve_nonlinear(psi0, ops, grid, s.seed, i, eo);
        r.states.shrink_to_fit();
        recs[i] = std::move(r);
    });
    const auto st = mc_ensemble_density(recs);
    recs.clear();
    const auto rho0 = pure_density(psi0);
    const int nodes = static_cast<int>(s.integer("quadrature_nodes"));
    json& r = c.out.results;
    json series = json::array();
    double max_z = 0.0, max_fourier = 0.0;
    int within = 0;
    auto f = c.open("offdiag.csv");
    f << "time,mc_abs,mc_se,analytic_abs,fourier_abs\n";
    for (std::size_t k = 0; k < st.times.size(); ++k) {
        const double tk = st.times[k];
        const auto an = propagate_density_analytic(rho0, ops, tk);
        const auto fo = propagate_density_fourier(rho0, ops, tk, nodes);
        max_fourier = std::max(max_fourier, (an.matrix() - fo.matrix()).cwiseAbs().maxCoeff());
        const double mc = std::abs(st.offdiag(k, 0, 1)), se = st.offdiag_error(k, 0, 1);
        const double ref = std::abs(an(0, 1));
        f << tk << ',' << mc << ',' << se << ',' << ref << ',' << std::abs(fo(0, 1)) << '\n';
        if (k == 0) continue;  // t = 0 is exact for every trajectory
        const double dev = std::abs(mc - ref);
        const double z = se > 0.0 ? dev / se : (dev == 0.0 ? 0.0 : INFINITY);
        max_z = std::max(max_z, z);
        within += z <= 3.0;
        series.push_back({{"time_s", tk}, {"mc_abs", mc}, {"se", se}, {"analytic_abs", ref}, {"z", z}});
    }
    auto g = c.open("ensemble.csv");
    write_offdiag_csv(g, st);
    r["trajectories"] = n;
    r["steps"] = steps;
    r["points"] = series;
    r["points_within_3sigma"] = within;
    r["max_z"] = max_z;
    r["fourier_vs_analytic_max_abs"] = max_fourier;
    c.check("offdiag_points_within_3sigma", within, points, 0.0);
    c.check("fourier_vs_analytic", max_fourier, 0.0, 1e-8);
}

void nonmarkov_compare(Context& c) {
    const Scenario& s = c.s;
    const StateVector psi0 = initial_state(s);
    const double lambda = s.number("lambda"), alpha = s.number("alpha"), t = s.number("t_final");
    if (!(t > 0.0)) throw std::invalid_argument("t_final must be positive");
    const int steps = static_cast<int>(s.integer("steps"));
    if (steps < 1 || steps > 4000) throw std::invalid_argument("steps must be in [1, 4000]");
    const CollapseOperatorSet ops = diagonal_ops(s, lambda);
    const HermitianOperator a = ops.operators().front();
    const TimeGrid grid(0.0, t / steps, steps);
    const Kernel ou = Kernel::ornstein_uhlenbeck(alpha);
    const auto noise = sample_colored(grid, ou, s.seed, 0);
    const CVector cf = evolve_nonmarkovian_closed(psi0, a, lambda, alpha, noise).amplitudes();
    const CVector dir = evolve_nonmarkovian_direct(psi0, a, lambda, ou, noise).amplitudes();
    const double diff = (cf / cf.norm() - dir / dir.norm()).cwiseAbs().maxCoeff();
    const double teff = ou_effective_time(alpha, t);
    const double spread2 = ops.spread_squared();

    json& r = c.out.results;
    r["effective_time_s"] = teff;
    r["effective_time_ratio"] = teff / t;
    r["closed_vs_direct_max_abs"] = diff;
    r["markov_decay_factor"] = std::exp(-0.5 * lambda * spread2 * t);
    r["ou_decay_factor"] = std::exp(-0.5 * lambda * spread2 * teff);
    c.check("closed_vs_direct", diff, 0.0, 1e-8);

    auto f = c.open("decay.csv");
    f << "time,effective_time,markov_factor,ou_factor\n";
    for (int k = 0; k <= 200; ++k) {
        const double tk = t * k / 200.0, te = ou_effective_time(alpha, tk);
        f << tk << ',' << te << ',' << std::exp(-0.5 * lambda * spread2 * tk) << ','
          << std::exp(-0.5 * lambda * spread2 * te) << '\n';
    }
    auto g = c.open("noise.csv");
    write_noise_csv(g, noise);
}

// Two cubes of side L at x = -/+ D/2 on a shared lattice.
std::pair<csl::LatticeMassDistribution, csl::LatticeMassDistribution> cube_pair(double side, double disp, double h,
                                                                             double value, csl::DensityMode mode) {
    const int nx = static_cast<int>(std::lround((disp + side) / h)) + 1;
    const int ny = static_cast<int>(std::lround(side / h)) + 1;
    if (static_cast<double>(nx) * ny * ny > 5e7) throw std::invalid_argument("lattice too large; increase spacing");
    const std::array<double, 3> o{-0.5 * (nx - 1) * h, -0.5 * (ny - 1) * h, -0.5 * (ny - 1) * h};
    auto d1 = csl::LatticeMassDistribution::empty(o, h, {nx, ny, ny}, mode);
    auto d2 = d1;
    d1.add_box({-0.5 * disp, 0, 0}, {side, side, side}, value);
    d2.add_box({0.5 * disp, 0, 0}, {side, side, side}, value);
    return {d1, d2};
}

void csl_rates(Context& c) {
    const Scenario& s = c.s;
    csl::CslParameters p;
    p.lambda = s.number("lambda");
    p.a = s.number("a");
    const double h = s.has("spacing") ? s.number("spacing") : 0.5 * p.a;
    json& r = c.out.results;

    const double ngain = s.number("n_particles");
    r["energy_gain_eV_per_s"] = csl::energy_gain_rate(ngain, s.number("particle_mass"), p);

    // two point clumps
    const double n = s.number("clump_n"), sep = s.number("clump_separation");
    const int cells = static_cast<int>(std::lround(sep / h)) + 1;
    if (cells < 2) throw std::invalid_argument("clump separation below the lattice spacing");
    auto c1 = csl::LatticeMassDistribution::empty({-0.5 * (cells - 1) * h, 0, 0}, h, {cells, 1, 1});
    auto c2 = c1;
    c1.add_point({c1.origin[0], 0, 0}, n);
    c2.add_point({-c1.origin[0], 0, 0}, n);
    const double lattice_sep = (cells - 1) * h;
    const double clump_lattice = csl::offdiag_decay_rate(c1, c2, p);
    const double clump_formula = csl::clump_rate(n, lattice_sep, p);
    r["clump_separation_cm"] = lattice_sep;
    r["clump_rate_lattice_per_s"] = clump_lattice;
    r["clump_rate_formula_per_s"] = clump_formula;
    c.check("clump_lattice_vs_formula", clump_lattice / clump_formula, 1.0, 0.02);

    // displaced cube
    const double side = s.number("cube_side"), rho = s.number("density");
    const double disp = s.has("displacement") ? s.number("displacement") : side + 12.0 * p.a;
    auto [e1, e2] = cube_pair(side, disp, h, rho, csl::DensityMode::number);
    const double ext = csl::offdiag_decay_rate(e1, e2, p);
    const double bulk = std::pow(4.0 * std::numbers::pi, 1.5) * p.lambda * (p.a * p.a * p.a * rho) * (side * side * side * rho);
    r["cube_particles"] = e1.total();
    r["extended_rate_lattice_per_s"] = ext;
    r["extended_rate_bulk_formula_per_s"] = bulk;
    r["extended_ratio"] = ext / bulk;
    r["collapse_time_s"] = 1.0 / ext;
    r["spacing_cm"] = h;
}

void gravity_compare(Context& c) {
    const Scenario& s = c.s;
    const double a = s.number("a");
    const double h = s.has("spacing") ? s.number("spacing") : 0.5 * a;
    if (h > 0.5 * a * (1.0 + 1e-12)) throw std::invalid_argument("lattice spacing exceeds a/2 (resolution rule)");
    const double side = s.number("cube_side");
    const double disp = s.has("displacement") ? s.number("displacement") : side + 12.0 * a;
    auto [d1, d2] = cube_pair(side, disp, h, s.number("mass_density"), csl::DensityMode::mass);
    json& r = c.out.results;
    const double local = csl::gravity_decay_exponent(d1, d2, csl::GravityVariant::local_curvature, a);
    const double global = csl::gravity_decay_exponent(d1, d2, csl::GravityVariant::global_potential, a);
    const double cell = csl::gravity_effective_cell_side(a);
    const double heur = csl::gravity_cell_heuristic(d1, d2, a, cell);
    r["mass_g"] = d1.total();
    r["local_exponent_per_s"] = local;
    r["global_exponent_per_s"] = global;
    r["heuristic_exponent_per_s"] = heur;
    r["heuristic_cell_side_cm"] = cell;
    r["heuristic_over_local"] = heur / local;
    r["global_over_local"] = global / local;
}

void kernel_scan_exp(Context& c) {
    const Scenario& s = c.s;
    const auto kind = rel::parse_scan_kind(s.text("kind"));
    const double a = s.number("a");
    const double lo = s.has("x_min") ? s.number("x_min") : 0.1 * a;
    const double hi = s.has("x_max") ? s.number("x_max") : 20.0 * a;
    const auto scan = rel::kernel_scan(kind, a, lo, hi, static_cast<int>(s.integer("points")));
    auto f = c.open("kernel_scan.csv");
    rel::write_kernel_scan_csv(f, scan);
    json zeros = json::array();
    for (std::size_t i = 1; i < scan.size() && zeros.size() < 8; ++i) {
        const auto& [x0, v0] = scan[i - 1];
        const auto& [x1, v1] = scan[i];
        if ((v0 > 0) != (v1 > 0)) zeros.push_back((x0 * v1 - x1 * v0) / (v1 - v0));
    }
    json& r = c.out.results;
    r["kind"] = rel::to_string(kind);
    r["a_cm"] = a;
    r["points"] = scan.size();
    r["zero_crossings_cm"] = zeros;
    r["value_at_x_min"] = scan.front().second;
}

void parameter_report(Context& c) {
    const Scenario& s = c.s;
    csl::CslParameters p;
    p.lambda = s.number("lambda");
    p.a = s.number("a");
    const auto rel = csl::parameter_relations(p);
    const auto ge = csl::germanium_bound(s.number("germanium_limit"));
    json& r = c.out.results;
    r["lambda_a_over_c"] = rel.lambda_a_over_c;
    r["g_mp2_over_hbar_c"] = rel.g_mp2_over_hbar_c;
    r["lambda_diosi_per_s"] = rel.lambda_diosi;
    r["a_planckon_cm"] = rel.a_planckon;
    r["lambda_planckon_per_s"] = rel.lambda_planckon;
    r["planck_mass_g"] = csl::constants::m_planck();
    r["germanium_ratio"] = ge.ratio;
    r["germanium_multiple_of_me_over_mp"] = ge.multiple;
}

void flatten(const json& j, const std::string& prefix, std::ostream& os) {
    if (j.is_object()) {
        for (auto it = j.begin(); it != j.end(); ++it) flatten(it.value(), prefix.empty() ? it.key() : prefix + "." + it.key(), os);
    } else if (j.is_array() && !j.empty() && j.front().is_object()) {
        for (std::size_t i = 0; i < j.size(); ++i) flatten(j[i], prefix + "[" + std::to_string(i) + "]", os);
    } else {
        os << "  " << prefix << " = " << j.dump() << '\n';
    }
}

std::string timestamp() {
    const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

} // namespace

ScenarioResult run_scenario(const Scenario& s, const RunOptions& opts) {
    ScenarioResult out;
    out.name = s.name;
    const fs::path root = opts.output_root.empty() ? fs::path(default_output_root()) : fs::path(opts.output_root);
    const fs::path dir = root / s.output_dir;
    fs::create_directories(dir);
    out.directory = dir.string();
    out.results = json::object();
    Context c{s, opts, dir, out};

    switch (s.experiment) {
    case Experiment::gambler_ruin: gambler_ruin(c); break;
    case Experiment::offdiag_decay: offdiag_decay(c); break;
    case Experiment::nonmarkov_compare: nonmarkov_compare(c); break;
    case Experiment::csl_rates: csl_rates(c); break;
    case Experiment::gravity_compare: gravity_compare(c); break;
    case Experiment::kernel_scan: kernel_scan_exp(c); break;
    case Experiment::parameter_report: parameter_report(c); break;
    }

    json doc;
    doc["scenario"] = s.name;
    doc["experiment"] = to_string(s.experiment);
    doc["seed"] = s.seed;
    doc["deep"] = opts.deep;
    json params = json::object();
    for (const auto& [k, v] : s.raw) params[k] = v;
    doc["parameters"] = params;
    json resolved = json::object();
    for (const auto& [k, v] : s.params) resolved[k] = v.raw;
    doc["resolved_parameters"] = resolved;
    doc["versions"] = {{"cslab", kVersion},
                       {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                                     std::to_string(EIGEN_MINOR_VERSION)},
                       {"boost", BOOST_LIB_VERSION}};
    doc["results"] = out.results;
    json checks = json::array();
    for (const auto& ch : out.checks)
        checks.push_back({{"name", ch.name},
                          {"measured", ch.measured},
                          {"expected", ch.expected},
                          {"tolerance", ch.tolerance},
                          {"pass", ch.pass}});
    doc["checks"] = checks;
    doc["files"] = out.files;
    doc["timestamp"] = timestamp();
    {
        std::ofstream f(dir / "results.json");
        f << doc.dump(2) << '\n';
    }
    {
        std::ofstream f(dir / "report.txt");
        f << std::setprecision(10);
        f << "scenario:   " << s.name << '\n' << "experiment: " << to_string(s.experiment) << '\n'
          << "seed:       " << s.seed << '\n' << "parameters:\n";
        for (const auto& [k, v] : s.params) f << "  " << k << " = " << v.raw << '\n';
        f << "results:\n";
        flatten(out.results, "", f);
        if (!out.checks.empty()) {
            f << "checks:\n";
            for (const auto& ch : out.checks)
                f << "  [" << (ch.pass ? "PASS" : "FAIL") << "] " << ch.name << ": measured " << ch.measured
                  << ", expected " << ch.expected << " +- " << ch.tolerance << '\n';
        }
    }
    out.files.push_back("results.json");
    out.files.push_back("report.txt");
    return out;
}

} // namespace cslab::scenario
