#include "cslab/acceptance.hpp"

#include "cslab/collapse_engine.hpp"
#include "cslab/csl_model.hpp"
#include "cslab/ensemble_analysis.hpp"
#include "cslab/numerics.hpp"
#include "cslab/rel_kernels.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <numbers>
#include <sstream>
#include <stdexcept>

namespace cslab::acceptance {

namespace {

using std::numbers::pi;

const HermitianOperator kZ = HermitianOperator::diagonal({1.0, -1.0});

struct Builder {
    CriterionResult& r;
    void within(const std::string& label, double measured, double reference, double tol) {
        r.subchecks.push_back({label, measured, reference, tol, std::abs(measured - reference) <= tol});
    }
    void in_range(const std::string& label, double measured, double lo, double hi) {
        r.subchecks.push_back({label + " (range)", measured, 0.5 * (lo + hi), 0.5 * (hi - lo), measured >= lo && measured <= hi});
    }
    void factor(const std::string& label, double measured, double reference, double f) {
        const double ratio = measured / reference;
        r.subchecks.push_back({label + " (within factor)", measured, reference, f, ratio >= 1.0 / f && ratio <= f});
    }
    void exact(const std::string& label, double measured, double reference) {
        r.subchecks.push_back({label + " (exact)", measured, reference, 0.0, measured == reference});
    }
};

int count(const CheckOptions& o, int base) {
    const double n = std::round(base * (o.deep ? 10.0 : 1.0) * o.size_factor);
    return std::max(2, static_cast<int>(n));
}

std::uint64_t seed_for(const CheckOptions& o, int id) { return o.seed * 1000 + static_cast<std::uint64_t>(id); }

// Shared gambler's-ruin scenario: (0.6, 0.8), A = diag(1, -1), lambda t (a1 - a2)^2 = 40.
const TimeGrid kRuinGrid(0.0, 0.0025, 4000);
const StateVector kRuinState{0.6, 0.8};

struct RuinCounts {
    int n = 0, zero = 0, unresolved = 0;
};

RuinCounts nonlinear_ruin(const CheckOptions& o, std::uint64_t seed, int n) {
    const CollapseOperatorSet ops({kZ}, 1.0);
    EngineOptions eo;
    eo.record_stride = 0;
    eo.stop_on_outcome = true;
    std::vector<int> idx(n, -1);
    parallel_for(n, o.jobs, [&](int i) {
        const auto r = evolve_nonlinear(kRuinState, ops, kRuinGrid, seed, i, eo);
        if (r.outcome) idx[i] = r.outcome->index;
    });
    RuinCounts c;
    c.n = n;
    for (int v : idx) {
        c.zero += v == 0;
        c.unresolved += v < 0;
    }
    return c;
}

void criterion1(const CheckOptions& o, Builder& b) {
    const auto c = nonlinear_ruin(o, seed_for(o, 1), count(o, 10000));
    b.within("fraction collapsed to index 0", static_cast<double>(c.zero) / c.n, 0.36, 0.015);
    b.within("unresolved fraction", static_cast<double>(c.unresolved) / c.n, 0.0, 0.01);
}

void criterion2(const CheckOptions& o, Builder& b) {
    const int n = count(o, 10000);
    const auto c = nonlinear_ruin(o, seed_for(o, 2), n);
    const double fn = static_cast<double>(c.zero) / n;
    const CollapseOperatorSet ops({kZ}, 1.0);
    const int replicas = count(o, 32);
    const auto est = estimate_weighted_population(kRuinState, ops, kRuinGrid, 500, replicas, seed_for(o, 2) + 500, o.jobs);
    b.within("weighted linear vs nonlinear fraction_0 (3 sigma combined)", est.outcome_fraction[0], fn,
             3.0 * std::hypot(est.outcome_error[0], std::sqrt(fn * (1.0 - fn) / n)));
    b.within("weighted population mean weight (3 sigma)", est.mean_evidence, 1.0, 3.0 * est.evidence_error);

    // Plain raw-measure weights at lambda t (a1 - a2)^2 = 2, where their variance is finite and small.
    const TimeGrid g(0.0, 0.0025, 200);
    const int m = count(o, 20000);
    std::vector<double> w(m);
    EngineOptions eo;
    eo.record_stride = 0;
    parallel_for(m, o.jobs, [&](int i) {
        w[i] = evolve_linear(kRuinState, ops, sample_white(g, 1.0, seed_for(o, 2) + 1000, i), eo).weight;
    });
    double s = 0.0, s2 = 0.0;
    for (double x : w) {
        s += x;
        s2 += x * x;
    }
    const double mean = s / m, se = std::sqrt(std::max(0.0, s2 / m - mean * mean) / m);
    b.within("raw-measure mean weight (3 sigma)", mean, 1.0, 3.0 * se);
}

void criterion3(const CheckOptions& o, Builder& b) {
    const double lambda = 1.0;
    const CollapseOperatorSet sim({kZ}, lambda * o.lambda_scale);
    const TimeGrid g(0.0, 0.0025 / std::max(1.0, o.lambda_scale), static_cast<int>(std::ceil(1000 * std::max(1.0, o.lambda_scale) - 1e-9)));
    const int n = count(o, 10000);
    const int steps_per_point = g.n_steps / 10;
    EngineOptions eo;
    eo.record_stride = steps_per_point;
    std::vector<TrajectoryRecord> recs(n);
    parallel_for(n, o.jobs, [&](int i) { recs[i] = evolve_nonlinear(kRuinState, sim, g, seed_for(o, 3), i, eo); });
    const auto st = mc_ensemble_density(recs);
    recs.clear();
    for (std::size_t k = 1; k < st.times.size(); ++k) {
        const double t = st.times[k];
        const double expect = 0.48 * std::exp(-lambda * t * 4.0 / 2.0);
        std::ostringstream label;
        label << "|rho_01| at t=" << std::setprecision(4) << t << " (3 sigma)";
        b.within(label.str(), std::abs(st.offdiag(k, 0, 1)), expect, 3.0 * st.offdiag_error(k, 0, 1));
    }
    const CollapseOperatorSet nominal({kZ}, lambda);
    const auto rho0 = pure_density(kRuinState);
    double worst = 0.0;
    for (int k = 1; k <= 10; ++k) {
        const double t = 0.25 * k;
        const auto an = propagate_density_analytic(rho0, nominal, t);
        const auto fo = propagate_density_fourier(rho0, nominal, t, 64);
        worst = std::max(worst, (an.matrix() - fo.matrix()).cwiseAbs().maxCoeff());
    }
    b.within("analytic vs Fourier propagator, max abs", worst, 0.0, 1e-8);
}

void criterion4(const CheckOptions& o, Builder& b) {
    const CollapseOperatorSet ops({kZ}, 1.0);
    const TimeGrid g(0.0, 0.0025, 5000);  // lambda t (a1 - a2)^2 = 50
    const int n = count(o, 2000);
    EngineOptions eo;
    eo.record_stride = 1000;
    std::vector<TrajectoryRecord> col(n), ph(n);
    parallel_for(n, o.jobs, [&](int i) {
        col[i] = evolve_nonlinear(kRuinState, ops, g, seed_for(o, 4), i, eo);
        ph[i] = random_phase_trajectory(kRuinState, ops, g, seed_for(o, 4) + 1, i, eo);
    });
    const auto sc = mc_ensemble_density(col);
    const auto sp = mc_ensemble_density(ph);
    for (std::size_t k = 1; k < sc.times.size(); ++k) {
        double worst = 0.0;  // largest |difference| / (3 sigma) over the matrix elements
        for (int j = 0; j < 2; ++j)
            for (int l = 0; l < 2; ++l) {
                const double se = std::hypot(sc.standard_errors[k](j, l).real(), sp.standard_errors[k](j, l).real());
                const double d = std::abs(sc.mean_densities[k](j, l) - sp.mean_densities[k](j, l));
                worst = std::max(worst, se > 0.0 ? d / (3.0 * se) : (d == 0.0 ? 0.0 : INFINITY));
            }
        std::ostringstream label;
        label << "density difference / 3 sigma, worst element at t=" << sc.times[k];
        b.r.subchecks.push_back({label.str(), worst, 0.0, 1.0, worst <= 1.0});
    }
    int co = 0, po = 0;
    for (int i = 0; i < n; ++i) {
        co += col[i].outcome.has_value();
        po += ph[i].outcome.has_value();
    }
    const double cf = static_cast<double>(co) / n, pf = static_cast<double>(po) / n;
    b.r.subchecks.push_back({"collapse ensemble outcome fraction (>= 0.99)", cf, 0.99, 0.0, cf >= 0.99});
    b.exact("random-phase ensemble outcome fraction", pf, 0.0);
}

double state_distance(const CVector& a, const CVector& b) {
    const CVector na = a / a.norm(), nb = b / b.norm();
    const cplx ov = nb.dot(na);
    const cplx phase = std::abs(ov) > 0 ? ov / std::abs(ov) : cplx(1.0);
    return (na - phase * nb).norm();
}

void criterion5(const CheckOptions& o, Builder& b) {
    const StateVector psi0{0.6, 0.8};
    const double alpha = 5.0;
    const Kernel ou = Kernel::ornstein_uhlenbeck(alpha);
    {
        const TimeGrid g(0.0, 0.01, 300);
        const auto noise = sample_colored(g, ou, seed_for(o, 5), 0);
        const auto cf = evolve_nonmarkovian_closed(psi0, kZ, 1.0, alpha, noise);
        const auto dir = evolve_nonmarkovian_direct(psi0, kZ, 1.0, ou, noise);
        b.within("closed form vs direct kernel evaluation", state_distance(cf.amplitudes(), dir.amplitudes()), 0.0, 1e-8);
        const double t = g.duration();
        b.within("effective time formula", ou_effective_time(alpha, t), t - (1.0 - std::exp(-alpha * t)) / alpha,
                 1e-12 * t);
    }
    {
        // alpha t = 100: amplitudes against the Markovian closed form with the full time
        const TimeGrid g(0.0, 0.01, 2000);
        const double lambda = 0.05, t = g.duration();
        const auto noise = sample_colored(g, ou, seed_for(o, 5), 1);
        const auto cf = evolve_nonmarkovian_closed(psi0, kZ, lambda, alpha, noise);
        double bp = 0.0;
        for (int k = 0; k < g.n_steps; ++k) {
            const double s0 = k * g.dt, s1 = s0 + g.dt;
            const double cell = g.dt - 0.5 * ((std::exp(-alpha * s0) - std::exp(-alpha * s1)) +
                                              (std::exp(-alpha * (t - s1)) - std::exp(-alpha * (t - s0)))) / alpha;
            bp += noise.increment(0, k) / g.dt * cell;
        }
        const auto mk = closed_form_simple(psi0, kZ, lambda, t, bp);
        const CVector x = cf.amplitudes() / cf.amplitudes().norm(), y = mk.amplitudes() / mk.amplitudes().norm();
        double worst = 0.0;
        for (int i = 0; i < 2; ++i) worst = std::max(worst, std::abs(std::abs(x(i)) / std::abs(y(i)) - 1.0));
        b.within("alpha t = 100: amplitudes vs Markovian form, max relative deviation", worst, 0.0, 0.02);
        const auto rho0 = pure_density(psi0);
        const double lm = std::log(std::abs(propagate_density_analytic(rho0, CollapseOperatorSet({kZ}, lambda), t)(0, 1)) / 0.48);
        const double lo = std::log(std::abs(nonmarkovian_density_offdiag(rho0, kZ, lambda, ou, t)(0, 1)) / 0.48);
        b.within("alpha t = 100: decay exponent ratio OU / Markovian", lo / lm, 1.0, 0.02);
    }
    {
        const double a1 = 1.0, dt = 0.002;
        const auto s = sqrt_kernel_samples(Kernel::ornstein_uhlenbeck(a1), dt, 1 << 17);
        double worst = 0.0;
        for (int i = 1; i <= 30; ++i) {
            const double x = 0.1 * i;
            const int k = static_cast<int>(std::lround(x / dt));
            const double ref = a1 / pi * numerics::bessel_k0(a1 * k * dt);
            worst = std::max(worst, std::abs(s[k] / ref - 1.0));
        }
        b.within("sqrt OU kernel vs (alpha/pi) K0, max relative deviation on 0.1..3", worst, 0.0, 0.02);
    }
}

void criterion6(const CheckOptions&, Builder& b) {
    csl::CslParameters p;  // GRW
    const double h = 0.5 * p.a;
    const int cells = 21;  // separation 10 a
    std::vector<double> rates;
    for (double n : {10.0, 100.0, 1000.0}) {
        auto d1 = csl::LatticeMassDistribution::empty({-5.0 * p.a, 0, 0}, h, {cells, 1, 1});
        auto d2 = d1;
        d1.add_point({-5.0 * p.a, 0, 0}, n);
        d2.add_point({5.0 * p.a, 0, 0}, n);
        const double r = csl::offdiag_decay_rate(d1, d2, p);
        rates.push_back(r);
        std::ostringstream label;
        label << "n=" << n << ": lattice rate / (lambda n^2)";
        b.within(label.str(), r / (p.lambda * n * n), 1.0, 0.02);
    }
    b.within("rate(100) / rate(10) / 100", rates[1] / rates[0] / 100.0, 1.0, 0.01);
    b.within("rate(1000) / rate(100) / 100", rates[2] / rates[1] / 100.0, 1.0, 0.01);
}

void criterion7(const CheckOptions&, Builder& b) {
    csl::CslParameters p;
    const double side = 1e-4, rho = 1e25, h = 0.5 * p.a, disp = side + 12.0 * p.a;
    const int nx = static_cast<int>(std::lround((disp + side) / h)) + 1, ny = static_cast<int>(std::lround(side / h)) + 1;
    const std::array<double, 3> origin{-0.5 * (nx - 1) * h, -0.5 * (ny - 1) * h, -0.5 * (ny - 1) * h};
    auto d1 = csl::LatticeMassDistribution::empty(origin, h, {nx, ny, ny});
    auto d2 = d1;
    d1.add_box({-0.5 * disp, 0, 0}, {side, side, side}, rho);
    d2.add_box({0.5 * disp, 0, 0}, {side, side, side}, rho);
    const double rate = csl::offdiag_decay_rate(d1, d2, p);
    const double bulk = std::pow(4.0 * pi, 1.5) * p.lambda * (p.a * p.a * p.a * rho) * (side * side * side * rho);
    b.within("lattice rate / bulk formula", rate / bulk, 1.0, 0.10);
    b.in_range("collapse time [s]", 1.0 / rate, 1e-9, 1e-8);
}

void criterion8(const CheckOptions& o, Builder& b) {
    csl::CslParameters p;
    const double e = csl::energy_gain_rate(1e24, csl::constants::m_p, p);
    b.within("energy gain for 1e24 nucleons [eV/s] (20%)", e, 0.3, 0.06);

    const double omega = 3.0, lambda = 0.4;
    CMatrix hx(2, 2);
    hx << 0.0, omega / 2.0, omega / 2.0, 0.0;
    const HermitianOperator h(hx);
    const CollapseOperatorSet ops({kZ}, lambda, h);
    const StateVector ground{1.0 / std::sqrt(2.0), -1.0 / std::sqrt(2.0)};
    const TimeGrid g(0.0, 0.0025, 1000);
    const int n = count(o, 4000);
    EngineOptions eo;
    eo.record_stride = 200;
    std::vector<TrajectoryRecord> recs(n);
    parallel_for(n, o.jobs, [&](int i) { recs[i] = evolve_nonlinear(ground, ops, g, seed_for(o, 8), i, eo); });
    const auto rho0 = pure_density(ground);
    for (std::size_t k = 1; k < recs[0].times.size(); ++k) {
        double s = 0.0, s2 = 0.0;
        for (const auto& r : recs) {
            const double v = expectation(h, r.states[k]);
            s += v;
            s2 += v * v;
        }
        const double mean = s / n, se = std::sqrt(std::max(0.0, s2 / n - mean * mean) / n);
        const double t = recs[0].times[k];
        const auto rho = propagate_density_superoperator(rho0, ops, t);
        const double expect = (rho.matrix() * h.matrix()).trace().real();
        std::ostringstream label;
        label << "<H> at t=" << t << " vs superoperator (3 sigma)";
        b.within(label.str(), mean, expect, 3.0 * se);
    }
}

void criterion9(const CheckOptions& o, Builder& b) {
    numerics::Rng rng(seed_for(o, 9), 0);
    csl::CslParameters p;
    struct Shape {
        int particles, dims, points;
    };
    int trial = 0;
    for (const Shape s : {Shape{2, 1, 24}, Shape{3, 1, 10}, Shape{2, 2, 7}, Shape{4, 1, 6}}) {
        csl::FewBodyGrid g;
        g.particles = s.particles;
        g.dims = s.dims;
        const double sigma = 1e-8;
        for (int i = 0; i < s.points; ++i) g.axis.push_back(-4 * sigma + 8 * sigma * i / (s.points - 1));
        const std::size_t n = g.size();
        const double vol = std::pow(g.cell(), s.particles * s.dims);
        for (int rep = 0; rep < 3; ++rep, ++trial) {
            std::vector<cplx> psi(n), phi(n);
            for (std::size_t i = 0; i < n; ++i) {
                psi[i] = cplx(rng.normal(), rng.normal());
                phi[i] = cplx(rng.normal(), rng.normal());
            }
            auto normalize = [&](std::vector<cplx>& v) {
                double s2 = 0.0;
                for (const auto& x : v) s2 += std::norm(x);
                const double f = 1.0 / std::sqrt(s2 * vol);
                for (auto& x : v) x *= f;
            };
            normalize(psi);
            cplx ov = 0.0;
            for (std::size_t i = 0; i < n; ++i) ov += std::conj(psi[i]) * phi[i] * vol;
            for (std::size_t i = 0; i < n; ++i) phi[i] -= ov * psi[i];
            normalize(phi);
            std::vector<double> masses(s.particles), gprop(s.particles), gother(s.particles);
            const double k = 0.1 + 2.0 * rng.uniform();
            for (int j = 0; j < s.particles; ++j) {
                masses[j] = csl::constants::m_p * (0.5 + 100.0 * rng.uniform());
                gprop[j] = k * masses[j] / csl::constants::m_p;
                gother[j] = rng.uniform();
            }
            std::ostringstream label;
            label << "trial " << trial << " (" << s.particles << " particles, " << s.dims << "D): rate for g proportional to m";
            b.exact(label.str(), csl::excitation_amplitude(psi, phi, g, masses, gprop, p), 0.0);
            if (rep == 0) {
                const double ctl = csl::excitation_amplitude(psi, phi, g, masses, gother, p);
                b.r.subchecks.push_back({"control: generic couplings give a nonzero rate", ctl, 0.0, 0.0, ctl > 0.0});
            }
        }
    }
}

void criterion10(const CheckOptions&, Builder& b) {
    b.in_range("germanium_bound(0.2) in units of m_e/m_p", csl::germanium_bound(0.2).multiple, 12.0, 13.5);
}

void criterion11(const CheckOptions&, Builder& b) {
    const auto rel = csl::parameter_relations();
    b.factor("lambda a / c", rel.lambda_a_over_c, 1e-32, 3.0);
    b.factor("G m_p^2 / hbar c", rel.g_mp2_over_hbar_c, 1e-38, 3.0);
    b.within("Planckon a_P [cm] (10%)", rel.a_planckon, 1.4e-5, 0.14e-5);
}

void criterion12(const CheckOptions&, Builder& b) {
    const double a = 1.0;
    for (const auto& [kind, name, xs] :
         {std::tuple{rel::Separation::spacelike, "spacelike", std::vector<double>{0.5, 1.0, 3.0, 4.0, 7.0}},
          std::tuple{rel::Separation::timelike, "timelike", std::vector<double>{0.5, 1.0, 2.0, 4.0, 6.0}}}) {
        for (double x : xs) {
            const double ex = rel::tachyon_kernel_exact(x, a, kind);
            const double q = rel::tachyon_kernel_quadrature(x, a, kind);
            std::ostringstream label;
            label << name << " x=" << x << "a: quadrature / closed form";
            b.within(label.str(), q / ex, 1.0, 0.03);
        }
    }
    const double step = 1e-3 * a;
    const auto scan = rel::kernel_scan(rel::ScanKind::nonrel, a, step, 5.5 * pi * a, static_cast<int>(std::lround(5.5 * pi / 1e-3)));
    std::vector<double> zeros;
    for (std::size_t i = 1; i < scan.size(); ++i) {
        const auto& [x0, v0] = scan[i - 1];
        const auto& [x1, v1] = scan[i];
        if ((v0 > 0) != (v1 > 0)) zeros.push_back((x0 * v1 - x1 * v0) / (v1 - v0));
    }
    b.exact("nonrelativistic limit: zero crossings below 5.5 pi a", static_cast<double>(zeros.size()), 5.0);
    const double spacing = scan.size() > 1 ? scan[1].first - scan[0].first : step;
    for (std::size_t k = 0; k < std::min<std::size_t>(zeros.size(), 5); ++k) {
        std::ostringstream label;
        label << "zero " << k + 1 << " at k pi a (grid resolution)";
        b.within(label.str(), zeros[k], (k + 1) * pi * a, spacing);
    }
    rel::RelParameters rp;
    rp.gamma = 2.5;
    rp.g_coupling = 0.7;
    rp.mu = 3e-3;
    const double formula = rp.gamma * rp.g_coupling * rp.g_coupling * rp.a_cm() / (16.0 * pi);
    b.within("fermion asymptote / (gamma g^2 a / 16 pi)", rel::fermion_collapse_asymptote(rp) / formula, 1.0, 1e-12);
    b.within("fermion rate at s = 1e3 a / asymptote", rel::fermion_collapse_rate(1e3 * rp.a_cm(), rp) / formula, 1.0, 1e-12);
}

std::vector<double> numbers_of(const CriterionResult& r) {
    std::vector<double> v;
    for (const auto& s : r.subchecks) {
        v.push_back(s.measured);
        v.push_back(s.reference);
        v.push_back(s.tolerance);
    }
    return v;
}

void criterion13(const CheckOptions& o, Builder& b) {
    // Reruns of the stochastic criteria with different worker counts.
    for (int id : {1, 2, 3, 4, 5, 8, 9}) {
        CheckOptions one = o, two = o;
        one.jobs = 1;
        two.jobs = 2;
        const auto first = numbers_of(run_criterion(id, one));
        const auto second = numbers_of(run_criterion(id, two));
        std::size_t diff = first.size() == second.size() ? 0 : std::max(first.size(), second.size());
        for (std::size_t i = 0; i < std::min(first.size(), second.size()); ++i)
            diff += !(first[i] == second[i] || (std::isnan(first[i]) && std::isnan(second[i])));
        b.exact("criterion " + std::to_string(id) + " rerun: differing values", static_cast<double>(diff), 0.0);
    }
}

} // namespace

std::string criterion_name(int id) {
    static const char* names[] = {"",
                                  "Born-rule collapse frequencies",
                                  "weighted linear vs nonlinear engine",
                                  "off-diagonal decay",
                                  "random-phase vs collapse ensemble",
                                  "OU nonMarkovian closed form",
                                  "CSL clump n^2 law",
                                  "extended-object rate",
                                  "energy gain",
                                  "mass-proportional null",
                                  "germanium bound",
                                  "parameter relations",
                                  "relativistic kernels",
                                  "determinism"};
    if (id < 1 || id > kCriterionCount) throw std::invalid_argument("criterion id must be in 1.." + std::to_string(kCriterionCount));
    return names[id];
}

CriterionResult run_criterion(int id, const CheckOptions& opts) {
    CriterionResult r;
    r.id = id;
    r.name = criterion_name(id);
    Builder b{r};
    const auto t0 = std::chrono::steady_clock::now();
    try {
        switch (id) {
        case 1: criterion1(opts, b); break;
        case 2: criterion2(opts, b); break;
        case 3: criterion3(opts, b); break;
        case 4: criterion4(opts, b); break;
        case 5: criterion5(opts, b); break;
        case 6: criterion6(opts, b); break;
        case 7: criterion7(opts, b); break;
        case 8: criterion8(opts, b); break;
        case 9: criterion9(opts, b); break;
        case 10: criterion10(opts, b); break;
        case 11: criterion11(opts, b); break;
        case 12: criterion12(opts, b); break;
        case 13: criterion13(opts, b); break;
        }
        r.pass = !r.subchecks.empty() &&
                 std::all_of(r.subchecks.begin(), r.subchecks.end(), [](const SubCheck& s) { return s.pass; });
    } catch (const std::exception& e) {
        r.error = e.what();
        r.pass = false;
    }
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return r;
}

std::vector<CriterionResult> run_acceptance(const CheckOptions& opts, const std::vector<int>& only) {
    std::vector<int> ids = only;
    if (ids.empty())
        for (int i = 1; i <= kCriterionCount; ++i) ids.push_back(i);
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    for (int id : ids) criterion_name(id);  // validate before doing any work
    std::vector<CriterionResult> out;
    for (int id : ids) out.push_back(run_criterion(id, opts));
    return out;
}

std::string summary_line(const CriterionResult& r) {
    std::ostringstream os;
    os << std::setprecision(6);
    os << (r.pass ? "[PASS] " : "[FAIL] ") << std::setw(2) << r.id << ' ' << r.name;
    if (!r.error.empty()) {
        os << " -- error: " << r.error;
        return os.str();
    }
    // the worst sub-check, for a one-line view
    const SubCheck* show = nullptr;
    for (const auto& s : r.subchecks)
        if (!s.pass) {
            show = &s;
            break;
        }
    if (!show && !r.subchecks.empty()) show = &r.subchecks.front();
    if (show)
        os << " -- " << show->label << ": measured " << show->measured << ", reference " << show->reference
           << ", tolerance " << show->tolerance;
    const auto failed = std::count_if(r.subchecks.begin(), r.subchecks.end(), [](const SubCheck& s) { return !s.pass; });
    os << " [" << r.subchecks.size() - failed << '/' << r.subchecks.size() << " sub-checks]";
    return os.str();
}

nlohmann::ordered_json to_json(const std::vector<CriterionResult>& results, const CheckOptions& opts) {
    nlohmann::ordered_json j;
    j["seed"] = opts.seed;
    j["deep"] = opts.deep;
    j["jobs"] = opts.jobs;
    j["lambda_scale"] = opts.lambda_scale;
    bool all = true;
    nlohmann::ordered_json arr = nlohmann::ordered_json::array();
    for (const auto& r : results) {
        all = all && r.pass;
        nlohmann::ordered_json c;
        c["id"] = r.id;
        c["name"] = r.name;
        c["pass"] = r.pass;
        if (!r.error.empty()) c["error"] = r.error;
        nlohmann::ordered_json subs = nlohmann::ordered_json::array();
        for (const auto& s : r.subchecks)
            subs.push_back({{"label", s.label},
                            {"measured", s.measured},
                            {"reference", s.reference},
                            {"tolerance", s.tolerance},
                            {"deviation", s.measured - s.reference},
                            {"pass", s.pass}});
        c["subchecks"] = subs;
        c["seconds"] = r.seconds;
        arr.push_back(c);
    }
    j["all_pass"] = all;
    j["criteria"] = arr;
    return j;
}

} // namespace cslab::acceptance
