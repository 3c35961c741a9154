#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "cslab/collapse_engine.hpp"
#include "cslab/ensemble_analysis.hpp"

#include <cmath>
#include <numbers>
#include <sstream>
#include <stdexcept>

using namespace cslab;

namespace {

const HermitianOperator kZ = HermitianOperator::diagonal({1.0, -1.0});

HermitianOperator pauli_x(double scale = 1.0) {
    CMatrix x(2, 2);
    x << 0.0, scale, scale, 0.0;
    return HermitianOperator(x);
}

CVector normalized(const CVector& v) { return v / v.norm(); }

// Normalized states agree up to a global phase.
double state_distance(const CVector& a, const CVector& b) {
    const CVector na = normalized(a), nb = normalized(b);
    const cplx ov = nb.dot(na);
    const cplx phase = std::abs(ov) > 0 ? ov / std::abs(ov) : cplx(1.0);
    return (na - phase * nb).norm();
}

} // namespace

TEST_CASE("closed_form_simple examples") {
    const StateVector psi0{0.6, 0.8};
    const auto s = closed_form_simple(psi0, HermitianOperator::diagonal({1.0, 0.0}), 1.0, 1.0, 2.0);
    CHECK(std::abs(s[0] - 0.6) < 1e-15);
    CHECK(std::abs(s[1] - 0.8 * std::exp(-1.0)) < 1e-15);

    for (double b : {-3.0, 0.0, 0.4, 7.0}) {
        const auto deg = closed_form_simple(psi0, HermitianOperator::diagonal({0.7, 0.7}), 2.0, 0.5, b);
        CHECK(state_distance(deg.amplitudes(), psi0.amplitudes()) < 1e-14);
    }

    // lambda t (a1 - a2)^2 = 20, B centred on branch 1
    const double lambda = 5.0, t = 1.0;
    const auto c = closed_form_simple(psi0, kZ, lambda, t, 2.0 * lambda * t * 1.0);
    CHECK(std::abs(c[1] / c[0]) == doctest::Approx(0.8 / 0.6 * std::exp(-20.0)).epsilon(1e-12));

    CHECK_THROWS_AS(closed_form_simple(psi0, kZ, 1.0, 0.0, 0.0), std::invalid_argument);
}

TEST_CASE("probability_density_simple integrates to one and splits into branch weights") {
    const StateVector psi0{0.6, 0.8};
    auto integrate = [&](double lambda, double t, double lo, double hi) {
        const int n = 40000;
        const double h = (hi - lo) / n;
        double s = 0.0;
        for (int i = 0; i <= n; ++i) {
            const double w = (i == 0 || i == n) ? 0.5 : 1.0;
            s += w * probability_density_simple(psi0, kZ, lambda, t, lo + i * h);
        }
        return s * h / std::sqrt(2.0 * std::numbers::pi * lambda * t);
    };
    CHECK(integrate(1.0, 1.0, -30.0, 30.0) == doctest::Approx(1.0).epsilon(1e-8));
    // lambda t (a1 - a2)^2 = 50: branches centred at +-25, width 3.5
    const double lt = 12.5;
    CHECK(integrate(lt, 1.0, 0.0, 80.0) == doctest::Approx(0.36).epsilon(1e-8));
    CHECK(integrate(lt, 1.0, -80.0, 0.0) == doctest::Approx(0.64).epsilon(1e-8));
    // short times concentrate the density at B = 0
    const double tiny = 1e-4;
    CHECK(probability_density_simple(psi0, kZ, 1.0, tiny, 0.0) > 0.99);
    CHECK(probability_density_simple(psi0, kZ, 1.0, tiny, 0.2) < 1e-40);
}

TEST_CASE("evolve_linear with H = 0 matches the closed form up to the noise-only factor") {
    const double lambda = 0.8;
    const TimeGrid g(0.0, 0.001, 2000);
    const CollapseOperatorSet ops({kZ}, lambda);
    const StateVector psi0{0.6, 0.8};
    const auto noise = sample_white(g, lambda, 21, 0);
    const auto rec = evolve_linear(psi0, ops, noise);
    const double b = noise.total(0), t = g.duration();
    const auto cf = closed_form_simple(psi0, kZ, lambda, t, b);
    // rescaled engine drops exp(-B^2 / 4 lambda t) from every amplitude
    const CVector got = rec.states.back().amplitudes() * std::exp(0.5 * rec.log_norm2.back()) *
                        std::exp(-b * b / (4.0 * lambda * t));
    for (int i = 0; i < 2; ++i) CHECK(std::abs(got(i) / cf[i] - 1.0) < 1e-6);
    // weight is the raw-measure likelihood ratio
    CHECK(rec.weight == doctest::Approx(norm_squared(cf) * std::exp(b * b / (2.0 * lambda * t))).epsilon(1e-9));
}

TEST_CASE("evolve_linear with lambda = 0 is unitary") {
    const TimeGrid g(0.0, 0.01, 500);
    const CollapseOperatorSet ops({kZ}, 0.0, pauli_x(1.3));
    const auto noise = sample_white(g, 0.0, 1, 1);
    const StateVector psi0{0.6, 0.8};
    const auto rec = evolve_linear(psi0, ops, noise);
    const CVector expect = unitary_propagator(pauli_x(1.3), g.duration()) * psi0.amplitudes();
    CHECK(std::abs(rec.states.back().amplitudes().squaredNorm() - 1.0) < 1e-8);
    CHECK((rec.states.back().amplitudes() - expect).norm() < 1e-10);
    CHECK(rec.weight == doctest::Approx(1.0).epsilon(1e-8));
}

TEST_CASE("two channels: amplitude ratio decays at lambda t sum_n (a_i - a_j)^2") {
    const double lambda = 0.5;
    const HermitianOperator a1 = HermitianOperator::diagonal({1.0, 0.0, -0.5});
    const HermitianOperator a2 = HermitianOperator::diagonal({0.0, 0.5, 1.0});
    const CollapseOperatorSet ops({a1, a2}, lambda);
    const TimeGrid g(0.0, 0.002, 1000);
    // noise sitting exactly on branch 0
    NoisePath noise{g, NoiseKind::rate, {std::vector<double>(g.n_steps, 2.0 * lambda * 1.0),
                                         std::vector<double>(g.n_steps, 2.0 * lambda * 0.0)}};
    const StateVector psi0{1.0, 1.0, 1.0};
    const auto rec = evolve_linear(psi0, ops, noise);
    const CVector c = rec.states.back().amplitudes();
    const double t = g.duration();
    for (int j : {1, 2}) {
        const double d1 = 1.0 - ops.eigenvalue(0, j), d2 = 0.0 - ops.eigenvalue(1, j);
        const double expected = lambda * t * (d1 * d1 + d2 * d2);
        CHECK(-std::log(std::abs(c(j) / c(0))) == doctest::Approx(expected).epsilon(0.01));
    }
}

TEST_CASE("scale invariance: unrescaled factor changes only weights, by a noise-only factor") {
    const double lambda = 1.2;
    const TimeGrid g(0.0, 0.001, 3000);
    const CollapseOperatorSet ops({kZ}, lambda, pauli_x(0.4));
    const StateVector psi0{0.6, 0.8};
    const auto noise = sample_white(g, lambda, 8, 3);
    EngineOptions raw;
    raw.rescaled = false;
    const auto r1 = evolve_linear(psi0, ops, noise);
    const auto r2 = evolve_linear(psi0, ops, noise, raw);
    REQUIRE(r1.states.size() == r2.states.size());
    for (std::size_t k = 0; k < r1.states.size(); k += 250)
        CHECK(state_distance(r1.states[k].amplitudes(), r2.states[k].amplitudes()) < 1e-10);
    double f = 0.0;
    for (int k = 0; k < g.n_steps; ++k) f += noise.increment(0, k) * noise.increment(0, k) / (2.0 * lambda * g.dt);
    CHECK(r2.log_weight == doctest::Approx(r1.log_weight - f).epsilon(1e-10));
    CHECK((r1.outcome.has_value()) == (r2.outcome.has_value()));
}

TEST_CASE("joint eigenstates are fixed points of both engines") {
    const double lambda = 2.0;
    const TimeGrid g(0.0, 0.001, 1000);
    const CollapseOperatorSet ops({kZ}, lambda);
    const StateVector psi0{1.0, 0.0};
    const auto lin = evolve_linear(psi0, ops, sample_white(g, lambda, 4, 4));
    CHECK(lin.states.back()[1] == cplx(0.0));
    for (int s = 0; s < 5; ++s) {
        const auto nl = evolve_nonlinear(psi0, ops, g, 99, s);
        CHECK(nl.states.back()[1] == cplx(0.0));
        CHECK(std::abs(nl.states.back()[0]) == doctest::Approx(1.0));
        REQUIRE(nl.outcome);
        CHECK(nl.outcome->index == 0);
        CHECK(nl.outcome->time == 0.0);
    }
}

TEST_CASE("nonlinear engine: Born-rule frequencies and the martingale property") {
    const double lambda = 1.0;
    const TimeGrid g(0.0, 0.0025, 4000);  // lambda t (a1 - a2)^2 = 40
    const CollapseOperatorSet ops({kZ}, lambda);
    const StateVector psi0{0.6, 0.8};
    const int n = 2000;
    EngineOptions opts;
    opts.record_stride = 400;
    std::vector<TrajectoryRecord> recs(n);
    parallel_for(n, 2, [&](int i) { recs[i] = evolve_nonlinear(psi0, ops, g, 2024, i, opts); });
    int zero = 0, none = 0;
    for (const auto& r : recs) {
        if (!r.outcome) ++none;
        else if (r.outcome->index == 0) ++zero;
    }
    CHECK(none == 0);
    const auto ci = proportion_interval(zero, n);
    CHECK(ci.lower <= 0.36);
    CHECK(ci.upper >= 0.36);
    // E[<A>(t)] = -0.28 at every recorded time
    for (std::size_t k = 0; k < recs[0].times.size(); ++k) {
        double s = 0.0, s2 = 0.0;
        for (const auto& r : recs) {
            const double v = expectation(kZ, r.states[k]);
            s += v;
            s2 += v * v;
        }
        const double mean = s / n, sd = std::sqrt(std::max(0.0, s2 / n - mean * mean));
        CAPTURE(k);
        CHECK(std::abs(mean + 0.28) <= 3.0 * sd / std::sqrt(double(n)) + 1e-12);
    }
}

TEST_CASE("nonlinear engine with a non-diagonal collapse operator collapses onto its eigenvectors") {
    const double lambda = 1.0;
    const TimeGrid g(0.0, 0.002, 5000);
    const CollapseOperatorSet ops({pauli_x()}, lambda);
    CHECK_FALSE(ops.diagonal_in_input_basis());
    const StateVector psi0{1.0, 0.0};
    const int n = 600;
    int plus = 0, resolved = 0;
    for (int i = 0; i < n; ++i) {
        const auto r = evolve_nonlinear(psi0, ops, g, 5, i);
        if (!r.outcome) continue;
        ++resolved;
        // basis column of eigenvalue +1
        const int idx = r.outcome->index;
        if (ops.eigenvalue(0, idx) > 0) ++plus;
    }
    CHECK(resolved == n);
    const auto ci = proportion_interval(plus, n);
    CHECK(ci.lower <= 0.5);
    CHECK(ci.upper >= 0.5);
}

TEST_CASE("both increment laws give the same outcome statistics") {
    const double lambda = 1.0;
    const TimeGrid g(0.0, 0.0025, 3000);
    const CollapseOperatorSet ops({kZ}, lambda);
    const StateVector psi0{0.6, 0.8};
    const int n = 1500;
    int z1 = 0, z2 = 0;
    for (int i = 0; i < n; ++i) {
        const auto a = evolve_nonlinear(psi0, ops, g, 7, i, {}, IncrementLaw::branch_mixture);
        const auto b = evolve_nonlinear(psi0, ops, g, 8, i, {}, IncrementLaw::gaussian_drift);
        z1 += a.outcome && a.outcome->index == 0;
        z2 += b.outcome && b.outcome->index == 0;
    }
    const double p1 = double(z1) / n, p2 = double(z2) / n;
    const double se = std::sqrt(p1 * (1 - p1) / n + p2 * (1 - p2) / n);
    CHECK(std::abs(p1 - p2) <= 3.0 * se);
}

TEST_CASE("raw-measure weights average to one") {
    const double lambda = 1.0;
    const TimeGrid g(0.0, 0.0025, 200);  // lambda t (a1-a2)^2 = 2
    const CollapseOperatorSet ops({kZ}, lambda);
    const StateVector psi0{0.6, 0.8};
    const int n = 20000;
    double s = 0.0, s2 = 0.0;
    EngineOptions opts;
    opts.record_stride = 0;
    for (int i = 0; i < n; ++i) {
        const double w = evolve_linear(psi0, ops, sample_white(g, lambda, 77, i), opts).weight;
        s += w;
        s2 += w * w;
    }
    const double mean = s / n, se = std::sqrt((s2 / n - mean * mean) / n);
    CHECK(std::abs(mean - 1.0) <= 3.0 * se);
}

TEST_CASE("weighted population and nonlinear engine agree on outcome fractions") {
    const double lambda = 1.0;
    const TimeGrid g(0.0, 0.0025, 4000);
    const CollapseOperatorSet ops({kZ}, lambda);
    const StateVector psi0{0.6, 0.8};
    const auto pop = run_weighted_population(psi0, ops, g, 1000, 31, 0);
    CHECK(pop.unresolved_fraction < 0.01);
    CHECK(pop.resample_count > 0);

    // replica spread gives the estimator's real standard error
    const auto est = estimate_weighted_population(psi0, ops, g, 500, 32, 31, 2);
    MESSAGE("population fraction " << est.outcome_fraction[0] << " +- " << est.outcome_error[0] << ", Z "
                                   << est.mean_evidence << " +- " << est.evidence_error);
    CHECK(est.outcome_error[0] > 0.0);
    CHECK(std::abs(est.outcome_fraction[0] - 0.36) <= 3.0 * est.outcome_error[0]);
    CHECK(std::abs(est.outcome_fraction[0] + est.outcome_fraction[1] + est.unresolved_fraction - 1.0) < 1e-12);
    CHECK(std::abs(est.mean_evidence - 1.0) <= 3.0 * est.evidence_error);
    CHECK_THROWS_AS(estimate_weighted_population(psi0, ops, g, 10, 1, 1), std::invalid_argument);
}

TEST_CASE("step-size rule and operator validation") {
    const CollapseOperatorSet ops({kZ}, 10.0);
    const TimeGrid coarse(0.0, 0.01, 10);  // 0.01 * 10 * 4 = 0.4
    CHECK_THROWS_AS(evolve_linear(StateVector{1.0, 1.0}, ops, sample_white(coarse, 10.0, 1, 1)), std::invalid_argument);
    CHECK_THROWS_AS(evolve_nonlinear(StateVector{1.0, 1.0}, ops, coarse, 1, 1), std::invalid_argument);
    CHECK_THROWS_AS(CollapseOperatorSet({kZ, pauli_x()}, 1.0), std::invalid_argument);
    CHECK_THROWS_AS(CollapseOperatorSet({kZ}, -1.0), std::invalid_argument);
    CHECK_THROWS_AS(evolve_nonlinear(StateVector{0.0, 0.0}, CollapseOperatorSet({kZ}, 1.0), TimeGrid(0, 0.001, 5), 1, 1),
                    std::invalid_argument);
}

TEST_CASE("delta-kernel direct evaluation equals the Markovian engine") {
    const double lambda = 0.7;
    const TimeGrid g(0.0, 0.002, 800);
    const HermitianOperator a = HermitianOperator::diagonal({1.0, 0.3, -0.6});
    const StateVector psi0{0.5, cplx(0.2, 0.4), 0.7};
    const auto noise = sample_white(g, lambda, 3, 3);
    const auto lin = evolve_linear(psi0, CollapseOperatorSet({a}, lambda), noise);
    const auto dir = evolve_nonmarkovian_direct(psi0, a, lambda, Kernel::delta(), noise);
    const CVector l = normalized(lin.states.back().amplitudes()), d = normalized(dir.amplitudes());
    CHECK((l - d).norm() < 1e-8);
}

TEST_CASE("extending the noise window outside [0, T] only changes a global factor") {
    const double lambda = 0.9;
    const StateVector psi0{0.6, 0.8};
    const TimeGrid pre(-0.5, 0.001, 500), mid(0.0, 0.001, 1000), post(1.0, 0.001, 700);
    EngineOptions raw;
    raw.rescaled = false;
    const CollapseOperatorSet on({kZ}, lambda), off({HermitianOperator::diagonal({0.0, 0.0})}, lambda);
    const auto n_mid = sample_white(mid, lambda, 12, 1);
    const auto base = evolve_linear(psi0, on, n_mid, raw).states.back();
    const auto s1 = evolve_linear(psi0, off, sample_white(pre, lambda, 12, 0), raw).states.back();
    const auto s2 = evolve_linear(s1, on, n_mid, raw).states.back();
    const auto s3 = evolve_linear(s2, off, sample_white(post, lambda, 12, 2), raw).states.back();
    CHECK((normalized(base.amplitudes()) - normalized(s3.amplitudes())).norm() < 1e-12);
}

TEST_CASE("OU closed form: direct kernel evaluation, long-time and short-time limits") {
    const double lambda = 1.0, alpha = 5.0;
    const StateVector psi0{0.6, 0.8};
    SUBCASE("closed form equals direct cell-integrated kernel evaluation") {
        const TimeGrid g(0.0, 0.01, 300);
        const auto noise = sample_colored(g, Kernel::ornstein_uhlenbeck(alpha), 5, 5);
        const auto cf = evolve_nonmarkovian_closed(psi0, kZ, lambda, alpha, noise);
        const auto dir = evolve_nonmarkovian_direct(psi0, kZ, lambda, Kernel::ornstein_uhlenbeck(alpha), noise);
        CHECK((normalized(cf.amplitudes()) - normalized(dir.amplitudes())).norm() < 1e-10);
    }
    SUBCASE("alpha t = 100 approaches the Markovian form") {
        const TimeGrid g(0.0, 0.01, 2000);  // t = 20
        const auto noise = sample_colored(g, Kernel::ornstein_uhlenbeck(alpha), 6, 0);
        const auto cf = evolve_nonmarkovian_closed(psi0, kZ, 0.05, alpha, noise);
        // B' for this noise, taken from the closed form's own effective time
        double bp = 0.0;
        const double t = g.duration();
        for (int k = 0; k < g.n_steps; ++k) {
            const double s = (k + 0.5) * g.dt;
            bp += noise.increment(0, k) * (1.0 - 0.5 * (std::exp(-alpha * s) + std::exp(-alpha * (t - s))));
        }
        const auto mk = closed_form_simple(psi0, kZ, 0.05, t, bp);
        const CVector a = normalized(cf.amplitudes()), b = normalized(mk.amplitudes());
        for (int i = 0; i < 2; ++i) CHECK(std::abs(a(i)) == doctest::Approx(std::abs(b(i))).epsilon(0.02));
    }
    SUBCASE("short time and degenerate operator leave the state alone") {
        const TimeGrid g(0.0, 1e-5, 2);
        const auto noise = sample_colored(g, Kernel::ornstein_uhlenbeck(alpha), 1, 1);
        const auto cf = evolve_nonmarkovian_closed(psi0, kZ, lambda, alpha, noise);
        CHECK(state_distance(cf.amplitudes(), psi0.amplitudes()) < 1e-6);
        CHECK(ou_effective_time(alpha, 1e-4) == doctest::Approx(alpha * 1e-8 / 2.0).epsilon(1e-3));
        const TimeGrid g2(0.0, 0.01, 100);
        const auto deg = evolve_nonmarkovian_closed(psi0, HermitianOperator::diagonal({2.0, 2.0}), lambda, alpha,
                                                    sample_colored(g2, Kernel::ornstein_uhlenbeck(alpha), 2, 2));
        CHECK(state_distance(deg.amplitudes(), psi0.amplitudes()) < 1e-12);
    }
    CHECK_THROWS_AS(evolve_nonmarkovian_closed(psi0, kZ, lambda, 0.0, sample_white(TimeGrid(0, 0.1, 2), 1, 1, 1)),
                    std::invalid_argument);
}

TEST_CASE("Fourier form matches the closed form and converges with node count") {
    const StateVector psi0{0.6, 0.8};
    const double lambda = 1.0, t = 0.5, b = 0.3;
    const auto cf = closed_form_simple(psi0, kZ, lambda, t, b);
    const auto f64 = fourier_form_eval(psi0, kZ, lambda, t, b, 64);
    for (int i = 0; i < 2; ++i) CHECK(std::abs(f64[i] - cf[i]) < 1e-8);
    double prev = 1e300;
    for (int nodes : {4, 8, 16, 32, 64}) {
        const auto f = fourier_form_eval(psi0, kZ, lambda, t, b, nodes);
        const double err = (f.amplitudes() - cf.amplitudes()).norm();
        CHECK(err <= prev);
        prev = std::max(err, 1e-16);
    }
    // one-dimensional space at the branch centre: unit factor
    const auto one = fourier_form_eval(StateVector{0.3}, HermitianOperator::diagonal({1.5}), 2.0, 0.25, 2.0 * 2.0 * 0.25 * 1.5, 64);
    CHECK(std::abs(one[0] - 0.3) < 1e-12);
}

TEST_CASE("detect_outcome") {
    SUBCASE("lambda t (a1 - a2)^2 = 50 resolves nearly every trajectory") {
        const double lambda = 1.0;
        const TimeGrid g(0.0, 0.0025, 5000);
        const CollapseOperatorSet ops({kZ}, lambda);
        int hit = 0;
        const int n = 400;
        EngineOptions opts;
        opts.stop_on_outcome = true;
        for (int i = 0; i < n; ++i) hit += evolve_nonlinear(StateVector{0.6, 0.8}, ops, g, 3, i, opts).outcome.has_value();
        CHECK(hit >= 0.99 * n);
    }
    SUBCASE("pure Hamiltonian mixing never resolves") {
        const TimeGrid g(0.0, 0.01, 2000);
        const CollapseOperatorSet ops({kZ}, 0.0, pauli_x());
        const auto rec = evolve_linear(StateVector{0.6, 0.8}, ops, sample_white(g, 0.0, 1, 1));
        CHECK_FALSE(rec.outcome.has_value());
        CHECK_FALSE(detect_outcome(rec).has_value());
    }
    SUBCASE("post-hoc detection matches the in-flight detector") {
        const TimeGrid g(0.0, 0.0025, 3000);
        const CollapseOperatorSet ops({pauli_x()}, 1.0);
        for (int i = 0; i < 10; ++i) {
            const auto rec = evolve_nonlinear(StateVector{0.6, 0.8}, ops, g, 11, i);
            const auto post = detect_outcome(rec);
            REQUIRE(post.has_value() == rec.outcome.has_value());
            if (post) {
                CHECK(post->index == rec.outcome->index);
                CHECK(post->time == rec.outcome->time);
            }
        }
    }
}

TEST_CASE("parallel_for is deterministic across worker counts") {
    const CollapseOperatorSet ops({kZ}, 1.0);
    const TimeGrid g(0.0, 0.0025, 400);
    std::vector<double> a(50), b(50);
    parallel_for(50, 1, [&](int i) { a[i] = evolve_nonlinear(StateVector{0.6, 0.8}, ops, g, 1, i).states.back()[0].real(); });
    parallel_for(50, 4, [&](int i) { b[i] = evolve_nonlinear(StateVector{0.6, 0.8}, ops, g, 1, i).states.back()[0].real(); });
    CHECK(a == b);
    CHECK_THROWS(parallel_for(10, 3, [](int i) {
        if (i == 7) throw std::runtime_error("boom");
    }));
}

TEST_CASE("trajectory CSV has one row per recorded time") {
    const CollapseOperatorSet ops({kZ}, 1.0);
    EngineOptions opts;
    opts.record_stride = 10;
    const auto rec = evolve_nonlinear(StateVector{0.6, 0.8}, ops, TimeGrid(0.0, 0.001, 100), 1, 1, opts);
    std::stringstream ss;
    write_trajectory_csv(ss, rec);
    std::string line;
    std::getline(ss, line);
    CHECK(line == "time,p0,p1,norm2,weight");
    int rows = 0;
    while (std::getline(ss, line)) ++rows;
    CHECK(rows == static_cast<int>(rec.times.size()));
    CHECK(rows == 11);
}
