#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "cslab/noise_paths.hpp"

#include <cmath>
#include <numbers>
#include <sstream>
#include <stdexcept>

using namespace cslab;

TEST_CASE("TimeGrid validation") {
    CHECK_THROWS_AS(TimeGrid(0.0, 0.0, 5), std::invalid_argument);
    CHECK_THROWS_AS(TimeGrid(0.0, 0.1, -1), std::invalid_argument);
    const TimeGrid g(1.0, 0.25, 8);
    CHECK(g.duration() == 2.0);
    CHECK(g.time(4) == 2.0);
}

TEST_CASE("sample_brownian: empty grid, determinism, variance 2*diffusion*t") {
    const auto empty = sample_brownian(TimeGrid(0.0, 0.01, 0), 1.0, 1, 0);
    REQUIRE(empty.values[0].size() == 1);
    CHECK(empty.values[0][0] == 0.0);

    const TimeGrid g(0.0, 0.01, 100);
    const auto p1 = sample_brownian(g, 1.0, 42, 7);
    const auto p2 = sample_brownian(g, 1.0, 42, 7);
    CHECK(p1.values == p2.values);
    CHECK(p1.values[0][0] == 0.0);

    const int n = 100000;
    double s = 0.0, s2 = 0.0;
    for (int i = 0; i < n; ++i) {
        const double b = sample_brownian(g, 1.0, 42, i).values[0].back();
        s += b;
        s2 += b * b;
    }
    const double mean = s / n, var = s2 / n - mean * mean;
    CHECK(std::abs(mean) < 3.0 * std::sqrt(2.0 / n));
    CHECK(var == doctest::Approx(2.0).epsilon(0.015));  // 2.0 +- 0.03
}

TEST_CASE("sample_white has increment variance lambda*dt") {
    const TimeGrid g(0.0, 0.02, 20000);
    const auto p = sample_white(g, 3.0, 5, 1, 2);
    CHECK(p.channels() == 2);
    double s2 = 0.0;
    for (int k = 0; k < g.n_steps; ++k) s2 += p.increment(1, k) * p.increment(1, k);
    const double var = s2 / g.n_steps;
    CHECK(var == doctest::Approx(3.0 * 0.02 * kNoiseVariancePerRate).epsilon(3.0 * std::sqrt(2.0 / g.n_steps)));
}

TEST_CASE("kernel_value: OU value, symmetry, delta") {
    const auto ou = Kernel::ornstein_uhlenbeck(2.0);
    CHECK(kernel_value(ou, 0.0) == doctest::Approx(1.0));
    CHECK(kernel_value(ou, 0.5) == doctest::Approx(std::exp(-1.0)));
    const auto tach = Kernel::tachyon_nonrel(0.3);
    const auto box = Kernel::custom_spectral({0.0, 1.0, 2.0, 3.0}, {1.0, 1.0, 0.5, 0.0});
    for (double tau : {0.0, 0.1, 0.77, 3.0, 12.5}) {
        CHECK(kernel_value(ou, tau) == kernel_value(ou, -tau));
        CHECK(kernel_value(tach, tau) == kernel_value(tach, -tau));
        CHECK(kernel_value(box, tau) == kernel_value(box, -tau));
    }
    CHECK(kernel_value(Kernel::delta(), 0.3) == 0.0);
    CHECK(kernel_value(tach, 0.9) ==
          doctest::Approx(std::sin(3.0) / 0.9 / (4.0 * std::numbers::pi * std::numbers::pi)));
}

TEST_CASE("spectral densities") {
    const auto ou = Kernel::ornstein_uhlenbeck(2.0);
    CHECK(spectral_density(ou, 3.0) == doctest::Approx(4.0 / 13.0));
    CHECK(spectral_density(Kernel::delta(), 123.0) == 1.0);
    const auto box = Kernel::custom_spectral({0.0, 1.0, 2.0}, {1.0, 1.0, 0.0});
    CHECK(spectral_density(box, -1.5) == doctest::Approx(0.5));
    CHECK(spectral_density(box, 2.5) == 0.0);
    CHECK_THROWS_AS(Kernel::custom_spectral({0.0, 1.0}, {1.0, -0.1}), std::invalid_argument);
}

TEST_CASE("custom spectral kernel reproduces a known transform") {
    // Triangle spectrum max(0, 1 - |w|) <-> G(tau) = (1 - cos tau) / (pi tau^2)
    const auto tri = Kernel::custom_spectral({0.0, 1.0}, {1.0, 0.0});
    for (double tau : {1e-4, 0.01, 0.5, 2.0, 7.3, 40.0}) {
        const double ref = (1.0 - std::cos(tau)) / (std::numbers::pi * tau * tau);
        CHECK(kernel_value(tri, tau) == doctest::Approx(ref).epsilon(1e-9));
    }
    CHECK(kernel_value(tri, 0.0) == doctest::Approx(0.5 / std::numbers::pi).epsilon(1e-12));
}

TEST_CASE("kernel_double_integral") {
    const double alpha = 1.7, t = 2.3;
    const auto ou = Kernel::ornstein_uhlenbeck(alpha);
    CHECK(kernel_double_integral(ou, t) == doctest::Approx(t - (1.0 - std::exp(-alpha * t)) / alpha).epsilon(1e-14));
    CHECK(kernel_double_integral(Kernel::delta(), t) == doctest::Approx(t));
    // 2 int_0^t (t - s) G(s) ds for the triangle spectrum, by brute-force midpoint sum
    const auto tri = Kernel::custom_spectral({0.0, 1.0}, {1.0, 0.0});
    const int n = 200000;
    double s = 0.0;
    for (int i = 0; i < n; ++i) {
        const double x = (i + 0.5) * t / n;
        s += 2.0 * (t - x) * kernel_value(tri, x) * t / n;
    }
    CHECK(kernel_double_integral(tri, t) == doctest::Approx(s).epsilon(1e-8));
}

TEST_CASE("sample_colored: delta kernel gives uncorrelated white noise") {
    const TimeGrid g(0.0, 0.1, 50000);
    const auto p = sample_colored(g, Kernel::delta(), 3, 0);
    const auto& w = p.values[0];
    double c0 = 0.0, c1 = 0.0;
    for (int k = 0; k + 1 < g.n_steps; ++k) {
        c0 += w[k] * w[k];
        c1 += w[k] * w[k + 1];
    }
    const double rho = c1 / c0;
    CHECK(std::abs(rho) < 3.0 / std::sqrt(double(g.n_steps)));
}

TEST_CASE("sample_colored: OU autocovariance matches (alpha/2) exp(-alpha tau)") {
    const double alpha = 2.0, dt = 0.05;
    const int n = 4096, paths = 400, max_lag = 20;  // lag up to 2/alpha
    const TimeGrid g(0.0, dt, n);
    const auto ou = Kernel::ornstein_uhlenbeck(alpha);
    std::vector<double> cov(max_lag + 1, 0.0);
    long count = 0;
    for (int p = 0; p < paths; ++p) {
        const auto w = sample_colored(g, ou, 17, p).values[0];
        for (int k = 0; k + max_lag < n; ++k) {
            for (int l = 0; l <= max_lag; ++l) cov[l] += w[k] * w[k + l];
        }
        count += n - max_lag;
    }
    for (int l = 0; l <= max_lag; l += 2) {
        CAPTURE(l);
        CHECK(cov[l] / count == doctest::Approx(kernel_value(ou, l * dt)).epsilon(0.05));
    }
    // deterministic under (seed, stream)
    CHECK(sample_colored(g, ou, 17, 3).values == sample_colored(g, ou, 17, 3).values);
}

TEST_CASE("sample_colored falls back to a dense root when the embedding is indefinite") {
    // Sharp spectral box: sinc covariance, whose circulant embedding goes slightly negative.
    const auto box = Kernel::custom_spectral({0.0, 3.0, 3.0001}, {1.0, 1.0, 0.0});
    const TimeGrid g(0.0, 0.1, 300);
    const auto p = sample_colored(g, box, 1, 1);
    CHECK(p.values[0].size() == 300u);
    for (double x : p.values[0]) CHECK(std::isfinite(x));
}

TEST_CASE("Gram matrices are positive semidefinite") {
    const TimeGrid g(0.0, 0.05, 200);
    for (const auto& k : {Kernel::ornstein_uhlenbeck(0.7), Kernel::tachyon_nonrel(0.4),
                          Kernel::custom_spectral({0.0, 2.0, 5.0}, {1.0, 0.3, 0.0})}) {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(kernel_gram(k, g));
        CHECK(es.eigenvalues().minCoeff() >= -1e-8 * es.eigenvalues().maxCoeff());
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> ec(kernel_cell_gram(k, g));
        CHECK(ec.eigenvalues().minCoeff() >= -1e-8 * ec.eigenvalues().maxCoeff());
    }
}

TEST_CASE("kernel_cell_gram sums to the double integral") {
    const TimeGrid g(0.0, 0.1, 40);
    const auto ou = Kernel::ornstein_uhlenbeck(1.3);
    CHECK(kernel_cell_gram(ou, g).sum() == doctest::Approx(kernel_double_integral(ou, g.duration())).epsilon(1e-12));
    const auto dg = kernel_cell_gram(Kernel::delta(), g);
    CHECK((dg - Eigen::MatrixXd::Identity(40, 40) * 0.1).norm() < 1e-15);
}

TEST_CASE("kernel_inverse_finite") {
    SUBCASE("delta kernel is the discrete delta") {
        const TimeGrid g(0.0, 0.2, 10);
        const auto inv = kernel_inverse_finite(Kernel::delta(), g);
        CHECK((inv.inverse - Eigen::MatrixXd::Identity(10, 10) / 0.2).norm() < 1e-10);
        CHECK(inv.rank == 10);
    }
    SUBCASE("OU: G Ginv G = G and G Ginv dt = delta/dt") {
        const TimeGrid g(0.0, 0.05, 120);
        const auto k = Kernel::ornstein_uhlenbeck(1.5);
        const auto gm = kernel_gram(k, g);
        const auto inv = kernel_inverse_finite(k, g);
        CHECK(inv.rank == 120);
        CHECK((gm * inv.inverse * gm * g.dt * g.dt - gm).norm() / gm.norm() < 1e-6);
        const Eigen::MatrixXd id = gm * inv.inverse * g.dt * g.dt;
        CHECK((id - Eigen::MatrixXd::Identity(120, 120)).norm() / std::sqrt(120.0) < 1e-6);
    }
    SUBCASE("constant kernel is rank one") {
        const Eigen::MatrixXd c = Eigen::MatrixXd::Constant(8, 8, 2.0);
        const auto inv = kernel_inverse_finite(c, 0.1);
        CHECK(inv.rank == 1);
        CHECK(inv.dimension == 8);
        CHECK(inv.discarded_fraction < 1e-10);
        CHECK((c * inv.inverse * c * 0.01 - c).norm() < 1e-8);
    }
}

TEST_CASE("sqrt kernel of OU matches (alpha/pi) K0(alpha |tau|)") {
    const double alpha = 1.0, dt = 0.002;
    const int n = 1 << 17;
    const auto s = sqrt_kernel_samples(Kernel::ornstein_uhlenbeck(alpha), dt, n);
    for (double x = 0.1; x <= 3.0; x += 0.1) {
        const int k = static_cast<int>(std::lround(x / dt));
        const double ref = alpha / std::numbers::pi * numerics::bessel_k0(alpha * k * dt);
        CAPTURE(x);
        CHECK(s[k] == doctest::Approx(ref).epsilon(0.02));
    }
}

TEST_CASE("kernel_sqrt_smear: delta is identity; twice equals one G convolution") {
    const TimeGrid g(0.0, 0.01, 2000);
    NoisePath sig{g, NoiseKind::rate, {std::vector<double>(g.n_steps)}};
    for (int k = 0; k < g.n_steps; ++k) {
        const double t = g.time(k) - 10.0;
        sig.values[0][k] = std::exp(-t * t / 2.0);
    }
    CHECK(kernel_sqrt_smear(Kernel::delta(), sig).values == sig.values);

    const auto ou = Kernel::ornstein_uhlenbeck(2.0);
    const auto twice = kernel_sqrt_smear(ou, kernel_sqrt_smear(ou, sig));
    const auto once = convolve_with_kernel(ou, sig.values[0], g.dt);
    double num = 0.0, den = 0.0;
    for (int k = 0; k < g.n_steps; ++k) {
        num += (twice.values[0][k] - once[k]) * (twice.values[0][k] - once[k]);
        den += once[k] * once[k];
    }
    CHECK(std::sqrt(num / den) < 0.02);
}

TEST_CASE("noise CSV round trip") {
    const TimeGrid g(0.5, 0.125, 16);
    const auto p = sample_white(g, 2.0, 9, 9, 3);
    std::stringstream ss;
    write_noise_csv(ss, p);
    const auto q = read_noise_csv(ss, NoiseKind::rate);
    CHECK(q.channels() == 3);
    CHECK(q.grid.n_steps == 16);
    CHECK(q.grid.dt == doctest::Approx(0.125));
    CHECK(q.grid.t0 == doctest::Approx(0.5));
    CHECK(q.values == p.values);
    std::stringstream bad("time,w0\n0,1\n0.1,abc\n");
    CHECK_THROWS(read_noise_csv(bad, NoiseKind::rate));
}
