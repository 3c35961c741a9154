#include "cslab/numerics.hpp"

#include <fftw3.h>

#include <cmath>
#include <mutex>
#include <numbers>
#include <stdexcept>

namespace cslab::numerics {

namespace {

// FFTW's planner is not thread-safe; execution of distinct plans is.
std::mutex& planner_mutex() {
    static std::mutex m;
    return m;
}

std::vector<cplx> dft(std::span<const cplx> input, int sign) {
    const int n = static_cast<int>(input.size());
    std::vector<cplx> out(input.size());
    if (n == 0) return out;
    std::vector<cplx> in(input.begin(), input.end());
    fftw_plan plan;
    {
        std::lock_guard lock(planner_mutex());
        plan = fftw_plan_dft_1d(n, reinterpret_cast<fftw_complex*>(in.data()),
                                reinterpret_cast<fftw_complex*>(out.data()), sign, FFTW_ESTIMATE);
    }
    fftw_execute(plan);
    {
        std::lock_guard lock(planner_mutex());
        fftw_destroy_plan(plan);
    }
    return out;
}

} // namespace

Rng::Rng(std::uint64_t seed, std::uint64_t stream) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32),
                      0x9e3779b9u};
    engine_.seed(seq);
}

void CompensatedSum::add(double x) {
    const double t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x)) {
        comp_ += (sum_ - t) + x;
    } else {
        comp_ += (x - t) + sum_;
    }
    sum_ = t;
}

QuadratureRule gauss_hermite(int n) {
    if (n < 1) throw std::invalid_argument("gauss_hermite: n must be >= 1");
    // Newton iteration on orthonormal Hermite polynomials with the usual
    // asymptotic starting guesses.
    constexpr double pim4 = 0.7511255444649425;  // pi^(-1/4)
    QuadratureRule rule;
    rule.nodes.assign(n, 0.0);
    rule.weights.assign(n, 0.0);
    const int m = (n + 1) / 2;
    double z = 0.0;
    for (int i = 0; i < m; ++i) {
        if (i == 0) {
            z = std::sqrt(2.0 * n + 1.0) - 1.85575 * std::pow(2.0 * n + 1.0, -0.16667);
        } else if (i == 1) {
            z -= 1.14 * std::pow(static_cast<double>(n), 0.426) / z;
        } else if (i == 2) {
            z = 1.86 * z - 0.86 * rule.nodes[0];
        } else if (i == 3) {
            z = 1.91 * z - 0.91 * rule.nodes[1];
        } else {
            z = 2.0 * z - rule.nodes[i - 2];
        }
        double pp = 0.0;
        int iter = 0;
        for (; iter < 100; ++iter) {
            double p1 = pim4, p2 = 0.0;
            for (int j = 0; j < n; ++j) {
                const double p3 = p2;
                p2 = p1;
                p1 = z * std::sqrt(2.0 / (j + 1)) * p2 - std::sqrt(static_cast<double>(j) / (j + 1)) * p3;
            }
            pp = std::sqrt(2.0 * n) * p2;
            const double z1 = z;
            z = z1 - p1 / pp;
            if (std::abs(z - z1) <= 1e-15 * std::max(1.0, std::abs(z))) break;
        }
        if (iter == 100) throw std::runtime_error("gauss_hermite: Newton iteration did not converge");
        rule.nodes[i] = z;
        rule.nodes[n - 1 - i] = -z;
        rule.weights[i] = 2.0 / (pp * pp);
        rule.weights[n - 1 - i] = rule.weights[i];
    }
    if (n % 2 == 1) rule.nodes[m - 1] = 0.0;
    return rule;
}

std::vector<cplx> fft(std::span<const cplx> input) { return dft(input, FFTW_FORWARD); }
std::vector<cplx> ifft(std::span<const cplx> input) { return dft(input, FFTW_BACKWARD); }

double dft_frequency(int m, int n, double dt) {
    const int k = (m <= n / 2) ? m : m - n;
    return 2.0 * std::numbers::pi * k / (n * dt);
}

Array3 convolve3d(const Array3& a, const Array3& b) {
    const int ox = a.nx + b.nx - 1, oy = a.ny + b.ny - 1, oz = a.nz + b.nz - 1;
    const int ozc = oz / 2 + 1;
    const std::size_t nreal = static_cast<std::size_t>(ox) * oy * oz;
    const std::size_t ncplx = static_cast<std::size_t>(ox) * oy * ozc;

    auto pad = [&](const Array3& src) {
        std::vector<double> buf(nreal, 0.0);
        for (int i = 0; i < src.nx; ++i)
            for (int j = 0; j < src.ny; ++j)
                for (int k = 0; k < src.nz; ++k)
                    buf[(static_cast<std::size_t>(i) * oy + j) * oz + k] = src.at(i, j, k);
        return buf;
    };
    std::vector<double> ra = pad(a), rb = pad(b);
    std::vector<cplx> ca(ncplx), cb(ncplx);

    fftw_plan pa, pb, pinv;
    {
        std::lock_guard lock(planner_mutex());
        pa = fftw_plan_dft_r2c_3d(ox, oy, oz, ra.data(), reinterpret_cast<fftw_complex*>(ca.data()), FFTW_ESTIMATE);
        pb = fftw_plan_dft_r2c_3d(ox, oy, oz, rb.data(), reinterpret_cast<fftw_complex*>(cb.data()), FFTW_ESTIMATE);
        pinv = fftw_plan_dft_c2r_3d(ox, oy, oz, reinterpret_cast<fftw_complex*>(ca.data()), ra.data(), FFTW_ESTIMATE);
    }
    fftw_execute(pa);
    fftw_execute(pb);
    for (std::size_t i = 0; i < ncplx; ++i) ca[i] *= cb[i];
    fftw_execute(pinv);
    {
        std::lock_guard lock(planner_mutex());
        fftw_destroy_plan(pa);
        fftw_destroy_plan(pb);
        fftw_destroy_plan(pinv);
    }
    Array3 out(ox, oy, oz);
    const double scale = 1.0 / static_cast<double>(nreal);
    for (std::size_t i = 0; i < nreal; ++i) out.data[i] = ra[i] * scale;
    return out;
}

} // namespace cslab::numerics
