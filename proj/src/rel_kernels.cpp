#include "cslab/rel_kernels.hpp"

#include "cslab/numerics.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <cmath>
#include <iomanip>
#include <numbers>
#include <ostream>
#include <stdexcept>

namespace cslab::rel {

namespace {

constexpr double pi = std::numbers::pi;

template <class F>
double gk(F f, double lo, double hi) {
    return boost::math::quadrature::gauss_kronrod<double, 31>::integrate(f, lo, hi, 0, 0);
}

// Repeated averaging of alternating partial sums (Euler-type acceleration).
double accelerate(std::vector<double> s) {
    while (s.size() > 1) {
        for (std::size_t i = 0; i + 1 < s.size(); ++i) s[i] = 0.5 * (s[i] + s[i + 1]);
        s.pop_back();
    }
    return s.front();
}

// F(t) = int_0^inf cos(q t) / sqrt(q^2 + mu^2) dq  (= K0(mu t))
double timelike_base(double t, double mu) {
    auto f = [&](double q) { return std::cos(q * t) / std::sqrt(q * q + mu * mu); };
    double sum = gk(f, 0.0, 0.5 * pi / t);
    std::vector<double> partial;
    constexpr int kTerms = 80, kTail = 24;
    for (int n = 1; n <= kTerms; ++n) {
        sum += gk(f, (n - 0.5) * pi / t, (n + 0.5) * pi / t);
        if (n > kTerms - kTail) partial.push_back(sum);
    }
    return accelerate(partial);
}

// cos(mu r)/r + int_mu^inf (k / sqrt(k^2 - mu^2) - 1) sin(k r) dk, i.e. the Abel-regularized
// int_mu^inf k sin(k r) / sqrt(k^2 - mu^2) dk. Segments between zeros up to K ~ 2000 mu,
// with k = mu cosh v so the endpoint singularity disappears.
double spacelike_bracket(double r, double mu) {
    const double kmax_target = 2000.0 * mu;
    const int n_zero = static_cast<int>(std::ceil(kmax_target * r / pi));
    const double kmax = n_zero * pi / r;
    auto f = [&](double v) { return mu * std::cosh(v) * std::sin(mu * r * std::cosh(v)); };
    numerics::CompensatedSum s;
    double v_prev = 0.0;
    const int first = static_cast<int>(std::floor(mu * r / pi)) + 1;
    for (int n = first; n <= n_zero; ++n) {
        const double v = std::acosh(n * pi / (r * mu));
        s.add(gk(f, v_prev, v));
        v_prev = v;
    }
    // int_K^inf (k/sqrt(k^2-mu^2) - 1) sin(kr) dk ~ (mu^2/2) cos(Kr) / (K^2 r)
    const double ckr = (n_zero % 2 == 0) ? 1.0 : -1.0;
    s.add(ckr / r);
    s.add(0.5 * mu * mu * ckr / (kmax * kmax * r));
    return s.value();
}

} // namespace

double tachyon_kernel_exact(double x, double a, Separation kind) {
    if (!(x > 0.0)) throw std::domain_error("tachyon_kernel_exact: separation must be positive");
    if (!(a > 0.0)) throw std::domain_error("tachyon_kernel_exact: a must be positive");
    if (kind == Separation::spacelike) return -numerics::bessel_y1(x / a) / (8.0 * pi * pi * a * x);
    return -numerics::bessel_k1(x / a) / (4.0 * pi * pi * pi * a * x);
}

double tachyon_kernel_quadrature(double x, double a, Separation kind) {
    if (!(x > 0.0)) throw std::domain_error("tachyon_kernel_quadrature: separation must be positive");
    if (!(a > 0.0)) throw std::domain_error("tachyon_kernel_quadrature: a must be positive");
    const double mu = 1.0 / a;
    const double pre = 4.0 * pi / std::pow(2.0 * pi, 4);
    if (kind == Separation::spacelike) {
        // equal-time point (0, r): (4 pi / r) int_mu^inf k sin(kr) / sqrt(k^2 - mu^2) dk
        return pre / x * spacelike_bracket(x, mu);
    }
    // rest-frame point (t, 0): 4 pi (mu^2 - d_t^2) F(t)
    const double h = 0.02 * x;
    const double f0 = timelike_base(x, mu);
    const double d2 = (-timelike_base(x + 2 * h, mu) + 16.0 * timelike_base(x + h, mu) - 30.0 * f0 +
                       16.0 * timelike_base(x - h, mu) - timelike_base(x - 2 * h, mu)) /
                      (12.0 * h * h);
    return pre * (mu * mu * f0 - d2);
}

double tachyon_kernel_nonrel_limit(double separation, double a) {
    if (separation < 0.0) throw std::domain_error("tachyon_kernel_nonrel_limit: separation must be >= 0");
    const double norm = 1.0 / (4.0 * pi * pi);
    if (separation == 0.0) return norm / a;
    return norm * std::sin(separation / a) / separation;
}

double fermion_collapse_asymptote(const RelParameters& p) {
    return p.gamma * p.g_coupling * p.g_coupling * p.a_cm() / (16.0 * pi);
}

double fermion_collapse_rate(double separation_cm, const RelParameters& p) {
    if (separation_cm < 0.0) throw std::domain_error("fermion_collapse_rate: separation must be >= 0");
    return fermion_collapse_asymptote(p) * -std::expm1(-separation_cm / p.a_cm());
}

double relativistic_energy_rate(const RelParameters& p) {
    if (!(p.m > 0.0)) throw std::domain_error("relativistic_energy_rate: m must be positive");
    const double r = p.mu / (2.0 * p.m);
    return p.gamma * p.mu * p.mu * p.mu / (2.0 * pi * pi * p.m) * std::sqrt(1.0 + r * r) / units::hbar_eV_s;
}

double nonrel_energy_rate(double lambda_eV, double mu, double m) {
    return 3.0 * lambda_eV * mu * mu / (8.0 * m) / units::hbar_eV_s;
}

double time_dilated_collapse_rate(double rest_rate, double v0) {
    if (!(std::abs(v0) < 1.0)) throw std::domain_error("time_dilated_collapse_rate: |v0| must be < 1");
    return rest_rate * std::sqrt((1.0 - v0) * (1.0 + v0));
}

EmissionKinematics single_emission_kinematics(double m, double mu) {
    if (!(m > 0.0)) throw std::domain_error("single_emission_kinematics: m must be positive");
    EmissionKinematics k;
    const double r = mu / (2.0 * m);
    k.energy_gain = mu * mu / (2.0 * m);
    k.momentum_gain = mu * std::sqrt(1.0 + r * r);
    const double e = m + k.energy_gain;
    k.shell_residual = (e - k.momentum_gain) * (e + k.momentum_gain) - m * m;
    k.transfer_residual = k.energy_gain * k.energy_gain - k.momentum_gain * k.momentum_gain + mu * mu;
    return k;
}

double random_walk_spread(double m, double mu, double t_seconds) {
    if (!(m > 0.0)) throw std::domain_error("random_walk_spread: m must be positive");
    return mu / m * units::c_cm_s * t_seconds;
}

ScanKind parse_scan_kind(const std::string& s) {
    if (s == "spacelike") return ScanKind::spacelike;
    if (s == "timelike") return ScanKind::timelike;
    if (s == "nonrel") return ScanKind::nonrel;
    throw std::invalid_argument("unknown kernel kind '" + s + "' (expected spacelike, timelike or nonrel)");
}

std::string to_string(ScanKind k) {
    switch (k) {
    case ScanKind::spacelike: return "spacelike";
    case ScanKind::timelike: return "timelike";
    default: return "nonrel";
    }
}

std::vector<std::pair<double, double>> kernel_scan(ScanKind kind, double a, double x_min, double x_max, int points) {
    if (points < 2) throw std::invalid_argument("kernel_scan: need at least 2 points");
    if (!(x_min > 0.0) || !(x_max > x_min)) throw std::invalid_argument("kernel_scan: need 0 < x_min < x_max");
    std::vector<std::pair<double, double>> out;
    out.reserve(points);
    for (int i = 0; i < points; ++i) {
        const double x = x_min + (x_max - x_min) * i / (points - 1);
        double v;
        switch (kind) {
        case ScanKind::spacelike: v = tachyon_kernel_exact(x, a, Separation::spacelike); break;
        case ScanKind::timelike: v = tachyon_kernel_exact(x, a, Separation::timelike); break;
        default: v = tachyon_kernel_nonrel_limit(x, a); break;
        }
        out.emplace_back(x, v);
    }
    return out;
}

void write_kernel_scan_csv(std::ostream& os, const std::vector<std::pair<double, double>>& scan) {
    os << "x,value\n" << std::setprecision(17);
    for (const auto& [x, v] : scan) os << x << ',' << v << '\n';
}

} // namespace cslab::rel
