// rel_kernels.hpp - tachyon noise kernel and relativistic collapse rate formulas.
//
// Kernel functions work in natural units (hbar = c = 1): any length unit may be
// used as long as x and a share it; values then carry 1/length^2.

#pragma once

#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

namespace cslab::rel {

namespace units {
inline constexpr double hbar_eV_s = 6.582119569e-16;
inline constexpr double hbar_c_eV_cm = 1.973269804e-5;
inline constexpr double c_cm_s = 2.99792458e10;
} // namespace units

struct RelParameters {
    double gamma = 1.0;       // collapse coupling
    double mu = 1.0;          // tachyon mass, eV
    double g_coupling = 1.0;  // fermion-scalar coupling
    double m = 0.0;           // fermion mass, eV

    double a_cm() const { return units::hbar_c_eV_cm / mu; }
};

enum class Separation { spacelike, timelike };

// -(8 pi^2 a x)^-1 Y1(x/a) for spacelike x, -(4 pi^3 a x)^-1 K1(x/a) for timelike x.
double tachyon_kernel_exact(double x, double a, Separation kind);

// Independent evaluation straight from the spectral integral
// (2 pi)^-4 int d^4k e^{ik.x} delta(k0^2 - k^2 + mu^2), mu = 1/a.
double tachyon_kernel_quadrature(double x, double a, Separation kind);

// (2 pi)^-2 sin(r/a)/r; r = 0 gives the limit (2 pi)^-2 / a.
double tachyon_kernel_nonrel_limit(double separation, double a);

// gamma g^2 a / 16 pi * (1 - exp(-s/a)), a = hbar c / mu in cm.
double fermion_collapse_rate(double separation_cm, const RelParameters& params);
double fermion_collapse_asymptote(const RelParameters& params);

// (1 / 2 pi^2) gamma mu^3 / m sqrt(1 + (mu/2m)^2), eV/s.
double relativistic_energy_rate(const RelParameters& params);

// 3 lambda / (8 m a^2) in eV/s with lambda given in eV (natural units).
double nonrel_energy_rate(double lambda_eV, double mu, double m);

double time_dilated_collapse_rate(double rest_rate, double v0);

struct EmissionKinematics {
    double energy_gain = 0.0;    // eV
    double momentum_gain = 0.0;  // eV/c
    // (m + dE)^2 - p^2 - m^2: zero when the fermion stays on shell
    double shell_residual = 0.0;
    // dE^2 - p^2 + mu^2: zero when the transferred four-momentum is the tachyon's
    double transfer_residual = 0.0;
};
EmissionKinematics single_emission_kinematics(double m, double mu);

// Radius of the classical random-walk ensemble after time T (s), cm.
double random_walk_spread(double m, double mu, double t_seconds);

enum class ScanKind { spacelike, timelike, nonrel };
ScanKind parse_scan_kind(const std::string& s);
std::string to_string(ScanKind k);

std::vector<std::pair<double, double>> kernel_scan(ScanKind kind, double a, double x_min, double x_max, int points);
void write_kernel_scan_csv(std::ostream& os, const std::vector<std::pair<double, double>>& scan);

} // namespace cslab::rel
