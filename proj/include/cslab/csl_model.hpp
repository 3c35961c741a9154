// csl_model.hpp - spatial CSL rate calculators on 3D lattices (CGS units).

#pragma once

#include "cslab/numerics.hpp"

#include <array>
#include <complex>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

namespace cslab::csl {

// CODATA 2018, CGS.
namespace constants {
inline constexpr double hbar = 1.054571817e-27;       // erg s
inline constexpr double c = 2.99792458e10;            // cm/s
inline constexpr double G = 6.67430e-8;               // cm^3 g^-1 s^-2
inline constexpr double m_p = 1.67262192369e-24;      // g
inline constexpr double m_n = 1.67492749804e-24;      // g
inline constexpr double m_e = 9.1093837015e-28;       // g
inline constexpr double eV = 1.602176634e-12;         // erg
double m_planck();                                    // sqrt(hbar c / G)
} // namespace constants

struct CslParameters {
    double lambda = 1e-16;  // s^-1
    double a = 1e-5;        // cm
    std::map<std::string, double> couplings{{"nucleon", 1.0}, {"p", 1.0}, {"n", 1.0}};
};

enum class DensityMode {
    number,  // particles / cm^3 of `species`
    mass     // g / cm^3, coupled through M / m_p
};

struct LatticeMassDistribution {
    std::array<double, 3> origin{0.0, 0.0, 0.0};  // cm, position of cell (0,0,0) center
    double spacing = 0.0;                          // cm
    numerics::Array3 density;
    DensityMode mode = DensityMode::number;
    std::string species = "nucleon";

    static LatticeMassDistribution empty(std::array<double, 3> origin, double spacing, std::array<int, 3> dims,
                                         DensityMode mode = DensityMode::number);
    // n particles deposited in the cell nearest to `position`.
    void add_point(std::array<double, 3> position, double amount);
    // Axis-aligned box; partially covered cells get their covered fraction.
    void add_box(std::array<double, 3> center, std::array<double, 3> sides, double density_value);
    void add_sphere(std::array<double, 3> center, double radius, double density_value);

    double cell_volume() const { return spacing * spacing * spacing; }
    double total() const;  // integral of density
    bool same_lattice(const LatticeMassDistribution& other) const;
};

struct SmearedField {
    std::array<double, 3> origin{};
    double spacing = 0.0;
    numerics::Array3 values;
};

// a(x) = (pi a^2)^{-3/4} int dz g n(z) exp(-(x-z)^2 / 2a^2); output padded by the kernel radius.
SmearedField smeared_density_field(const LatticeMassDistribution& dist, const CslParameters& params);

double offdiag_decay_rate(const LatticeMassDistribution& d1, const LatticeMassDistribution& d2,
                          const CslParameters& params);

double clump_rate(double n, double separation, const CslParameters& params);

// eV/s
double energy_gain_rate(double n_particles, double mass_g, const CslParameters& params);

// Few-particle wavefunctions on a shared tensor grid: `particles` coordinates
// in `dims` dimensions, each sampled on `axis` (uniform spacing). Index order
// is particle-major, then dimension, row-major with the last coordinate fastest.
struct FewBodyGrid {
    int particles = 1;
    int dims = 1;
    std::vector<double> axis;

    std::size_t size() const;
    double cell() const { return axis.size() > 1 ? axis[1] - axis[0] : 1.0; }
};

// Gamma = (lambda / 2 a^2) |<phi| sum_j g_j (x_j - Q) |psi>|^2  (s^-1)
double excitation_amplitude(const std::vector<std::complex<double>>& psi_bound,
                            const std::vector<std::complex<double>>& phi_excited, const FewBodyGrid& grid,
                            const std::vector<double>& masses, const std::vector<double>& couplings,
                            const CslParameters& params);

// Coefficients c_j of the operator sum_j c_j x_j equal to sum_j g_j (x_j - Q).
// The mass-proportional part of g is projected out first, so g = k m gives exact zeros.
std::vector<double> relative_coupling_coefficients(const std::vector<double>& masses,
                                                   const std::vector<double>& couplings);

struct GermaniumBound {
    double ratio = 0.0;     // bound on g_e / g_p
    double multiple = 0.0;  // ratio / (m_e / m_p)
};
GermaniumBound germanium_bound(double measured_limit);

enum class GravityVariant { local_curvature, global_potential };

// s^-1
double gravity_decay_exponent(const LatticeMassDistribution& d1, const LatticeMassDistribution& d2,
                              GravityVariant variant, double a);

// Reference: direct double sum over occupied cells (O(N^2)).
double gravity_decay_exponent_bruteforce(const LatticeMassDistribution& d1, const LatticeMassDistribution& d2,
                                         GravityVariant variant, double a);

// (1/2 hbar) sum_cells G (Delta M_cell)^2 / a over coarse cells of side `cell_side`.
double gravity_cell_heuristic(const LatticeMassDistribution& d1, const LatticeMassDistribution& d2, double a,
                              double cell_side);

// Side of the coarse cell whose volume equals the Gaussian self-overlap volume (4 pi a^2)^{3/2}.
double gravity_effective_cell_side(double a);

struct ParameterRelations {
    double lambda_a_over_c = 0.0;
    double g_mp2_over_hbar_c = 0.0;
    double lambda_diosi = 0.0;     // G m_p^2 / (hbar a), s^-1, GRW a
    double a_planckon = 0.0;       // cm
    double lambda_planckon = 0.0;  // s^-1, evaluated at a_planckon
};
ParameterRelations parameter_relations(const CslParameters& params = {});

LatticeMassDistribution read_lattice_csv(std::istream& is, DensityMode mode = DensityMode::number);

} // namespace cslab::csl
