#include "cslab/csl_model.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <numbers>
#include <set>
#include <sstream>
#include <stdexcept>

namespace cslab::csl {

using numerics::Array3;

double constants::m_planck() { return std::sqrt(hbar * c / G); }

namespace {

constexpr double kSmearRadius = 6.0;     // in units of a, CSL Gaussian
constexpr double kGravityRadius = 12.0;  // in units of a, exp(-r^2/4a^2) kernel

// Full 1D convolution along one axis: output extent grows by 2R.
Array3 convolve_axis_full(const Array3& in, const std::vector<double>& k, int axis) {
    const int r = static_cast<int>(k.size() / 2);
    int dims[3] = {in.nx, in.ny, in.nz};
    dims[axis] += 2 * r;
    Array3 out(dims[0], dims[1], dims[2]);
    for (int i = 0; i < in.nx; ++i)
        for (int j = 0; j < in.ny; ++j)
            for (int l = 0; l < in.nz; ++l) {
                const double v = in.at(i, j, l);
                if (v == 0.0) continue;
                for (int m = -r; m <= r; ++m) {
                    const double w = v * k[m + r];
                    switch (axis) {
                    case 0: out.at(i + r + m, j, l) += w; break;
                    case 1: out.at(i, j + r + m, l) += w; break;
                    default: out.at(i, j, l + r + m) += w; break;
                    }
                }
            }
    return out;
}

double particle_mass(const std::string& species) {
    if (species == "e") return constants::m_e;
    if (species == "n") return constants::m_n;
    return constants::m_p;
}

// Converts a distribution to the coupling-weighted number density g*n.
double coupling_factor(const LatticeMassDistribution& d, const CslParameters& params) {
    if (d.mode == DensityMode::mass) return 1.0 / constants::m_p;
    const auto it = params.couplings.find(d.species);
    if (it == params.couplings.end()) throw std::invalid_argument("no coupling configured for species '" + d.species + "'");
    return it->second;
}

double mass_factor(const LatticeMassDistribution& d) {
    return d.mode == DensityMode::mass ? 1.0 : particle_mass(d.species);
}

void require_shared(const LatticeMassDistribution& d1, const LatticeMassDistribution& d2) {
    if (!d1.same_lattice(d2)) throw std::invalid_argument("distributions must share one lattice");
}

// Delta M per cell (grams).
Array3 mass_difference(const LatticeMassDistribution& d1, const LatticeMassDistribution& d2) {
    require_shared(d1, d2);
    const double v = d1.cell_volume();
    const double f1 = mass_factor(d1) * v, f2 = mass_factor(d2) * v;
    Array3 dm(d1.density.nx, d1.density.ny, d1.density.nz);
    for (std::size_t i = 0; i < dm.size(); ++i) dm.data[i] = f1 * d1.density.data[i] - f2 * d2.density.data[i];
    return dm;
}

double global_kernel(double r, double a) {
    if (r == 0.0) return constants::G / (std::sqrt(std::numbers::pi) * a);
    return constants::G * std::erf(r / (2.0 * a)) / r;
}

double overlap_1d(double c, double h, double lo, double hi) {
    const double l = std::max(c - 0.5 * h, lo), u = std::min(c + 0.5 * h, hi);
    return u > l ? (u - l) / h : 0.0;
}

} // namespace

// ---------------------------------------------------------------------------

LatticeMassDistribution LatticeMassDistribution::empty(std::array<double, 3> origin, double spacing,
                                                       std::array<int, 3> dims, DensityMode mode) {
    if (!(spacing > 0.0)) throw std::invalid_argument("lattice spacing must be positive");
    if (dims[0] < 1 || dims[1] < 1 || dims[2] < 1) throw std::invalid_argument("lattice dimensions must be >= 1");
    LatticeMassDistribution d;
    d.origin = origin;
    d.spacing = spacing;
    d.density = Array3(dims[0], dims[1], dims[2]);
    d.mode = mode;
    return d;
}

void LatticeMassDistribution::add_point(std::array<double, 3> position, double amount) {
    int idx[3];
    const int dims[3] = {density.nx, density.ny, density.nz};
    for (int ax = 0; ax < 3; ++ax) {
        idx[ax] = static_cast<int>(std::lround((position[ax] - origin[ax]) / spacing));
        if (idx[ax] < 0 || idx[ax] >= dims[ax]) throw std::out_of_range("point lies outside the lattice");
    }
    density.at(idx[0], idx[1], idx[2]) += amount / cell_volume();
}

void LatticeMassDistribution::add_box(std::array<double, 3> center, std::array<double, 3> sides, double value) {
    if (value < 0.0) throw std::invalid_argument("density must be nonnegative");
    const int dims[3] = {density.nx, density.ny, density.nz};
    std::vector<double> f[3];
    for (int ax = 0; ax < 3; ++ax) {
        f[ax].resize(dims[ax]);
        const double lo = center[ax] - 0.5 * sides[ax], hi = center[ax] + 0.5 * sides[ax];
        for (int i = 0; i < dims[ax]; ++i) f[ax][i] = overlap_1d(origin[ax] + i * spacing, spacing, lo, hi);
    }
    for (int i = 0; i < dims[0]; ++i)
        for (int j = 0; j < dims[1]; ++j)
            for (int k = 0; k < dims[2]; ++k) density.at(i, j, k) += value * f[0][i] * f[1][j] * f[2][k];
}

void LatticeMassDistribution::add_sphere(std::array<double, 3> center, double radius, double value) {
    if (value < 0.0) throw std::invalid_argument("density must be nonnegative");
    constexpr int sub = 4;
    const double h = spacing;
    for (int i = 0; i < density.nx; ++i)
        for (int j = 0; j < density.ny; ++j)
            for (int k = 0; k < density.nz; ++k) {
                const double cx = origin[0] + i * h, cy = origin[1] + j * h, cz = origin[2] + k * h;
                const double dc = std::sqrt((cx - center[0]) * (cx - center[0]) + (cy - center[1]) * (cy - center[1]) +
                                            (cz - center[2]) * (cz - center[2]));
                if (dc > radius + h) continue;
                int inside = 0;
                for (int a = 0; a < sub; ++a)
                    for (int b = 0; b < sub; ++b)
                        for (int c = 0; c < sub; ++c) {
                            const double x = cx + ((a + 0.5) / sub - 0.5) * h - center[0];
                            const double y = cy + ((b + 0.5) / sub - 0.5) * h - center[1];
                            const double z = cz + ((c + 0.5) / sub - 0.5) * h - center[2];
                            if (x * x + y * y + z * z <= radius * radius) ++inside;
                        }
                density.at(i, j, k) += value * inside / double(sub * sub * sub);
            }
}

double LatticeMassDistribution::total() const {
    numerics::CompensatedSum s;
    for (double v : density.data) s.add(v);
    return s.value() * cell_volume();
}

bool LatticeMassDistribution::same_lattice(const LatticeMassDistribution& o) const {
    return origin == o.origin && spacing == o.spacing && density.nx == o.density.nx && density.ny == o.density.ny &&
           density.nz == o.density.nz;
}

SmearedField smeared_density_field(const LatticeMassDistribution& dist, const CslParameters& params) {
    const double a = params.a, h = dist.spacing;
    if (!(a > 0.0)) throw std::invalid_argument("smearing length must be positive");
    if (h > 0.5 * a * (1.0 + 1e-12)) throw std::invalid_argument("lattice spacing exceeds a/2 (resolution rule)");
    const int r = static_cast<int>(std::ceil(kSmearRadius * a / h));
    std::vector<double> k(2 * r + 1);
    double ksum = 0.0;
    for (int m = -r; m <= r; ++m) {
        k[m + r] = std::exp(-(m * h) * (m * h) / (2.0 * a * a));
        ksum += k[m + r];
    }
    // discrete mass of each 1D factor equals the continuum sqrt(2 pi) a
    const double renorm = std::sqrt(2.0 * std::numbers::pi) * a / (h * ksum);
    for (auto& v : k) v *= renorm;

    Array3 src = dist.density;
    const double pre = coupling_factor(dist, params) * std::pow(std::numbers::pi * a * a, -0.75) * h * h * h;
    for (auto& v : src.data) v *= pre;
    Array3 out = convolve_axis_full(convolve_axis_full(convolve_axis_full(src, k, 0), k, 1), k, 2);
    SmearedField f;
    f.spacing = h;
    f.values = std::move(out);
    for (int ax = 0; ax < 3; ++ax) f.origin[ax] = dist.origin[ax] - r * h;
    return f;
}

double offdiag_decay_rate(const LatticeMassDistribution& d1, const LatticeMassDistribution& d2,
                          const CslParameters& params) {
    require_shared(d1, d2);
    // smear the coupling-weighted difference so common mass cancels exactly
    LatticeMassDistribution diff = d1;
    diff.mode = DensityMode::number;
    diff.species = "__difference";
    const double g1 = coupling_factor(d1, params), g2 = coupling_factor(d2, params);
    for (std::size_t i = 0; i < diff.density.size(); ++i)
        diff.density.data[i] = g1 * d1.density.data[i] - g2 * d2.density.data[i];
    CslParameters unit = params;
    unit.couplings = {{"__difference", 1.0}};
    const SmearedField f = smeared_density_field(diff, unit);
    numerics::CompensatedSum s;
    for (double v : f.values.data) s.add(v * v);
    return 0.5 * params.lambda * s.value() * f.spacing * f.spacing * f.spacing;
}

double clump_rate(double n, double separation, const CslParameters& params) {
    if (!(n > 0.0)) throw std::invalid_argument("clump_rate: n must be positive");
    return params.lambda * n * n * -std::expm1(-separation * separation / (4.0 * params.a * params.a));
}

double energy_gain_rate(double n_particles, double mass_g, const CslParameters& params) {
    if (!(mass_g > 0.0)) throw std::invalid_argument("energy_gain_rate: mass must be positive");
    const double erg_per_s =
        0.75 * params.lambda * n_particles * constants::hbar * constants::hbar / (2.0 * mass_g * params.a * params.a);
    return erg_per_s / constants::eV;
}

std::size_t FewBodyGrid::size() const {
    std::size_t s = 1;
    for (int i = 0; i < particles * dims; ++i) s *= axis.size();
    return s;
}

std::vector<double> relative_coupling_coefficients(const std::vector<double>& masses,
                                                   const std::vector<double>& couplings) {
    const std::size_t n = masses.size();
    if (couplings.size() != n || n == 0) throw std::invalid_argument("masses and couplings must match");
    double mm = 0.0, gm = 0.0, gg = 0.0, total = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
        if (!(masses[j] > 0.0)) throw std::invalid_argument("masses must be positive");
        mm += masses[j] * masses[j];
        gm += couplings[j] * masses[j];
        gg += couplings[j] * couplings[j];
        total += masses[j];
    }
    std::vector<double> perp(n);
    const double kappa = gm / mm;
    double pp = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
        perp[j] = couplings[j] - kappa * masses[j];
        pp += perp[j] * perp[j];
    }
    // g = kappa m contributes nothing (sum_j m_j (x_j - Q) = 0); drop rounding residue.
    if (pp <= 1e-24 * gg) return std::vector<double>(n, 0.0);
    double psum = 0.0;
    for (double p : perp) psum += p;
    std::vector<double> c(n);
    for (std::size_t j = 0; j < n; ++j) c[j] = perp[j] - psum * masses[j] / total;
    return c;
}

double excitation_amplitude(const std::vector<std::complex<double>>& psi, const std::vector<std::complex<double>>& phi,
                            const FewBodyGrid& grid, const std::vector<double>& masses,
                            const std::vector<double>& couplings, const CslParameters& params) {
    if (static_cast<int>(masses.size()) != grid.particles)
        throw std::invalid_argument("excitation_amplitude: one mass per particle expected");
    const std::size_t n = grid.size();
    if (psi.size() != n || phi.size() != n) throw std::invalid_argument("excitation_amplitude: wavefunction size mismatch");
    const int ncoord = grid.particles * grid.dims;
    const double vol = std::pow(grid.cell(), ncoord);

    std::complex<double> overlap = 0.0;
    double npsi = 0.0, nphi = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        overlap += std::conj(phi[i]) * psi[i];
        npsi += std::norm(psi[i]);
        nphi += std::norm(phi[i]);
    }
    overlap *= vol;
    if (std::abs(npsi * vol - 1.0) > 1e-6 || std::abs(nphi * vol - 1.0) > 1e-6)
        throw std::invalid_argument("excitation_amplitude: wavefunctions are not normalized");
    if (std::abs(overlap) > 1e-6) throw std::invalid_argument("excitation_amplitude: wavefunctions are not orthogonal");

    const std::vector<double> c = relative_coupling_coefficients(masses, couplings);
    if (std::all_of(c.begin(), c.end(), [](double x) { return x == 0.0; })) return 0.0;

    const std::size_t na = grid.axis.size();
    std::vector<std::complex<double>> m(grid.dims, 0.0);
    std::vector<int> idx(ncoord);
    for (std::size_t flat = 0; flat < n; ++flat) {
        std::size_t rem = flat;
        for (int q = ncoord - 1; q >= 0; --q) {
            idx[q] = static_cast<int>(rem % na);
            rem /= na;
        }
        const std::complex<double> amp = std::conj(phi[flat]) * psi[flat];
        if (amp == 0.0) continue;
        for (int alpha = 0; alpha < grid.dims; ++alpha) {
            double op = 0.0;
            for (int j = 0; j < grid.particles; ++j) op += c[j] * grid.axis[idx[j * grid.dims + alpha]];
            m[alpha] += amp * op;
        }
    }
    double s = 0.0;
    for (auto& v : m) s += std::norm(v * vol);
    return params.lambda / (2.0 * params.a * params.a) * s;
}

GermaniumBound germanium_bound(double measured_limit) {
    if (measured_limit < 0.0) throw std::invalid_argument("germanium_bound: limit must be nonnegative");
    const double ratio_e = constants::m_e / constants::m_p;
    GermaniumBound b;
    b.ratio = ratio_e + std::sqrt(measured_limit / 5000.0);
    b.multiple = b.ratio / ratio_e;
    return b;
}

double gravity_decay_exponent(const LatticeMassDistribution& d1, const LatticeMassDistribution& d2,
                              GravityVariant variant, double a) {
    if (!(a > 0.0)) throw std::invalid_argument("gravity_decay_exponent: a must be positive");
    const Array3 dm = mass_difference(d1, d2);
    const double h = d1.spacing;
    const int nx = dm.nx, ny = dm.ny, nz = dm.nz;
    Array3 pot;
    if (variant == GravityVariant::local_curvature) {
        const int rmax = std::max({nx, ny, nz}) - 1;
        const int r = std::min(rmax, static_cast<int>(std::ceil(kGravityRadius * a / h)));
        std::vector<double> k(2 * r + 1);
        for (int m = -r; m <= r; ++m) k[m + r] = std::exp(-(m * h) * (m * h) / (4.0 * a * a));
        const Array3 full = convolve_axis_full(convolve_axis_full(convolve_axis_full(dm, k, 0), k, 1), k, 2);
        pot = Array3(nx, ny, nz);
        for (int i = 0; i < nx; ++i)
            for (int j = 0; j < ny; ++j)
                for (int l = 0; l < nz; ++l) pot.at(i, j, l) = constants::G / a * full.at(i + r, j + r, l + r);
    } else {
        Array3 ker(2 * nx - 1, 2 * ny - 1, 2 * nz - 1);
        for (int i = 0; i < ker.nx; ++i)
            for (int j = 0; j < ker.ny; ++j)
                for (int l = 0; l < ker.nz; ++l) {
                    const double dx = (i - (nx - 1)) * h, dy = (j - (ny - 1)) * h, dz = (l - (nz - 1)) * h;
                    ker.at(i, j, l) = global_kernel(std::sqrt(dx * dx + dy * dy + dz * dz), a);
                }
        const Array3 full = numerics::convolve3d(dm, ker);
        pot = Array3(nx, ny, nz);
        for (int i = 0; i < nx; ++i)
            for (int j = 0; j < ny; ++j)
                for (int l = 0; l < nz; ++l) pot.at(i, j, l) = full.at(i + nx - 1, j + ny - 1, l + nz - 1);
    }
    numerics::CompensatedSum s;
    for (std::size_t i = 0; i < dm.size(); ++i) s.add(dm.data[i] * pot.data[i]);
    return s.value() / (2.0 * constants::hbar);
}

double gravity_decay_exponent_bruteforce(const LatticeMassDistribution& d1, const LatticeMassDistribution& d2,
                                         GravityVariant variant, double a) {
    const Array3 dm = mass_difference(d1, d2);
    const double h = d1.spacing;
    struct Cell {
        double x, y, z, m;
    };
    std::vector<Cell> cells;
    for (int i = 0; i < dm.nx; ++i)
        for (int j = 0; j < dm.ny; ++j)
            for (int l = 0; l < dm.nz; ++l)
                if (dm.at(i, j, l) != 0.0) cells.push_back({i * h, j * h, l * h, dm.at(i, j, l)});
    numerics::CompensatedSum s;
    for (const auto& p : cells)
        for (const auto& q : cells) {
            const double r2 = (p.x - q.x) * (p.x - q.x) + (p.y - q.y) * (p.y - q.y) + (p.z - q.z) * (p.z - q.z);
            const double k = variant == GravityVariant::local_curvature
                                 ? constants::G / a * std::exp(-r2 / (4.0 * a * a))
                                 : global_kernel(std::sqrt(r2), a);
            s.add(p.m * k * q.m);
        }
    return s.value() / (2.0 * constants::hbar);
}

double gravity_effective_cell_side(double a) { return std::sqrt(4.0 * std::numbers::pi) * a; }

double gravity_cell_heuristic(const LatticeMassDistribution& d1, const LatticeMassDistribution& d2, double a,
                              double cell_side) {
    if (!(cell_side > 0.0)) throw std::invalid_argument("gravity_cell_heuristic: cell side must be positive");
    const Array3 dm = mass_difference(d1, d2);
    const double h = d1.spacing;
    // coarse cells start at the lower lattice edge
    auto block = [&](int i) { return static_cast<long>(std::floor((i + 0.5) * h / cell_side)); };
    std::map<std::array<long, 3>, double> coarse;
    for (int i = 0; i < dm.nx; ++i)
        for (int j = 0; j < dm.ny; ++j)
            for (int l = 0; l < dm.nz; ++l)
                if (dm.at(i, j, l) != 0.0) coarse[{block(i), block(j), block(l)}] += dm.at(i, j, l);
    numerics::CompensatedSum s;
    for (const auto& [key, m] : coarse) s.add(m * m);
    return constants::G / a * s.value() / (2.0 * constants::hbar);
}

ParameterRelations parameter_relations(const CslParameters& params) {
    using namespace constants;
    ParameterRelations r;
    r.lambda_a_over_c = params.lambda * params.a / c;
    r.g_mp2_over_hbar_c = G * m_p * m_p / (hbar * c);
    r.lambda_diosi = G * m_p * m_p / (hbar * params.a);
    r.a_planckon = std::pow(3.0 / (std::numbers::pi * std::numbers::pi), 0.25) * (hbar / (4.0 * m_p * c)) *
                   std::sqrt(m_planck() / m_p);
    r.lambda_planckon = G * m_p * m_p / (hbar * r.a_planckon) / (2.0 * std::sqrt(3.0 * std::numbers::pi));
    return r;
}

LatticeMassDistribution read_lattice_csv(std::istream& is, DensityMode mode) {
    std::string line;
    if (!std::getline(is, line)) throw std::runtime_error("lattice csv: missing header");
    struct Row {
        double x, y, z, v;
    };
    std::vector<Row> rows;
    int lineno = 1;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string cell;
        double vals[4];
        int nv = 0;
        while (std::getline(ss, cell, ',')) {
            if (nv >= 4) throw std::runtime_error("lattice csv: too many columns on line " + std::to_string(lineno));
            try {
                vals[nv++] = std::stod(cell);
            } catch (const std::exception&) {
                throw std::runtime_error("lattice csv: bad number on line " + std::to_string(lineno));
            }
        }
        if (nv != 4) throw std::runtime_error("lattice csv: expected x,y,z,density on line " + std::to_string(lineno));
        if (vals[3] < 0.0) throw std::runtime_error("lattice csv: negative density on line " + std::to_string(lineno));
        rows.push_back({vals[0], vals[1], vals[2], vals[3]});
    }
    if (rows.empty()) throw std::runtime_error("lattice csv: no rows");
    std::array<double, 3> lo{rows[0].x, rows[0].y, rows[0].z}, hi = lo;
    std::array<std::set<double>, 3> uniq;
    for (const auto& r : rows) {
        const double c[3] = {r.x, r.y, r.z};
        for (int ax = 0; ax < 3; ++ax) {
            lo[ax] = std::min(lo[ax], c[ax]);
            hi[ax] = std::max(hi[ax], c[ax]);
            uniq[ax].insert(c[ax]);
        }
    }
    double h = 0.0;
    for (int ax = 0; ax < 3; ++ax) {
        double prev = NAN;
        for (double v : uniq[ax]) {
            if (!std::isnan(prev)) h = h == 0.0 ? v - prev : std::min(h, v - prev);
            prev = v;
        }
    }
    if (!(h > 0.0)) throw std::runtime_error("lattice csv: cannot infer spacing (need >= 2 distinct coordinates)");
    std::array<int, 3> dims{};
    for (int ax = 0; ax < 3; ++ax) dims[ax] = static_cast<int>(std::lround((hi[ax] - lo[ax]) / h)) + 1;
    auto d = LatticeMassDistribution::empty(lo, h, dims, mode);
    for (const auto& r : rows) {
        const double c[3] = {r.x, r.y, r.z};
        int idx[3];
        for (int ax = 0; ax < 3; ++ax) {
            const double f = (c[ax] - lo[ax]) / h;
            idx[ax] = static_cast<int>(std::lround(f));
            if (std::abs(f - idx[ax]) > 1e-6) throw std::runtime_error("lattice csv: coordinates are not on a uniform lattice");
        }
        d.density.at(idx[0], idx[1], idx[2]) = r.v;
    }
    return d;
}

} // namespace cslab::csl
