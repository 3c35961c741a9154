// noise_paths.hpp - classical noise realizations and stationary kernels.
//
// Convention used throughout the library: under the raw (reference) measure
// the increment of the driving Brownian motion over dt has variance
// lambda*dt, i.e. B(t) ~ N(0, lambda*t) and w = dB/dt.

#pragma once

#include "cslab/numerics.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace cslab {

// Raw-measure variance of dB per unit (lambda * dt).
inline constexpr double kNoiseVariancePerRate = 1.0;

struct TimeGrid {
    double t0 = 0.0;
    double dt = 0.0;
    int n_steps = 0;

    TimeGrid() = default;
    TimeGrid(double t0_, double dt_, int n_steps_);
    double duration() const { return dt * n_steps; }
    double time(int k) const { return t0 + dt * k; }
};

enum class NoiseKind {
    rate,       // values[c][k] = w_c on step k (n_steps samples)
    integrated  // values[c][k] = B_c(t0 + k dt) (n_steps + 1 samples, B(t0) = 0)
};

struct NoisePath {
    TimeGrid grid;
    NoiseKind kind = NoiseKind::rate;
    std::vector<std::vector<double>> values;  // [channel][sample]

    int channels() const { return static_cast<int>(values.size()); }
    // Increment of channel c over step k, i.e. w_c(t_k)*dt or B(t_{k+1})-B(t_k).
    double increment(int c, int k) const;
    // Value of integral of w over the whole grid for channel c.
    double total(int c) const;
    NoisePath as_rate() const;
};

enum class KernelKind { delta, ornstein_uhlenbeck, tachyon_nonrel, custom_spectral };

// Stationary correlation G(tau) with spectral density
// Gt(omega) = int dtau e^{-i omega tau} G(tau).
class Kernel {
public:
    static Kernel delta();
    static Kernel ornstein_uhlenbeck(double alpha);
    static Kernel tachyon_nonrel(double a);
    // Piecewise-linear table of Gt on nonnegative, strictly increasing |omega|;
    // zero beyond the last node.
    static Kernel custom_spectral(std::vector<double> omega, std::vector<double> spectrum);

    KernelKind kind() const { return kind_; }
    double alpha() const { return alpha_; }
    double a() const { return a_; }
    const std::vector<double>& table_omega() const { return omega_; }
    const std::vector<double>& table_spectrum() const { return spec_; }

private:
    KernelKind kind_ = KernelKind::delta;
    double alpha_ = 0.0;
    double a_ = 0.0;
    std::vector<double> omega_, spec_;
};

double kernel_value(const Kernel& k, double tau);
double spectral_density(const Kernel& k, double omega);

// int_0^t int_0^t G(t1 - t2) dt1 dt2
double kernel_double_integral(const Kernel& k, double t);

// Cell-integrated Gram matrix K_ij = int_{cell i} int_{cell j} G(t1 - t2)
// for piecewise-constant signals on the grid.
Eigen::MatrixXd kernel_cell_gram(const Kernel& k, const TimeGrid& grid);

// Point-sampled Gram matrix G(t_i - t_j); the delta kernel maps to I/dt.
Eigen::MatrixXd kernel_gram(const Kernel& k, const TimeGrid& grid);

NoisePath sample_brownian(const TimeGrid& grid, double diffusion, std::uint64_t seed, std::uint64_t stream,
                          int channels = 1);

// White noise w with Var[w dt] = lambda dt (the raw measure for rate lambda).
NoisePath sample_white(const TimeGrid& grid, double lambda, std::uint64_t seed, std::uint64_t stream,
                       int channels = 1);

// Stationary Gaussian path with covariance G(t_i - t_j) (discrete delta 1/dt).
NoisePath sample_colored(const TimeGrid& grid, const Kernel& kernel, std::uint64_t seed, std::uint64_t stream);

struct KernelInverse {
    Eigen::MatrixXd inverse;  // sum_j G_ij Ginv_jk dt = delta_ik / dt on the retained subspace
    int rank = 0;
    int dimension = 0;
    double discarded_fraction = 0.0;  // discarded spectral weight / total
};

KernelInverse kernel_inverse_finite(const Kernel& kernel, const TimeGrid& grid);
KernelInverse kernel_inverse_finite(const Eigen::MatrixXd& gram, double dt);

// Convolution with G^{1/2}, where G^{1/2} has spectral density sqrt(Gt).
NoisePath kernel_sqrt_smear(const Kernel& kernel, const NoisePath& signal);

// Samples of the G^{1/2} kernel at tau = k dt, k = 0..n-1 (periodic grid of n).
std::vector<double> sqrt_kernel_samples(const Kernel& kernel, double dt, int n);

// Direct O(n^2) time-domain convolution with G (reference for smearing).
std::vector<double> convolve_with_kernel(const Kernel& kernel, const std::vector<double>& x, double dt);

void write_noise_csv(std::ostream& os, const NoisePath& path);
NoisePath read_noise_csv(std::istream& is, NoiseKind kind);

} // namespace cslab
