// numerics.hpp - shared numerical building blocks: seeded RNG streams,
// Gauss-Hermite rules, Bessel functions, compensated sums and FFT helpers.

#pragma once

#include <complex>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

namespace cslab::numerics {

using cplx = std::complex<double>;

// Deterministic normal/uniform stream derived from (seed, stream). Two
// instances built from the same pair produce bit-identical sequences.
class Rng {
public:
    Rng(std::uint64_t seed, std::uint64_t stream);

    double normal() { return normal_(engine_); }
    double uniform() { return uniform_(engine_); }

private:
    std::mt19937_64 engine_;
    std::normal_distribution<double> normal_{0.0, 1.0};
    std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

// Neumaier summation.
class CompensatedSum {
public:
    void add(double x);
    double value() const { return sum_ + comp_; }

private:
    double sum_ = 0.0;
    double comp_ = 0.0;
};

struct QuadratureRule {
    std::vector<double> nodes;
    std::vector<double> weights;
};

// Physicists' Gauss-Hermite rule: sum_i w_i f(x_i) ~ int exp(-x^2) f(x) dx.
QuadratureRule gauss_hermite(int n);

// Bessel functions of integer order 0 and 1. Power series for x <= 2,
// Steed/Temme continued fractions above. Arguments must be positive.
double bessel_k0(double x);
double bessel_k1(double x);
double bessel_y0(double x);
double bessel_y1(double x);
double bessel_j0(double x);
double bessel_j1(double x);

// Forward/backward complex DFT (unnormalized, FFTW sign conventions:
// forward uses exp(-i k n)).
std::vector<cplx> fft(std::span<const cplx> input);
std::vector<cplx> ifft(std::span<const cplx> input);

// Angular frequency of DFT bin m for n samples spaced dt (negative for m > n/2).
double dft_frequency(int m, int n, double dt);

// Linear (zero-padded) 3D convolution of two real arrays stored row-major
// as [nx][ny][nz]. The result has extent (ax+bx-1, ay+by-1, az+bz-1).
struct Array3 {
    int nx = 0, ny = 0, nz = 0;
    std::vector<double> data;

    Array3() = default;
    Array3(int x, int y, int z) : nx(x), ny(y), nz(z), data(static_cast<std::size_t>(x) * y * z, 0.0) {}
    double& at(int i, int j, int k) { return data[(static_cast<std::size_t>(i) * ny + j) * nz + k]; }
    double at(int i, int j, int k) const { return data[(static_cast<std::size_t>(i) * ny + j) * nz + k]; }
    std::size_t size() const { return data.size(); }
};

Array3 convolve3d(const Array3& a, const Array3& b);

} // namespace cslab::numerics
