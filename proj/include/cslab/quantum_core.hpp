// quantum_core.hpp - finite-dimensional states, Hermitian operators and
// density matrices. Dense storage; everything is a value type.

#pragma once

#include <Eigen/Dense>

#include <complex>
#include <initializer_list>
#include <string>
#include <vector>

namespace cslab {

using cplx = std::complex<double>;
using CVector = Eigen::VectorXcd;
using CMatrix = Eigen::MatrixXcd;

// Largest dimension the dynamics engines accept.
inline constexpr int kMaxDynamicsDim = 64;

// Unnormalized amplitude vector. Norm 1 is not required.
class StateVector {
public:
    StateVector() = default;
    explicit StateVector(CVector amplitudes, std::vector<std::string> labels = {});
    StateVector(std::initializer_list<cplx> amplitudes);

    const CVector& amplitudes() const { return amps_; }
    int dim() const { return static_cast<int>(amps_.size()); }
    cplx operator[](int i) const { return amps_(i); }
    const std::vector<std::string>& labels() const { return labels_; }

private:
    CVector amps_;
    std::vector<std::string> labels_;
};

class HermitianOperator {
public:
    HermitianOperator() = default;
    explicit HermitianOperator(CMatrix m);
    static HermitianOperator diagonal(const std::vector<double>& values);

    const CMatrix& matrix() const { return m_; }
    int dim() const { return static_cast<int>(m_.rows()); }
    // Largest absolute entry; the scale used by tolerance checks.
    double max_abs() const;

private:
    CMatrix m_;
};

class DensityMatrix {
public:
    DensityMatrix() = default;
    // Validates Hermiticity (1e-12), unit trace (1e-10) and positivity (-1e-10).
    explicit DensityMatrix(CMatrix m);

    const CMatrix& matrix() const { return m_; }
    int dim() const { return static_cast<int>(m_.rows()); }
    cplx operator()(int i, int j) const { return m_(i, j); }

private:
    CMatrix m_;
};

struct EigenSystem {
    std::vector<double> values;        // ascending
    std::vector<StateVector> vectors;  // orthonormal, vectors[k] pairs with values[k]
    CMatrix basis() const;             // eigenvectors as columns
};

double norm_squared(const StateVector& psi);

EigenSystem eigendecompose(const HermitianOperator& a);

// <psi|A|psi>/<psi|psi>
double expectation(const HermitianOperator& a, const StateVector& psi);

// |psi><psi|/<psi|psi>
DensityMatrix pure_density(const StateVector& psi);

// (M + M^dagger)/2; used before wrapping accumulated sums as densities.
CMatrix hermitian_part(const CMatrix& m);

bool is_hermitian(const CMatrix& m, double rel_tol = 1e-12);

// ||[A,B]|| <= tol * ||A|| * ||B|| (Frobenius norms).
bool commutes(const HermitianOperator& a, const HermitianOperator& b, double tol = 1e-10);

// exp(-i H t) through the eigendecomposition of H.
CMatrix unitary_propagator(const HermitianOperator& h, double t);

} // namespace cslab
