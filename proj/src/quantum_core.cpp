#include "cslab/quantum_core.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace cslab {

namespace {

void require_finite(const CVector& v) {
    for (Eigen::Index i = 0; i < v.size(); ++i)
        if (!std::isfinite(v(i).real()) || !std::isfinite(v(i).imag()))
            throw std::invalid_argument("StateVector: non-finite amplitude");
}

double max_abs_of(const CMatrix& m) {
    double s = 0.0;
    for (Eigen::Index i = 0; i < m.size(); ++i) s = std::max(s, std::abs(m.data()[i]));
    return s;
}

// Fix the global phase so the first non-negligible component is real positive.
CVector canonical_phase(CVector v) {
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        if (std::abs(v(i)) > 1e-8) {
            v *= std::conj(v(i)) / std::abs(v(i));
            break;
        }
    }
    return v;
}

bool lex_less(const CVector& a, const CVector& b) {
    auto r6 = [](double x) { return std::round(x * 1e6) / 1e6; };
    for (Eigen::Index i = 0; i < a.size(); ++i) {
        const double ar = r6(a(i).real()), br = r6(b(i).real());
        if (ar != br) return ar < br;
        const double ai = r6(a(i).imag()), bi = r6(b(i).imag());
        if (ai != bi) return ai < bi;
    }
    return false;
}

// Canonical orthonormal basis for the span of q's columns: pivoted Gram-Schmidt
// on projected standard basis vectors (identity -> standard basis).
std::vector<CVector> canonical_subspace_basis(const CMatrix& q) {
    const Eigen::Index d = q.rows(), g = q.cols();
    const CMatrix proj = q * q.adjoint();
    std::vector<CVector> chosen;
    std::vector<bool> used(d, false);
    for (Eigen::Index round = 0; round < g; ++round) {
        Eigen::Index best = -1;
        double best_norm = -1.0;
        CVector best_vec;
        for (Eigen::Index i = 0; i < d; ++i) {
            if (used[i]) continue;
            CVector v = proj.col(i);
            for (const auto& c : chosen) v -= c * c.dot(v);
            const double nv = v.norm();
            if (nv > best_norm + 1e-12) {
                best_norm = nv;
                best = i;
                best_vec = v;
            }
        }
        used[best] = true;
        chosen.push_back(canonical_phase(best_vec / best_norm));
    }
    std::sort(chosen.begin(), chosen.end(), lex_less);
    return chosen;
}

} // namespace

StateVector::StateVector(CVector amplitudes, std::vector<std::string> labels)
    : amps_(std::move(amplitudes)), labels_(std::move(labels)) {
    if (amps_.size() < 1) throw std::invalid_argument("StateVector: dimension must be >= 1");
    if (!labels_.empty() && labels_.size() != static_cast<std::size_t>(amps_.size()))
        throw std::invalid_argument("StateVector: label count does not match dimension");
    require_finite(amps_);
}

StateVector::StateVector(std::initializer_list<cplx> amplitudes) {
    amps_.resize(static_cast<Eigen::Index>(amplitudes.size()));
    Eigen::Index i = 0;
    for (const auto& c : amplitudes) amps_(i++) = c;
    if (amps_.size() < 1) throw std::invalid_argument("StateVector: dimension must be >= 1");
    require_finite(amps_);
}

HermitianOperator::HermitianOperator(CMatrix m) : m_(std::move(m)) {
    if (m_.rows() != m_.cols() || m_.rows() < 1) throw std::invalid_argument("HermitianOperator: matrix must be square");
    if (!is_hermitian(m_)) throw std::invalid_argument("HermitianOperator: matrix is not Hermitian");
}

HermitianOperator HermitianOperator::diagonal(const std::vector<double>& values) {
    CMatrix m = CMatrix::Zero(static_cast<Eigen::Index>(values.size()), static_cast<Eigen::Index>(values.size()));
    for (std::size_t i = 0; i < values.size(); ++i) m(i, i) = values[i];
    return HermitianOperator(std::move(m));
}

double HermitianOperator::max_abs() const { return max_abs_of(m_); }

DensityMatrix::DensityMatrix(CMatrix m) : m_(std::move(m)) {
    if (m_.rows() != m_.cols() || m_.rows() < 1) throw std::invalid_argument("DensityMatrix: matrix must be square");
    if (!is_hermitian(m_)) throw std::invalid_argument("DensityMatrix: not Hermitian");
    const cplx tr = m_.trace();
    if (std::abs(tr - 1.0) > 1e-10) throw std::invalid_argument("DensityMatrix: trace differs from 1");
    Eigen::SelfAdjointEigenSolver<CMatrix> es(m_, Eigen::EigenvaluesOnly);
    if (es.eigenvalues().minCoeff() < -1e-10) throw std::invalid_argument("DensityMatrix: negative eigenvalue");
}

CMatrix EigenSystem::basis() const {
    const Eigen::Index d = vectors.empty() ? 0 : vectors.front().dim();
    CMatrix v(d, static_cast<Eigen::Index>(vectors.size()));
    for (std::size_t k = 0; k < vectors.size(); ++k) v.col(k) = vectors[k].amplitudes();
    return v;
}

double norm_squared(const StateVector& psi) { return psi.amplitudes().squaredNorm(); }

EigenSystem eigendecompose(const HermitianOperator& a) {
    if (a.dim() < 1) throw std::invalid_argument("eigendecompose: empty operator");
    Eigen::SelfAdjointEigenSolver<CMatrix> es(a.matrix());
    if (es.info() != Eigen::Success) throw std::runtime_error("eigendecompose: solver failed");
    const auto& vals = es.eigenvalues();
    const CMatrix& vecs = es.eigenvectors();
    const double scale = std::max(1.0, a.max_abs());
    const double tol = 1e-10 * scale;

    EigenSystem out;
    const Eigen::Index d = vals.size();
    Eigen::Index start = 0;
    while (start < d) {
        Eigen::Index end = start + 1;
        while (end < d && vals(end) - vals(end - 1) <= tol) ++end;
        const Eigen::Index g = end - start;
        double mean = 0.0;
        for (Eigen::Index k = start; k < end; ++k) mean += vals(k);
        mean /= static_cast<double>(g);
        if (g == 1) {
            out.values.push_back(vals(start));
            out.vectors.emplace_back(canonical_phase(vecs.col(start)));
        } else {
            for (auto& v : canonical_subspace_basis(vecs.middleCols(start, g))) {
                out.values.push_back(mean);
                out.vectors.emplace_back(std::move(v));
            }
        }
        start = end;
    }
    return out;
}

double expectation(const HermitianOperator& a, const StateVector& psi) {
    if (a.dim() != psi.dim()) throw std::invalid_argument("expectation: dimension mismatch");
    const double n2 = norm_squared(psi);
    if (!(n2 > 0.0)) throw std::invalid_argument("expectation: zero-norm state");
    const cplx v = psi.amplitudes().dot(a.matrix() * psi.amplitudes());
    return v.real() / n2;
}

DensityMatrix pure_density(const StateVector& psi) {
    const double n2 = norm_squared(psi);
    if (!(n2 > 0.0)) throw std::invalid_argument("pure_density: zero-norm state");
    const CVector& c = psi.amplitudes();
    return DensityMatrix(hermitian_part(c * c.adjoint() / n2));
}

CMatrix hermitian_part(const CMatrix& m) { return 0.5 * (m + m.adjoint()); }

bool is_hermitian(const CMatrix& m, double rel_tol) {
    if (m.rows() != m.cols()) return false;
    const double scale = max_abs_of(m);
    if (scale == 0.0) return true;
    return max_abs_of(m - m.adjoint()) <= rel_tol * scale;
}

bool commutes(const HermitianOperator& a, const HermitianOperator& b, double tol) {
    if (a.dim() != b.dim()) return false;
    const CMatrix c = a.matrix() * b.matrix() - b.matrix() * a.matrix();
    return c.norm() <= tol * a.matrix().norm() * b.matrix().norm();
}

CMatrix unitary_propagator(const HermitianOperator& h, double t) {
    Eigen::SelfAdjointEigenSolver<CMatrix> es(h.matrix());
    const Eigen::Index d = h.dim();
    CVector phases(d);
    for (Eigen::Index k = 0; k < d; ++k) phases(k) = std::exp(cplx(0.0, -es.eigenvalues()(k) * t));
    return es.eigenvectors() * phases.asDiagonal() * es.eigenvectors().adjoint();
}

} // namespace cslab
