#include "cslab/ensemble_analysis.hpp"

#include <boost/math/distributions/beta.hpp>
#include <boost/math/distributions/normal.hpp>
#include <unsupported/Eigen/MatrixFunctions>

#include <cmath>
#include <iomanip>
#include <numbers>
#include <ostream>
#include <stdexcept>

namespace cslab {

namespace {

CMatrix to_basis(const CMatrix& rho, const CollapseOperatorSet& ops) {
    if (ops.diagonal_in_input_basis()) return rho;
    return ops.basis().adjoint() * rho * ops.basis();
}

CMatrix from_basis(const CMatrix& rho, const CollapseOperatorSet& ops) {
    if (ops.diagonal_in_input_basis()) return rho;
    return ops.basis() * rho * ops.basis().adjoint();
}

void require_no_hamiltonian(const CollapseOperatorSet& ops, const char* who) {
    if (ops.hamiltonian()) throw std::invalid_argument(std::string(who) + ": requires H = 0");
}

DensityMatrix finish(const CMatrix& m) { return DensityMatrix(hermitian_part(m)); }

double sq_delta(const CollapseOperatorSet& ops, int j, int k) {
    double s = 0.0;
    for (int n = 0; n < ops.channels(); ++n) {
        const double d = ops.eigenvalue(n, j) - ops.eigenvalue(n, k);
        s += d * d;
    }
    return s;
}

} // namespace

ProportionInterval proportion_interval(int successes, int trials, double level) {
    if (trials <= 0 || successes < 0 || successes > trials)
        throw std::invalid_argument("proportion_interval: need 0 <= successes <= trials, trials > 0");
    ProportionInterval out;
    const double n = trials, p = successes / n;
    const double alpha = 1.0 - level;
    out.estimate = p;
    out.sigma = std::sqrt(p * (1.0 - p) / n);
    if (successes < 30) {
        out.exact = true;
        out.lower = successes == 0 ? 0.0 : boost::math::quantile(boost::math::beta_distribution<>(successes, trials - successes + 1), alpha / 2);
        out.upper = successes == trials ? 1.0 : boost::math::quantile(boost::math::beta_distribution<>(successes + 1, trials - successes), 1.0 - alpha / 2);
    } else {
        const double z = boost::math::quantile(boost::math::normal(), 1.0 - alpha / 2);
        out.lower = std::max(0.0, p - z * out.sigma);
        out.upper = std::min(1.0, p + z * out.sigma);
    }
    return out;
}

DensityMatrix propagate_density_analytic(const DensityMatrix& rho0, const CollapseOperatorSet& ops, double t) {
    require_no_hamiltonian(ops, "propagate_density_analytic");
    if (rho0.dim() != ops.dim()) throw std::invalid_argument("propagate_density_analytic: dimension mismatch");
    CMatrix r = to_basis(rho0.matrix(), ops);
    const double lambda = ops.rate();
    for (int j = 0; j < ops.dim(); ++j)
        for (int k = 0; k < ops.dim(); ++k)
            if (j != k) r(j, k) *= std::exp(-0.5 * lambda * t * sq_delta(ops, j, k));
    return finish(from_basis(r, ops));
}

DensityMatrix propagate_density_fourier(const DensityMatrix& rho0, const CollapseOperatorSet& ops, double t,
                                        int quadrature_nodes) {
    require_no_hamiltonian(ops, "propagate_density_fourier");
    if (rho0.dim() != ops.dim()) throw std::invalid_argument("propagate_density_fourier: dimension mismatch");
    const auto rule = numerics::gauss_hermite(quadrature_nodes);
    const double scale = std::sqrt(2.0 * ops.rate() * t);
    CMatrix r = to_basis(rho0.matrix(), ops);
    for (int j = 0; j < ops.dim(); ++j) {
        for (int k = 0; k < ops.dim(); ++k) {
            cplx factor = 1.0;
            for (int n = 0; n < ops.channels(); ++n) {
                const double d = ops.eigenvalue(n, j) - ops.eigenvalue(n, k);
                cplx s = 0.0;
                for (int q = 0; q < quadrature_nodes; ++q)
                    s += rule.weights[q] * std::exp(cplx(0.0, -rule.nodes[q] * scale * d));
                factor *= s / std::sqrt(std::numbers::pi);
            }
            r(j, k) *= factor;
        }
    }
    return finish(from_basis(r, ops));
}

DensityMatrix propagate_density_superoperator(const DensityMatrix& rho0, const CollapseOperatorSet& ops, double t) {
    const int d = ops.dim();
    if (rho0.dim() != d) throw std::invalid_argument("propagate_density_superoperator: dimension mismatch");
    const int d2 = d * d;
    // column-major vec: vec(X B Y) = (Y^T kron X) vec(B)
    auto kron = [&](const CMatrix& left, const CMatrix& right) {
        CMatrix out(d2, d2);
        for (int i = 0; i < d; ++i)
            for (int j = 0; j < d; ++j) out.block(i * d, j * d, d, d) = left(i, j) * right;
        return out;
    };
    const CMatrix id = CMatrix::Identity(d, d);
    CMatrix liou = CMatrix::Zero(d2, d2);
    if (ops.hamiltonian()) {
        const CMatrix& h = ops.hamiltonian()->matrix();
        liou += cplx(0.0, -1.0) * (kron(id, h) - kron(h.transpose(), id));
    }
    for (const auto& op : ops.operators()) {
        const CMatrix& a = op.matrix();
        const CMatrix a2 = a * a;
        liou -= 0.5 * ops.rate() * (kron(id, a2) - 2.0 * kron(a.transpose(), a) + kron(a2.transpose(), id));
    }
    const CMatrix prop = (liou * t).exp();
    const CVector v = prop * Eigen::Map<const CVector>(rho0.matrix().data(), d2);
    return finish(Eigen::Map<const CMatrix>(v.data(), d, d));
}

DensityMatrix propagate_density_transformed(const DensityMatrix& rho0, const std::vector<HermitianOperator>& primed,
                                            const Eigen::MatrixXd& g, double lambda, double t) {
    const int m = static_cast<int>(primed.size());
    if (g.rows() != m || g.cols() != m) throw std::invalid_argument("propagate_density_transformed: G size mismatch");
    if ((g - g.transpose()).cwiseAbs().maxCoeff() > 1e-12 * std::max(1.0, g.cwiseAbs().maxCoeff()))
        throw std::invalid_argument("propagate_density_transformed: G must be symmetric");
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(g, Eigen::EigenvaluesOnly);
    if (es.eigenvalues().minCoeff() < -1e-10 * std::max(1.0, es.eigenvalues().cwiseAbs().maxCoeff()))
        throw std::invalid_argument("propagate_density_transformed: G must be positive semidefinite");
    const CollapseOperatorSet ops(primed, lambda);
    if (rho0.dim() != ops.dim()) throw std::invalid_argument("propagate_density_transformed: dimension mismatch");
    CMatrix r = to_basis(rho0.matrix(), ops);
    Eigen::VectorXd delta(m);
    for (int j = 0; j < ops.dim(); ++j)
        for (int k = 0; k < ops.dim(); ++k) {
            if (j == k) continue;
            for (int n = 0; n < m; ++n) delta(n) = ops.eigenvalue(n, j) - ops.eigenvalue(n, k);
            r(j, k) *= std::exp(-0.5 * lambda * t * delta.dot(g * delta));
        }
    return finish(from_basis(r, ops));
}

DensityMatrix random_phase_ensemble_density(const StateVector& psi0, const HermitianOperator& a, double lambda,
                                            double t, int n_samples, std::uint64_t seed, CMatrix* standard_error) {
    if (n_samples < 1) throw std::invalid_argument("random_phase_ensemble_density: need samples");
    const CollapseOperatorSet ops({a}, lambda);
    const CMatrix rho = pure_density(psi0).matrix();
    const CMatrix r0 = to_basis(rho, ops);
    const int d = ops.dim();
    const double sd = std::sqrt(kNoiseVariancePerRate * lambda * t);
    numerics::Rng rng(seed, 0);
    CMatrix sum = CMatrix::Zero(d, d);
    Eigen::MatrixXd sum2 = Eigen::MatrixXd::Zero(d, d);
    for (int s = 0; s < n_samples; ++s) {
        const double b0 = sd * rng.normal();
        for (int j = 0; j < d; ++j)
            for (int k = 0; k < d; ++k) {
                const cplx v = r0(j, k) * std::exp(cplx(0.0, -b0 * (ops.eigenvalue(0, j) - ops.eigenvalue(0, k))));
                sum(j, k) += v;
                sum2(j, k) += std::norm(v);
            }
    }
    const CMatrix mean = sum / static_cast<double>(n_samples);
    if (standard_error) {
        standard_error->resize(d, d);
        for (int j = 0; j < d; ++j)
            for (int k = 0; k < d; ++k) {
                const double var = std::max(0.0, sum2(j, k) / n_samples - std::norm(mean(j, k)));
                (*standard_error)(j, k) = std::sqrt(var / std::max(1, n_samples - 1));
            }
    }
    return finish(from_basis(mean, ops));
}

TrajectoryRecord random_phase_trajectory(const StateVector& psi0, const CollapseOperatorSet& ops,
                                         const TimeGrid& grid, std::uint64_t seed, std::uint64_t stream,
                                         const EngineOptions& opts) {
    if (psi0.dim() != ops.dim()) throw std::invalid_argument("random_phase_trajectory: dimension mismatch");
    const double n0 = norm_squared(psi0);
    if (!(n0 > 0.0)) throw std::invalid_argument("random_phase_trajectory: zero initial state");
    const int d = ops.dim(), nch = ops.channels(), n = grid.n_steps;
    const double sd = std::sqrt(kNoiseVariancePerRate * ops.rate() * grid.dt);
    const bool ident = ops.diagonal_in_input_basis();
    CMatrix uh;
    if (ops.hamiltonian()) {
        uh = unitary_propagator(*ops.hamiltonian(), 0.5 * grid.dt);
        if (!ident) uh = ops.basis().adjoint() * uh * ops.basis();
    }
    numerics::Rng rng(seed, stream);
    TrajectoryRecord rec;
    rec.measure = MeasureKind::physical;
    rec.basis = ops.basis();
    OutcomeDetector det(opts.detection);
    CVector c = ident ? psi0.amplitudes() : CVector(ops.basis().adjoint() * psi0.amplitudes());
    c /= std::sqrt(n0);
    auto push = [&](double t) {
        rec.times.push_back(t);
        rec.states.emplace_back(ident ? c : CVector(ops.basis() * c));
        rec.log_norm2.push_back(0.0);
    };
    auto pops = [&] { return Eigen::VectorXd(c.cwiseAbs2() / c.squaredNorm()); };
    push(grid.t0);
    det.observe(pops(), grid.t0);
    std::vector<double> db(nch);
    for (int k = 0; k < n; ++k) {
        if (uh.size()) c = uh * c;
        for (int ch = 0; ch < nch; ++ch) db[ch] = sd * rng.normal();
        for (int i = 0; i < d; ++i) {
            double phase = 0.0;
            for (int ch = 0; ch < nch; ++ch) phase += ops.eigenvalue(ch, i) * db[ch];
            c(i) *= std::exp(cplx(0.0, -phase));
        }
        if (uh.size()) c = uh * c;
        const double t = grid.time(k + 1);
        det.observe(pops(), t);
        const bool due = k + 1 == n || (opts.record_stride > 0 && (k + 1) % opts.record_stride == 0);
        if (due) push(t);
    }
    rec.outcome = det.outcome();
    return rec;
}

EnsembleStats mc_ensemble_density(const std::vector<TrajectoryRecord>& records, double ci_level) {
    if (records.empty()) throw std::invalid_argument("mc_ensemble_density: no records");
    const MeasureKind kind = records.front().measure;
    const std::size_t nt = records.front().times.size();
    const int d = records.front().states.front().dim();
    for (const auto& r : records) {
        if (r.measure != kind) throw std::invalid_argument("mc_ensemble_density: records mix weight conventions");
        if (r.times.size() != nt || r.states.front().dim() != d)
            throw std::invalid_argument("mc_ensemble_density: records do not share a time grid and basis");
    }
    const CMatrix& basis = records.front().basis;
    const bool ident = basis.size() == 0 || basis.isApprox(CMatrix::Identity(d, d));

    // Weights: unit for physical-measure records, self-normalized raw weights otherwise.
    std::vector<double> w(records.size(), 1.0);
    if (kind == MeasureKind::raw) {
        double lmax = -std::numeric_limits<double>::infinity();
        for (const auto& r : records) lmax = std::max(lmax, r.log_weight);
        for (std::size_t i = 0; i < records.size(); ++i) w[i] = std::exp(records[i].log_weight - lmax);
    }
    double wsum = 0.0;
    for (double x : w) wsum += x;

    EnsembleStats st;
    st.ci_level = ci_level;
    st.n_trajectories = static_cast<int>(records.size());
    st.times = records.front().times;
    st.outcome_counts.assign(d, 0);
    st.outcome_weight.assign(d, 0.0);
    for (std::size_t i = 0; i < records.size(); ++i) {
        if (records[i].outcome) {
            ++st.outcome_counts[records[i].outcome->index];
            st.outcome_weight[records[i].outcome->index] += w[i] / wsum;
        }
    }
    for (int k = 0; k < d; ++k) st.outcome_ci.push_back(proportion_interval(st.outcome_counts[k], st.n_trajectories, ci_level));

    for (std::size_t t = 0; t < nt; ++t) {
        CMatrix mean = CMatrix::Zero(d, d);
        std::vector<CMatrix> rhos(records.size());
        for (std::size_t i = 0; i < records.size(); ++i) {
            const CVector& s = records[i].states[t].amplitudes();
            const CVector c = ident ? s : CVector(basis.adjoint() * s);
            rhos[i] = c * c.adjoint() / c.squaredNorm();
            mean += (w[i] / wsum) * rhos[i];
        }
        CMatrix se = CMatrix::Zero(d, d);
        const double n = static_cast<double>(records.size());
        for (int j = 0; j < d; ++j)
            for (int k = 0; k < d; ++k) {
                double acc = 0.0;
                for (std::size_t i = 0; i < records.size(); ++i) acc += w[i] * w[i] * std::norm(rhos[i](j, k) - mean(j, k));
                // weighted estimator variance; reduces to s^2/n for unit weights
                const double var = kind == MeasureKind::physical ? acc / (wsum * wsum) * n / std::max(1.0, n - 1.0)
                                                                  : acc / (wsum * wsum);
                se(j, k) = std::sqrt(var);
            }
        st.mean_densities.push_back(hermitian_part(mean));
        st.standard_errors.push_back(se);
    }
    const CMatrix last = ident ? st.mean_densities.back() : CMatrix(basis * st.mean_densities.back() * basis.adjoint());
    st.mean_density = finish(last);
    return st;
}

DensityMatrix nonmarkovian_density_offdiag(const DensityMatrix& rho0, const HermitianOperator& a, double lambda,
                                           const Kernel& kernel, double t) {
    const CollapseOperatorSet ops({a}, lambda);
    if (rho0.dim() != ops.dim()) throw std::invalid_argument("nonmarkovian_density_offdiag: dimension mismatch");
    const double teff = kernel_double_integral(kernel, t);
    CMatrix r = to_basis(rho0.matrix(), ops);
    for (int j = 0; j < ops.dim(); ++j)
        for (int k = 0; k < ops.dim(); ++k)
            if (j != k) r(j, k) *= std::exp(-0.5 * lambda * sq_delta(ops, j, k) * teff);
    return finish(from_basis(r, ops));
}

cplx fterm_exponent(double delta, double sum, double lambda, const Kernel& kernel,
                    const std::function<double(double, double)>& f, const TimeGrid& grid) {
    const int n = grid.n_steps;
    const double dt = grid.dt, total = grid.duration();
    // u(s) = int_s^T F(t, s) dt on cell midpoints (half weight on the diagonal cell)
    std::vector<double> u(n, 0.0);
    for (int p = 0; p < n; ++p) {
        const double sp = (p + 0.5) * dt;
        double acc = 0.5 * f(sp, sp) * dt;
        for (int i = p + 1; i < n; ++i) acc += f((i + 0.5) * dt, sp) * dt;
        u[p] = acc;
    }
    double phase = 0.0;
    for (double x : u) phase += x * dt;

    // u^T G^{-1} u with the infinite-interval inverse (spectral density 1/Gt).
    int m = 1;
    while (m < 4 * n) m <<= 1;
    std::vector<cplx> buf(m, 0.0);
    for (int p = 0; p < n; ++p) buf[p] = u[p];
    auto spec = numerics::fft(buf);
    for (int l = 0; l < m; ++l) {
        const double gt = spectral_density(kernel, numerics::dft_frequency(l, m, dt));
        if (!(gt > 1e-300)) throw std::domain_error("fterm_exponent: kernel spectrum vanishes inside the grid band");
        spec[l] /= gt;
    }
    const auto back = numerics::ifft(spec);
    double quad = 0.0;
    for (int p = 0; p < n; ++p) quad += u[p] * back[p].real() / m;
    quad *= dt;

    const double gprime = kernel_double_integral(kernel, total) + quad;
    return cplx(-0.5 * lambda * delta * delta * gprime, -lambda * delta * sum * phase);
}

DensityMatrix nonmarkovian_density_fterm(const DensityMatrix& rho0, const HermitianOperator& a, double lambda,
                                         const Kernel& kernel, const std::function<double(double, double)>& f,
                                         const TimeGrid& grid) {
    const CollapseOperatorSet ops({a}, lambda);
    if (rho0.dim() != ops.dim()) throw std::invalid_argument("nonmarkovian_density_fterm: dimension mismatch");
    CMatrix r = to_basis(rho0.matrix(), ops);
    for (int j = 0; j < ops.dim(); ++j)
        for (int k = 0; k < ops.dim(); ++k) {
            if (j == k) continue;
            const double aj = ops.eigenvalue(0, j), ak = ops.eigenvalue(0, k);
            r(j, k) *= std::exp(fterm_exponent(aj - ak, aj + ak, lambda, kernel, f, grid));
        }
    return finish(from_basis(r, ops));
}

void write_offdiag_csv(std::ostream& os, const EnsembleStats& stats) {
    const int d = stats.mean_densities.empty() ? 0 : static_cast<int>(stats.mean_densities.front().rows());
    os << "time";
    for (int j = 0; j < d; ++j)
        for (int k = j + 1; k < d; ++k) os << ",re_" << j << k << ",im_" << j << k << ",se_" << j << k;
    os << '\n' << std::setprecision(17);
    for (std::size_t t = 0; t < stats.times.size(); ++t) {
        os << stats.times[t];
        for (int j = 0; j < d; ++j)
            for (int k = j + 1; k < d; ++k)
                os << ',' << stats.offdiag(t, j, k).real() << ',' << stats.offdiag(t, j, k).imag() << ','
                   << stats.offdiag_error(t, j, k);
        os << '\n';
    }
}

} // namespace cslab
