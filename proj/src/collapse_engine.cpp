#include "cslab/collapse_engine.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <iomanip>
#include <mutex>
#include <numbers>
#include <ostream>
#include <stdexcept>
#include <string>
#include <thread>
#include <tuple>
#include <utility>

namespace cslab {

namespace {

bool is_diagonal(const CMatrix& m) {
    double scale = 0.0, off = 0.0;
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
            scale = std::max(scale, std::abs(m(i, j)));
            if (i != j) off = std::max(off, std::abs(m(i, j)));
        }
    return off <= 1e-12 * std::max(scale, 1e-300);
}

// Single-operator eigen data, keeping the input basis when A is diagonal.
struct DiagonalForm {
    CMatrix v;
    std::vector<double> a;
    bool identity = true;

    CVector to_eigen(const CVector& psi) const { return identity ? psi : CVector(v.adjoint() * psi); }
    CVector from_eigen(const CVector& c) const { return identity ? c : CVector(v * c); }
};

DiagonalForm diagonal_form(const HermitianOperator& op) {
    DiagonalForm f;
    const CMatrix& m = op.matrix();
    if (is_diagonal(m)) {
        for (Eigen::Index i = 0; i < m.rows(); ++i) f.a.push_back(m(i, i).real());
        return f;
    }
    const EigenSystem es = eigendecompose(op);
    f.v = es.basis();
    f.a = es.values;
    f.identity = false;
    return f;
}

void require_same_dim(const StateVector& psi, int d, const char* who) {
    if (psi.dim() != d) throw std::invalid_argument(std::string(who) + ": state/operator dimension mismatch");
}

Eigen::VectorXd populations(const CVector& c) {
    Eigen::VectorXd p = c.cwiseAbs2();
    const double s = p.sum();
    if (s > 0.0) p /= s;
    return p;
}

class Recorder {
public:
    Recorder(TrajectoryRecord& rec, const CMatrix& basis, bool identity, int stride, int n_steps)
        : rec_(rec), basis_(basis), identity_(identity), stride_(stride), n_steps_(n_steps) {}

    void maybe_push(int step, double t, const CVector& c, double log_norm2, bool force = false) {
        const bool due = force || step == 0 || step == n_steps_ || (stride_ > 0 && step % stride_ == 0);
        if (!due) return;
        if (!rec_.times.empty() && rec_.times.back() == t) return;
        rec_.times.push_back(t);
        rec_.states.emplace_back(identity_ ? c : CVector(basis_ * c));
        rec_.log_norm2.push_back(log_norm2);
    }

private:
    TrajectoryRecord& rec_;
    const CMatrix& basis_;
    bool identity_;
    int stride_;
    int n_steps_;
};

CMatrix half_step_in_basis(const CollapseOperatorSet& ops, double dt) {
    const CMatrix u = unitary_propagator(*ops.hamiltonian(), 0.5 * dt);
    if (ops.diagonal_in_input_basis()) return u;
    return ops.basis().adjoint() * u * ops.basis();
}

void check_step_size(const CollapseOperatorSet& ops, double dt) {
    const double measure = dt * ops.rate() * ops.spread_squared();
    if (measure > 0.01 * (1.0 + 1e-12))  // allow rounding at the boundary
        throw std::invalid_argument("step-size rule violated: dt*lambda*spread^2 = " + std::to_string(measure) +
                                    " > 0.01");
}

} // namespace

// ---------------------------------------------------------------------------

CollapseOperatorSet::CollapseOperatorSet(std::vector<HermitianOperator> operators, double rate,
                                         std::optional<HermitianOperator> hamiltonian)
    : ops_(std::move(operators)), rate_(rate), h_(std::move(hamiltonian)) {
    if (ops_.empty()) throw std::invalid_argument("CollapseOperatorSet: need at least one operator");
    if (!(rate_ >= 0.0) || !std::isfinite(rate_)) throw std::invalid_argument("CollapseOperatorSet: rate must be >= 0");
    dim_ = ops_.front().dim();
    if (dim_ > kMaxDynamicsDim) throw std::invalid_argument("CollapseOperatorSet: dimension exceeds 64");
    for (const auto& op : ops_)
        if (op.dim() != dim_) throw std::invalid_argument("CollapseOperatorSet: operator dimensions differ");
    if (h_ && h_->dim() != dim_) throw std::invalid_argument("CollapseOperatorSet: Hamiltonian dimension differs");
    for (std::size_t i = 0; i < ops_.size(); ++i)
        for (std::size_t j = i + 1; j < ops_.size(); ++j)
            if (!commutes(ops_[i], ops_[j]))
                throw std::invalid_argument("CollapseOperatorSet: operators do not commute");

    diagonal_ = std::all_of(ops_.begin(), ops_.end(), [](const auto& op) { return is_diagonal(op.matrix()); });
    eig_.assign(ops_.size(), std::vector<double>(dim_));
    if (diagonal_) {
        basis_ = CMatrix::Identity(dim_, dim_);
        for (std::size_t n = 0; n < ops_.size(); ++n)
            for (int i = 0; i < dim_; ++i) eig_[n][i] = ops_[n].matrix()(i, i).real();
    } else {
        // A generic real combination separates every joint eigenspace.
        bool ok = false;
        for (int attempt = 0; attempt < 8 && !ok; ++attempt) {
            CMatrix comb = CMatrix::Zero(dim_, dim_);
            for (std::size_t n = 0; n < ops_.size(); ++n) {
                const double w = 1.0 / (1.0 + (n + 0.5) * (0.7548776662466927 + 0.1 * attempt));
                const double s = std::max(ops_[n].matrix().norm(), 1e-300);
                comb += (w / s) * ops_[n].matrix();
            }
            basis_ = eigendecompose(HermitianOperator(hermitian_part(comb))).basis();
            ok = true;
            for (std::size_t n = 0; n < ops_.size() && ok; ++n) {
                const CMatrix d = basis_.adjoint() * ops_[n].matrix() * basis_;
                double off = 0.0;
                for (int i = 0; i < dim_; ++i)
                    for (int j = 0; j < dim_; ++j)
                        if (i != j) off = std::max(off, std::abs(d(i, j)));
                ok = off <= 1e-8 * std::max(1.0, ops_[n].max_abs());
                for (int i = 0; i < dim_; ++i) eig_[n][i] = d(i, i).real();
            }
        }
        if (!ok) throw std::runtime_error("CollapseOperatorSet: could not build a joint eigenbasis");
    }
    for (const auto& e : eig_) {
        const auto [lo, hi] = std::minmax_element(e.begin(), e.end());
        spread2_ += (*hi - *lo) * (*hi - *lo);
    }
}

void OutcomeDetector::observe(const Eigen::VectorXd& p, double time) {
    if (found_) return;
    Eigen::Index k = 0;
    const double pmax = p.maxCoeff(&k);
    if (pmax >= 1.0 - opts_.epsilon) {
        if (static_cast<int>(k) == candidate_) {
            ++run_;
        } else {
            candidate_ = static_cast<int>(k);
            run_ = 1;
            run_start_ = time;
        }
        if (run_ >= std::max(1, opts_.dwell_steps)) found_ = Outcome{candidate_, run_start_};
    } else {
        candidate_ = -1;
        run_ = 0;
    }
}

// ---------------------------------------------------------------------------

StateVector closed_form_simple(const StateVector& psi0, const HermitianOperator& a, double lambda, double t,
                               double b_t) {
    if (!(t > 0.0)) throw std::invalid_argument("closed_form_simple: t must be positive");
    if (!(lambda > 0.0)) throw std::invalid_argument("closed_form_simple: lambda must be positive");
    require_same_dim(psi0, a.dim(), "closed_form_simple");
    const DiagonalForm f = diagonal_form(a);
    CVector c = f.to_eigen(psi0.amplitudes());
    for (int i = 0; i < psi0.dim(); ++i) {
        const double x = b_t - 2.0 * lambda * t * f.a[i];
        c(i) *= std::exp(-x * x / (4.0 * lambda * t));
    }
    return StateVector(f.from_eigen(c), psi0.labels());
}

double probability_density_simple(const StateVector& psi0, const HermitianOperator& a, double lambda, double t,
                                  double b_t) {
    return norm_squared(closed_form_simple(psi0, a, lambda, t, b_t));
}

TrajectoryRecord evolve_linear(const StateVector& psi0, const CollapseOperatorSet& ops, const NoisePath& noise,
                               const EngineOptions& opts) {
    require_same_dim(psi0, ops.dim(), "evolve_linear");
    if (noise.channels() != ops.channels())
        throw std::invalid_argument("evolve_linear: noise channel count must equal operator count");
    const TimeGrid& grid = noise.grid;
    check_step_size(ops, grid.dt);
    const double lambda = ops.rate();
    if (!opts.rescaled && !(lambda > 0.0))
        throw std::invalid_argument("evolve_linear: unrescaled factor needs lambda > 0");
    const int d = ops.dim(), nch = ops.channels(), n = grid.n_steps;
    const bool ident = ops.diagonal_in_input_basis();
    const bool has_h = ops.hamiltonian().has_value();
    const CMatrix uh = has_h ? half_step_in_basis(ops, grid.dt) : CMatrix();

    TrajectoryRecord rec;
    rec.measure = MeasureKind::raw;
    rec.basis = ops.basis();
    Recorder recorder(rec, ops.basis(), ident, opts.record_stride, n);
    OutcomeDetector detector(opts.detection);

    CVector c = ident ? psi0.amplitudes() : CVector(ops.basis().adjoint() * psi0.amplitudes());
    double log_n2 = 0.0;
    recorder.maybe_push(0, grid.t0, c, log_n2);
    detector.observe(populations(c), grid.t0);

    std::vector<double> db(nch);
    Eigen::VectorXd expo(d);
    int k = 0;
    for (; k < n; ++k) {
        if (opts.stop_on_outcome && detector.outcome()) break;
        if (has_h) c = uh * c;
        for (int ch = 0; ch < nch; ++ch) db[ch] = noise.increment(ch, k);
        for (int i = 0; i < d; ++i) {
            double e = 0.0;
            for (int ch = 0; ch < nch; ++ch) {
                const double ai = ops.eigenvalue(ch, i);
                if (opts.rescaled) {
                    e += db[ch] * ai - lambda * grid.dt * ai * ai;
                } else {
                    const double x = db[ch] - 2.0 * lambda * grid.dt * ai;
                    e -= x * x / (4.0 * lambda * grid.dt);
                }
            }
            expo(i) = e;
        }
        const double emax = expo.maxCoeff();
        const double shift = std::abs(emax) > 50.0 ? emax : 0.0;
        for (int i = 0; i < d; ++i) c(i) *= std::exp(expo(i) - shift);
        log_n2 += 2.0 * shift;
        if (has_h) c = uh * c;

        const double n2 = c.squaredNorm();
        if (!(n2 > 0.0) || !std::isfinite(n2)) throw std::runtime_error("evolve_linear: state norm lost");
        if (n2 < 1e-6 || n2 > 1e6) {
            c /= std::sqrt(n2);
            log_n2 += std::log(n2);
        }
        const double t = grid.time(k + 1);
        detector.observe(populations(c), t);
        recorder.maybe_push(k + 1, t, c, log_n2);
    }
    recorder.maybe_push(k, grid.time(k), c, log_n2, true);
    rec.log_weight = std::log(c.squaredNorm()) + log_n2;
    rec.weight = std::exp(rec.log_weight);
    rec.outcome = detector.outcome();
    return rec;
}

TrajectoryRecord evolve_nonlinear(const StateVector& psi0, const CollapseOperatorSet& ops, const TimeGrid& grid,
                                  std::uint64_t seed, std::uint64_t stream, const EngineOptions& opts,
                                  IncrementLaw law) {
    require_same_dim(psi0, ops.dim(), "evolve_nonlinear");
    const double n0 = norm_squared(psi0);
    if (!(n0 > 0.0)) throw std::invalid_argument("evolve_nonlinear: zero initial state");
    check_step_size(ops, grid.dt);
    const double lambda = ops.rate(), dt = grid.dt;
    const double sd = std::sqrt(kNoiseVariancePerRate * lambda * dt);
    const int d = ops.dim(), nch = ops.channels(), n = grid.n_steps;
    const bool ident = ops.diagonal_in_input_basis();
    const bool has_h = ops.hamiltonian().has_value();
    const CMatrix uh = has_h ? half_step_in_basis(ops, dt) : CMatrix();

    numerics::Rng rng(seed, stream);
    TrajectoryRecord rec;
    rec.measure = MeasureKind::physical;
    rec.basis = ops.basis();
    Recorder recorder(rec, ops.basis(), ident, opts.record_stride, n);
    OutcomeDetector detector(opts.detection);

    CVector c = ident ? psi0.amplitudes() : CVector(ops.basis().adjoint() * psi0.amplitudes());
    c /= std::sqrt(n0);
    recorder.maybe_push(0, grid.t0, c, 0.0);
    detector.observe(populations(c), grid.t0);

    std::vector<double> db(nch);
    int k = 0;
    for (; k < n; ++k) {
        if (opts.stop_on_outcome && detector.outcome()) break;
        if (has_h) c = uh * c;
        const Eigen::VectorXd p = populations(c);
        if (law == IncrementLaw::branch_mixture) {
            const double u = rng.uniform();
            int branch = d - 1;
            double acc = 0.0;
            for (int i = 0; i < d; ++i) {
                acc += p(i);
                if (u < acc) {
                    branch = i;
                    break;
                }
            }
            for (int ch = 0; ch < nch; ++ch) db[ch] = 2.0 * lambda * dt * ops.eigenvalue(ch, branch) + sd * rng.normal();
        } else {
            for (int ch = 0; ch < nch; ++ch) {
                double mean = 0.0;
                for (int i = 0; i < d; ++i) mean += p(i) * ops.eigenvalue(ch, i);
                db[ch] = sd * rng.normal() + 2.0 * lambda * dt * mean;
            }
        }
        for (int i = 0; i < d; ++i) {
            double e = 0.0;
            for (int ch = 0; ch < nch; ++ch) {
                const double ai = ops.eigenvalue(ch, i);
                e += db[ch] * ai - lambda * dt * ai * ai;
            }
            c(i) *= std::exp(e);
        }
        double n2 = c.squaredNorm();
        if (!(n2 >= 1e-300) || !std::isfinite(n2))
            throw std::runtime_error("evolve_nonlinear: norm collapsed below 1e-300 at step " + std::to_string(k));
        c /= std::sqrt(n2);
        if (has_h) {
            c = uh * c;
            c /= c.norm();
        }
        const double t = grid.time(k + 1);
        detector.observe(populations(c), t);
        recorder.maybe_push(k + 1, t, c, 0.0);
    }
    recorder.maybe_push(k, grid.time(k), c, 0.0, true);
    rec.weight = 1.0;
    rec.log_weight = 0.0;
    rec.outcome = detector.outcome();
    return rec;
}

double ou_effective_time(double alpha, double t) {
    if (!(alpha > 0.0)) throw std::invalid_argument("ou_effective_time: alpha must be positive");
    return t + std::expm1(-alpha * t) / alpha;
}

StateVector evolve_nonmarkovian_closed(const StateVector& psi0, const HermitianOperator& a, double lambda,
                                       double alpha, const NoisePath& noise) {
    if (!(alpha > 0.0)) throw std::invalid_argument("evolve_nonmarkovian_closed: alpha must be positive");
    if (!(lambda > 0.0)) throw std::invalid_argument("evolve_nonmarkovian_closed: lambda must be positive");
    if (noise.channels() != 1) throw std::invalid_argument("evolve_nonmarkovian_closed: single-channel noise expected");
    require_same_dim(psi0, a.dim(), "evolve_nonmarkovian_closed");
    const int n = noise.grid.n_steps;
    const double dt = noise.grid.dt;
    const double t = n * dt;
    const double teff = ou_effective_time(alpha, t);
    if (n == 0 || teff <= 0.0) return psi0;

    // B'(t) with w piecewise constant: integrate the weight exactly over each cell.
    numerics::CompensatedSum bp;
    for (int k = 0; k < n; ++k) {
        const double s0 = k * dt, s1 = (k + 1) * dt;
        const double cell = (s1 - s0) - 0.5 * ((std::exp(-alpha * s0) - std::exp(-alpha * s1)) +
                                               (std::exp(-alpha * (t - s1)) - std::exp(-alpha * (t - s0)))) /
                                                  alpha;
        bp.add(noise.increment(0, k) / dt * cell);
    }
    const double bprime = bp.value();
    const DiagonalForm f = diagonal_form(a);
    CVector c = f.to_eigen(psi0.amplitudes());
    for (int i = 0; i < psi0.dim(); ++i) {
        const double x = bprime - 2.0 * lambda * f.a[i] * teff;
        c(i) *= std::exp(-x * x / (4.0 * lambda * teff));
    }
    return StateVector(f.from_eigen(c), psi0.labels());
}

StateVector evolve_nonmarkovian_direct(const StateVector& psi0, const HermitianOperator& a, double lambda,
                                       const Kernel& kernel, const NoisePath& noise) {
    if (!(lambda > 0.0)) throw std::invalid_argument("evolve_nonmarkovian_direct: lambda must be positive");
    if (noise.channels() != 1) throw std::invalid_argument("evolve_nonmarkovian_direct: single-channel noise expected");
    require_same_dim(psi0, a.dim(), "evolve_nonmarkovian_direct");
    const int n = noise.grid.n_steps;
    if (n == 0) return psi0;
    const Eigen::MatrixXd g = kernel_cell_gram(kernel, noise.grid);
    Eigen::VectorXd w(n);
    for (int k = 0; k < n; ++k) w(k) = noise.increment(0, k) / noise.grid.dt;
    const Eigen::VectorXd gw = g * w;
    const double wgw = w.dot(gw);
    const double wg1 = gw.sum();  // symmetric: w^T G 1
    const double s = g.sum();
    const DiagonalForm f = diagonal_form(a);
    CVector c = f.to_eigen(psi0.amplitudes());
    for (int i = 0; i < psi0.dim(); ++i) {
        const double ai = f.a[i];
        // -(1/4 lambda)(w - 2 lambda a)^T G (w - 2 lambda a)
        const double e = -(wgw - 4.0 * lambda * ai * wg1 + 4.0 * lambda * lambda * ai * ai * s) / (4.0 * lambda);
        c(i) *= std::exp(e);
    }
    return StateVector(f.from_eigen(c), psi0.labels());
}

StateVector fourier_form_eval(const StateVector& psi0, const HermitianOperator& a, double lambda, double t,
                              double b_t, int quadrature_nodes) {
    if (!(t > 0.0) || !(lambda > 0.0)) throw std::invalid_argument("fourier_form_eval: need t > 0 and lambda > 0");
    require_same_dim(psi0, a.dim(), "fourier_form_eval");
    const auto rule = numerics::gauss_hermite(quadrature_nodes);
    const DiagonalForm f = diagonal_form(a);
    CVector c = f.to_eigen(psi0.amplitudes());
    const double root = std::sqrt(2.0 * lambda * t);
    for (int i = 0; i < psi0.dim(); ++i) {
        const double u = (b_t - 2.0 * lambda * t * f.a[i]) / root;
        cplx s = 0.0;
        for (int q = 0; q < quadrature_nodes; ++q)
            s += rule.weights[q] * std::exp(cplx(0.0, std::numbers::sqrt2 * rule.nodes[q] * u));
        c(i) *= s / std::sqrt(std::numbers::pi);
    }
    return StateVector(f.from_eigen(c), psi0.labels());
}

std::optional<Outcome> detect_outcome(const TrajectoryRecord& record, double epsilon, int dwell_steps) {
    OutcomeDetector det({epsilon, dwell_steps});
    const bool ident = record.basis.size() == 0 || is_diagonal(record.basis);
    for (std::size_t k = 0; k < record.states.size(); ++k) {
        const CVector& s = record.states[k].amplitudes();
        // a diagonal basis can only carry phases, which populations ignore
        CVector c = ident ? s : CVector(record.basis.adjoint() * s);
        det.observe(populations(c), record.times[k]);
        if (det.outcome()) break;
    }
    return det.outcome();
}

PopulationResult run_weighted_population(const StateVector& psi0, const CollapseOperatorSet& ops,
                                         const TimeGrid& grid, int n_particles, std::uint64_t seed,
                                         std::uint64_t stream, double epsilon, double ess_threshold) {
    if (n_particles < 1) throw std::invalid_argument("run_weighted_population: need particles");
    require_same_dim(psi0, ops.dim(), "run_weighted_population");
    check_step_size(ops, grid.dt);
    const int d = ops.dim(), nch = ops.channels(), np = n_particles;
    const double lambda = ops.rate(), dt = grid.dt;
    const double sd = std::sqrt(kNoiseVariancePerRate * lambda * dt);
    const bool ident = ops.diagonal_in_input_basis();
    const bool has_h = ops.hamiltonian().has_value();
    const CMatrix uh = has_h ? half_step_in_basis(ops, dt) : CMatrix();

    CVector c0 = ident ? psi0.amplitudes() : CVector(ops.basis().adjoint() * psi0.amplitudes());
    c0 /= c0.norm();
    CMatrix parts = c0.replicate(1, np);
    std::vector<double> w(np, 1.0 / np), inc(np);
    numerics::Rng rng(seed, stream);
    PopulationResult out;
    out.n_particles = np;
    double log_z = 0.0;
    std::vector<double> db(nch);

    for (int k = 0; k < grid.n_steps; ++k) {
        for (int j = 0; j < np; ++j) {
            auto col = parts.col(j);
            if (has_h) col = uh * col;
            for (int ch = 0; ch < nch; ++ch) db[ch] = sd * rng.normal();
            for (int i = 0; i < d; ++i) {
                double e = 0.0;
                for (int ch = 0; ch < nch; ++ch) {
                    const double ai = ops.eigenvalue(ch, i);
                    e += db[ch] * ai - lambda * dt * ai * ai;
                }
                col(i) *= std::exp(e);
            }
            if (has_h) col = uh * col;
            inc[j] = col.squaredNorm();
            col /= std::sqrt(inc[j]);
        }
        double wsum = 0.0, wnew = 0.0, w2 = 0.0;
        for (int j = 0; j < np; ++j) wsum += w[j];
        for (int j = 0; j < np; ++j) {
            w[j] *= inc[j];
            wnew += w[j];
        }
        log_z += std::log(wnew / wsum);
        for (int j = 0; j < np; ++j) {
            w[j] /= wnew;
            w2 += w[j] * w[j];
        }
        const double ess = 1.0 / w2;
        if (ess < ess_threshold * np) {
            // systematic resampling
            CMatrix next(d, np);
            const double u0 = rng.uniform() / np;
            double cum = w[0];
            int src = 0;
            for (int j = 0; j < np; ++j) {
                const double u = u0 + static_cast<double>(j) / np;
                while (u > cum && src < np - 1) cum += w[++src];
                next.col(j) = parts.col(src);
            }
            parts = std::move(next);
            std::fill(w.begin(), w.end(), 1.0 / np);
            ++out.resample_count;
        }
    }
    out.log_evidence = log_z;
    out.outcome_fraction.assign(d, 0.0);
    double resolved = 0.0;
    for (int j = 0; j < np; ++j) {
        const Eigen::VectorXd p = parts.col(j).cwiseAbs2();
        Eigen::Index kmax = 0;
        if (p.maxCoeff(&kmax) >= 1.0 - epsilon) {
            out.outcome_fraction[kmax] += w[j];
            resolved += w[j];
        }
    }
    out.unresolved_fraction = std::max(0.0, 1.0 - resolved);
    return out;
}

void parallel_for(int n, int jobs, const std::function<void(int)>& fn) {
    if (n <= 0) return;
    const int workers = std::max(1, std::min(jobs, n));
    if (workers == 1) {
        for (int i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<int> next{0};
    std::exception_ptr first_error;
    int first_index = n;
    std::mutex err_mutex;
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (int t = 0; t < workers; ++t) {
        pool.emplace_back([&] {
            for (int i = next.fetch_add(1); i < n; i = next.fetch_add(1)) {
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard lock(err_mutex);
                    if (i < first_index) {
                        first_index = i;
                        first_error = std::current_exception();
                    }
                }
            }
        });
    }
    for (auto& th : pool) th.join();
    if (first_error) std::rethrow_exception(first_error);
}

PopulationEstimate estimate_weighted_population(const StateVector& psi0, const CollapseOperatorSet& ops,
                                                const TimeGrid& grid, int particles_per_replica, int replicas,
                                                std::uint64_t seed, int jobs, double epsilon) {
    if (replicas < 2) throw std::invalid_argument("estimate_weighted_population: need >= 2 replicas");
    PopulationEstimate est;
    est.replicas = replicas;
    est.particles_per_replica = particles_per_replica;
    est.runs.resize(replicas);
    parallel_for(replicas, jobs, [&](int r) {
        est.runs[r] = run_weighted_population(psi0, ops, grid, particles_per_replica, seed, static_cast<std::uint64_t>(r),
                                              epsilon);
    });
    const int d = ops.dim();
    const double n = replicas;
    auto mean_se = [n](const std::vector<double>& x) {
        double m = 0.0, v = 0.0;
        for (double e : x) m += e;
        m /= n;
        for (double e : x) v += (e - m) * (e - m);
        return std::pair{m, std::sqrt(v / (n - 1.0) / n)};
    };
    std::vector<double> x(replicas);
    for (int k = 0; k < d; ++k) {
        for (int r = 0; r < replicas; ++r) x[r] = est.runs[r].outcome_fraction[k];
        const auto [m, se] = mean_se(x);
        est.outcome_fraction.push_back(m);
        est.outcome_error.push_back(se);
    }
    for (int r = 0; r < replicas; ++r) x[r] = est.runs[r].unresolved_fraction;
    est.unresolved_fraction = mean_se(x).first;
    for (int r = 0; r < replicas; ++r) x[r] = std::exp(est.runs[r].log_evidence);
    std::tie(est.mean_evidence, est.evidence_error) = mean_se(x);
    return est;
}

void write_trajectory_csv(std::ostream& os, const TrajectoryRecord& record) {
    const int d = record.states.empty() ? 0 : record.states.front().dim();
    os << "time";
    for (int i = 0; i < d; ++i) os << ",p" << i;
    os << ",norm2,weight\n";
    os << std::setprecision(17);
    for (std::size_t k = 0; k < record.states.size(); ++k) {
        const CVector& s = record.states[k].amplitudes();
        os << record.times[k];
        for (int i = 0; i < d; ++i) os << ',' << std::norm(s(i));
        os << ',' << s.squaredNorm() * std::exp(record.log_norm2[k]) << ',' << record.weight << '\n';
    }
}

} // namespace cslab
