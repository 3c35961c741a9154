// ensemble_analysis.hpp - density-matrix propagators and Monte Carlo
// ensemble reductions.

#pragma once

#include "cslab/collapse_engine.hpp"
#include "cslab/noise_paths.hpp"
#include "cslab/quantum_core.hpp"

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <vector>

namespace cslab {

struct ProportionInterval {
    double estimate = 0.0;
    double lower = 0.0;
    double upper = 0.0;
    double sigma = 0.0;  // normal-approximation standard error
    bool exact = false;  // Clopper-Pearson (used when the count is < 30)
};

// Two-sided interval at `level` (default 0.997, i.e. ~3 sigma).
ProportionInterval proportion_interval(int successes, int trials, double level = 0.997);

struct EnsembleStats {
    int n_trajectories = 0;
    std::vector<int> outcome_counts;          // per collapse-basis index
    std::vector<double> outcome_weight;       // weight-normalized outcome fractions
    std::vector<ProportionInterval> outcome_ci;
    DensityMatrix mean_density;               // at the last recorded time
    std::vector<double> times;
    std::vector<CMatrix> mean_densities;      // collapse basis, one per recorded time
    std::vector<CMatrix> standard_errors;     // elementwise |complex| standard error
    double ci_level = 0.997;

    cplx offdiag(std::size_t time_index, int j, int k) const { return mean_densities.at(time_index)(j, k); }
    double offdiag_error(std::size_t time_index, int j, int k) const {
        return standard_errors.at(time_index)(j, k).real();
    }
};

DensityMatrix propagate_density_analytic(const DensityMatrix& rho0, const CollapseOperatorSet& ops, double t);

DensityMatrix propagate_density_fourier(const DensityMatrix& rho0, const CollapseOperatorSet& ops, double t,
                                        int quadrature_nodes);

// exp(L t) rho0 for L rho = -i[H, rho] - (lambda/2) sum_n [A_n, [A_n, rho]]; allows H.
DensityMatrix propagate_density_superoperator(const DensityMatrix& rho0, const CollapseOperatorSet& ops, double t);

// Same decay written through transformed operators A' and a symmetric
// positive semidefinite channel matrix G (A = K A', G = K^T K, K may be singular).
DensityMatrix propagate_density_transformed(const DensityMatrix& rho0, const std::vector<HermitianOperator>& primed,
                                            const Eigen::MatrixXd& g, double lambda, double t);

// Random-phase ensemble e^{-i B0 A} psi0 with B0 ~ N(0, lambda t).
DensityMatrix random_phase_ensemble_density(const StateVector& psi0, const HermitianOperator& a, double lambda,
                                            double t, int n_samples, std::uint64_t seed,
                                            CMatrix* standard_error = nullptr);

// Trajectory of the random-phase ensemble (same density, no collapse).
TrajectoryRecord random_phase_trajectory(const StateVector& psi0, const CollapseOperatorSet& ops,
                                         const TimeGrid& grid, std::uint64_t seed, std::uint64_t stream,
                                         const EngineOptions& opts = {});

EnsembleStats mc_ensemble_density(const std::vector<TrajectoryRecord>& records, double ci_level = 0.997);

DensityMatrix nonmarkovian_density_offdiag(const DensityMatrix& rho0, const HermitianOperator& a, double lambda,
                                           const Kernel& kernel, double t);

// Exponent multiplying rho_jk for the F-term generalization, with
// delta = a_j - a_k and sum = a_j + a_k. F(t, t') is used for t' <= t.
cplx fterm_exponent(double delta, double sum, double lambda, const Kernel& kernel,
                    const std::function<double(double, double)>& f, const TimeGrid& grid);

DensityMatrix nonmarkovian_density_fterm(const DensityMatrix& rho0, const HermitianOperator& a, double lambda,
                                         const Kernel& kernel, const std::function<double(double, double)>& f,
                                         const TimeGrid& grid);

// time, Re/Im of rho_jk for every j < k
void write_offdiag_csv(std::ostream& os, const EnsembleStats& stats);

} // namespace cslab
