// collapse_engine.hpp - trajectory-level collapse dynamics.
//
// Linear engine: raw-measure noise, physical probability carried as the
// squared norm (weight). Nonlinear engine: normalized state driven by the
// physical ("cooked") noise directly, weight 1. Both use the same split step
// (H half step, exact collapse factor in the joint eigenbasis, H half step).

#pragma once

#include "cslab/noise_paths.hpp"
#include "cslab/quantum_core.hpp"

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <vector>

namespace cslab {

class CollapseOperatorSet {
public:
    CollapseOperatorSet(std::vector<HermitianOperator> operators, double rate,
                        std::optional<HermitianOperator> hamiltonian = std::nullopt);

    const std::vector<HermitianOperator>& operators() const { return ops_; }
    double rate() const { return rate_; }
    const std::optional<HermitianOperator>& hamiltonian() const { return h_; }
    int dim() const { return dim_; }
    int channels() const { return static_cast<int>(ops_.size()); }

    // Joint eigenbasis (columns). The supplied basis is kept as-is whenever
    // every operator is already diagonal in it, so indices keep their meaning.
    const CMatrix& basis() const { return basis_; }
    bool diagonal_in_input_basis() const { return diagonal_; }
    // eigenvalue(n, i): eigenvalue of operator n on joint basis vector i.
    double eigenvalue(int n, int i) const { return eig_[n][i]; }
    const std::vector<double>& eigenvalues(int n) const { return eig_[n]; }
    // sum_n (max_i a_i^(n) - min_i a_i^(n))^2
    double spread_squared() const { return spread2_; }

private:
    std::vector<HermitianOperator> ops_;
    double rate_;
    std::optional<HermitianOperator> h_;
    int dim_ = 0;
    CMatrix basis_;
    bool diagonal_ = true;
    std::vector<std::vector<double>> eig_;
    double spread2_ = 0.0;
};

struct DetectionOptions {
    double epsilon = 1e-3;
    int dwell_steps = 10;
};

struct Outcome {
    int index = -1;
    double time = 0.0;
};

enum class MeasureKind {
    raw,      // weights carry the physical probability
    physical  // sampled from the physical measure, unit weights
};

struct TrajectoryRecord {
    std::vector<double> times;
    std::vector<StateVector> states;  // unnormalized, input basis
    std::vector<double> log_norm2;    // accumulated log of rescalings removed from states[k]
    double weight = 1.0;
    double log_weight = 0.0;
    std::optional<Outcome> outcome;
    MeasureKind measure = MeasureKind::raw;
    CMatrix basis;  // collapse basis used for detection
};

// First-passage detector: outcome k once |<a_k|psi>|^2/|psi|^2 >= 1 - eps
// holds for dwell consecutive samples; the reported time is the start of the run.
class OutcomeDetector {
public:
    explicit OutcomeDetector(DetectionOptions opts = {}) : opts_(opts) {}
    // probabilities: normalized populations in the collapse basis.
    void observe(const Eigen::VectorXd& probabilities, double time);
    const std::optional<Outcome>& outcome() const { return found_; }

private:
    DetectionOptions opts_;
    int candidate_ = -1;
    int run_ = 0;
    double run_start_ = 0.0;
    std::optional<Outcome> found_;
};

struct EngineOptions {
    DetectionOptions detection;
    int record_stride = 1;   // record every k-th step; 0 records only the endpoints
    bool stop_on_outcome = false;
    // Linear engine: drop the common factor exp(-w^2 dt / 4 lambda) from every
    // step (a positive function of the noise only). Weights stay exact.
    bool rescaled = true;
};

enum class IncrementLaw {
    branch_mixture,  // pick branch i with prob |c_i|^2, then dB ~ N(2 lambda a_i dt, lambda dt)
    gaussian_drift   // dB = dB0 + 2 lambda <A> dt, dB0 ~ N(0, lambda dt)
};

StateVector closed_form_simple(const StateVector& psi0, const HermitianOperator& a, double lambda, double t, double b_t);

double probability_density_simple(const StateVector& psi0, const HermitianOperator& a, double lambda, double t,
                                  double b_t);

TrajectoryRecord evolve_linear(const StateVector& psi0, const CollapseOperatorSet& ops, const NoisePath& noise,
                               const EngineOptions& opts = {});

TrajectoryRecord evolve_nonlinear(const StateVector& psi0, const CollapseOperatorSet& ops, const TimeGrid& grid,
                                  std::uint64_t seed, std::uint64_t stream, const EngineOptions& opts = {},
                                  IncrementLaw law = IncrementLaw::branch_mixture);

// Ornstein-Uhlenbeck closed form with B' and the effective time
// t - (1 - e^{-alpha t})/alpha; w is taken piecewise constant on the grid.
StateVector evolve_nonmarkovian_closed(const StateVector& psi0, const HermitianOperator& a, double lambda,
                                       double alpha, const NoisePath& noise);

// Direct evaluation of the time-smeared exponent
// -(1/4 lambda) int int (w - 2 lambda A) G (w - 2 lambda A) for H = 0.
StateVector evolve_nonmarkovian_direct(const StateVector& psi0, const HermitianOperator& a, double lambda,
                                       const Kernel& kernel, const NoisePath& noise);

// Effective time int int_0^t G used by the OU closed form.
double ou_effective_time(double alpha, double t);

// Gauss-Hermite evaluation of the Gaussian-weighted superposition of unitaries.
StateVector fourier_form_eval(const StateVector& psi0, const HermitianOperator& a, double lambda, double t,
                              double b_t, int quadrature_nodes);

std::optional<Outcome> detect_outcome(const TrajectoryRecord& record, double epsilon = 1e-3, int dwell_steps = 10);

// Sequential importance resampling of the raw-measure linear engine. The
// evidence estimate Z = prod_k mean(incremental weight) is unbiased for 1.
struct PopulationResult {
    int n_particles = 0;
    double log_evidence = 0.0;
    std::vector<double> outcome_fraction;  // weighted, final-time populations >= 1 - eps
    double unresolved_fraction = 0.0;
    int resample_count = 0;
};

PopulationResult run_weighted_population(const StateVector& psi0, const CollapseOperatorSet& ops,
                                         const TimeGrid& grid, int n_particles, std::uint64_t seed,
                                         std::uint64_t stream, double epsilon = 1e-3, double ess_threshold = 0.5);

// Independent populations (stream = replica index) averaged; the standard
// errors come from the replica spread, since repeated resampling makes a single
// population's outcome fractions far noisier than binomial.
struct PopulationEstimate {
    int replicas = 0;
    int particles_per_replica = 0;
    std::vector<double> outcome_fraction;
    std::vector<double> outcome_error;
    double unresolved_fraction = 0.0;
    double mean_evidence = 0.0;   // replica mean of Z, expected 1
    double evidence_error = 0.0;
    std::vector<PopulationResult> runs;
};

PopulationEstimate estimate_weighted_population(const StateVector& psi0, const CollapseOperatorSet& ops,
                                                const TimeGrid& grid, int particles_per_replica, int replicas,
                                                std::uint64_t seed, int jobs = 1, double epsilon = 1e-3);

// Runs fn(0..n-1) on up to `jobs` threads; fn must write only to its own slot.
void parallel_for(int n, int jobs, const std::function<void(int)>& fn);

// time, |amplitude_i|^2 (input basis), norm2, weight
void write_trajectory_csv(std::ostream& os, const TrajectoryRecord& record);

} // namespace cslab
