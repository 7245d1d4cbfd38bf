#pragma once

// State propagation and ensemble reduction.
//
// Static Hamiltonians are diagonalized once and evaluated exactly at every
// requested time. Time-dependent ones are stepped with the midpoint
// exponential  psi <- exp(-i H(t_k + dt/2, k) dt) psi , whose action is
// evaluated by a shifted, scaled Taylor series on the sparse pattern of H.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SparseCore>

#include "spinsq/hamiltonians.hpp"
#include "spinsq/noise.hpp"
#include "spinsq/spin_core.hpp"

namespace spinsq {

/// First moments <J_a> and symmetrized second moments
/// S_ab = <J_a J_b + J_b J_a> / 2. Linear in the density matrix, so ensemble
/// averages of moments are moments of the averaged state.
struct SpinMoments {
  Eigen::Vector3d mean = Eigen::Vector3d::Zero();
  Eigen::Matrix3d second = Eigen::Matrix3d::Zero();

  Eigen::Matrix3d covariance() const { return second - mean * mean.transpose(); }

  SpinMoments& operator+=(const SpinMoments& other) {
    mean += other.mean;
    second += other.second;
    return *this;
  }
  SpinMoments& operator*=(double scale) {
    mean *= scale;
    second *= scale;
    return *this;
  }
};

struct TrajectoryMoments {
  std::vector<double> times;
  std::vector<SpinMoments> moments;

  std::size_t size() const noexcept { return times.size(); }
};

/// Sparse copies of Jx, Jy, Jz for cheap moment evaluation.
class MomentEvaluator {
 public:
  explicit MomentEvaluator(const CollectiveOperators& ops);

  SpinMoments operator()(const PureState& psi) const { return (*this)(psi.amplitudes()); }
  SpinMoments operator()(const Vector& amplitudes) const;

 private:
  using Sparse = Eigen::SparseMatrix<Complex, Eigen::RowMajor>;
  Sparse jx_;
  Sparse jy_;
  Sparse jz_;
};

SpinMoments spin_moments(const CollectiveOperators& ops, const PureState& psi);

struct StepPolicy {
  /// K: midpoint-exponential substeps per control period.
  int substeps_per_period = 128;
  /// Output sampling step of static evolution.
  double dt_static = 1e-3;

  /// Throws ParameterError unless K >= 16 and dt_static > 0.
  void validate() const;
};

/// H at the midpoint time of substep `step`.
using HamiltonianSource = std::function<Operator(double t, std::size_t step)>;
/// Called at t = 0 (step 0) and after every substep (step k = 1..n).
using StateObserver = std::function<void(std::size_t step, double t, const PureState& psi)>;

/// 0, dt, 2 dt, ... up to and including t_end (last point snapped to t_end).
std::vector<double> uniform_times(double t_end, double dt);
/// Number of substeps of length `dt` covering [0, t_end].
std::size_t steps_to_cover(double t_end, double dt);

/// exp(-i H t) psi by a Taylor series with trace shift and norm-based scaling.
/// Uses only the nonzero pattern of H.
PureState taylor_exponential_action(const Operator& h, double t, const PureState& psi);

/// Exact evolution under a time-independent Hermitian H at each time.
TrajectoryMoments propagate_static(const Operator& h, const PureState& psi0,
                                   std::span<const double> times, const CollectiveOperators& ops);
/// Same, reusing an existing eigendecomposition.
TrajectoryMoments propagate_static(const HermitianSpectrum& spectrum, const PureState& psi0,
                                   std::span<const double> times, const CollectiveOperators& ops);

/// Midpoint-exponential stepping over n_steps substeps of length dt. Returns
/// the final state. Throws IntegratorError (carrying `trajectory`) when the
/// norm drifts by more than 1e-8.
PureState drive(const HamiltonianSource& h, const PureState& psi0, std::size_t n_steps, double dt,
                const StateObserver& observer, std::size_t trajectory = 0);

/// Driven evolution with moments recorded at every substep boundary. The
/// substep is period / policy.substeps_per_period.
TrajectoryMoments propagate_driven(const HamiltonianSource& h, const PureState& psi0,
                                   double t_end, double period, const StepPolicy& policy,
                                   const CollectiveOperators& ops);

/// Same stepping for H(t) = sum_i c_i(t) A_i, assembled on one fixed sparse
/// pattern instead of being rebuilt densely every substep. In a rotating
/// frame the recorded moments are mapped back to the lab frame.
TrajectoryMoments propagate_driven(const FramedHamiltonian& h, const PureState& psi0,
                                   double t_end, double period, const StepPolicy& policy,
                                   const CollectiveOperators& ops);

/// Noisy scenario: the noiseless Hamiltonian plus B(t).J from a fresh OU path
/// per trajectory, stepped on the grid period / K. Substep k uses the noise
/// sample at its left edge t_k. In a rotating frame the noise couples to the
/// rotated spin, B.(R J).
struct EnsembleScenario {
  CollectiveOperators ops;
  FramedHamiltonian system;
  PureState initial;
  OUParams noise;
  double t_end = 1.0;
  double period = 1.0;
};

struct EnsembleOptions {
  std::size_t n_paths = 1;
  std::uint64_t master_seed = 0;
  StepPolicy policy{};
  unsigned workers = 1;
  /// Optional scalar averaged per path (e.g. a squeezing parameter). NaN
  /// values are skipped and counted out.
  std::function<double(const SpinMoments&)> per_path_statistic;
};

struct EnsembleResult {
  /// Moments averaged over paths.
  TrajectoryMoments mean_moments;
  /// Per-time mean of per_path_statistic over the paths where it is defined.
  std::vector<double> statistic_mean;
  std::vector<std::size_t> statistic_count;
};

/// Trajectories are reduced in fixed blocks of kEnsembleBlock consecutive
/// indices, and block sums are combined pairwise in block order, so the
/// result is independent of `workers`.
inline constexpr std::size_t kEnsembleBlock = 32;

EnsembleResult run_ensemble(const EnsembleScenario& scenario, const EnsembleOptions& options);

/// Moments of U|psi> from those of |psi>, given U^dagger J_a U = sum_b R_ab J_b.
SpinMoments rotate_moments(const SpinMoments& m, const Eigen::Matrix3d& rotation);

/// Pairwise mean of equally-sampled moment series.
TrajectoryMoments average_moments(std::span<const TrajectoryMoments> series);

}  // namespace spinsq
