#pragma once

// Classical colored-noise bath: three independent stationary
// Ornstein-Uhlenbeck channels B_x, B_y, B_z coupled as B.J.
//
// Seed streams. A trajectory seed is derive_seed(master_seed, trajectory) and
// channel k in {0, 1, 2} of that trajectory draws from
// std::mt19937_64(derive_seed(trajectory_seed, k)). Any trajectory can thus be
// regenerated on its own without replaying the others.

#include <array>
#include <cstddef>
#include <cstdint>
#include <vector>

#include "spinsq/spin_core.hpp"

namespace spinsq {

struct OUParams {
  /// Inverse correlation time.
  double alpha = 1.0;
  /// Stationary variance.
  double sigma_sq = 0.0;

  /// Throws ParameterError unless alpha > 0 and sigma_sq >= 0 (both finite).
  void validate() const;
};

struct NoisePath {
  double dt = 0.0;
  /// B_x, B_y, B_z; equal lengths.
  std::array<std::vector<double>, 3> samples;
  std::uint64_t seed = 0;

  std::size_t size() const noexcept { return samples[0].size(); }
};

/// splitmix64 finalizer applied to parent + golden-ratio * (index + 1).
std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t index) noexcept;

/// n_steps samples per channel, B[i] = B(i dt), by stationary-start exact OU sampling:
///   B[0] ~ N(0, s2),  B[i+1] = B[i] e^{-a dt} + sqrt(s2 (1 - e^{-2 a dt})) xi_i.
/// Throws ParameterError for invalid params, n_steps == 0 or dt <= 0.
NoisePath sample_ou_path(const OUParams& params, std::size_t n_steps, double dt,
                         std::uint64_t seed);

/// B_x[i] Jx + B_y[i] Jy + B_z[i] Jz. Throws BoundsError for i >= path.size().
Operator noise_hamiltonian(const NoisePath& path, std::size_t step_index,
                           const CollectiveOperators& ops);

}  // namespace spinsq
