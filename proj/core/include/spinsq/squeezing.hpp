#pragma once

#include <optional>
#include <utility>
#include <span>
#include <vector>

#include "spinsq/dynamics.hpp"

namespace spinsq {

/// Default degenerate-direction threshold on |<J>|, relative to J.
inline constexpr double kDegenerateMeanSpin = 1e-9;

struct SqueezingSample {
  double t = 0.0;
  /// Absent when the mean spin is too short to define a direction.
  std::optional<double> xi_s_sq;
  std::optional<double> xi_r_sq;
  double mean_spin_len = 0.0;
};

/// Unit vectors n1, n2 spanning the plane perpendicular to `direction`,
/// built by Gram-Schmidt against the Cartesian axis on which `direction` has
/// its smallest component.
std::pair<Eigen::Vector3d, Eigen::Vector3d> perpendicular_basis(const Eigen::Vector3d& direction);

/// Minimal variance of J along directions perpendicular to <J>.
/// Throws DegenerateDirectionError when |<J>| < kDegenerateMeanSpin * N/2.
double min_perpendicular_variance(const SpinMoments& m, int n_spins);

/// 4 min(Delta J_perp)^2 / N.
double xi_s_squared(const SpinMoments& m, int n_spins);
/// xi_S^2 (J / |<J>|)^2.
double xi_r_squared(const SpinMoments& m, int n_spins);

SqueezingSample squeezing_sample(double t, const SpinMoments& m, int n_spins);
std::vector<SqueezingSample> squeezing_series(const TrajectoryMoments& series, int n_spins);

struct SqueezingMinimum {
  double t_min = 0.0;
  double xi_min = 0.0;
  /// Grid index of the smallest defined sample.
  std::size_t index = 0;
  /// The grid minimum sits on the first or last defined sample (or next to an
  /// undefined one); no interpolation was applied.
  bool at_boundary = false;
};

/// Grid minimum of xi_S^2 refined by a parabola through the bracketing
/// triple. Samples without a defined xi_S^2 are skipped. Throws
/// ParameterError for fewer than 3 samples or when no sample is defined.
SqueezingMinimum find_min_squeezing(std::span<const SqueezingSample> series);
SqueezingMinimum find_min_squeezing(const TrajectoryMoments& series, int n_spins);

}  // namespace spinsq
