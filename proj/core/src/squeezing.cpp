#include "spinsq/squeezing.hpp"

#include <cmath>
#include <string>

namespace spinsq {

std::pair<Eigen::Vector3d, Eigen::Vector3d> perpendicular_basis(const Eigen::Vector3d& direction) {
  const Eigen::Vector3d n0 = direction.normalized();
  Eigen::Index pivot = 0;
  n0.cwiseAbs().minCoeff(&pivot);
  const Eigen::Vector3d axis = Eigen::Vector3d::Unit(pivot);
  const Eigen::Vector3d n1 = (axis - axis.dot(n0) * n0).normalized();
  const Eigen::Vector3d n2 = n0.cross(n1);
  return {n1, n2};
}

double min_perpendicular_variance(const SpinMoments& m, int n_spins) {
  const double length = m.mean.norm();
  const double j = 0.5 * n_spins;
  if (!(length >= kDegenerateMeanSpin * j)) {
    throw DegenerateDirectionError("mean spin length " + std::to_string(length) +
                                   " too short to define a direction");
  }
  const auto [n1, n2] = perpendicular_basis(m.mean);
  // Perpendicular components have zero mean, so these are covariances.
  const double g11 = n1.dot(m.second * n1);
  const double g22 = n2.dot(m.second * n2);
  const double g12 = n1.dot(m.second * n2);
  const double lambda = 0.5 * (g11 + g22 - std::hypot(g11 - g22, 2.0 * g12));
  return std::max(0.0, lambda);
}

double xi_s_squared(const SpinMoments& m, int n_spins) {
  return 4.0 * min_perpendicular_variance(m, n_spins) / n_spins;
}

double xi_r_squared(const SpinMoments& m, int n_spins) {
  const double ratio = 0.5 * n_spins / m.mean.norm();
  return xi_s_squared(m, n_spins) * ratio * ratio;
}

SqueezingSample squeezing_sample(double t, const SpinMoments& m, int n_spins) {
  SqueezingSample s;
  s.t = t;
  s.mean_spin_len = m.mean.norm();
  try {
    const double xs = xi_s_squared(m, n_spins);
    const double ratio = 0.5 * n_spins / s.mean_spin_len;
    s.xi_s_sq = xs;
    s.xi_r_sq = xs * ratio * ratio;
  } catch (const DegenerateDirectionError&) {
  }
  return s;
}

std::vector<SqueezingSample> squeezing_series(const TrajectoryMoments& series, int n_spins) {
  std::vector<SqueezingSample> out;
  out.reserve(series.size());
  for (std::size_t k = 0; k < series.size(); ++k) {
    out.push_back(squeezing_sample(series.times[k], series.moments[k], n_spins));
  }
  return out;
}

SqueezingMinimum find_min_squeezing(std::span<const SqueezingSample> series) {
  if (series.size() < 3) {
    throw ParameterError("minimum search needs at least 3 samples, got " +
                         std::to_string(series.size()));
  }
  std::optional<std::size_t> best;
  std::size_t first_defined = series.size();
  std::size_t last_defined = 0;
  for (std::size_t k = 0; k < series.size(); ++k) {
    if (!series[k].xi_s_sq) {
      continue;
    }
    first_defined = std::min(first_defined, k);
    last_defined = k;
    if (!best || *series[k].xi_s_sq < *series[*best].xi_s_sq) {
      best = k;
    }
  }
  if (!best) {
    throw ParameterError("no sample has a defined squeezing parameter");
  }

  const std::size_t k = *best;
  SqueezingMinimum out{series[k].t, *series[k].xi_s_sq, k, false};
  if (k == first_defined || k == last_defined || !series[k - 1].xi_s_sq ||
      !series[k + 1].xi_s_sq) {
    out.at_boundary = true;
    return out;
  }

  const double t0 = series[k - 1].t;
  const double t1 = series[k].t;
  const double t2 = series[k + 1].t;
  const double y0 = *series[k - 1].xi_s_sq;
  const double y1 = *series[k].xi_s_sq;
  const double y2 = *series[k + 1].xi_s_sq;
  // Vertex of the parabola through three (possibly unevenly spaced) points.
  const double d01 = (y1 - y0) / (t1 - t0);
  const double d12 = (y2 - y1) / (t2 - t1);
  const double curvature = (d12 - d01) / (t2 - t0);
  if (!(curvature > 0.0)) {
    return out;
  }
  const double t_star = 0.5 * (t0 + t1) - d01 / (2.0 * curvature);
  if (t_star < t0 || t_star > t2) {
    return out;
  }
  out.t_min = t_star;
  out.xi_min = y1 + d01 * (t_star - t1) + curvature * (t_star - t0) * (t_star - t1);
  // Guard against rounding pushing the vertex value above the grid value.
  out.xi_min = std::min(out.xi_min, y1);
  return out;
}

SqueezingMinimum find_min_squeezing(const TrajectoryMoments& series, int n_spins) {
  const auto samples = squeezing_series(series, n_spins);
  return find_min_squeezing(samples);
}

}  // namespace spinsq
