#include "spinsq/noise.hpp"

#include <cmath>
#include <random>
#include <string>

namespace spinsq {

void OUParams::validate() const {
  if (!(alpha > 0.0) || !std::isfinite(alpha)) {
    throw ParameterError("OU inverse correlation time must be positive, got " +
                         std::to_string(alpha));
  }
  if (!(sigma_sq >= 0.0) || !std::isfinite(sigma_sq)) {
    throw ParameterError("OU variance must be non-negative, got " + std::to_string(sigma_sq));
  }
}

std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t index) noexcept {
  std::uint64_t z = parent + 0x9e3779b97f4a7c15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

NoisePath sample_ou_path(const OUParams& params, std::size_t n_steps, double dt,
                         std::uint64_t seed) {
  params.validate();
  if (n_steps == 0) {
    throw ParameterError("noise path needs at least one step");
  }
  if (!(dt > 0.0) || !std::isfinite(dt)) {
    throw ParameterError("noise grid step must be positive");
  }

  NoisePath path;
  path.dt = dt;
  path.seed = seed;

  const double decay = std::exp(-params.alpha * dt);
  const double kick = std::sqrt(params.sigma_sq * -std::expm1(-2.0 * params.alpha * dt));
  const double stationary = std::sqrt(params.sigma_sq);

  for (std::size_t channel = 0; channel < 3; ++channel) {
    auto& b = path.samples[channel];
    b.assign(n_steps, 0.0);
    if (params.sigma_sq == 0.0) {
      continue;
    }
    std::mt19937_64 engine(derive_seed(seed, channel));
    std::normal_distribution<double> normal(0.0, 1.0);
    b[0] = stationary * normal(engine);
    for (std::size_t i = 1; i < n_steps; ++i) {
      b[i] = b[i - 1] * decay + kick * normal(engine);
    }
  }
  return path;
}

Operator noise_hamiltonian(const NoisePath& path, std::size_t step_index,
                           const CollectiveOperators& ops) {
  if (step_index >= path.size()) {
    throw BoundsError("noise step " + std::to_string(step_index) + " outside path of length " +
                      std::to_string(path.size()));
  }
  Matrix h = path.samples[0][step_index] * ops.jx.matrix() +
             path.samples[1][step_index] * ops.jy.matrix() +
             path.samples[2][step_index] * ops.jz.matrix();
  return Operator(std::move(h));
}

}  // namespace spinsq
