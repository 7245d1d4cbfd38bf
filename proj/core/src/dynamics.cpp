#include "spinsq/dynamics.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <limits>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <utility>

namespace spinsq {

namespace {

using SparseOperator = Eigen::SparseMatrix<Complex, Eigen::RowMajor>;

constexpr double kNormDriftBudget = 1e-8;
// Largest scaled norm handled by one Taylor piece.
constexpr double kTaylorPieceNorm = 3.0;
constexpr int kTaylorMaxTerms = 60;
constexpr double kUnitRoundoff = std::numeric_limits<double>::epsilon() / 2.0;

SparseOperator to_sparse(const Operator& op) { return op.matrix().sparseView(); }

double row_sum_norm(const SparseOperator& h, double shift) {
  double best = 0.0;
  for (Index r = 0; r < h.outerSize(); ++r) {
    double sum = 0.0;
    bool diagonal_seen = false;
    for (SparseOperator::InnerIterator it(h, r); it; ++it) {
      Complex v = it.value();
      if (it.col() == r) {
        v -= shift;
        diagonal_seen = true;
      }
      sum += std::abs(v.real()) + std::abs(v.imag());
    }
    if (!diagonal_seen) {
      sum += std::abs(shift);
    }
    best = std::max(best, sum);
  }
  return best;
}

// exp(-i H t) v, with H shifted by mu = tr(H)/dim and the interval split into
// pieces of scaled norm <= kTaylorPieceNorm.
Vector taylor_action(const SparseOperator& h, double t, Vector v) {
  const Index dim = h.rows();
  Complex trace = 0.0;
  for (Index r = 0; r < dim; ++r) {
    trace += h.coeff(r, r);
  }
  const double mu = trace.real() / static_cast<double>(dim);
  const double eta = std::abs(t) * row_sum_norm(h, mu);
  const int pieces = std::max(1, static_cast<int>(std::ceil(eta / kTaylorPieceNorm)));
  const Complex factor(0.0, -t / pieces);

  Vector term(dim);
  Vector product(dim);
  for (int p = 0; p < pieces; ++p) {
    term = v;
    double previous = std::numeric_limits<double>::infinity();
    bool converged = false;
    for (int k = 1; k <= kTaylorMaxTerms; ++k) {
      product.noalias() = h * term;
      product -= mu * term;
      term = (factor / static_cast<double>(k)) * product;
      v += term;
      const double current = std::sqrt(term.cwiseAbs2().maxCoeff());
      const double scale = std::sqrt(v.cwiseAbs2().maxCoeff());
      if (current + previous <= kUnitRoundoff * scale) {
        converged = true;
        break;
      }
      previous = current;
    }
    if (!converged) {
      throw NumericError("Taylor exponential action did not converge");
    }
  }
  return v * std::polar(1.0, -mu * t);
}

// Values of every term laid out on the union sparsity pattern, so that
// assembling sum_i c_i A_i touches only the nonzeros.
class SparseCombination {
 public:
  explicit SparseCombination(const std::vector<Operator>& terms) {
    const Index dim = terms.front().dim();
    std::vector<Eigen::Triplet<Complex>> triplets;
    for (Index r = 0; r < dim; ++r) {
      for (Index c = 0; c < dim; ++c) {
        const bool used = std::any_of(terms.begin(), terms.end(),
                                      [&](const Operator& a) { return a(r, c) != Complex(0.0); });
        if (used) {
          triplets.emplace_back(static_cast<int>(r), static_cast<int>(c), Complex(1.0));
        }
      }
    }
    h_.resize(dim, dim);
    h_.setFromTriplets(triplets.begin(), triplets.end());
    h_.makeCompressed();

    values_.resize(h_.nonZeros(), static_cast<Index>(terms.size()));
    for (std::size_t i = 0; i < terms.size(); ++i) {
      Index slot = 0;
      for (Index r = 0; r < h_.outerSize(); ++r) {
        for (SparseOperator::InnerIterator it(h_, r); it; ++it) {
          values_(slot++, static_cast<Index>(i)) = terms[i](r, it.col());
        }
      }
    }
  }

  Index dim() const noexcept { return h_.rows(); }
  std::size_t size() const noexcept { return static_cast<std::size_t>(values_.cols()); }

  const SparseOperator& assemble(std::span<const double> c) {
    Eigen::Map<Vector> out(h_.valuePtr(), h_.nonZeros());
    out = c[0] * values_.col(0);
    for (Index i = 1; i < values_.cols(); ++i) {
      out += c[static_cast<std::size_t>(i)] * values_.col(i);
    }
    return h_;
  }

 private:
  SparseOperator h_;
  Matrix values_;
};

using CoefficientSource = std::function<void(double t, std::size_t step, std::span<double> out)>;

void check_norm(const Vector& v, std::size_t step, std::size_t trajectory) {
  const double drift = std::abs(v.norm() - 1.0);
  if (!(drift <= kNormDriftBudget)) {
    throw IntegratorError("norm drift " + std::to_string(drift) + " at substep " +
                              std::to_string(step) + " of trajectory " +
                              std::to_string(trajectory),
                          trajectory);
  }
}

struct BlockAccumulator {
  std::vector<SpinMoments> moments;
  std::vector<double> statistic_sum;
  std::vector<std::size_t> statistic_count;

  BlockAccumulator(std::size_t samples, bool with_statistic) : moments(samples) {
    if (with_statistic) {
      statistic_sum.assign(samples, 0.0);
      statistic_count.assign(samples, 0);
    }
  }

  BlockAccumulator& operator+=(const BlockAccumulator& other) {
    for (std::size_t k = 0; k < moments.size(); ++k) {
      moments[k] += other.moments[k];
    }
    for (std::size_t k = 0; k < statistic_sum.size(); ++k) {
      statistic_sum[k] += other.statistic_sum[k];
      statistic_count[k] += other.statistic_count[k];
    }
    return *this;
  }
};

BlockAccumulator pairwise_combine(std::vector<std::optional<BlockAccumulator>>& blocks,
                                  std::size_t lo, std::size_t hi) {
  if (hi - lo == 1) {
    return std::move(*blocks[lo]);
  }
  const std::size_t mid = lo + (hi - lo) / 2;
  BlockAccumulator left = pairwise_combine(blocks, lo, mid);
  left += pairwise_combine(blocks, mid, hi);
  return left;
}

TrajectoryMoments pairwise_sum(std::span<const TrajectoryMoments> series) {
  if (series.size() == 1) {
    return series.front();
  }
  const std::size_t mid = series.size() / 2;
  TrajectoryMoments left = pairwise_sum(series.first(mid));
  const TrajectoryMoments right = pairwise_sum(series.subspan(mid));
  for (std::size_t k = 0; k < left.moments.size(); ++k) {
    left.moments[k] += right.moments[k];
  }
  return left;
}

}  // namespace

MomentEvaluator::MomentEvaluator(const CollectiveOperators& ops)
    : jx_(to_sparse(ops.jx)), jy_(to_sparse(ops.jy)), jz_(to_sparse(ops.jz)) {}

SpinMoments MomentEvaluator::operator()(const Vector& psi) const {
  const std::array<Vector, 3> applied{jx_ * psi, jy_ * psi, jz_ * psi};
  SpinMoments m;
  for (int a = 0; a < 3; ++a) {
    m.mean(a) = psi.dot(applied[a]).real();
    for (int b = a; b < 3; ++b) {
      // J Hermitian: <psi|J_a J_b|psi> = <J_a psi|J_b psi>; the symmetrized
      // part is its real part.
      const double s = applied[a].dot(applied[b]).real();
      m.second(a, b) = s;
      m.second(b, a) = s;
    }
  }
  return m;
}

SpinMoments spin_moments(const CollectiveOperators& ops, const PureState& psi) {
  return MomentEvaluator(ops)(psi);
}

void StepPolicy::validate() const {
  if (substeps_per_period < 16) {
    throw ParameterError("substeps_per_period must be >= 16, got " +
                         std::to_string(substeps_per_period));
  }
  if (!(dt_static > 0.0) || !std::isfinite(dt_static)) {
    throw ParameterError("dt_static must be positive");
  }
}

std::size_t steps_to_cover(double t_end, double dt) {
  if (!(t_end > 0.0) || !(dt > 0.0)) {
    throw ParameterError("t_end and dt must be positive");
  }
  return static_cast<std::size_t>(std::ceil(t_end / dt - 1e-9));
}

std::vector<double> uniform_times(double t_end, double dt) {
  const std::size_t n = steps_to_cover(t_end, dt);
  std::vector<double> times(n + 1);
  for (std::size_t k = 0; k <= n; ++k) {
    times[k] = static_cast<double>(k) * dt;
  }
  times.back() = t_end;
  return times;
}

PureState taylor_exponential_action(const Operator& h, double t, const PureState& psi) {
  if (h.dim() != psi.dim()) {
    throw ShapeError("exponential action: dimension mismatch");
  }
  if (!h.is_hermitian()) {
    throw ContractError("exponential action requires a Hermitian operator");
  }
  return detail::StateAccess::wrap(taylor_action(to_sparse(h), t, psi.amplitudes()));
}

TrajectoryMoments propagate_static(const Operator& h, const PureState& psi0,
                                   std::span<const double> times, const CollectiveOperators& ops) {
  if (h.dim() != psi0.dim() || h.dim() != ops.system.dim()) {
    throw ShapeError("static propagation: dimension mismatch");
  }
  return propagate_static(HermitianSpectrum(h), psi0, times, ops);
}

TrajectoryMoments propagate_static(const HermitianSpectrum& spectrum, const PureState& psi0,
                                   std::span<const double> times, const CollectiveOperators& ops) {
  if (spectrum.dim() != psi0.dim() || spectrum.dim() != ops.system.dim()) {
    throw ShapeError("static propagation: dimension mismatch");
  }
  const MomentEvaluator moments(ops);
  const Vector coeffs = spectrum.eigenvectors().adjoint() * psi0.amplitudes();

  TrajectoryMoments out;
  out.times.assign(times.begin(), times.end());
  out.moments.reserve(times.size());
  Vector phased(coeffs.size());
  Vector psi(coeffs.size());
  for (double t : times) {
    for (Index k = 0; k < coeffs.size(); ++k) {
      phased(k) = coeffs(k) * std::polar(1.0, -spectrum.eigenvalues()(k) * t);
    }
    psi.noalias() = spectrum.eigenvectors() * phased;
    out.moments.push_back(moments(psi));
  }
  return out;
}

PureState drive(const HamiltonianSource& h, const PureState& psi0, std::size_t n_steps, double dt,
                const StateObserver& observer, std::size_t trajectory) {
  if (!(dt > 0.0)) {
    throw ParameterError("substep must be positive");
  }
  if (observer) {
    observer(0, 0.0, psi0);
  }
  Vector psi = psi0.amplitudes();
  for (std::size_t k = 0; k < n_steps; ++k) {
    const double t_mid = (static_cast<double>(k) + 0.5) * dt;
    const Operator hk = h(t_mid, k);
    if (hk.dim() != psi.size()) {
      throw ShapeError("driven propagation: Hamiltonian dimension mismatch");
    }
    if (!hk.is_hermitian()) {
      throw ContractError("driven propagation: H(t) not Hermitian at t = " +
                          std::to_string(t_mid));
    }
    psi = taylor_action(to_sparse(hk), dt, std::move(psi));
    check_norm(psi, k + 1, trajectory);
    if (observer) {
      observer(k + 1, static_cast<double>(k + 1) * dt, detail::StateAccess::wrap(psi));
    }
  }
  return detail::StateAccess::wrap(std::move(psi));
}

// Midpoint stepping over a SparseCombination; mirrors drive().
static PureState drive_linear(SparseCombination& h, const CoefficientSource& coefficients,
                       const PureState& psi0, std::size_t n_steps, double dt,
                       const StateObserver& observer, std::size_t trajectory) {
  if (!(dt > 0.0)) {
    throw ParameterError("substep must be positive");
  }
  if (h.dim() != psi0.dim()) {
    throw ShapeError("driven propagation: Hamiltonian dimension mismatch");
  }
  if (observer) {
    observer(0, 0.0, psi0);
  }
  std::vector<double> c(h.size());
  Vector psi = psi0.amplitudes();
  for (std::size_t k = 0; k < n_steps; ++k) {
    const double t_mid = (static_cast<double>(k) + 0.5) * dt;
    coefficients(t_mid, k, c);
    psi = taylor_action(h.assemble(c), dt, std::move(psi));
    check_norm(psi, k + 1, trajectory);
    if (observer) {
      observer(k + 1, static_cast<double>(k + 1) * dt, detail::StateAccess::wrap(psi));
    }
  }
  return detail::StateAccess::wrap(std::move(psi));
}

TrajectoryMoments propagate_driven(const HamiltonianSource& h, const PureState& psi0,
                                   double t_end, double period, const StepPolicy& policy,
                                   const CollectiveOperators& ops) {
  policy.validate();
  if (!(period > 0.0)) {
    throw ParameterError("period must be positive");
  }
  const double dt = period / policy.substeps_per_period;
  const std::size_t n = steps_to_cover(t_end, dt);
  const MomentEvaluator moments(ops);

  TrajectoryMoments out;
  out.times.reserve(n + 1);
  out.moments.reserve(n + 1);
  drive(h, psi0, n, dt, [&](std::size_t, double t, const PureState& psi) {
    out.times.push_back(t);
    out.moments.push_back(moments(psi));
  });
  return out;
}

TrajectoryMoments propagate_driven(const FramedHamiltonian& h, const PureState& psi0,
                                   double t_end, double period, const StepPolicy& policy,
                                   const CollectiveOperators& ops) {
  policy.validate();
  if (!(period > 0.0)) {
    throw ParameterError("period must be positive");
  }
  const double dt = period / policy.substeps_per_period;
  const std::size_t n = steps_to_cover(t_end, dt);
  const MomentEvaluator moments(ops);
  SparseCombination combination(h.generator.terms());

  TrajectoryMoments out;
  out.times.reserve(n + 1);
  out.moments.reserve(n + 1);
  drive_linear(
      combination,
      [&](double t, std::size_t, std::span<double> c) { h.generator.coefficients(t, c); }, psi0,
      n, dt,
      [&](std::size_t, double t, const PureState& psi) {
        out.times.push_back(t);
        out.moments.push_back(h.rotation ? rotate_moments(moments(psi), h.rotation(t))
                                         : moments(psi));
      },
      0);
  return out;
}

SpinMoments rotate_moments(const SpinMoments& m, const Eigen::Matrix3d& rotation) {
  SpinMoments out;
  out.mean = rotation * m.mean;
  out.second = rotation * m.second * rotation.transpose();
  return out;
}

EnsembleResult run_ensemble(const EnsembleScenario& scenario, const EnsembleOptions& options) {
  if (options.n_paths == 0) {
    throw ParameterError("ensemble needs at least one path");
  }
  scenario.noise.validate();
  options.policy.validate();
  if (!(scenario.period > 0.0)) {
    throw ParameterError("period must be positive");
  }
  if (scenario.system.generator.dim() != scenario.ops.system.dim() ||
      scenario.initial.dim() != scenario.ops.system.dim()) {
    throw ShapeError("ensemble scenario: dimension mismatch");
  }

  const CollectiveOperators& ops = scenario.ops;
  const double dt = scenario.period / options.policy.substeps_per_period;
  const std::size_t n_steps = steps_to_cover(scenario.t_end, dt);
  const std::size_t samples = n_steps + 1;
  const bool with_statistic = static_cast<bool>(options.per_path_statistic);
  const MomentEvaluator evaluate(ops);
  const bool noiseless = scenario.noise.sigma_sq == 0.0;

  const LinearHamiltonian& system = scenario.system.generator;
  const FramedHamiltonian::Rotation& rotation = scenario.system.rotation;
  const std::size_t n_system = system.terms().size();
  std::vector<Operator> all_terms = system.terms();
  if (!noiseless) {
    all_terms.insert(all_terms.end(), {ops.jx, ops.jy, ops.jz});
  }
  // Only the values of a combination change per step; each path gets a copy.
  const SparseCombination prototype(all_terms);

  auto run_path = [&](std::size_t index, BlockAccumulator& acc) {
    std::optional<NoisePath> path;
    CoefficientSource source;
    if (noiseless) {
      source = [&](double t, std::size_t, std::span<double> c) { system.coefficients(t, c); };
    } else {
      path = sample_ou_path(scenario.noise, n_steps, dt,
                            derive_seed(options.master_seed, index));
      source = [&](double t, std::size_t k, std::span<double> c) {
        system.coefficients(t, c.first(n_system));
        Eigen::Vector3d b(path->samples[0][k], path->samples[1][k], path->samples[2][k]);
        if (rotation) {
          b = rotation(t).transpose() * b;
        }
        for (int a = 0; a < 3; ++a) {
          c[n_system + static_cast<std::size_t>(a)] = b(a);
        }
      };
    }
    SparseCombination combination = prototype;
    drive_linear(
        combination, source, scenario.initial, n_steps, dt,
        [&](std::size_t k, double t, const PureState& psi) {
          const SpinMoments m =
              rotation ? rotate_moments(evaluate(psi), rotation(t)) : evaluate(psi);
          acc.moments[k] += m;
          if (with_statistic) {
            const double s = options.per_path_statistic(m);
            if (!std::isnan(s)) {
              acc.statistic_sum[k] += s;
              acc.statistic_count[k] += 1;
            }
          }
        },
        index);
  };

  EnsembleResult result;
  result.mean_moments.times.resize(samples);
  for (std::size_t k = 0; k < samples; ++k) {
    result.mean_moments.times[k] = static_cast<double>(k) * dt;
  }

  BlockAccumulator total(samples, with_statistic);
  if (noiseless) {
    // Every path sees the same Hamiltonian, so one trajectory is the ensemble.
    run_path(0, total);
    result.mean_moments.moments = std::move(total.moments);
  } else {
    const std::size_t n_blocks = (options.n_paths + kEnsembleBlock - 1) / kEnsembleBlock;
    std::vector<std::optional<BlockAccumulator>> blocks(n_blocks);
    std::atomic<std::size_t> next_block{0};
    std::mutex failure_mutex;
    std::size_t failed_trajectory = std::numeric_limits<std::size_t>::max();
    std::exception_ptr failure;

    auto worker = [&] {
      for (;;) {
        const std::size_t b = next_block.fetch_add(1);
        if (b >= n_blocks) {
          return;
        }
        BlockAccumulator acc(samples, with_statistic);
        const std::size_t first = b * kEnsembleBlock;
        const std::size_t last = std::min(options.n_paths, first + kEnsembleBlock);
        for (std::size_t i = first; i < last; ++i) {
          try {
            run_path(i, acc);
          } catch (...) {
            std::lock_guard lock(failure_mutex);
            if (i < failed_trajectory) {
              failed_trajectory = i;
              failure = std::current_exception();
            }
            break;
          }
        }
        blocks[b].emplace(std::move(acc));
      }
    };

    const unsigned workers =
        std::max(1u, std::min<unsigned>(options.workers, static_cast<unsigned>(n_blocks)));
    if (workers == 1) {
      worker();
    } else {
      std::vector<std::jthread> pool;
      pool.reserve(workers);
      for (unsigned w = 0; w < workers; ++w) {
        pool.emplace_back(worker);
      }
    }

    if (failure) {
      try {
        std::rethrow_exception(failure);
      } catch (const IntegratorError&) {
        throw;
      } catch (const std::exception& e) {
        throw IntegratorError("trajectory " + std::to_string(failed_trajectory) +
                                  " failed: " + e.what(),
                              failed_trajectory);
      }
    }

    total = pairwise_combine(blocks, 0, n_blocks);
    const double inv = 1.0 / static_cast<double>(options.n_paths);
    for (auto& m : total.moments) {
      m *= inv;
    }
    result.mean_moments.moments = std::move(total.moments);
  }

  if (with_statistic) {
    result.statistic_mean.resize(samples);
    for (std::size_t k = 0; k < samples; ++k) {
      result.statistic_mean[k] = total.statistic_count[k] > 0
                                     ? total.statistic_sum[k] /
                                           static_cast<double>(total.statistic_count[k])
                                     : std::numeric_limits<double>::quiet_NaN();
    }
    result.statistic_count = std::move(total.statistic_count);
    if (noiseless) {
      for (auto& c : result.statistic_count) {
        c *= options.n_paths;
      }
    }
  }
  return result;
}

TrajectoryMoments average_moments(std::span<const TrajectoryMoments> series) {
  if (series.empty()) {
    throw ParameterError("cannot average an empty set of series");
  }
  for (const auto& s : series) {
    if (s.moments.size() != series.front().moments.size()) {
      throw ShapeError("moment series differ in length");
    }
  }
  TrajectoryMoments out = pairwise_sum(series);
  const double inv = 1.0 / static_cast<double>(series.size());
  for (auto& m : out.moments) {
    m *= inv;
  }
  return out;
}

}  // namespace spinsq
