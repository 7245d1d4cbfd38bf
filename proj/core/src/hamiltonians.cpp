#include "spinsq/hamiltonians.hpp"

#include <array>
#include <cmath>
#include <cstdlib>
#include <numbers>
#include <numeric>
#include <string>

namespace spinsq {

namespace {

// Relative Richardson tolerance of the period averages.
constexpr double kQuadratureTolerance = 1e-9;
// Grid points per unit of lcm(|n_x|, |n_y|) per period.
constexpr int kPointsPerWinding = 4 * 64;
// Samples folded into one partial sum before it joins the running total.
constexpr int kSumBlock = 64;

// The six operators appearing in the conjugated Jx^2 expansion.
struct JxSquaredTerms {
  Operator zy;  // Jz Jy + Jy Jz
  Operator xz;  // Jx Jz + Jz Jx
  Operator xy;  // Jx Jy + Jy Jx
  Operator xx;
  Operator yy;
  Operator zz;

  explicit JxSquaredTerms(const CollectiveOperators& ops)
      : zy(anticommutator(ops.jz, ops.jy)),
        xz(anticommutator(ops.jx, ops.jz)),
        xy(anticommutator(ops.jx, ops.jy)),
        xx(ops.jx * ops.jx),
        yy(ops.jy * ops.jy),
        zz(ops.jz * ops.jz) {}

  Matrix evaluate(const ControlParams& params, double t) const {
    const double ax = params.omega() * params.n_x() * t;
    const double ay = params.omega() * params.n_y() * t;
    const double sx = std::sin(ax);
    const double cx = std::cos(ax);
    const double sy = std::sin(ay);
    const double cy = std::cos(ay);
    return 0.5 * std::sin(2.0 * ax) * sy * sy * zy.matrix() +
           0.5 * std::sin(2.0 * ay) * cx * xz.matrix() +
           0.5 * std::sin(2.0 * ay) * sx * xy.matrix() + cy * cy * xx.matrix() +
           sx * sx * sy * sy * yy.matrix() + cx * cx * sy * sy * zz.matrix();
  }
};

// Composite Simpson average over one control period of `count` matrix-valued
// integrands, evaluated together by `sample(t, out)`. Returns the averages and
// the Richardson error estimate for each.
template <std::size_t Count>
struct PeriodAverage {
  std::array<Matrix, Count> mean;
  std::array<double, Count> error;
};

template <std::size_t Count, typename Sampler>
PeriodAverage<Count> simpson_period_average(const ControlParams& params, Index dim,
                                                     Sampler&& sample) {
  const int windings = std::lcm(std::abs(params.n_x()), std::abs(params.n_y()));
  const int intervals = kPointsPerWinding * windings;  // divisible by 4
  const double h = params.period() / intervals;

  std::array<Matrix, Count> fine_total;
  std::array<Matrix, Count> coarse_total;
  std::array<Matrix, Count> fine_block;
  std::array<Matrix, Count> coarse_block;
  for (std::size_t c = 0; c < Count; ++c) {
    fine_total[c] = coarse_total[c] = fine_block[c] = coarse_block[c] = Matrix::Zero(dim, dim);
  }

  std::array<Matrix, Count> values;
  for (int i = 0; i <= intervals; ++i) {
    sample(i * h, values);
    const bool edge = (i == 0 || i == intervals);
    const double fine_w = edge ? 1.0 : (i % 2 == 1 ? 4.0 : 2.0);
    double coarse_w = 0.0;
    if (i % 2 == 0) {
      const int j = i / 2;
      coarse_w = edge ? 1.0 : (j % 2 == 1 ? 4.0 : 2.0);
    }
    for (std::size_t c = 0; c < Count; ++c) {
      fine_block[c] += fine_w * values[c];
      if (coarse_w != 0.0) {
        coarse_block[c] += coarse_w * values[c];
      }
    }
    if ((i + 1) % kSumBlock == 0 || i == intervals) {
      for (std::size_t c = 0; c < Count; ++c) {
        fine_total[c] += fine_block[c];
        coarse_total[c] += coarse_block[c];
        fine_block[c].setZero();
        coarse_block[c].setZero();
      }
    }
  }

  // Averages: (h/3) sum / t_c = sum / (3 intervals).
  PeriodAverage<Count> out;
  for (std::size_t c = 0; c < Count; ++c) {
    Matrix fine = fine_total[c] / (3.0 * intervals);
    Matrix coarse = coarse_total[c] / (3.0 * (intervals / 2));
    out.error[c] = (fine - coarse).norm() / 15.0;
    out.mean[c] = std::move(fine);
  }
  return out;
}

}  // namespace

ControlParams::ControlParams(double chi, int n_x, int n_y, double period)
    : chi_(chi), n_x_(n_x), n_y_(n_y), period_(period), omega_(2.0 * std::numbers::pi / period) {
  if (n_x == 0 || n_y == 0) {
    throw ParameterError("winding numbers must be non-zero (n_x = " + std::to_string(n_x) +
                         ", n_y = " + std::to_string(n_y) + ")");
  }
  if (!(period > 0.0) || !std::isfinite(period)) {
    throw ParameterError("control period must be positive and finite");
  }
  if (!std::isfinite(chi)) {
    throw ParameterError("chi must be finite");
  }
}

bool ControlParams::decouples() const noexcept { return std::abs(n_x_) != std::abs(n_y_); }

const char* to_string(AveragedForm::Kind kind) {
  switch (kind) {
    case AveragedForm::Kind::kOatQuarter:
      return "oat-quarter";
    case AveragedForm::Kind::kDoubleResonance:
      return "double-resonance";
    case AveragedForm::Kind::kMirroredDoubleResonance:
      return "mirrored-double-resonance";
  }
  return "unknown";
}

double DecouplingResidual::max() const noexcept { return std::max({x, y, z}); }

Operator build_oat(const CollectiveOperators& ops, double chi) {
  return (chi * (ops.jx * ops.jx)).hermitian_part();
}

Operator build_tat(const CollectiveOperators& ops, double chi) {
  return (chi * anticommutator(ops.jx, ops.jy)).hermitian_part();
}

Operator build_dr(const CollectiveOperators& ops, double chi) {
  return (0.25 * chi * (ops.jx * ops.jx + anticommutator(ops.jx, ops.jy))).hermitian_part();
}

ControlPropagator::ControlPropagator(const ControlParams& params, const CollectiveOperators& ops)
    : params_(params), jx_spectrum_(ops.jx), jy_spectrum_(ops.jy) {}

Operator ControlPropagator::at(double t) const {
  const double w = params_.omega();
  return jy_spectrum_.propagator(w * params_.n_y() * t) *
         jx_spectrum_.propagator(w * params_.n_x() * t);
}

Operator ControlPropagator::conjugate(const Operator& a, double t) const {
  const Operator u = at(t);
  return u.adjoint() * a * u;
}

Operator control_propagator(const ControlParams& params, const CollectiveOperators& ops, double t) {
  return ControlPropagator(params, ops).at(t);
}

Operator control_hamiltonian(const ControlParams& params, const CollectiveOperators& ops,
                             double t) {
  const double w = params.omega();
  const double phase = w * params.n_y() * t;
  Matrix h = (w * params.n_y()) * ops.jy.matrix() +
             (w * params.n_x()) *
                 (std::cos(phase) * ops.jx.matrix() - std::sin(phase) * ops.jz.matrix());
  return Operator(std::move(h));
}

Operator system_hamiltonian(const ControlParams& params, const CollectiveOperators& ops,
                            double t) {
  return build_oat(ops, params.chi()) + control_hamiltonian(params, ops, t);
}

DrivenHamiltonian::DrivenHamiltonian(const ControlParams& params, const CollectiveOperators& ops)
    : params_(params),
      oat_(build_oat(ops, params.chi()).matrix()),
      jx_(ops.jx.matrix()),
      jy_(ops.jy.matrix()),
      jz_(ops.jz.matrix()) {}

Operator DrivenHamiltonian::at(double t) const {
  const double w = params_.omega();
  const double phase = w * params_.n_y() * t;
  const double cx = w * params_.n_x() * std::cos(phase);
  const double cz = -w * params_.n_x() * std::sin(phase);
  Matrix h = oat_ + (w * params_.n_y()) * jy_ + cx * jx_ + cz * jz_;
  return Operator(std::move(h));
}

LinearHamiltonian DrivenHamiltonian::linear() const {
  const double w = params_.omega();
  const double n_x = params_.n_x();
  const double n_y = params_.n_y();
  return LinearHamiltonian(
      {Operator(oat_), Operator(jy_), Operator(jx_), Operator(jz_)},
      [w, n_x, n_y](double t, std::span<double> c) {
        const double phase = w * n_y * t;
        c[0] = 1.0;
        c[1] = w * n_y;
        c[2] = w * n_x * std::cos(phase);
        c[3] = -w * n_x * std::sin(phase);
      });
}

FramedHamiltonian DrivenHamiltonian::toggling_frame() const {
  const Matrix* j[3] = {&jx_, &jy_, &jz_};
  std::vector<Operator> terms;
  for (int a = 0; a < 3; ++a) {
    terms.emplace_back(Matrix(*j[a] * *j[a]));
  }
  for (int a = 0; a < 3; ++a) {
    for (int b = a + 1; b < 3; ++b) {
      terms.emplace_back(Matrix(*j[a] * *j[b] + *j[b] * *j[a]));
    }
  }
  const ControlParams params = params_;
  // (sum_b r_b J_b)^2 with r the first row of R(t).
  auto coefficients = [params](double t, std::span<double> c) {
    const Eigen::Vector3d r = control_rotation(params, t).row(0);
    const double chi = params.chi();
    c[0] = chi * r(0) * r(0);
    c[1] = chi * r(1) * r(1);
    c[2] = chi * r(2) * r(2);
    c[3] = chi * r(0) * r(1);
    c[4] = chi * r(0) * r(2);
    c[5] = chi * r(1) * r(2);
  };
  return FramedHamiltonian(LinearHamiltonian(std::move(terms), coefficients),
                           [params](double t) { return control_rotation(params, t); });
}

Eigen::Matrix3d control_rotation(const ControlParams& params, double t) {
  const double w = params.omega();
  const double cx = std::cos(w * params.n_x() * t);
  const double sx = std::sin(w * params.n_x() * t);
  const double cy = std::cos(w * params.n_y() * t);
  const double sy = std::sin(w * params.n_y() * t);
  Eigen::Matrix3d r;
  r << cy, sy * sx, sy * cx,
       0.0, cx, -sx,
       -sy, cy * sx, cy * cx;
  return r;
}

LinearHamiltonian::LinearHamiltonian(std::vector<Operator> terms, Coefficients coefficients)
    : terms_(std::move(terms)), coefficients_(std::move(coefficients)) {
  if (terms_.empty()) {
    throw ShapeError("linear Hamiltonian needs at least one term");
  }
  if (!coefficients_) {
    throw ContractError("linear Hamiltonian has no coefficient function");
  }
  for (const auto& term : terms_) {
    if (term.dim() != terms_.front().dim()) {
      throw ShapeError("linear Hamiltonian terms differ in dimension");
    }
    if (!term.is_hermitian()) {
      throw ContractError("linear Hamiltonian term is not Hermitian");
    }
  }
}

LinearHamiltonian LinearHamiltonian::constant(const Operator& h) {
  return LinearHamiltonian({h}, [](double, std::span<double> c) { c[0] = 1.0; });
}

void LinearHamiltonian::coefficients(double t, std::span<double> out) const {
  if (out.size() != terms_.size()) {
    throw ShapeError("coefficient buffer does not match the term count");
  }
  coefficients_(t, out);
  for (double c : out) {
    if (!std::isfinite(c)) {
      throw NumericError("non-finite Hamiltonian coefficient at t = " + std::to_string(t));
    }
  }
}

Operator LinearHamiltonian::at(double t) const {
  std::vector<double> c(terms_.size());
  coefficients(t, c);
  Matrix h = c[0] * terms_[0].matrix();
  for (std::size_t i = 1; i < terms_.size(); ++i) {
    h += c[i] * terms_[i].matrix();
  }
  return Operator(std::move(h));
}

Operator conjugated_jx_squared(const ControlParams& params, const CollectiveOperators& ops,
                               double t) {
  return Operator(JxSquaredTerms(ops).evaluate(params, t));
}

Operator averaged_closed_form(const ControlParams& params, const CollectiveOperators& ops) {
  const double q = 0.25 * params.chi();
  const Operator oat = ops.jx * ops.jx;
  if (params.n_x() == 2 * params.n_y()) {
    return (q * (oat + anticommutator(ops.jx, ops.jy))).hermitian_part();
  }
  if (params.n_x() == -2 * params.n_y()) {
    return (q * (oat - anticommutator(ops.jx, ops.jy))).hermitian_part();
  }
  return (q * oat).hermitian_part();
}

AveragedHamiltonian averaged_hamiltonian(const ControlParams& params,
                                         const CollectiveOperators& ops) {
  if (!params.decouples()) {
    throw ParameterError("averaged Hamiltonian requires |n_x| != |n_y|");
  }
  const JxSquaredTerms terms(ops);
  auto avg = simpson_period_average<1>(
      params, ops.system.dim(),
      [&](double t, std::array<Matrix, 1>& out) { out[0] = terms.evaluate(params, t); });

  const double tolerance = kQuadratureTolerance * terms.xx.frobenius_norm();
  if (avg.error[0] > tolerance) {
    throw NumericError("period average of conjugated Jx^2 did not converge (estimate " +
                       std::to_string(avg.error[0]) + ")");
  }

  AveragedForm::Kind kind = AveragedForm::Kind::kOatQuarter;
  if (params.n_x() == 2 * params.n_y()) {
    kind = AveragedForm::Kind::kDoubleResonance;
  } else if (params.n_x() == -2 * params.n_y()) {
    kind = AveragedForm::Kind::kMirroredDoubleResonance;
  }
  const double j = ops.system.total_spin();
  const double shift = 0.25 * params.chi() * j * (j + 1.0);

  Operator op = (params.chi() * Operator(std::move(avg.mean[0]))).hermitian_part();
  return AveragedHamiltonian{std::move(op), AveragedForm{kind, shift},
                             std::abs(params.chi()) * avg.error[0]};
}

DecouplingResidual dd_residual(const ControlParams& params, const CollectiveOperators& ops) {
  const ControlPropagator propagator(params, ops);
  auto avg = simpson_period_average<3>(
      params, ops.system.dim(), [&](double t, std::array<Matrix, 3>& out) {
        const Matrix u = propagator.at(t).matrix();
        const Matrix ud = u.adjoint();
        out[0] = ud * ops.jx.matrix() * u;
        out[1] = ud * ops.jy.matrix() * u;
        out[2] = ud * ops.jz.matrix() * u;
      });

  const double tolerance = kQuadratureTolerance * ops.jx.frobenius_norm();
  for (double e : avg.error) {
    if (e > tolerance) {
      throw NumericError("period average of conjugated J_k did not converge (estimate " +
                         std::to_string(e) + ")");
    }
  }
  return DecouplingResidual{avg.mean[0].norm(), avg.mean[1].norm(), avg.mean[2].norm()};
}

}  // namespace spinsq
