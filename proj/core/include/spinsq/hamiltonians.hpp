#pragma once

// Twisting Hamiltonians, the two-axis continuous decoupling control, and the
// first-order (period-averaged) picture of the driven system.
//
//   U_c(t) = exp(-i w n_y Jy t) exp(-i w n_x Jx t),   w = 2 pi / t_c
//   H_c(t) = w n_y Jy + w n_x [Jx cos(w n_y t) - Jz sin(w n_y t)]
//   H_s(t) = chi Jx^2 + H_c(t)

#include <functional>
#include <span>
#include <utility>
#include <vector>

#include "spinsq/spin_core.hpp"

namespace spinsq {

/// Winding numbers and period of the decoupling control, plus the twisting
/// strength chi it acts on.
class ControlParams {
 public:
  /// Throws ParameterError for n_x == 0, n_y == 0, non-positive or non-finite
  /// period, or non-finite chi. Pairs with |n_x| == |n_y| are representable
  /// so that their failure to decouple can be measured; see decouples().
  ControlParams(double chi, int n_x, int n_y, double period);

  double chi() const noexcept { return chi_; }
  int n_x() const noexcept { return n_x_; }
  int n_y() const noexcept { return n_y_; }
  double period() const noexcept { return period_; }
  double omega() const noexcept { return omega_; }

  /// True when the first-order decoupling condition holds for any linear
  /// coupling B.J, i.e. |n_x| != |n_y|.
  bool decouples() const noexcept;
  /// n_x == 2 n_y.
  bool double_resonance() const noexcept { return n_x_ == 2 * n_y_; }

 private:
  double chi_;
  int n_x_;
  int n_y_;
  double period_;
  double omega_;
};

struct AveragedForm {
  enum class Kind {
    /// (chi/4) Jx^2
    kOatQuarter,
    /// (chi/4)(Jx^2 + Jx Jy + Jy Jx), reached when n_x == 2 n_y
    kDoubleResonance,
    /// (chi/4)(Jx^2 - Jx Jy - Jy Jx), reached when n_x == -2 n_y
    kMirroredDoubleResonance,
  };

  Kind kind;
  /// Coefficient of the identity carried along with the closed form.
  double constant_shift;
};

const char* to_string(AveragedForm::Kind kind);

struct AveragedHamiltonian {
  Operator op;
  AveragedForm form;
  /// Richardson error estimate of the quadrature (Frobenius norm).
  double quadrature_error;
};

/// Norms ||(1/t_c) int_0^t_c U_c^dagger J_k U_c dt||_F for k = x, y, z.
struct DecouplingResidual {
  double x;
  double y;
  double z;

  double max() const noexcept;
};

/// chi Jx^2.
Operator build_oat(const CollectiveOperators& ops, double chi);
/// chi (Jx Jy + Jy Jx).
Operator build_tat(const CollectiveOperators& ops, double chi);
/// (chi/4)(Jx^2 + Jx Jy + Jy Jx), the double-resonance averaged Hamiltonian.
Operator build_dr(const CollectiveOperators& ops, double chi);

/// H(t) = sum_i c_i(t) A_i with fixed Hermitian terms A_i and real
/// coefficients, so H(t) is Hermitian for every t.
class LinearHamiltonian {
 public:
  /// Fills one coefficient per term.
  using Coefficients = std::function<void(double t, std::span<double> out)>;

  /// Throws ContractError for a non-Hermitian term, ShapeError for mixed
  /// dimensions or an empty term list.
  LinearHamiltonian(std::vector<Operator> terms, Coefficients coefficients);
  /// Time-independent H as a single term with coefficient 1.
  static LinearHamiltonian constant(const Operator& h);

  Index dim() const noexcept { return terms_.front().dim(); }
  const std::vector<Operator>& terms() const noexcept { return terms_; }
  /// Throws NumericError when a coefficient is not finite.
  void coefficients(double t, std::span<double> out) const;
  Operator at(double t) const;

 private:
  std::vector<Operator> terms_;
  Coefficients coefficients_;
};

/// A generator together with the frame it acts in. The lab-frame state is
/// U(t) phi(t), where phi evolves under `generator` and
/// U(t)^dagger J_a U(t) = sum_b R_ab(t) J_b with R = rotation(t). An empty
/// rotation is the lab frame.
struct FramedHamiltonian {
  using Rotation = std::function<Eigen::Matrix3d(double t)>;

  FramedHamiltonian(LinearHamiltonian generator, Rotation rotation = {})
      : generator(std::move(generator)), rotation(std::move(rotation)) {}

  LinearHamiltonian generator;
  Rotation rotation;
};

/// R(t) with U_c(t)^dagger J_a U_c(t) = sum_b R_ab(t) J_b.
Eigen::Matrix3d control_rotation(const ControlParams& params, double t);

/// Closed-form evaluator of U_c(t) that diagonalizes Jx and Jy once.
class ControlPropagator {
 public:
  ControlPropagator(const ControlParams& params, const CollectiveOperators& ops);

  Operator at(double t) const;
  /// U_c(t)^dagger A U_c(t).
  Operator conjugate(const Operator& a, double t) const;

 private:
  ControlParams params_;
  HermitianSpectrum jx_spectrum_;
  HermitianSpectrum jy_spectrum_;
};

/// H_s(t) with chi Jx^2 precomputed, for repeated evaluation in time loops.
class DrivenHamiltonian {
 public:
  DrivenHamiltonian(const ControlParams& params, const CollectiveOperators& ops);

  Operator at(double t) const;
  /// The same H_s(t) as terms chi Jx^2, Jy, Jx, Jz.
  LinearHamiltonian linear() const;
  /// H_s in the frame of the control: U_c^dagger chi Jx^2 U_c as a
  /// combination of the six products J_a J_b, with R(t) = control_rotation.
  /// Varies on the scale of chi J^2 instead of w J.
  FramedHamiltonian toggling_frame() const;
  const ControlParams& params() const noexcept { return params_; }

 private:
  ControlParams params_;
  Matrix oat_;
  Matrix jx_;
  Matrix jy_;
  Matrix jz_;
};

Operator control_propagator(const ControlParams& params, const CollectiveOperators& ops, double t);
Operator control_hamiltonian(const ControlParams& params, const CollectiveOperators& ops, double t);
/// chi Jx^2 + H_c(t).
Operator system_hamiltonian(const ControlParams& params, const CollectiveOperators& ops, double t);

/// Closed-form expansion of U_c^dagger(t) Jx^2 U_c(t) into six trigonometric
/// terms (no chi factor).
Operator conjugated_jx_squared(const ControlParams& params, const CollectiveOperators& ops,
                               double t);

/// The closed form implied by `params` (without identity shift), for
/// comparison with averaged_hamiltonian().
Operator averaged_closed_form(const ControlParams& params, const CollectiveOperators& ops);

/// (chi/t_c) int_0^t_c U_c^dagger Jx^2 U_c dt by composite Simpson quadrature.
/// Throws ParameterError when the pair does not decouple and NumericError when
/// the Richardson estimate exceeds 1e-9 ||Jx^2||_F.
AveragedHamiltonian averaged_hamiltonian(const ControlParams& params,
                                         const CollectiveOperators& ops);

/// Period average of each conjugated J_k computed from the propagator itself.
DecouplingResidual dd_residual(const ControlParams& params, const CollectiveOperators& ops);

}  // namespace spinsq
