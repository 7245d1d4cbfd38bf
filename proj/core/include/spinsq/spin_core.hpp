#pragma once

// Collective angular-momentum algebra for N spin-1/2 particles restricted to
// the symmetric (J = N/2) sector, plus the dense linear-algebra primitives the
// rest of the library is built on.
//
// Basis convention: index i <-> Dicke state |J, m> with m = i - J, so index 0
// is |J, -J> (all spins down).

#include <complex>

#include <Eigen/Dense>

#include "spinsq/errors.hpp"

namespace spinsq {

using Complex = std::complex<double>;
using Index = Eigen::Index;
using Matrix = Eigen::MatrixXcd;
using Vector = Eigen::VectorXcd;

class PureState;

namespace detail {
// Wraps amplitudes produced by a norm-preserving propagator whose drift is
// checked by the caller against its own budget.
struct StateAccess {
  static PureState wrap(Vector amplitudes);
};
}  // namespace detail

/// Entrywise tolerance used by Hermiticity contract checks. The check is
/// scaled by max(1, max|A_ij|) so that large-norm Hamiltonians built from
/// rounded products are judged by relative, not absolute, asymmetry.
inline constexpr double kHermitianTolerance = 1e-12;

class SpinSystem {
 public:
  /// Throws InvalidSystemError when n_spins < 1.
  explicit SpinSystem(int n_spins);

  int n_spins() const noexcept { return n_spins_; }
  /// 2J, an exact integer.
  int twice_total_spin() const noexcept { return n_spins_; }
  /// J = N/2. Exact in binary floating point for every representable N.
  double total_spin() const noexcept { return 0.5 * n_spins_; }
  Index dim() const noexcept { return n_spins_ + 1; }
  /// Magnetic quantum number of basis index i.
  double magnetic_number(Index i) const noexcept { return static_cast<double>(i) - total_spin(); }

  bool operator==(const SpinSystem&) const = default;

 private:
  int n_spins_;
};

/// Dense complex square matrix. Every Hamiltonian and propagator in the
/// library is one of these.
class Operator {
 public:
  Operator() = default;
  /// Throws ShapeError when `entries` is not square.
  explicit Operator(Matrix entries);

  static Operator zero(Index dim);
  static Operator identity(Index dim);

  Index dim() const noexcept { return entries_.rows(); }
  const Matrix& matrix() const noexcept { return entries_; }
  Complex operator()(Index i, Index j) const { return entries_(i, j); }

  Operator adjoint() const;
  /// (A + A^dagger) / 2. Exactly Hermitian in floating point.
  Operator hermitian_part() const;
  /// Entrywise max abs(A - A^dagger) <= tolerance.
  bool is_hermitian(double tolerance = kHermitianTolerance) const;

  double frobenius_norm() const { return entries_.norm(); }
  double max_abs() const;
  Complex trace() const { return entries_.trace(); }

  Operator& operator+=(const Operator& other);
  Operator& operator-=(const Operator& other);
  Operator& operator*=(Complex scale);

  friend Operator operator+(Operator lhs, const Operator& rhs) { return lhs += rhs; }
  friend Operator operator-(Operator lhs, const Operator& rhs) { return lhs -= rhs; }
  friend Operator operator*(Operator lhs, Complex scale) { return lhs *= scale; }
  friend Operator operator*(Complex scale, Operator rhs) { return rhs *= scale; }
  friend Operator operator*(double scale, Operator rhs) { return rhs *= Complex(scale, 0.0); }
  friend Operator operator*(Operator lhs, double scale) { return lhs *= Complex(scale, 0.0); }
  /// Matrix product. Throws ShapeError on dimension mismatch.
  friend Operator operator*(const Operator& lhs, const Operator& rhs);

 private:
  Matrix entries_;
};

/// Unit-norm state vector in the Dicke basis.
class PureState {
 public:
  /// Throws ContractError when | ||amplitudes|| - 1 | > 1e-10.
  explicit PureState(Vector amplitudes);

  static PureState normalized(Vector amplitudes);
  static PureState basis(const SpinSystem& system, Index index);
  /// |J, m>; m must be one of -J, -J+1, ..., J.
  static PureState dicke(const SpinSystem& system, double m);
  /// |J, -J>, all spins pointing down.
  static PureState all_down(const SpinSystem& system) { return basis(system, 0); }

  Index dim() const noexcept { return amplitudes_.size(); }
  const Vector& amplitudes() const noexcept { return amplitudes_; }
  double norm() const { return amplitudes_.norm(); }
  Complex overlap(const PureState& other) const;
  /// |<this|other>|^2.
  double fidelity(const PureState& other) const { return std::norm(overlap(other)); }

 private:
  struct Unchecked {};
  PureState(Vector amplitudes, Unchecked) : amplitudes_(std::move(amplitudes)) {}
  friend class HermitianSpectrum;
  friend struct detail::StateAccess;

  Vector amplitudes_;
};

struct CollectiveOperators {
  SpinSystem system;
  Operator jx;
  Operator jy;
  Operator jz;

  /// Jx^2 + Jy^2 + Jz^2.
  Operator casimir() const;
};

/// Jx, Jy, Jz of the symmetric sector. Throws InvalidSystemError for N < 1.
CollectiveOperators build_collective_operators(const SpinSystem& system);
/// J+ with <m+1|J+|m> = sqrt(J(J+1) - m(m+1)).
Operator raising_operator(const SpinSystem& system);

Operator commutator(const Operator& a, const Operator& b);
Operator anticommutator(const Operator& a, const Operator& b);

/// <psi|A|psi>.
Complex expectation(const Operator& a, const PureState& psi);

/// Eigendecomposition of a Hermitian operator, reusable for many evolution times.
class HermitianSpectrum {
 public:
  /// Throws ContractError when `h` is not Hermitian.
  explicit HermitianSpectrum(const Operator& h);

  Index dim() const noexcept { return eigenvalues_.size(); }
  const Eigen::VectorXd& eigenvalues() const noexcept { return eigenvalues_; }
  const Matrix& eigenvectors() const noexcept { return eigenvectors_; }

  /// exp(-i H t) psi.
  PureState evolve(const PureState& psi, double t) const;
  /// exp(-i H t).
  Operator propagator(double t) const;

 private:
  Eigen::VectorXd eigenvalues_;
  Matrix eigenvectors_;
};

/// exp(-i H t) psi computed from the eigendecomposition of H. Exact for
/// time-independent H up to rounding.
PureState hermitian_exponential_action(const Operator& h, double t, const PureState& psi);

}  // namespace spinsq
