#include "spinsq/spin_core.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>

namespace spinsq {

namespace {

void require_same_dim(Index a, Index b, const char* what) {
  if (a != b) {
    throw ShapeError(std::string(what) + ": dimension mismatch (" + std::to_string(a) + " vs " +
                     std::to_string(b) + ")");
  }
}

}  // namespace

SpinSystem::SpinSystem(int n_spins) : n_spins_(n_spins) {
  if (n_spins < 1) {
    throw InvalidSystemError("spin count must be >= 1, got " + std::to_string(n_spins));
  }
}

Operator::Operator(Matrix entries) : entries_(std::move(entries)) {
  if (entries_.rows() != entries_.cols()) {
    throw ShapeError("operator must be square");
  }
}

Operator Operator::zero(Index dim) { return Operator(Matrix::Zero(dim, dim)); }

Operator Operator::identity(Index dim) { return Operator(Matrix::Identity(dim, dim)); }

Operator Operator::adjoint() const { return Operator(entries_.adjoint()); }

Operator Operator::hermitian_part() const {
  Matrix sym = 0.5 * (entries_ + entries_.adjoint());
  return Operator(std::move(sym));
}

bool Operator::is_hermitian(double tolerance) const {
  return (entries_ - entries_.adjoint()).cwiseAbs2().maxCoeff() <= tolerance * tolerance;
}

double Operator::max_abs() const {
  return entries_.size() == 0 ? 0.0 : std::sqrt(entries_.cwiseAbs2().maxCoeff());
}

Operator& Operator::operator+=(const Operator& other) {
  require_same_dim(dim(), other.dim(), "operator addition");
  entries_ += other.entries_;
  return *this;
}

Operator& Operator::operator-=(const Operator& other) {
  require_same_dim(dim(), other.dim(), "operator subtraction");
  entries_ -= other.entries_;
  return *this;
}

Operator& Operator::operator*=(Complex scale) {
  entries_ *= scale;
  return *this;
}

Operator operator*(const Operator& lhs, const Operator& rhs) {
  require_same_dim(lhs.dim(), rhs.dim(), "operator product");
  return Operator(lhs.entries_ * rhs.entries_);
}

PureState::PureState(Vector amplitudes) : amplitudes_(std::move(amplitudes)) {
  if (std::abs(amplitudes_.norm() - 1.0) > 1e-10) {
    throw ContractError("state is not normalized (norm " + std::to_string(amplitudes_.norm()) +
                        ")");
  }
}

PureState PureState::normalized(Vector amplitudes) {
  const double n = amplitudes.norm();
  if (!(n > 0.0)) {
    throw ContractError("cannot normalize a zero vector");
  }
  amplitudes /= n;
  return PureState(std::move(amplitudes), Unchecked{});
}

PureState PureState::basis(const SpinSystem& system, Index index) {
  if (index < 0 || index >= system.dim()) {
    throw BoundsError("basis index " + std::to_string(index) + " outside [0, " +
                      std::to_string(system.dim()) + ")");
  }
  Vector v = Vector::Zero(system.dim());
  v(index) = 1.0;
  return PureState(std::move(v), Unchecked{});
}

PureState PureState::dicke(const SpinSystem& system, double m) {
  const double shifted = m + system.total_spin();
  const double rounded = std::round(shifted);
  if (std::abs(shifted - rounded) > 1e-12) {
    throw ParameterError("m = " + std::to_string(m) + " is not in the ladder of J = " +
                         std::to_string(system.total_spin()));
  }
  return basis(system, static_cast<Index>(rounded));
}

PureState detail::StateAccess::wrap(Vector amplitudes) {
  return PureState(std::move(amplitudes), PureState::Unchecked{});
}

Complex PureState::overlap(const PureState& other) const {
  require_same_dim(dim(), other.dim(), "overlap");
  return amplitudes_.dot(other.amplitudes_);
}

Operator CollectiveOperators::casimir() const { return jx * jx + jy * jy + jz * jz; }

Operator raising_operator(const SpinSystem& system) {
  const Index d = system.dim();
  const double j = system.total_spin();
  Matrix jp = Matrix::Zero(d, d);
  for (Index i = 0; i + 1 < d; ++i) {
    const double m = system.magnetic_number(i);
    // (J - m)(J + m + 1) is an exact product of small half-integers.
    jp(i + 1, i) = std::sqrt((j - m) * (j + m + 1.0));
  }
  return Operator(std::move(jp));
}

CollectiveOperators build_collective_operators(const SpinSystem& system) {
  const Index d = system.dim();
  const Matrix jp = raising_operator(system).matrix();
  const Matrix jm = jp.adjoint();

  Matrix jx = 0.5 * (jp + jm);
  Matrix jy = Complex(0.0, -0.5) * (jp - jm);
  Matrix jz = Matrix::Zero(d, d);
  for (Index i = 0; i < d; ++i) {
    jz(i, i) = system.magnetic_number(i);
  }
  return CollectiveOperators{system, Operator(std::move(jx)), Operator(std::move(jy)),
                             Operator(std::move(jz))};
}

Operator commutator(const Operator& a, const Operator& b) { return a * b - b * a; }

Operator anticommutator(const Operator& a, const Operator& b) { return a * b + b * a; }

Complex expectation(const Operator& a, const PureState& psi) {
  require_same_dim(a.dim(), psi.dim(), "expectation");
  return psi.amplitudes().dot(a.matrix() * psi.amplitudes());
}

HermitianSpectrum::HermitianSpectrum(const Operator& h) {
  if (!h.is_hermitian()) {
    throw ContractError("eigendecomposition requires a Hermitian operator");
  }
  Eigen::SelfAdjointEigenSolver<Matrix> solver(h.matrix());
  if (solver.info() != Eigen::Success) {
    throw NumericError("Hermitian eigensolver did not converge");
  }
  eigenvalues_ = solver.eigenvalues();
  eigenvectors_ = solver.eigenvectors();
}

PureState HermitianSpectrum::evolve(const PureState& psi, double t) const {
  require_same_dim(dim(), psi.dim(), "evolution");
  Vector coeffs = eigenvectors_.adjoint() * psi.amplitudes();
  for (Index k = 0; k < coeffs.size(); ++k) {
    coeffs(k) *= std::polar(1.0, -eigenvalues_(k) * t);
  }
  return PureState(eigenvectors_ * coeffs, PureState::Unchecked{});
}

Operator HermitianSpectrum::propagator(double t) const {
  Matrix scaled = eigenvectors_;
  for (Index k = 0; k < scaled.cols(); ++k) {
    scaled.col(k) *= std::polar(1.0, -eigenvalues_(k) * t);
  }
  return Operator(scaled * eigenvectors_.adjoint());
}

PureState hermitian_exponential_action(const Operator& h, double t, const PureState& psi) {
  require_same_dim(h.dim(), psi.dim(), "exponential action");
  if (t == 0.0) {
    if (!h.is_hermitian()) {
      throw ContractError("exponential action requires a Hermitian operator");
    }
    return psi;
  }
  return HermitianSpectrum(h).evolve(psi, t);
}

}  // namespace spinsq
