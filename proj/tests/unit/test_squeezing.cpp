#include <doctest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "spinsq/hamiltonians.hpp"
#include "spinsq/squeezing.hpp"

using namespace spinsq;

namespace {

Eigen::Matrix3d random_rotation(std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  const Eigen::Quaterniond q(g(rng), g(rng), g(rng), g(rng));
  return q.normalized().toRotationMatrix();
}

SpinMoments rotated(const SpinMoments& m, const Eigen::Matrix3d& r) {
  SpinMoments out;
  out.mean = r * m.mean;
  out.second = r * m.second * r.transpose();
  return out;
}

SpinMoments from_oracle(const oracle::Moments& m) {
  SpinMoments out;
  out.mean = m.mean;
  out.second = m.second;
  return out;
}

// e^{-i H t}|J,-J> moments for a static H, via the oracle exponential.
oracle::Moments evolved_moments(int n, const oracle::Matrix& h, double t) {
  const auto ref = oracle::spin_matrices(n);
  oracle::Vector psi = oracle::Vector::Zero(n + 1);
  psi(0) = 1.0;
  return oracle::moments(ref, oracle::propagator(h, t) * psi);
}

}  // namespace

TEST_SUITE("squeezing") {

TEST_CASE("perpendicular basis is orthonormal") {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> g;
  for (int k = 0; k < 100; ++k) {
    const Eigen::Vector3d d = Eigen::Vector3d(g(rng), g(rng), g(rng)).normalized();
    const auto [n1, n2] = perpendicular_basis(d);
    CHECK(std::abs(n1.norm() - 1.0) < 1e-14);
    CHECK(std::abs(n2.norm() - 1.0) < 1e-14);
    CHECK(std::abs(n1.dot(d)) < 1e-14);
    CHECK(std::abs(n2.dot(d)) < 1e-14);
    CHECK(std::abs(n1.dot(n2)) < 1e-14);
  }
  for (const Eigen::Vector3d axis : {Eigen::Vector3d::UnitX(), Eigen::Vector3d::UnitY(),
                                     Eigen::Vector3d::UnitZ()}) {
    const auto [n1, n2] = perpendicular_basis(-axis);
    CHECK(std::abs(n1.dot(axis)) < 1e-15);
    CHECK(std::abs(n2.dot(axis)) < 1e-15);
  }
}

TEST_CASE("coherent spin states have unit squeezing parameters") {
  std::mt19937_64 rng(13);
  for (int n : {1, 4, 10, 37}) {
    const auto ops = build_collective_operators(SpinSystem(n));
    const SpinMoments down = spin_moments(ops, PureState::all_down(ops.system));
    CHECK(xi_s_squared(down, n) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(xi_r_squared(down, n) == doctest::Approx(1.0).epsilon(1e-12));
    for (int k = 0; k < 10; ++k) {
      const SpinMoments css = rotated(down, random_rotation(rng));
      CHECK(std::abs(xi_s_squared(css, n) - 1.0) < 1e-9);
    }
  }
}

TEST_CASE("closed-form minimum matches a 3600-angle scan") {
  std::mt19937_64 rng(14);
  std::uniform_real_distribution<double> uniform(0.05, 0.6);
  const int n = 10;
  const auto ref = oracle::spin_matrices(n);
  const oracle::Matrix hamiltonians[] = {ref.jx * ref.jx, ref.jx * ref.jy + ref.jy * ref.jx,
                                         0.25 * (ref.jx * ref.jx + ref.jx * ref.jy + ref.jy * ref.jx)};
  for (const auto& h : hamiltonians) {
    for (int k = 0; k < 10; ++k) {
      const oracle::Moments m = evolved_moments(n, h, uniform(rng));
      const double expected = oracle::xi_s_by_angle_scan(m, n, 3600);
      CHECK(std::abs(xi_s_squared(from_oracle(m), n) - expected) < 1e-9);
    }
  }
}

TEST_CASE("squeezing is invariant under in-plane basis rotations and frame rotations") {
  std::mt19937_64 rng(15);
  std::uniform_real_distribution<double> angle(0.0, 2.0 * std::numbers::pi);
  const int n = 10;
  const auto ref = oracle::spin_matrices(n);
  const SpinMoments m = from_oracle(evolved_moments(n, ref.jx * ref.jx, 0.25));
  const double xi = xi_s_squared(m, n);

  const auto [n1, n2] = perpendicular_basis(m.mean.normalized());
  const Eigen::Matrix3d cov = m.covariance();
  for (int k = 0; k < 100; ++k) {
    const double a = angle(rng);
    const Eigen::Vector3d r1 = std::cos(a) * n1 + std::sin(a) * n2;
    const Eigen::Vector3d r2 = -std::sin(a) * n1 + std::cos(a) * n2;
    Eigen::Matrix2d g;
    g << r1.dot(cov * r1), r1.dot(cov * r2), r2.dot(cov * r1), r2.dot(cov * r2);
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> solver(g);
    CHECK(std::abs(4.0 * solver.eigenvalues()(0) / n - xi) < 1e-12);
  }
  for (int k = 0; k < 20; ++k) {
    CHECK(std::abs(xi_s_squared(rotated(m, random_rotation(rng)), n) - xi) < 1e-10);
  }
}

TEST_CASE("Ramsey parameter dominates and matches the mean-spin length") {
  const int n = 10;
  const auto ref = oracle::spin_matrices(n);
  for (double t : {0.05, 0.1515, 0.25, 0.4}) {
    const oracle::Moments raw = evolved_moments(n, ref.jx * ref.jx, t);
    const SpinMoments m = from_oracle(raw);
    const double xs = xi_s_squared(m, n);
    const double xr = xi_r_squared(m, n);
    CHECK(xs >= 0.0);
    CHECK(xr >= xs);
    const double length = std::sqrt(raw.mean.squaredNorm());
    CHECK(xr / xs == doctest::Approx(std::pow(5.0 / length, 2)).epsilon(1e-12));
  }
}

TEST_CASE("degenerate mean spin") {
  const int n = 4;
  SpinMoments m;
  m.second = Eigen::Matrix3d::Identity() * 2.0;
  CHECK_THROWS_AS(xi_s_squared(m, n), DegenerateDirectionError);
  CHECK_THROWS_AS(xi_r_squared(m, n), DegenerateDirectionError);
  const SqueezingSample s = squeezing_sample(0.3, m, n);
  CHECK(s.t == 0.3);
  CHECK_FALSE(s.xi_s_sq.has_value());
  CHECK_FALSE(s.xi_r_sq.has_value());
  CHECK(s.mean_spin_len == 0.0);
}

TEST_CASE("minimum search") {
  auto sample = [](double t, double xi) {
    SqueezingSample s;
    s.t = t;
    s.xi_s_sq = xi;
    return s;
  };

  SUBCASE("parabolic refinement is exact on a parabola") {
    std::vector<SqueezingSample> series;
    for (int k = 0; k <= 20; ++k) {
      const double t = 0.1 * k;
      series.push_back(sample(t, 0.3 + 2.0 * (t - 0.737) * (t - 0.737)));
    }
    const SqueezingMinimum min = find_min_squeezing(series);
    CHECK(min.t_min == doctest::Approx(0.737).epsilon(1e-12));
    CHECK(min.xi_min == doctest::Approx(0.3).epsilon(1e-12));
    CHECK(min.index == 7);
    CHECK_FALSE(min.at_boundary);
  }

  SUBCASE("monotone series reports a boundary minimum") {
    std::vector<SqueezingSample> series;
    for (int k = 0; k <= 10; ++k) {
      series.push_back(sample(k, 1.0));
    }
    CHECK(find_min_squeezing(series).at_boundary);
    series.clear();
    for (int k = 0; k <= 10; ++k) {
      series.push_back(sample(k, 1.0 - 0.01 * k));
    }
    const SqueezingMinimum min = find_min_squeezing(series);
    CHECK(min.at_boundary);
    CHECK(min.index == 10);
    CHECK(min.t_min == 10.0);
  }

  SUBCASE("undefined samples are skipped") {
    std::vector<SqueezingSample> series;
    for (int k = 0; k <= 10; ++k) {
      series.push_back(sample(k, std::pow(k - 4.0, 2) + 0.5));
    }
    series[9].xi_s_sq.reset();
    const SqueezingMinimum min = find_min_squeezing(series);
    CHECK(min.index == 4);
    CHECK(min.xi_min == doctest::Approx(0.5));
    series[5].xi_s_sq.reset();
    CHECK(find_min_squeezing(series).at_boundary);
  }

  SUBCASE("errors") {
    std::vector<SqueezingSample> series{sample(0, 1), sample(1, 0.5)};
    CHECK_THROWS_AS(find_min_squeezing(series), ParameterError);
    series.push_back(SqueezingSample{});
    series[0].xi_s_sq.reset();
    series[1].xi_s_sq.reset();
    CHECK_THROWS_AS(find_min_squeezing(series), ParameterError);
  }
}

TEST_CASE("static minima for N = 10 and N = 100") {
  for (auto [n, t_expected, t_tol, dt] : {std::tuple{10, 0.491, 0.005, 1e-3},
                                           std::tuple{100, 0.0909, 0.001, 1e-4}}) {
    const auto ops = build_collective_operators(SpinSystem(n));
    const auto series = propagate_static(build_dr(ops, 1.0), PureState::all_down(ops.system),
                                         uniform_times(5.0 * t_expected / 2.5, dt), ops);
    const SqueezingMinimum min = find_min_squeezing(series, n);
    CAPTURE(n);
    CHECK(std::abs(min.t_min - t_expected) < t_tol);
    CHECK_FALSE(min.at_boundary);
  }
  const auto ops = build_collective_operators(SpinSystem(10));
  const auto oat = propagate_static(build_oat(ops, 1.0), PureState::all_down(ops.system),
                                    uniform_times(1.0, 1e-3), ops);
  CHECK(find_min_squeezing(oat, 10).xi_min == doctest::Approx(0.2).epsilon(0.05));
}

}  // TEST_SUITE
