#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "oracles.hpp"
#include "spinsq/dynamics.hpp"
#include "spinsq/squeezing.hpp"

using namespace spinsq;

namespace {

double moment_distance(const SpinMoments& a, const SpinMoments& b) {
  return std::max((a.mean - b.mean).cwiseAbs().maxCoeff(),
                  (a.second - b.second).cwiseAbs().maxCoeff());
}

}  // namespace

TEST_SUITE("dynamics") {

TEST_CASE("step policy and grids") {
  CHECK_NOTHROW(StepPolicy{}.validate());
  CHECK_THROWS_AS((StepPolicy{8, 1e-3}).validate(), ParameterError);
  CHECK_THROWS_AS((StepPolicy{128, 0.0}).validate(), ParameterError);
  CHECK(steps_to_cover(1.0, 1e-3) == 1000);
  CHECK(steps_to_cover(1.0005, 1e-3) == 1001);
  const auto times = uniform_times(1.0, 1e-3);
  CHECK(times.size() == 1001);
  CHECK(times.front() == 0.0);
  CHECK(times.back() == 1.0);
  CHECK_THROWS_AS(uniform_times(0.0, 0.1), ParameterError);
}

TEST_CASE("moments match the dense oracle and satisfy the pure-state identities") {
  std::mt19937_64 rng(21);
  for (int n : {1, 4, 13}) {
    const auto ops = build_collective_operators(SpinSystem(n));
    const auto ref = oracle::spin_matrices(n);
    for (int trial = 0; trial < 5; ++trial) {
      const PureState psi(oracle::random_state(n + 1, rng));
      const SpinMoments m = spin_moments(ops, psi);
      const oracle::Moments expected = oracle::moments(ref, psi.amplitudes());
      CHECK((m.mean - expected.mean).cwiseAbs().maxCoeff() < 1e-12);
      CHECK((m.second - expected.second).cwiseAbs().maxCoeff() < 1e-12);
      CHECK(m.second.isApprox(m.second.transpose(), 0.0));
      const double j = n / 2.0;
      CHECK(std::abs(m.second.trace() - j * (j + 1.0)) < 1e-9);
      Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> cov(m.covariance());
      CHECK(cov.eigenvalues().minCoeff() > -1e-9);
    }
  }
}

TEST_CASE("Taylor exponential action agrees with the Pade oracle") {
  std::mt19937_64 rng(4);
  for (int dim : {2, 11, 40}) {
    const Operator h(oracle::random_hermitian(dim, rng) * 30.0);
    const PureState psi(oracle::random_state(dim, rng));
    for (double t : {1e-4, 0.01, 0.3}) {
      const PureState out = taylor_exponential_action(h, t, psi);
      const oracle::Vector expected = oracle::propagator(h.matrix(), t) * psi.amplitudes();
      CHECK((out.amplitudes() - expected).norm() < 1e-11);
      CHECK(std::abs(out.norm() - 1.0) < 1e-12);
    }
  }
  const auto ops = build_collective_operators(SpinSystem(3));
  CHECK_THROWS_AS(taylor_exponential_action(ops.jx * ops.jy, 0.1, PureState::all_down(SpinSystem(3))),
                  ContractError);
}

TEST_CASE("static propagation") {
  const SpinSystem sys(6);
  const auto ops = build_collective_operators(sys);
  const std::vector<double> times = uniform_times(2.0, 0.05);

  SUBCASE("zero Hamiltonian keeps moments constant") {
    std::mt19937_64 rng(9);
    const PureState psi(oracle::random_state(7, rng));
    const auto series = propagate_static(Operator::zero(7), psi, times, ops);
    for (const auto& m : series.moments) {
      CHECK(moment_distance(m, series.moments.front()) < 1e-13);
    }
  }

  SUBCASE("Jz precesses the transverse mean spin at unit frequency") {
    std::mt19937_64 rng(10);
    const PureState psi(oracle::random_state(7, rng));
    const auto series = propagate_static(ops.jz, psi, times, ops);
    const Eigen::Vector3d m0 = series.moments.front().mean;
    for (std::size_t k = 0; k < times.size(); ++k) {
      const double t = times[k];
      const Eigen::Vector3d m = series.moments[k].mean;
      CHECK(std::abs(m.z() - m0.z()) < 1e-12);
      CHECK(std::abs(m.x() - (m0.x() * std::cos(t) - m0.y() * std::sin(t))) < 1e-12);
      CHECK(std::abs(m.y() - (m0.x() * std::sin(t) + m0.y() * std::cos(t))) < 1e-12);
    }
  }

  SUBCASE("matches the Pade propagator") {
    const Operator h = build_dr(ops, 1.0);
    const auto series = propagate_static(h, PureState::all_down(sys), times, ops);
    const auto ref = oracle::spin_matrices(6);
    for (std::size_t k = 0; k < times.size(); k += 7) {
      const oracle::Vector psi = oracle::propagator(h.matrix(), times[k]) *
                                 PureState::all_down(sys).amplitudes();
      const oracle::Moments expected = oracle::moments(ref, psi);
      CHECK((series.moments[k].mean - expected.mean).cwiseAbs().maxCoeff() < 1e-11);
    }
  }

  CHECK_THROWS_AS(propagate_static(ops.jx * ops.jy, PureState::all_down(sys), times, ops),
                  ContractError);
  CHECK_THROWS_AS(propagate_static(ops.jz, PureState::all_down(SpinSystem(5)), times, ops),
                  ShapeError);
}

TEST_CASE("double-resonance static minimum near t = 0.491 for N = 10") {
  const auto ops = build_collective_operators(SpinSystem(10));
  const auto series =
      propagate_static(build_dr(ops, 1.0), PureState::all_down(ops.system), uniform_times(1.0, 1e-3), ops);
  const SqueezingMinimum min = find_min_squeezing(series, 10);
  CHECK(min.t_min == doctest::Approx(0.491).epsilon(0.005 / 0.491));
  CHECK(min.xi_min == doctest::Approx(0.15).epsilon(0.01 / 0.15));
}

TEST_CASE("driven propagation of a constant Hamiltonian reproduces static evolution") {
  const SpinSystem sys(10);
  const auto ops = build_collective_operators(sys);
  const Operator h = build_dr(ops, 1.0);
  StepPolicy policy;
  const double period = 0.05;
  const auto driven = propagate_driven(LinearHamiltonian::constant(h), PureState::all_down(sys), 1.0,
                                       period, policy, ops);
  const auto generic = propagate_driven([&](double, std::size_t) { return h; },
                                        PureState::all_down(sys), 1.0, period, policy, ops);
  const auto exact = propagate_static(h, PureState::all_down(sys), driven.times, ops);
  REQUIRE(driven.size() == exact.size());
  double worst = 0.0;
  for (std::size_t k = 0; k < driven.size(); ++k) {
    worst = std::max(worst, moment_distance(driven.moments[k], exact.moments[k]));
    CHECK(moment_distance(driven.moments[k], generic.moments[k]) < 1e-12);
  }
  CHECK(worst < 1e-9);
}

TEST_CASE("driven stepping conserves the norm") {
  const SpinSystem sys(10);
  const auto ops = build_collective_operators(sys);
  const ControlParams params(1.0, 2, 1, 0.491 / 20);
  const DrivenHamiltonian h(params, ops);
  double worst = 0.0;
  drive([&](double t, std::size_t) { return h.at(t); }, PureState::all_down(sys), 2000,
        params.period() / 128,
        [&](std::size_t, double, const PureState& psi) {
          worst = std::max(worst, std::abs(psi.norm() - 1.0));
        });
  CHECK(worst < 1e-10);
}

TEST_CASE("driven stepping reports a non-Hermitian source") {
  const SpinSystem sys(3);
  const auto ops = build_collective_operators(sys);
  CHECK_THROWS_AS(drive([&](double, std::size_t) { return ops.jx * ops.jy; }, PureState::all_down(sys),
                        4, 0.01, nullptr),
                  ContractError);
  CHECK_THROWS_AS(drive([&](double, std::size_t) { return ops.jx; }, PureState::all_down(sys), 4,
                        0.0, nullptr),
                  ParameterError);
}

TEST_CASE("stroboscopic agreement with the averaged Hamiltonian") {
  const SpinSystem sys(10);
  const auto ops = build_collective_operators(sys);
  const double t_min = 0.4915;
  const Operator averaged = build_dr(ops, 1.0);
  const MomentEvaluator evaluate(ops);
  const HermitianSpectrum spectrum(averaged);

  struct Stats {
    double gap = 0.0;
    double window_gap = 0.0;
    double fidelity = 1.0;
  };
  // Largest xi_S^2 gap and smallest fidelity over the period boundaries in
  // [0, 1]; window_gap stops at t = 0.6, just past the minimum. Later the mean
  // spin shrinks and xi_S^2 differences stop tracking the state distance.
  auto stroboscopic_stats = [&](int n_cyc) {
    Stats stats;
    const ControlParams params(1.0, 2, 1, t_min / n_cyc);
    // At period boundaries U_c = +-1, so the toggling-frame state is the lab state.
    const FramedHamiltonian h = DrivenHamiltonian(params, ops).toggling_frame();
    const std::size_t per = 128;
    const std::size_t periods = static_cast<std::size_t>(std::floor(1.0 / params.period()));
    drive([&](double t, std::size_t) { return h.generator.at(t); }, PureState::all_down(sys),
          periods * per, params.period() / per,
          [&](std::size_t k, double t, const PureState& psi) {
            if (k % per != 0) {
              return;
            }
            const PureState avg = spectrum.evolve(PureState::all_down(sys), t);
            stats.fidelity = std::min(stats.fidelity, psi.fidelity(avg));
            const auto a = squeezing_sample(t, evaluate(psi), 10);
            const auto b = squeezing_sample(t, evaluate(avg), 10);
            if (a.xi_s_sq && b.xi_s_sq) {
              const double gap = std::abs(*a.xi_s_sq - *b.xi_s_sq);
              stats.gap = std::max(stats.gap, gap);
              if (t <= 0.6) {
                stats.window_gap = std::max(stats.window_gap, gap);
              }
            }
          });
    return stats;
  };

  const Stats s5 = stroboscopic_stats(5);
  const Stats s20 = stroboscopic_stats(20);
  const Stats s40 = stroboscopic_stats(40);
  CHECK(s20.gap < 0.01);
  CHECK(s20.fidelity >= 0.999);
  CHECK(s40.fidelity > s20.fidelity);
  CHECK(s20.fidelity > s5.fidelity);
  CHECK(s40.window_gap < s20.window_gap);
  CHECK(s20.window_gap < s5.window_gap);
}

TEST_CASE("doubling the substep count barely changes the final state") {
  const SpinSystem sys(10);
  const auto ops = build_collective_operators(sys);
  const ControlParams params(1.0, 2, 1, 0.4915 / 20);
  const FramedHamiltonian h = DrivenHamiltonian(params, ops).toggling_frame();
  auto final_state = [&](std::size_t per) {
    return drive([&](double t, std::size_t) { return h.generator.at(t); }, PureState::all_down(sys),
                 20 * per, params.period() / static_cast<double>(per), nullptr);
  };
  const PureState k128 = final_state(128);
  const PureState k256 = final_state(256);
  CHECK(1.0 - k128.fidelity(k256) < 1e-6);
}

TEST_CASE("toggling-frame moments match a finely stepped lab-frame run") {
  const SpinSystem sys(10);
  const auto ops = build_collective_operators(sys);
  const ControlParams params(1.0, 2, 1, 0.05);
  const DrivenHamiltonian lab(params, ops);
  StepPolicy coarse;
  StepPolicy fine;
  fine.substeps_per_period = 128 * 64;
  const auto framed =
      propagate_driven(lab.toggling_frame(), PureState::all_down(sys), 0.3, 0.05, coarse, ops);
  const auto reference =
      propagate_driven(lab.linear(), PureState::all_down(sys), 0.3, 0.05, fine, ops);
  REQUIRE(reference.size() == 64 * (framed.size() - 1) + 1);
  double worst = 0.0;
  for (std::size_t k = 0; k < framed.size(); ++k) {
    const SpinMoments& a = framed.moments[k];
    const SpinMoments& b = reference.moments[64 * k];
    CHECK(std::abs(framed.times[k] - reference.times[64 * k]) < 1e-12);
    worst = std::max(worst, (a.mean - b.mean).cwiseAbs().maxCoeff());
    worst = std::max(worst, (a.second - b.second).cwiseAbs().maxCoeff());
  }
  // Second moments reach J^2 = 25.
  CHECK(worst < 1e-3);
}

TEST_CASE("rotating moments") {
  const SpinSystem sys(6);
  const auto ops = build_collective_operators(sys);
  const ControlParams params(1.0, 3, 1, 0.2);
  const ControlPropagator control(params, ops);
  std::mt19937_64 rng(31);
  const PureState phi(oracle::random_state(7, rng));
  for (double t : {0.013, 0.07, 0.19}) {
    const PureState psi(control.at(t).matrix() * phi.amplitudes());
    const SpinMoments expected = spin_moments(ops, psi);
    const SpinMoments got = rotate_moments(spin_moments(ops, phi), control_rotation(params, t));
    CHECK((got.mean - expected.mean).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((got.second - expected.second).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("ensemble without noise equals one driven trajectory") {
  const SpinSystem sys(6);
  const auto ops = build_collective_operators(sys);
  const ControlParams params(1.0, 2, 1, 0.05);
  const LinearHamiltonian h = DrivenHamiltonian(params, ops).linear();
  StepPolicy policy;
  const auto single = propagate_driven(h, PureState::all_down(sys), 0.4, params.period(), policy, ops);
  EnsembleScenario scenario{ops, h, PureState::all_down(sys), OUParams{2.0, 0.0}, 0.4, params.period()};
  EnsembleOptions options;
  options.n_paths = 37;
  options.workers = 3;
  const EnsembleResult result = run_ensemble(scenario, options);
  REQUIRE(result.mean_moments.size() == single.size());
  for (std::size_t k = 0; k < single.size(); ++k) {
    CHECK(result.mean_moments.times[k] == single.times[k]);
    CHECK(moment_distance(result.mean_moments.moments[k], single.moments[k]) == 0.0);
  }
}

TEST_CASE("noisy ensemble is deterministic across worker counts") {
  const SpinSystem sys(4);
  const auto ops = build_collective_operators(sys);
  const ControlParams params(1.0, 2, 1, 0.05);
  EnsembleScenario scenario{ops, DrivenHamiltonian(params, ops).linear(), PureState::all_down(sys),
                            OUParams{2.0, 20.0}, 0.3, params.period()};
  EnsembleOptions options;
  options.n_paths = 70;
  options.master_seed = 77;
  options.per_path_statistic = [](const SpinMoments& m) { return m.mean.norm(); };

  options.workers = 1;
  const EnsembleResult one = run_ensemble(scenario, options);
  for (unsigned w : {2u, 5u}) {
    options.workers = w;
    const EnsembleResult many = run_ensemble(scenario, options);
    for (std::size_t k = 0; k < one.mean_moments.size(); ++k) {
      CHECK(moment_distance(one.mean_moments.moments[k], many.mean_moments.moments[k]) == 0.0);
      CHECK(one.statistic_mean[k] == many.statistic_mean[k]);
    }
  }
  options.master_seed = 78;
  const EnsembleResult other = run_ensemble(scenario, options);
  CHECK(moment_distance(one.mean_moments.moments.back(), other.mean_moments.moments.back()) > 0.0);
}

TEST_CASE("ensemble mean equals the average of individual trajectories") {
  const SpinSystem sys(4);
  const auto ops = build_collective_operators(sys);
  const ControlParams params(1.0, 3, 1, 0.05);
  const LinearHamiltonian system = DrivenHamiltonian(params, ops).linear();
  const OUParams noise{2.0, 20.0};
  const double t_end = 0.2;
  EnsembleScenario scenario{ops, system, PureState::all_down(sys), noise, t_end, params.period()};
  EnsembleOptions options;
  options.n_paths = 5;
  options.master_seed = 3;
  const EnsembleResult result = run_ensemble(scenario, options);

  // Trajectory i sees the OU path seeded by derive_seed(master, i), added as B.J.
  const double dt = params.period() / options.policy.substeps_per_period;
  const std::size_t n_steps = steps_to_cover(t_end, dt);
  std::vector<TrajectoryMoments> runs;
  for (std::size_t i = 0; i < options.n_paths; ++i) {
    const NoisePath path = sample_ou_path(noise, n_steps, dt, derive_seed(options.master_seed, i));
    runs.push_back(propagate_driven(
        [&](double t, std::size_t k) { return system.at(t) + noise_hamiltonian(path, k, ops); },
        PureState::all_down(sys), t_end, params.period(), options.policy, ops));
  }
  const TrajectoryMoments mean = average_moments(runs);
  double worst = 0.0;
  for (std::size_t k = 0; k < mean.size(); ++k) {
    worst = std::max(worst, moment_distance(mean.moments[k], result.mean_moments.moments[k]));
    const Eigen::Matrix3d s = result.mean_moments.moments[k].second;
    CHECK((s - s.transpose()).cwiseAbs().maxCoeff() == 0.0);
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> cov(result.mean_moments.moments[k].covariance());
    CHECK(cov.eigenvalues().minCoeff() > -1e-9);
  }
  CHECK(worst < 1e-12);
}

TEST_CASE("pairwise averaging is insensitive to trajectory order") {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> g;
  std::vector<TrajectoryMoments> runs(9);
  for (auto& r : runs) {
    r.times = {0.0, 1.0};
    r.moments.resize(2);
    for (auto& m : r.moments) {
      m.mean = Eigen::Vector3d(g(rng), g(rng), g(rng));
      m.second = Eigen::Matrix3d::Identity() * g(rng);
    }
  }
  const TrajectoryMoments forward = average_moments(runs);
  std::reverse(runs.begin(), runs.end());
  const TrajectoryMoments backward = average_moments(runs);
  for (std::size_t k = 0; k < 2; ++k) {
    CHECK(moment_distance(forward.moments[k], backward.moments[k]) < 1e-15);
  }
  CHECK_THROWS_AS(average_moments({}), ParameterError);
}

TEST_CASE("ensemble failures carry the lowest failing trajectory index") {
  const SpinSystem sys(3);
  const auto ops = build_collective_operators(sys);
  // A coefficient that turns non-finite makes every trajectory fail.
  const LinearHamiltonian broken({ops.jx}, [](double t, std::span<double> c) {
    c[0] = t > 0.01 ? std::nan("") : 1.0;
  });
  EnsembleScenario scenario{ops, broken, PureState::all_down(sys), OUParams{1.0, 1.0}, 0.1, 0.05};
  EnsembleOptions options;
  options.n_paths = 40;
  options.workers = 2;
  try {
    run_ensemble(scenario, options);
    FAIL("expected an integrator failure");
  } catch (const IntegratorError& e) {
    CHECK(e.trajectory() == 0);
  }
  options.n_paths = 0;
  CHECK_THROWS_AS(run_ensemble(scenario, options), ParameterError);
}

}  // TEST_SUITE
