#pragma once

// Scenario configuration and the four drivers behind the
// `spinsq` command-line tool: verify-dd, evolve, noise-ensemble and scaling.
//
// Configuration is a JSON document whose keys mirror ScenarioConfig:
//
//   {
//     "n_spins": 10, "hamiltonian": "driven-dd", "chi": 1.0,
//     "control": {"n_x": 2, "n_y": 1, "n_cyc": 20, "t_min": null},
//     "noise": {"alpha": 2.0, "sigma_sq": 20.0, "n_paths": 2000,
//               "master_seed": 1234, "averaging": "moments"},
//     "time": {"t_end": 1.0, "samples": 1000, "substeps_per_period": 128, "dt": null},
//     "scaling": {"n_list": [10, 20, 50, 100, 200, 500],
//                 "hamiltonians": ["oat", "tat", "dr"], "samples": 1000},
//     "verify": {"pairs": [[2, 1], [4, 2], [3, 1], [5, 3], [1, 1]]},
//     "output": "out.csv"
//   }
//
// Every key is optional; missing keys keep their defaults. "control" and
// "noise" may be null to disable the block.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "spinsq/dynamics.hpp"
#include "spinsq/hamiltonians.hpp"
#include "spinsq/noise.hpp"
#include "spinsq/squeezing.hpp"

namespace spinsq {

std::string_view tool_version() noexcept;

enum class HamiltonianKind { kOat, kTat, kDrAveraged, kDrivenDd };

std::string_view to_string(HamiltonianKind kind) noexcept;
/// Accepts "oat", "tat", "dr" and "driven-dd". Throws UsageError otherwise.
HamiltonianKind parse_hamiltonian_kind(std::string_view name);

enum class EnsembleAveraging {
  /// Average moments over paths, then evaluate squeezing.
  kMoments,
  /// Evaluate xi_S^2 on every path, then average.
  kPerPathXi,
};

inline constexpr std::uint64_t kDefaultMasterSeed = 1234;

struct ControlInputs {
  int n_x = 2;
  int n_y = 1;
  /// Control periods per optimal squeezing time: t_c = t_min / n_cyc.
  int n_cyc = 20;
  /// Override of the double-resonance optimal time; computed when absent.
  std::optional<double> t_min;
};

struct NoiseInputs {
  OUParams ou{2.0, 20.0};
  std::size_t n_paths = 100;
  std::uint64_t master_seed = kDefaultMasterSeed;
  EnsembleAveraging averaging = EnsembleAveraging::kMoments;
};

struct TimeGrid {
  double t_end = 1.0;
  /// Intervals of the static output grid on [0, t_end].
  std::size_t samples = 1000;
  int substeps_per_period = 128;
  /// Noise grid step for runs without a control block.
  std::optional<double> dt;
};

struct ScalingInputs {
  std::vector<int> n_list{10, 20, 50, 100, 200, 500};
  std::vector<HamiltonianKind> hamiltonians{HamiltonianKind::kOat, HamiltonianKind::kTat,
                                            HamiltonianKind::kDrAveraged};
  /// Grid intervals per scan window.
  std::size_t samples = 1000;
};

struct VerifyInputs {
  std::vector<std::pair<int, int>> pairs{{2, 1}, {4, 2}, {3, 1}, {5, 3}, {1, 1}};
};

struct ScenarioConfig {
  int n_spins = 10;
  HamiltonianKind hamiltonian = HamiltonianKind::kDrivenDd;
  double chi = 1.0;
  std::optional<ControlInputs> control = ControlInputs{};
  std::optional<NoiseInputs> noise;
  TimeGrid time;
  ScalingInputs scaling;
  VerifyInputs verify;

  // Execution settings; not part of the scenario echo.
  std::string output;
  unsigned workers = 1;

  /// Throws UsageError for inconsistent settings.
  void validate() const;
};

ScenarioConfig parse_config(std::string_view json_text);
/// Throws IoError when the file cannot be read, UsageError when it does not parse.
ScenarioConfig load_config(const std::filesystem::path& path);
/// Scenario echo (excludes output path and worker count); single line unless `pretty`.
std::string config_to_json(const ScenarioConfig& config, bool pretty = false);

/// 10 log10(xi).
double to_decibels(double xi);

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
};

/// Least-squares line through (log x, log y).
LinearFit fit_log_log(std::span<const double> x, std::span<const double> y);

/// Grid search for the first squeezing minimum of a static Hamiltonian:
/// scans [0, 5 t_guess] and doubles the window while the minimum sits on its
/// right edge.
SqueezingMinimum scan_static_minimum(const CollectiveOperators& ops, const Operator& h,
                                     double t_guess, std::size_t samples);

/// Optimal squeezing time of the double-resonance averaged Hamiltonian.
double dr_optimal_time(const CollectiveOperators& ops, double chi, std::size_t samples = 2000);

/// The control parameters a driven scenario runs with (t_c = t_min / n_cyc).
ControlParams resolve_control(const ScenarioConfig& config, const CollectiveOperators& ops);

struct DdCheckRow {
  int n_x = 0;
  int n_y = 0;
  DecouplingResidual residual{};
  /// ||J_k||_F (equal for k = x, y, z).
  double j_norm = 0.0;
  bool decouples = false;
  bool passed = false;
  std::optional<AveragedForm::Kind> form;
  /// ||H_avg - closed form - shift I||_F for decoupling pairs.
  std::optional<double> averaged_error;
};

struct VerifyDdReport {
  std::vector<DdCheckRow> rows;
  /// Every decoupling pair reached residual < 1e-8 and closed-form error < 1e-8.
  bool all_passed = true;
};

inline constexpr double kResidualThreshold = 1e-8;
inline constexpr double kViolationFraction = 0.1;

VerifyDdReport cmd_verify_dd(const ScenarioConfig& config);
void write_verify_report(std::ostream& out, const VerifyDdReport& report);

struct TimeSeries {
  std::vector<std::string> header;
  std::vector<SqueezingSample> samples;
  std::vector<SpinMoments> moments;
};

TimeSeries cmd_evolve(const ScenarioConfig& config);
TimeSeries cmd_noise_ensemble(const ScenarioConfig& config);
/// Columns t, xi_s_sq, xi_r_sq, mean_spin_len, jx, jy, jz.
void write_time_series_csv(std::ostream& out, const TimeSeries& series);

struct ScalingRow {
  HamiltonianKind hamiltonian = HamiltonianKind::kOat;
  int n_spins = 0;
  double xi_min = 0.0;
  double xi_min_db = 0.0;
  double t_min = 0.0;
};

struct ScalingReport {
  std::vector<std::string> header;
  std::vector<ScalingRow> rows;
  std::vector<std::pair<HamiltonianKind, LinearFit>> fits;
};

ScalingReport cmd_scaling(const ScenarioConfig& config);
void write_scaling_csv(std::ostream& out, const ScalingReport& report);

}  // namespace spinsq
