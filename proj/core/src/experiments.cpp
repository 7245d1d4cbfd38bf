#include "spinsq/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <memory>
#include <ostream>
#include <sstream>
#include <thread>

#include <json.hpp>

namespace spinsq {

namespace {

using Json = nlohmann::ordered_json;

#ifndef SPINSQ_VERSION
#define SPINSQ_VERSION "dev"
#endif

std::string format_number(double v) {
  if (std::isnan(v)) {
    return "nan";
  }
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return buf;
}

std::string format_optional(const std::optional<double>& v) {
  return v ? format_number(*v) : std::string("nan");
}

// Throws UsageError naming any key of `obj` outside `allowed`.
void reject_unknown_keys(const Json& obj, std::initializer_list<std::string_view> allowed,
                         std::string_view where) {
  for (const auto& item : obj.items()) {
    if (std::find(allowed.begin(), allowed.end(), item.key()) == allowed.end()) {
      throw UsageError("unknown key '" + item.key() + "' in " + std::string(where));
    }
  }
}

template <typename T>
void read_into(const Json& obj, const char* key, T& target) {
  if (obj.contains(key)) {
    try {
      target = obj.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
      throw UsageError(std::string("bad value for '") + key + "': " + e.what());
    }
  }
}

template <typename T>
void read_optional(const Json& obj, const char* key, std::optional<T>& target) {
  if (obj.contains(key)) {
    if (obj.at(key).is_null()) {
      target.reset();
    } else {
      T value{};
      read_into(obj, key, value);
      target = value;
    }
  }
}

const char* averaging_name(EnsembleAveraging a) {
  return a == EnsembleAveraging::kMoments ? "moments" : "per-path";
}

Json to_json(const ScenarioConfig& c) {
  Json j;
  j["n_spins"] = c.n_spins;
  j["hamiltonian"] = std::string(to_string(c.hamiltonian));
  j["chi"] = c.chi;
  if (c.control) {
    Json ctl;
    ctl["n_x"] = c.control->n_x;
    ctl["n_y"] = c.control->n_y;
    ctl["n_cyc"] = c.control->n_cyc;
    ctl["t_min"] = c.control->t_min ? Json(*c.control->t_min) : Json(nullptr);
    j["control"] = ctl;
  } else {
    j["control"] = nullptr;
  }
  if (c.noise) {
    Json n;
    n["alpha"] = c.noise->ou.alpha;
    n["sigma_sq"] = c.noise->ou.sigma_sq;
    n["n_paths"] = c.noise->n_paths;
    n["master_seed"] = c.noise->master_seed;
    n["averaging"] = averaging_name(c.noise->averaging);
    j["noise"] = n;
  } else {
    j["noise"] = nullptr;
  }
  Json t;
  t["t_end"] = c.time.t_end;
  t["samples"] = c.time.samples;
  t["substeps_per_period"] = c.time.substeps_per_period;
  t["dt"] = c.time.dt ? Json(*c.time.dt) : Json(nullptr);
  j["time"] = t;
  Json s;
  s["n_list"] = c.scaling.n_list;
  Json kinds = Json::array();
  for (auto k : c.scaling.hamiltonians) {
    kinds.push_back(std::string(to_string(k)));
  }
  s["hamiltonians"] = kinds;
  s["samples"] = c.scaling.samples;
  j["scaling"] = s;
  Json pairs = Json::array();
  for (auto [nx, ny] : c.verify.pairs) {
    pairs.push_back(Json::array({nx, ny}));
  }
  j["verify"] = Json{{"pairs", pairs}};
  return j;
}

Operator static_hamiltonian(HamiltonianKind kind, const CollectiveOperators& ops, double chi) {
  switch (kind) {
    case HamiltonianKind::kOat:
      return build_oat(ops, chi);
    case HamiltonianKind::kTat:
      return build_tat(ops, chi);
    case HamiltonianKind::kDrAveraged:
      return build_dr(ops, chi);
    case HamiltonianKind::kDrivenDd:
      break;
  }
  throw UsageError("driven-dd has no static Hamiltonian");
}

std::vector<double> linspace(double t_end, std::size_t intervals) {
  std::vector<double> times(intervals + 1);
  for (std::size_t k = 0; k <= intervals; ++k) {
    times[k] = t_end * static_cast<double>(k) / static_cast<double>(intervals);
  }
  return times;
}

std::vector<std::string> base_header(const ScenarioConfig& config, std::string_view command) {
  return {"spinsq " + std::string(tool_version()) + " " + std::string(command),
          "config: " + config_to_json(config)};
}

double first_guess(const ScenarioConfig& config, int n_spins) {
  return 1.0 / (std::abs(config.chi) * std::pow(static_cast<double>(n_spins), 2.0 / 3.0));
}

void write_header(std::ostream& out, const std::vector<std::string>& header) {
  for (const auto& line : header) {
    out << "# " << line << '\n';
  }
}

}  // namespace

std::string_view tool_version() noexcept { return SPINSQ_VERSION; }

std::string_view to_string(HamiltonianKind kind) noexcept {
  switch (kind) {
    case HamiltonianKind::kOat:
      return "oat";
    case HamiltonianKind::kTat:
      return "tat";
    case HamiltonianKind::kDrAveraged:
      return "dr";
    case HamiltonianKind::kDrivenDd:
      return "driven-dd";
  }
  return "unknown";
}

HamiltonianKind parse_hamiltonian_kind(std::string_view name) {
  if (name == "oat") return HamiltonianKind::kOat;
  if (name == "tat") return HamiltonianKind::kTat;
  if (name == "dr") return HamiltonianKind::kDrAveraged;
  if (name == "driven-dd") return HamiltonianKind::kDrivenDd;
  throw UsageError("unknown hamiltonian '" + std::string(name) +
                   "' (expected oat, tat, dr or driven-dd)");
}

void ScenarioConfig::validate() const {
  if (n_spins < 1) {
    throw UsageError("n_spins must be >= 1");
  }
  if (!std::isfinite(chi) || chi == 0.0) {
    throw UsageError("chi must be finite and non-zero");
  }
  if (hamiltonian == HamiltonianKind::kDrivenDd && !control) {
    throw UsageError("driven-dd requires a control block");
  }
  if (control) {
    if (control->n_x == 0 || control->n_y == 0) {
      throw UsageError("control winding numbers must be non-zero");
    }
    if (control->n_cyc < 1) {
      throw UsageError("control.n_cyc must be >= 1");
    }
    if (control->t_min && !(*control->t_min > 0.0)) {
      throw UsageError("control.t_min must be positive");
    }
  }
  if (noise) {
    if (noise->n_paths < 1) {
      throw UsageError("noise.n_paths must be >= 1");
    }
    try {
      noise->ou.validate();
    } catch (const ParameterError& e) {
      throw UsageError(e.what());
    }
  }
  if (!(time.t_end > 0.0) || !std::isfinite(time.t_end)) {
    throw UsageError("time.t_end must be positive");
  }
  if (time.samples < 2) {
    throw UsageError("time.samples must be >= 2");
  }
  if (time.substeps_per_period < 16) {
    throw UsageError("time.substeps_per_period must be >= 16");
  }
  if (time.dt && !(*time.dt > 0.0)) {
    throw UsageError("time.dt must be positive");
  }
  if (workers < 1) {
    throw UsageError("workers must be >= 1");
  }
}

ScenarioConfig parse_config(std::string_view json_text) {
  Json j;
  try {
    j = Json::parse(json_text.begin(), json_text.end(), nullptr, true, true);
  } catch (const nlohmann::json::exception& e) {
    throw UsageError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) {
    throw UsageError("config must be a JSON object");
  }
  reject_unknown_keys(j,
                      {"n_spins", "hamiltonian", "chi", "control", "noise", "time", "scaling",
                       "verify", "output", "workers"},
                      "config");

  ScenarioConfig c;
  read_into(j, "n_spins", c.n_spins);
  if (j.contains("hamiltonian")) {
    std::string name;
    read_into(j, "hamiltonian", name);
    c.hamiltonian = parse_hamiltonian_kind(name);
  }
  read_into(j, "chi", c.chi);

  if (j.contains("control")) {
    const Json& ctl = j.at("control");
    if (ctl.is_null()) {
      c.control.reset();
    } else {
      reject_unknown_keys(ctl, {"n_x", "n_y", "n_cyc", "t_min"}, "control");
      ControlInputs in;
      read_into(ctl, "n_x", in.n_x);
      read_into(ctl, "n_y", in.n_y);
      read_into(ctl, "n_cyc", in.n_cyc);
      read_optional(ctl, "t_min", in.t_min);
      c.control = in;
    }
  }

  if (j.contains("noise")) {
    const Json& n = j.at("noise");
    if (n.is_null()) {
      c.noise.reset();
    } else {
      reject_unknown_keys(n, {"alpha", "sigma_sq", "n_paths", "master_seed", "averaging"},
                          "noise");
      NoiseInputs in;
      read_into(n, "alpha", in.ou.alpha);
      read_into(n, "sigma_sq", in.ou.sigma_sq);
      read_into(n, "n_paths", in.n_paths);
      read_into(n, "master_seed", in.master_seed);
      if (n.contains("averaging")) {
        std::string mode;
        read_into(n, "averaging", mode);
        if (mode == "moments") {
          in.averaging = EnsembleAveraging::kMoments;
        } else if (mode == "per-path") {
          in.averaging = EnsembleAveraging::kPerPathXi;
        } else {
          throw UsageError("noise.averaging must be 'moments' or 'per-path'");
        }
      }
      c.noise = in;
    }
  }

  if (j.contains("time")) {
    const Json& t = j.at("time");
    reject_unknown_keys(t, {"t_end", "samples", "substeps_per_period", "dt"}, "time");
    read_into(t, "t_end", c.time.t_end);
    read_into(t, "samples", c.time.samples);
    read_into(t, "substeps_per_period", c.time.substeps_per_period);
    read_optional(t, "dt", c.time.dt);
  }

  if (j.contains("scaling")) {
    const Json& s = j.at("scaling");
    reject_unknown_keys(s, {"n_list", "hamiltonians", "samples"}, "scaling");
    read_into(s, "n_list", c.scaling.n_list);
    if (s.contains("hamiltonians")) {
      std::vector<std::string> names;
      read_into(s, "hamiltonians", names);
      c.scaling.hamiltonians.clear();
      for (const auto& name : names) {
        c.scaling.hamiltonians.push_back(parse_hamiltonian_kind(name));
      }
    }
    read_into(s, "samples", c.scaling.samples);
  }

  if (j.contains("verify")) {
    const Json& v = j.at("verify");
    reject_unknown_keys(v, {"pairs"}, "verify");
    std::vector<std::vector<int>> raw;
    read_into(v, "pairs", raw);
    c.verify.pairs.clear();
    for (const auto& p : raw) {
      if (p.size() != 2) {
        throw UsageError("verify.pairs entries must be [n_x, n_y]");
      }
      c.verify.pairs.emplace_back(p[0], p[1]);
    }
  }

  read_into(j, "output", c.output);
  read_into(j, "workers", c.workers);
  return c;
}

ScenarioConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw IoError("cannot open config file " + path.string());
  }
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_config(buffer.str());
}

std::string config_to_json(const ScenarioConfig& config, bool pretty) {
  return to_json(config).dump(pretty ? 2 : -1);
}

double to_decibels(double xi) { return 10.0 * std::log10(xi); }

LinearFit fit_log_log(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) {
    throw ParameterError("log-log fit needs at least two paired points");
  }
  const double n = static_cast<double>(x.size());
  double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!(x[i] > 0.0) || !(y[i] > 0.0)) {
      throw ParameterError("log-log fit needs positive data");
    }
    const double lx = std::log(x[i]);
    const double ly = std::log(y[i]);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  const double denom = n * sxx - sx * sx;
  LinearFit fit;
  fit.slope = (n * sxy - sx * sy) / denom;
  fit.intercept = (sy - fit.slope * sx) / n;
  return fit;
}

SqueezingMinimum scan_static_minimum(const CollectiveOperators& ops, const Operator& h,
                                     double t_guess, std::size_t samples) {
  if (!(t_guess > 0.0)) {
    throw ParameterError("time guess must be positive");
  }
  const HermitianSpectrum spectrum(h);
  const PureState psi0 = PureState::all_down(ops.system);
  double t_end = 5.0 * t_guess;
  for (int attempt = 0; attempt < 16; ++attempt) {
    const auto times = linspace(t_end, samples);
    const auto series = propagate_static(spectrum, psi0, times, ops);
    const auto squeezing = squeezing_series(series, ops.system.n_spins());
    const SqueezingMinimum min = find_min_squeezing(squeezing);
    if (min.index + 1 < squeezing.size()) {
      return min;
    }
    t_end *= 2.0;
  }
  throw NumericError("squeezing minimum keeps moving past the scan window");
}

double dr_optimal_time(const CollectiveOperators& ops, double chi, std::size_t samples) {
  const double guess =
      1.0 / (std::abs(chi) * std::pow(static_cast<double>(ops.system.n_spins()), 2.0 / 3.0));
  return scan_static_minimum(ops, build_dr(ops, chi), guess, samples).t_min;
}

ControlParams resolve_control(const ScenarioConfig& config, const CollectiveOperators& ops) {
  if (!config.control) {
    throw UsageError("scenario has no control block");
  }
  const ControlInputs& in = *config.control;
  const double t_min = in.t_min ? *in.t_min : dr_optimal_time(ops, config.chi);
  return ControlParams(config.chi, in.n_x, in.n_y, t_min / in.n_cyc);
}

VerifyDdReport cmd_verify_dd(const ScenarioConfig& config) {
  config.validate();
  if (config.verify.pairs.empty()) {
    throw UsageError("verify-dd needs at least one (n_x, n_y) pair");
  }
  const auto ops = build_collective_operators(SpinSystem(config.n_spins));
  const Index dim = ops.system.dim();

  VerifyDdReport report;
  for (auto [nx, ny] : config.verify.pairs) {
    if (nx == 0 || ny == 0) {
      throw UsageError("winding numbers must be non-zero");
    }
    const ControlParams params(config.chi, nx, ny, 1.0);
    DdCheckRow row;
    row.n_x = nx;
    row.n_y = ny;
    row.residual = dd_residual(params, ops);
    row.j_norm = ops.jx.frobenius_norm();
    row.decouples = params.decouples();
    if (row.decouples) {
      const AveragedHamiltonian avg = averaged_hamiltonian(params, ops);
      const Operator expected = averaged_closed_form(params, ops) +
                                avg.form.constant_shift * Operator::identity(dim);
      row.form = avg.form.kind;
      row.averaged_error = (avg.op - expected).frobenius_norm();
      row.passed =
          row.residual.max() < kResidualThreshold && *row.averaged_error < kResidualThreshold;
      report.all_passed = report.all_passed && row.passed;
    } else {
      row.passed = row.residual.max() >= kViolationFraction * row.j_norm;
    }
    report.rows.push_back(row);
  }
  return report;
}

void write_verify_report(std::ostream& out, const VerifyDdReport& report) {
  out << "n_x,n_y,decouples,residual_x,residual_y,residual_z,j_norm,averaged_form,"
         "averaged_error,status\n";
  for (const auto& r : report.rows) {
    std::string status;
    if (r.decouples) {
      status = r.passed ? "pass" : "FAIL";
    } else {
      status = r.passed ? "expected-fail(|n_x|==|n_y|)" : "FAIL(expected residual not seen)";
    }
    out << r.n_x << ',' << r.n_y << ',' << (r.decouples ? "yes" : "no") << ','
        << format_number(r.residual.x) << ',' << format_number(r.residual.y) << ','
        << format_number(r.residual.z) << ',' << format_number(r.j_norm) << ','
        << (r.form ? to_string(*r.form) : "-") << ',' << format_optional(r.averaged_error) << ','
        << status << '\n';
  }
}

TimeSeries cmd_evolve(const ScenarioConfig& config) {
  config.validate();
  const auto ops = build_collective_operators(SpinSystem(config.n_spins));
  const PureState psi0 = PureState::all_down(ops.system);

  TimeSeries out;
  out.header = base_header(config, "evolve");
  TrajectoryMoments moments;
  if (config.hamiltonian == HamiltonianKind::kDrivenDd) {
    const ControlParams params = resolve_control(config, ops);
    const DrivenHamiltonian driven(params, ops);
    StepPolicy policy;
    policy.substeps_per_period = config.time.substeps_per_period;
    moments = propagate_driven(driven.toggling_frame(), psi0, config.time.t_end, params.period(),
                               policy, ops);
    out.header.push_back("t_c: " + format_number(params.period()));
  } else {
    const Operator h = static_hamiltonian(config.hamiltonian, ops, config.chi);
    moments = propagate_static(h, psi0, linspace(config.time.t_end, config.time.samples), ops);
  }
  out.samples = squeezing_series(moments, config.n_spins);
  out.moments = std::move(moments.moments);
  return out;
}

TimeSeries cmd_noise_ensemble(const ScenarioConfig& config) {
  config.validate();
  if (!config.noise) {
    throw UsageError("noise-ensemble requires a noise block");
  }
  const NoiseInputs& noise = *config.noise;
  const auto ops = build_collective_operators(SpinSystem(config.n_spins));
  const PureState psi0 = PureState::all_down(ops.system);

  TimeSeries out;
  out.header = base_header(config, "noise-ensemble");

  std::optional<FramedHamiltonian> system;
  double period = 0.0;
  if (config.hamiltonian == HamiltonianKind::kDrivenDd) {
    const ControlParams params = resolve_control(config, ops);
    system = DrivenHamiltonian(params, ops).toggling_frame();
    period = params.period();
  } else {
    system = LinearHamiltonian::constant(static_hamiltonian(config.hamiltonian, ops, config.chi));
    if (config.control) {
      period = resolve_control(config, ops).period();
    } else if (config.time.dt) {
      period = *config.time.dt * config.time.substeps_per_period;
    } else {
      period = config.time.t_end / static_cast<double>(config.time.samples) *
               config.time.substeps_per_period;
    }
  }
  out.header.push_back("grid period: " + format_number(period) + " substeps: " +
                       std::to_string(config.time.substeps_per_period));
  out.header.push_back("n_paths: " + std::to_string(noise.n_paths));
  out.header.push_back("master_seed: " + std::to_string(noise.master_seed));
  out.header.push_back(std::string("averaging: ") + averaging_name(noise.averaging));

  EnsembleScenario scenario{ops, *system, psi0, noise.ou, config.time.t_end, period};
  EnsembleOptions options;
  options.n_paths = noise.n_paths;
  options.master_seed = noise.master_seed;
  options.policy.substeps_per_period = config.time.substeps_per_period;
  options.workers = config.workers;
  const int n_spins = config.n_spins;
  if (noise.averaging == EnsembleAveraging::kPerPathXi) {
    options.per_path_statistic = [n_spins](const SpinMoments& m) {
      try {
        return xi_s_squared(m, n_spins);
      } catch (const DegenerateDirectionError&) {
        return std::numeric_limits<double>::quiet_NaN();
      }
    };
  }

  EnsembleResult result = run_ensemble(scenario, options);
  out.samples = squeezing_series(result.mean_moments, n_spins);
  if (noise.averaging == EnsembleAveraging::kPerPathXi) {
    for (std::size_t k = 0; k < out.samples.size(); ++k) {
      const double v = result.statistic_mean[k];
      out.samples[k].xi_s_sq = std::isnan(v) ? std::nullopt : std::optional<double>(v);
      out.samples[k].xi_r_sq.reset();
    }
  }
  out.moments = std::move(result.mean_moments.moments);
  return out;
}

void write_time_series_csv(std::ostream& out, const TimeSeries& series) {
  write_header(out, series.header);
  out << "t,xi_s_sq,xi_r_sq,mean_spin_len,jx,jy,jz\n";
  for (std::size_t k = 0; k < series.samples.size(); ++k) {
    const SqueezingSample& s = series.samples[k];
    const Eigen::Vector3d& mean = series.moments[k].mean;
    out << format_number(s.t) << ',' << format_optional(s.xi_s_sq) << ','
        << format_optional(s.xi_r_sq) << ',' << format_number(s.mean_spin_len) << ','
        << format_number(mean(0)) << ',' << format_number(mean(1)) << ','
        << format_number(mean(2)) << '\n';
  }
}

ScalingReport cmd_scaling(const ScenarioConfig& config) {
  config.validate();
  const ScalingInputs& in = config.scaling;
  if (in.n_list.size() < 4) {
    throw UsageError("scaling needs at least 4 spin numbers for a slope fit");
  }
  if (in.hamiltonians.empty()) {
    throw UsageError("scaling needs at least one hamiltonian");
  }
  for (int n : in.n_list) {
    if (n < 4) {
      throw UsageError("scaling spin numbers must be >= 4");
    }
  }
  for (auto kind : in.hamiltonians) {
    if (kind == HamiltonianKind::kDrivenDd) {
      throw UsageError("scaling runs static Hamiltonians only (oat, tat, dr)");
    }
  }
  if (in.samples < 16) {
    throw UsageError("scaling.samples must be >= 16");
  }

  const std::size_t n_kinds = in.hamiltonians.size();
  std::vector<std::vector<ScalingRow>> per_kind(n_kinds);
  std::vector<std::exception_ptr> failures(n_kinds);

  auto run_kind = [&](std::size_t index) {
    try {
      const HamiltonianKind kind = in.hamiltonians[index];
      std::optional<std::pair<int, double>> previous;
      for (int n : in.n_list) {
        const auto ops = build_collective_operators(SpinSystem(n));
        const double guess = previous ? previous->second * previous->first / n
                                      : first_guess(config, n);
        const SqueezingMinimum min =
            scan_static_minimum(ops, static_hamiltonian(kind, ops, config.chi), guess, in.samples);
        per_kind[index].push_back(
            ScalingRow{kind, n, min.xi_min, to_decibels(min.xi_min), min.t_min});
        previous = std::make_pair(n, min.t_min);
      }
    } catch (...) {
      failures[index] = std::current_exception();
    }
  };

  const unsigned workers = std::max(1u, std::min<unsigned>(config.workers, n_kinds));
  if (workers == 1) {
    for (std::size_t i = 0; i < n_kinds; ++i) {
      run_kind(i);
    }
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::jthread> pool;
    for (unsigned w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next.fetch_add(1); i < n_kinds; i = next.fetch_add(1)) {
          run_kind(i);
        }
      });
    }
  }
  for (const auto& f : failures) {
    if (f) {
      std::rethrow_exception(f);
    }
  }

  ScalingReport report;
  report.header = base_header(config, "scaling");
  for (std::size_t i = 0; i < n_kinds; ++i) {
    std::vector<double> ns, xis;
    for (const auto& row : per_kind[i]) {
      report.rows.push_back(row);
      ns.push_back(row.n_spins);
      xis.push_back(row.xi_min);
    }
    report.fits.emplace_back(in.hamiltonians[i], fit_log_log(ns, xis));
  }
  return report;
}

void write_scaling_csv(std::ostream& out, const ScalingReport& report) {
  write_header(out, report.header);
  out << "hamiltonian,n_spins,xi_min,xi_min_db,t_min\n";
  for (const auto& r : report.rows) {
    out << to_string(r.hamiltonian) << ',' << r.n_spins << ',' << format_number(r.xi_min) << ','
        << format_number(r.xi_min_db) << ',' << format_number(r.t_min) << '\n';
  }
  for (const auto& [kind, fit] : report.fits) {
    out << "# slope " << to_string(kind) << ": " << format_number(fit.slope)
        << " intercept: " << format_number(fit.intercept) << '\n';
  }
}

}  // namespace spinsq
