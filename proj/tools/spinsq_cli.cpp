// spinsq: command-line front end for the squeezing and decoupling drivers.
//
// Exit codes: 0 success, 1 verification failure, 2 usage, 3 numeric, 4 I/O.

#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "spinsq/errors.hpp"
#include "spinsq/experiments.hpp"

namespace {

enum ExitCode : int {
  kOk = 0,
  kVerificationFailed = 1,
  kUsage = 2,
  kNumeric = 3,
  kIo = 4,
};

struct Overrides {
  std::string config_path;
  std::string output;
  unsigned workers = 1;
  std::uint64_t seed = 0;
  int n_spins = 0;
  std::string hamiltonian;
  double chi = 0.0;
  int n_x = 0;
  int n_y = 0;
  int n_cyc = 0;
  double t_min = 0.0;
  bool no_control = false;
  double t_end = 0.0;
  std::size_t samples = 0;
  int substeps = 0;
  double dt = 0.0;
  double alpha = 0.0;
  double sigma_sq = 0.0;
  std::size_t paths = 0;
  std::string averaging;
  std::vector<int> n_list;
  std::vector<std::string> hamiltonians;
  std::vector<std::string> pairs;
};

struct Flags {
  CLI::Option* config = nullptr;
  CLI::Option* output = nullptr;
  CLI::Option* workers = nullptr;
  CLI::Option* seed = nullptr;
  CLI::Option* n_spins = nullptr;
  CLI::Option* hamiltonian = nullptr;
  CLI::Option* chi = nullptr;
  CLI::Option* n_x = nullptr;
  CLI::Option* n_y = nullptr;
  CLI::Option* n_cyc = nullptr;
  CLI::Option* t_min = nullptr;
  CLI::Option* t_end = nullptr;
  CLI::Option* samples = nullptr;
  CLI::Option* substeps = nullptr;
  CLI::Option* dt = nullptr;
  CLI::Option* alpha = nullptr;
  CLI::Option* sigma_sq = nullptr;
  CLI::Option* paths = nullptr;
  CLI::Option* averaging = nullptr;
  CLI::Option* n_list = nullptr;
  CLI::Option* hamiltonians = nullptr;
  CLI::Option* pairs = nullptr;
};

Flags register_flags(CLI::App& app, Overrides& o) {
  Flags f;
  f.config = app.add_option("-c,--config", o.config_path, "JSON scenario file");
  f.output = app.add_option("-o,--output", o.output, "Output CSV path (stdout when omitted or '-')");
  f.workers = app.add_option("-j,--workers", o.workers, "Worker threads")->check(CLI::PositiveNumber);
  f.seed = app.add_option("--seed", o.seed, "Master seed of the noise ensemble");
  f.n_spins = app.add_option("-n,--n-spins", o.n_spins, "Number of spins N");
  f.hamiltonian = app.add_option("--hamiltonian", o.hamiltonian, "oat, tat, dr or driven-dd");
  f.chi = app.add_option("--chi", o.chi, "Twisting strength");
  f.n_x = app.add_option("--nx", o.n_x, "Control winding number about x");
  f.n_y = app.add_option("--ny", o.n_y, "Control winding number about y");
  f.n_cyc = app.add_option("--ncyc", o.n_cyc, "Control periods per optimal squeezing time");
  f.t_min = app.add_option("--t-min", o.t_min, "Optimal squeezing time used for t_c (computed when absent)");
  app.add_flag("--no-control", o.no_control, "Drop the control block");
  f.t_end = app.add_option("--t-end", o.t_end, "End time");
  f.samples = app.add_option("--samples", o.samples, "Output grid intervals (per scan window for scaling)");
  f.substeps = app.add_option("--substeps", o.substeps, "Integrator substeps per control period");
  f.dt = app.add_option("--dt", o.dt, "Noise grid step when no control block is present");
  f.alpha = app.add_option("--alpha", o.alpha, "OU inverse correlation time");
  f.sigma_sq = app.add_option("--sigma-sq", o.sigma_sq, "OU stationary variance");
  f.paths = app.add_option("--paths", o.paths, "Noise sample paths");
  f.averaging = app.add_option("--averaging", o.averaging, "moments or per-path")
                    ->check(CLI::IsMember({"moments", "per-path"}));
  f.n_list = app.add_option("--n-list", o.n_list, "Spin numbers of the scaling sweep")->delimiter(',');
  f.hamiltonians =
      app.add_option("--hamiltonians", o.hamiltonians, "Hamiltonians of the scaling sweep")->delimiter(',');
  f.pairs = app.add_option("--pairs", o.pairs, "Winding pairs as nx:ny, e.g. 2:1,3:1")->delimiter(',');
  return f;
}

spinsq::NoiseInputs& noise_block(spinsq::ScenarioConfig& cfg) {
  if (!cfg.noise) {
    cfg.noise = spinsq::NoiseInputs{};
  }
  return *cfg.noise;
}

spinsq::ControlInputs& control_block(spinsq::ScenarioConfig& cfg) {
  if (!cfg.control) {
    cfg.control = spinsq::ControlInputs{};
  }
  return *cfg.control;
}

std::pair<int, int> parse_pair(const std::string& text) {
  const auto colon = text.find(':');
  if (colon == std::string::npos) {
    throw spinsq::UsageError("pair '" + text + "' is not of the form nx:ny");
  }
  try {
    std::size_t used_x = 0, used_y = 0;
    const std::string xs = text.substr(0, colon);
    const std::string ys = text.substr(colon + 1);
    const int nx = std::stoi(xs, &used_x);
    const int ny = std::stoi(ys, &used_y);
    if (used_x != xs.size() || used_y != ys.size()) {
      throw std::invalid_argument(text);
    }
    return {nx, ny};
  } catch (const std::logic_error&) {
    throw spinsq::UsageError("pair '" + text + "' is not of the form nx:ny");
  }
}

spinsq::ScenarioConfig build_config(const Overrides& o, const Flags& f, bool scaling_run) {
  spinsq::ScenarioConfig cfg;
  if (f.config->count() > 0) {
    cfg = spinsq::load_config(o.config_path);
  }
  if (f.output->count() > 0) cfg.output = o.output;
  if (f.workers->count() > 0) cfg.workers = o.workers;
  if (f.n_spins->count() > 0) cfg.n_spins = o.n_spins;
  if (f.hamiltonian->count() > 0) cfg.hamiltonian = spinsq::parse_hamiltonian_kind(o.hamiltonian);
  if (f.chi->count() > 0) cfg.chi = o.chi;

  if (o.no_control) {
    cfg.control.reset();
  }
  if (f.n_x->count() > 0) control_block(cfg).n_x = o.n_x;
  if (f.n_y->count() > 0) control_block(cfg).n_y = o.n_y;
  if (f.n_cyc->count() > 0) control_block(cfg).n_cyc = o.n_cyc;
  if (f.t_min->count() > 0) control_block(cfg).t_min = o.t_min;

  if (f.t_end->count() > 0) cfg.time.t_end = o.t_end;
  if (f.samples->count() > 0) {
    (scaling_run ? cfg.scaling.samples : cfg.time.samples) = o.samples;
  }
  if (f.substeps->count() > 0) cfg.time.substeps_per_period = o.substeps;
  if (f.dt->count() > 0) cfg.time.dt = o.dt;

  if (f.alpha->count() > 0) noise_block(cfg).ou.alpha = o.alpha;
  if (f.sigma_sq->count() > 0) noise_block(cfg).ou.sigma_sq = o.sigma_sq;
  if (f.paths->count() > 0) noise_block(cfg).n_paths = o.paths;
  if (f.seed->count() > 0) noise_block(cfg).master_seed = o.seed;
  if (f.averaging->count() > 0) {
    noise_block(cfg).averaging = o.averaging == "per-path" ? spinsq::EnsembleAveraging::kPerPathXi
                                                           : spinsq::EnsembleAveraging::kMoments;
  }

  if (f.n_list->count() > 0) cfg.scaling.n_list = o.n_list;
  if (f.hamiltonians->count() > 0) {
    cfg.scaling.hamiltonians.clear();
    for (const auto& name : o.hamiltonians) {
      cfg.scaling.hamiltonians.push_back(spinsq::parse_hamiltonian_kind(name));
    }
  }
  if (f.pairs->count() > 0) {
    cfg.verify.pairs.clear();
    for (const auto& text : o.pairs) {
      cfg.verify.pairs.push_back(parse_pair(text));
    }
  }
  return cfg;
}

template <typename Writer>
void emit(const std::string& path, Writer&& write) {
  if (path.empty() || path == "-") {
    write(std::cout);
    std::cout.flush();
    if (!std::cout) {
      throw spinsq::IoError("failed writing to stdout");
    }
    return;
  }
  std::ofstream out(path);
  if (!out) {
    throw spinsq::IoError("cannot open output file " + path);
  }
  write(out);
  out.close();
  if (!out) {
    throw spinsq::IoError("failed writing output file " + path);
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Spin squeezing under continuous dynamical decoupling"};
  app.set_version_flag("--version", std::string(spinsq::tool_version()));
  app.require_subcommand(1);
  app.fallthrough();

  Overrides overrides;
  const Flags flags = register_flags(app, overrides);

  auto* verify = app.add_subcommand("verify-dd", "Decoupling residuals and averaged-Hamiltonian check per winding pair");
  auto* evolve = app.add_subcommand("evolve", "Noiseless squeezing time series");
  auto* ensemble = app.add_subcommand("noise-ensemble", "Noise-averaged squeezing time series");
  auto* scaling = app.add_subcommand("scaling", "Minimum squeezing against N with log-log slope fits");
  auto* defaults = app.add_subcommand("defaults", "Print the default scenario as JSON");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*defaults) {
      std::cout << spinsq::config_to_json(spinsq::ScenarioConfig{}, true) << '\n';
      return kOk;
    }
    const spinsq::ScenarioConfig cfg = build_config(overrides, flags, scaling->parsed());

    if (*verify) {
      const auto report = spinsq::cmd_verify_dd(cfg);
      emit(cfg.output, [&](std::ostream& out) { spinsq::write_verify_report(out, report); });
      if (!report.all_passed) {
        std::cerr << "spinsq: at least one decoupling pair failed verification\n";
        return kVerificationFailed;
      }
    } else if (*evolve) {
      const auto series = spinsq::cmd_evolve(cfg);
      emit(cfg.output, [&](std::ostream& out) { spinsq::write_time_series_csv(out, series); });
    } else if (*ensemble) {
      const auto series = spinsq::cmd_noise_ensemble(cfg);
      emit(cfg.output, [&](std::ostream& out) { spinsq::write_time_series_csv(out, series); });
    } else if (*scaling) {
      const auto report = spinsq::cmd_scaling(cfg);
      emit(cfg.output, [&](std::ostream& out) { spinsq::write_scaling_csv(out, report); });
      for (const auto& [kind, fit] : report.fits) {
        std::cerr << "slope " << spinsq::to_string(kind) << ": " << fit.slope << '\n';
      }
    }
  } catch (const spinsq::UsageError& e) {
    std::cerr << "spinsq: usage error: " << e.what() << '\n';
    return kUsage;
  } catch (const spinsq::IoError& e) {
    std::cerr << "spinsq: I/O error: " << e.what() << '\n';
    return kIo;
  } catch (const spinsq::NumericError& e) {
    std::cerr << "spinsq: numeric error: " << e.what() << '\n';
    return kNumeric;
  } catch (const spinsq::Error& e) {
    std::cerr << "spinsq: " << e.what() << '\n';
    return kUsage;
  }
  return kOk;
}
