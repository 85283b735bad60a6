// Command-line driver: run, sweep, check, lagrangian, mixing, export-figure-data.

#include "batchelor/experiment.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>

using namespace batchelor;

namespace {

struct CommonFlags {
  std::string config;
  std::string out;
  std::string preset;
  std::uint64_t seed = 0;
  bool seed_set = false;
  unsigned parallel = 1;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--config", f.config, "configuration file (JSON)");
  cmd->add_option("--out", f.out, "output directory");
  cmd->add_option("--preset", f.preset, "named preset; --config entries override it");
  cmd->add_option_function<std::uint64_t>(
      "--seed", [&f](const std::uint64_t& s) { f.seed = s, f.seed_set = true; }, "base RNG seed");
  cmd->add_option("--parallel", f.parallel, "worker count (capped by BATCHELOR_LAB_THREADS)");
}

json load_config(const CommonFlags& f) {
  json j = f.preset.empty() ? json::object() : preset(f.preset);
  if (!f.config.empty()) j.merge_patch(read_json_file(f.config));
  if (!f.out.empty()) j["output"] = f.out;
  if (f.seed_set) j["plan"]["seed"] = f.seed;
  return j;
}

void write_json(const fs::path& path, const json& j) {
  fs::create_directories(path.parent_path());
  write_atomic(path, j.dump(2) + "\n");
}

int cmd_run(const CommonFlags& f) {
  const RunConfig cfg = run_config_from_json(load_config(f));
  const RunOutcome o = execute_run(cfg);
  std::cout << to_json(o.summary).dump(2) << '\n';
  return kExitOk;
}

int cmd_sweep(const CommonFlags& f) {
  const SweepConfig s = sweep_config_from_json(load_config(f));
  const SweepReport rep = execute_sweep(s, f.parallel);
  std::cout << json{{"batchelor_fit", to_json(rep)["batchelor_fit"]}}.dump(2) << '\n';
  if (rep.any_failed()) {
    for (const auto& g : rep.groups)
      for (auto seed : g.failed_seeds) std::cerr << "failed: kappa=" << g.kappa << " seed=" << seed << '\n';
    return kExitNumerical;
  }
  return kExitOk;
}

int cmd_check(const CommonFlags& f, std::uint64_t trials, const std::string& fault) {
  const json j = load_config(f);
  const json c = j.value("check", json::object());
  CheckOptions opt;
  opt.trials_2d = c.value("trials_2d", opt.trials_2d);
  opt.trials_3d = c.value("trials_3d", opt.trials_3d);
  opt.interpolation_fields = c.value("interpolation_fields", opt.interpolation_fields);
  opt.max_connectivity_cutoff = c.value("max_connectivity_cutoff", opt.max_connectivity_cutoff);
  opt.seed = f.seed_set ? f.seed : c.value("seed", opt.seed);
  if (trials > 0) opt.trials_2d = opt.trials_3d = trials, opt.interpolation_fields = std::min(opt.interpolation_fields, trials);
  const std::string inject = fault.empty() ? c.value("inject_fault", std::string()) : fault;
  if (inject == "sign-flip") opt.noise_matrix = sign_flipped_noise_matrix;
  else if (!inject.empty()) throw ConfigError("unknown fault '" + inject + "'");
  const CheckReport rep = run_check_suite(opt);
  const json out = rep;
  write_json(fs::path(j.value("output", std::string("out"))) / "check_report.json", out);
  std::cout << out.dump(2) << '\n';
  if (!rep.pass()) {
    for (const auto& r : rep.results)
      if (!r.pass()) std::cerr << "check failed: " << r.check << " counterexample " << r.counterexample.dump() << '\n';
    return kExitCheckFailed;
  }
  return kExitOk;
}

int cmd_lagrangian(const CommonFlags& f) {
  const json j = load_config(f);
  const RunConfig cfg = run_config_from_json(j);
  const json l = j.value("lagrangian", json::object());
  LagrangianOptions o;
  o.dim = cfg.model.dim;
  o.seed = cfg.plan.seed;
  o.particles = l.value("particles", o.particles);
  o.horizon = l.value("horizon", o.horizon);
  o.dt = l.value("dt", o.dt);
  o.trace_stride = l.value("trace_stride", std::max<std::uint64_t>(1, std::llround(0.01 / o.dt)));
  const std::vector<double> svals = l.value("s", std::vector<double>{0.5, 1.0, 2.0});
  if (o.particles < 1 || !(o.horizon > 0) || !(o.dt > 0)) throw ConfigError("lagrangian: bad particles/horizon/dt");
  std::vector<TracePoint> trace;
  const LyapunovEstimate est = lyapunov_estimate(o, &trace);
  json caps = json::array();
  for (double s : svals) caps.push_back({{"s", s}, {"cap", mixing_rate_cap(std::max(0.0, est.lambda), s)}});
  const json out{{"lambda", est.lambda},
                 {"mean", est.mean},
                 {"std_error", est.std_error},
                 {"horizon", est.horizon},
                 {"ensemble", est.ensemble},
                 {"positive", est.lambda - 3.0 * est.std_error > 0},
                 {"max_abs_log_det", est.max_abs_log_det},
                 {"cap_table", caps}};
  const fs::path dir = cfg.output;
  write_json(dir / "lagrangian.json", out);
  std::ofstream os(dir / "trajectory.csv");
  write_trajectory_csv(os, trace, o.dim);
  std::cout << out.dump(2) << '\n';
  return kExitOk;
}

int cmd_mixing(const CommonFlags& f) {
  json j = load_config(f);
  if (!j.contains("diagnostics") || !j["diagnostics"].contains("sobolev_s") || j["diagnostics"]["sobolev_s"].empty())
    j["diagnostics"]["sobolev_s"] = {0.25, 0.5, 1.0, 2.0, 4.0};
  const RunConfig cfg = run_config_from_json(j);
  if (cfg.model.kappa != 0.0) throw ConfigError("mixing: requires kappa = 0");
  const auto ensemble = j.value("mixing", json::object()).value("ensemble", std::size_t{1});
  const json out = to_json(execute_mixing(cfg, ensemble, f.parallel));
  write_json(fs::path(cfg.output) / "mixing.json", out);
  std::cout << out.dump(2) << '\n';
  return kExitOk;
}

int cmd_export(const CommonFlags& f, const std::string& input, std::size_t grid) {
  fs::path in = input;
  if (in.empty()) {
    if (f.config.empty() && f.preset.empty()) throw ConfigError("export-figure-data: need --input or --config");
    in = fs::path(run_config_from_json(load_config(f)).output) / "final_state.csv";
  }
  std::ifstream is(in);
  if (!is) throw ConfigError("cannot open snapshot '" + in.string() + "'");
  SpectralField state = read_spectral_csv(is);
  const double n = l2_norm(state);
  if (n > 0) state *= 1.0 / n;
  const fs::path out = f.out.empty() ? fs::path("figure") : fs::path(f.out);
  for (const auto& file : export_figure_data(state, out, grid)) std::cout << file << '\n';
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Shear-noise passive scalar simulator"};
  app.require_subcommand(1);
  CommonFlags flags;
  std::uint64_t trials = 0;
  std::string fault, input;
  std::size_t grid = 0;

  auto* run = app.add_subcommand("run", "single run");
  auto* sweep = app.add_subcommand("sweep", "kappa sweep with ensembles");
  auto* check = app.add_subcommand("check", "structural check suite");
  auto* lag = app.add_subcommand("lagrangian", "particle flow and Lyapunov estimate");
  auto* mix = app.add_subcommand("mixing", "mixing rates over an s grid (kappa = 0)");
  auto* exp = app.add_subcommand("export-figure-data", "figure CSVs from a spectral snapshot");
  for (auto* c : {run, sweep, check, lag, mix, exp}) add_common(c, flags);
  check->add_option("--trials", trials, "random trials per dimension");
  check->add_option("--inject-fault", fault, "test harness: sign-flip")->group("");
  exp->add_option("--input", input, "spectral CSV snapshot");
  exp->add_option("--grid", grid, "grid side of the snapshot matrix");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*run) return cmd_run(flags);
    if (*sweep) return cmd_sweep(flags);
    if (*check) return cmd_check(flags, trials, fault);
    if (*lag) return cmd_lagrangian(flags);
    if (*mix) return cmd_mixing(flags);
    if (*exp) return cmd_export(flags, input, grid);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const json::exception& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const NumericalAbort& e) {
    std::cerr << "numerical abort: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitNumerical;
  }
  return kExitOk;
}
