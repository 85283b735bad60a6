// Run configuration, single runs, kappa sweeps, ensembles and the
// on-disk formats (NDJSON diagnostics, summaries, manifests, PGM
// snapshots and figure-data CSVs).
#pragma once

#include "batchelor/diagnostics.hpp"
#include "batchelor/integrators.hpp"
#include "batchelor/lagrangian.hpp"
#include "batchelor/models.hpp"
#include "batchelor/spectral.hpp"
#include "batchelor/theory.hpp"

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <optional>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#ifndef BATCHELOR_VERSION
#define BATCHELOR_VERSION "0.1.0"
#endif

namespace batchelor {

namespace fs = std::filesystem;
using nlohmann::json;

inline constexpr const char* kConfigSchema = "batchelor-lab/1";

/// Thrown for malformed or inconsistent configuration (exit code 2).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum ExitCode : int { kExitOk = 0, kExitCheckFailed = 1, kExitConfig = 2, kExitNumerical = 3 };

struct InitialCondition {
  /// "cos-x" (2 cos 2 pi x) or "random-shell".
  std::string kind = "random-shell";
  int radius = 1;
  /// Seed of the random shell; unset means "use the plan seed".
  std::optional<std::uint64_t> seed;
};

struct RunConfig {
  ModelSpec model;
  InitialCondition initial;
  StepPlan plan;
  double horizon = 1.0;
  DiagnosticsSchedule diagnostics;
  /// Sliding window for the limsup proxy; 0 selects T/10.
  double rate_window = 0.0;
  /// Time range for the gamma_s fits; unset means the tail half.
  std::optional<std::pair<double, double>> mixing_fit;
  std::string output = "out";
};

// ---------------------------------------------------------------------------
// JSON <-> config.

namespace experiment_detail {

template <class T>
T get_or(const json& j, const char* key, T fallback) {
  if (!j.is_object() || !j.contains(key) || j.at(key).is_null()) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: bad value for '") + key + "': " + e.what());
  }
}

inline std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << v;
  return os.str();
}

inline std::string format_double(double v) {
  std::ostringstream os;
  os << std::setprecision(6) << v;
  return os.str();
}

inline json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(); }

inline json number_or_null(const std::optional<double>& v) { return v && std::isfinite(*v) ? json(*v) : json(); }

}  // namespace experiment_detail

inline json to_json(const RunConfig& c) {
  json j;
  j["schema"] = kConfigSchema;
  j["model"] = {{"dim", c.model.dim}, {"kappa", c.model.kappa}, {"cutoff", c.model.cutoff}};
  j["initial"] = {{"kind", c.initial.kind}, {"radius", c.initial.radius}};
  if (c.initial.seed) j["initial"]["seed"] = *c.initial.seed;
  j["plan"] = {{"dt", c.plan.dt},
               {"scheme", to_string(c.plan.scheme)},
               {"seed", c.plan.seed},
               {"substeps", c.plan.substeps},
               {"grid", c.plan.grid}};
  if (!c.plan.group_order.empty()) j["plan"]["group_order"] = c.plan.group_order;
  j["horizon"] = c.horizon;
  j["diagnostics"] = {{"cadence", c.diagnostics.cadence},
                      {"sobolev_s", c.diagnostics.sobolev_s},
                      {"snapshot_cadence", c.diagnostics.snapshot_cadence},
                      {"rate_window", c.rate_window}};
  if (c.mixing_fit) j["diagnostics"]["mixing_fit"] = {c.mixing_fit->first, c.mixing_fit->second};
  j["output"] = c.output;
  return j;
}

inline void validate(const RunConfig& c) {
  try {
    c.model.validate();
    c.plan.validate(c.model);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  if (!(c.horizon >= 0)) throw ConfigError("config: horizon must be >= 0");
  if (c.initial.kind != "cos-x" && c.initial.kind != "random-shell")
    throw ConfigError("config: unknown initial condition '" + c.initial.kind + "'");
  if (c.initial.kind == "random-shell" && (c.initial.radius < 1 || c.initial.radius > c.model.cutoff))
    throw ConfigError("config: random-shell radius must be in [1, cutoff]");
  if (!(c.diagnostics.cadence >= 0) || !(c.diagnostics.snapshot_cadence >= 0))
    throw ConfigError("config: cadences must be >= 0");
  for (double s : c.diagnostics.sobolev_s)
    if (!(s > 0)) throw ConfigError("config: sobolev_s entries must be positive");
  if (!(c.rate_window >= 0)) throw ConfigError("config: rate_window must be >= 0");
  if (c.mixing_fit && !(c.mixing_fit->first >= 0 && c.mixing_fit->second > c.mixing_fit->first))
    throw ConfigError("config: mixing_fit must be [t0, t1] with 0 <= t0 < t1");
  if (c.plan.grid != 0 && (c.plan.grid % 2 == 0 || c.plan.grid < static_cast<std::size_t>(2 * c.model.cutoff + 1)))
    throw ConfigError("config: plan.grid must be odd and >= 2 cutoff + 1");
}

inline RunConfig run_config_from_json(const json& j) {
  using experiment_detail::get_or;
  if (!j.is_object()) throw ConfigError("config: top level must be an object");
  const std::string schema = get_or<std::string>(j, "schema", kConfigSchema);
  if (schema != kConfigSchema) throw ConfigError("config: unsupported schema '" + schema + "'");
  RunConfig c;
  const json m = j.value("model", json::object());
  c.model.dim = get_or(m, "dim", c.model.dim);
  c.model.kappa = get_or(m, "kappa", c.model.kappa);
  c.model.cutoff = get_or(m, "cutoff", c.model.cutoff);
  const json ic = j.value("initial", json::object());
  c.initial.kind = get_or<std::string>(ic, "kind", c.initial.kind);
  c.initial.radius = get_or(ic, "radius", c.initial.radius);
  if (ic.is_object() && ic.contains("seed") && !ic.at("seed").is_null()) c.initial.seed = get_or<std::uint64_t>(ic, "seed", 0);
  const json p = j.value("plan", json::object());
  c.plan.dt = get_or(p, "dt", c.plan.dt);
  try {
    c.plan.scheme = parse_scheme(get_or<std::string>(p, "scheme", to_string(c.plan.scheme)));
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  c.plan.seed = get_or<std::uint64_t>(p, "seed", c.plan.seed);
  c.plan.substeps = get_or(p, "substeps", c.plan.substeps);
  c.plan.grid = get_or<std::size_t>(p, "grid", c.plan.grid);
  c.plan.group_order = get_or<std::vector<int>>(p, "group_order", {});
  c.horizon = get_or(j, "horizon", c.horizon);
  const json d = j.value("diagnostics", json::object());
  c.diagnostics.cadence = get_or(d, "cadence", c.diagnostics.cadence);
  c.diagnostics.sobolev_s = get_or<std::vector<double>>(d, "sobolev_s", c.diagnostics.sobolev_s);
  c.diagnostics.snapshot_cadence = get_or(d, "snapshot_cadence", c.diagnostics.snapshot_cadence);
  c.rate_window = get_or(d, "rate_window", c.rate_window);
  if (d.is_object() && d.contains("mixing_fit") && !d.at("mixing_fit").is_null()) {
    const auto w = get_or<std::vector<double>>(d, "mixing_fit", {});
    if (w.size() != 2) throw ConfigError("config: mixing_fit must have two entries");
    c.mixing_fit = std::make_pair(w[0], w[1]);
  }
  c.output = get_or<std::string>(j, "output", c.output);
  validate(c);
  return c;
}

/// FNV-1a of the canonical JSON of the config, output directory excluded.
inline std::string config_hash(const RunConfig& c) {
  json j = to_json(c);
  j.erase("output");
  return experiment_detail::hex64(experiment_detail::fnv1a(j.dump()));
}

inline json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path.string() + "'");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config '" + path.string() + "' does not parse: " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Initial conditions.

inline SpectralField make_initial_field(const RunConfig& c) {
  const int dim = c.model.dim, n = c.model.cutoff;
  if (c.initial.kind == "cos-x")
    return SpectralField::from_half(dim, n, [](const ModeIndex& k) {
      return k == ModeIndex{1, 0, 0} ? Complex{1.0, 0.0} : Complex{};
    });
  // Independent complex Gaussians on the modes with round(|k|) == radius, scaled to unit L^2 norm.
  const std::uint64_t seed = c.initial.seed.value_or(c.plan.seed);
  std::uint64_t counter = 0;
  SpectralField f = SpectralField::from_half(dim, n, [&](const ModeIndex& k) {
    if (std::lround(k.norm()) != c.initial.radius) return Complex{};
    const std::uint64_t i = counter++;
    return Complex{counter_normal(seed ^ 0xC0FFEEULL, i, 0), counter_normal(seed ^ 0xC0FFEEULL, i, 1)};
  });
  const double norm = l2_norm(f);
  if (norm > 0) f *= 1.0 / norm;
  return f;
}

// ---------------------------------------------------------------------------
// Output formats.

inline json diagnostic_record(const DiagnosticSample& d, const RunConfig& c) {
  using experiment_detail::format_double;
  using experiment_detail::number_or_null;
  json hms = json::object();
  for (std::size_t i = 0; i < c.diagnostics.sobolev_s.size(); ++i)
    hms[format_double(c.diagnostics.sobolev_s[i])] = number_or_null(std::exp(d.log_hms[i]));
  return json{{"t", d.t},
              {"l2", number_or_null(std::exp(d.log_l2))},
              {"h_minus_s", hms},
              {"low_mode_l2", number_or_null(std::exp(d.log_low))},
              {"ell", number_or_null(d.ell)},
              {"kappa", c.model.kappa},
              {"seed", c.plan.seed},
              {"log_l2", number_or_null(d.log_l2)},
              {"log_low_mode_l2", number_or_null(d.log_low)}};
}

/// Binary PGM (P5), 16-bit big-endian, row-major over (axis 1, axis 0) of the
/// first plane; values mapped affinely from [-max|f|, max|f|] to [0, 65535].
inline void write_pgm16(const fs::path& path, const GridField& g) {
  const std::size_t m = g.side;
  double peak = 0;
  for (std::size_t i = 0; i < m * m; ++i) {
    const std::size_t idx = g.dim == 2 ? i : i * m;
    peak = std::max(peak, std::abs(g.samples[idx]));
  }
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << "P5\n" << m << ' ' << m << "\n65535\n";
  for (std::size_t row = 0; row < m; ++row) {
    for (std::size_t col = 0; col < m; ++col) {
      const double v = g.samples[g.index(col, row, 0)];
      const double u = peak > 0 ? (v + peak) / (2.0 * peak) : 0.5;
      const auto q = static_cast<std::uint16_t>(std::lround(std::clamp(u, 0.0, 1.0) * 65535.0));
      os.put(static_cast<char>(q >> 8));
      os.put(static_cast<char>(q & 0xFF));
    }
  }
}

/// Grid values on the first plane: header "y\x" then x coordinates; each row starts with y.
inline void write_grid_csv(std::ostream& os, const GridField& g) {
  const std::size_t m = g.side;
  os << std::setprecision(10) << "y\\x";
  for (std::size_t i = 0; i < m; ++i) os << ',' << static_cast<double>(i) / static_cast<double>(m);
  os << '\n';
  for (std::size_t row = 0; row < m; ++row) {
    os << static_cast<double>(row) / static_cast<double>(m);
    for (std::size_t col = 0; col < m; ++col) os << ',' << g.samples[g.index(col, row, 0)];
    os << '\n';
  }
}

/// k1,k2,log10 power over the (k1, k2) plane (k3 = 0 in 3D); zero-power cells are skipped.
inline void write_spectrum_heatmap_csv(std::ostream& os, const SpectralField& f) {
  os << std::setprecision(10) << "k1,k2,log10_power\n";
  f.for_each_mode([&](const ModeIndex& k, Complex c) {
    if (k.m != 0) return;
    const double p = std::norm(c);
    if (p > 0) os << k.k << ',' << k.l << ',' << std::log10(p) << '\n';
  });
}

inline void write_shell_spectrum_csv(std::ostream& os, const SpectrumProfile& p) {
  os << std::setprecision(17) << "radius,power\n";
  for (std::size_t r = 0; r < p.power.size(); ++r) os << r << ',' << p.power[r] << '\n';
}

inline std::size_t figure_grid_size(int cutoff) {
  return std::max<std::size_t>(static_cast<std::size_t>(2 * cutoff + 1), std::min<std::size_t>(4 * cutoff, 512));
}

/// Writes the three figure-data CSVs for one normalized state.
inline std::vector<std::string> export_figure_data(const SpectralField& state, const fs::path& dir,
                                                   std::size_t grid = 0) {
  fs::create_directories(dir);
  if (grid == 0) grid = figure_grid_size(state.cutoff());
  std::vector<std::string> files;
  {
    std::ofstream os(dir / "snapshot_grid.csv");
    write_grid_csv(os, to_physical(state, grid));
    files.push_back((dir / "snapshot_grid.csv").string());
  }
  {
    std::ofstream os(dir / "spectrum_heatmap.csv");
    write_spectrum_heatmap_csv(os, state);
    files.push_back((dir / "spectrum_heatmap.csv").string());
  }
  {
    std::ofstream os(dir / "shell_spectrum.csv");
    write_shell_spectrum_csv(os, power_spectrum(state));
    files.push_back((dir / "shell_spectrum.csv").string());
  }
  return files;
}

/// Writes `content` to `path` through a temporary file and a rename.
inline void write_atomic(const fs::path& path, const std::string& content) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write " + tmp.string());
    os << content;
  }
  fs::rename(tmp, path);
}

// ---------------------------------------------------------------------------
// Single run.

struct RunSummary {
  double kappa = 0;
  std::uint64_t seed = 0;
  double bound = 0;
  /// Global slope of log |f|_{L^2}.
  std::optional<RateEstimate> rate_global;
  /// Limsup proxy of log |Pi<=1 f|.
  std::optional<RateEstimate> rate_limsup_proxy;
  std::optional<RateEstimate> rate_global_low;
  std::optional<double> ell_mean;
  std::optional<double> spectrum_radius_95;
  std::vector<std::pair<double, std::optional<RateEstimate>>> gamma_s;
  std::uint64_t unstable_steps = 0;
};

inline json rate_json(const std::optional<RateEstimate>& r) {
  if (!r) return json();
  return json{{"rate", r->rate}, {"std_error", r->std_error}, {"samples", r->samples}};
}

inline json to_json(const RunSummary& s) {
  using experiment_detail::number_or_null;
  json g = json::object();
  json gse = json::object();
  for (const auto& [sv, r] : s.gamma_s) {
    g[experiment_detail::format_double(sv)] = r ? json(r->rate) : json();
    gse[experiment_detail::format_double(sv)] = r ? json(r->std_error) : json();
  }
  return json{{"kappa", s.kappa},
              {"seed", s.seed},
              {"rate_global", s.rate_global ? json(s.rate_global->rate) : json()},
              {"rate_global_stderr", s.rate_global ? json(s.rate_global->std_error) : json()},
              {"rate_limsup_proxy", s.rate_limsup_proxy ? json(s.rate_limsup_proxy->rate) : json()},
              {"rate_limsup_proxy_stderr", s.rate_limsup_proxy ? json(s.rate_limsup_proxy->std_error) : json()},
              {"rate_global_low_mode", s.rate_global_low ? json(s.rate_global_low->rate) : json()},
              {"bound", s.bound},
              {"ell_mean", number_or_null(s.ell_mean)},
              {"spectrum_radius_95", number_or_null(s.spectrum_radius_95)},
              {"gamma_s", g},
              {"gamma_s_stderr", gse},
              {"unstable_steps", s.unstable_steps}};
}

inline RunSummary summarize(const RunConfig& c, const SimulationResult& sim) {
  RunSummary s;
  s.kappa = c.model.kappa;
  s.seed = c.plan.seed;
  s.bound = -c.model.inner_rate();
  s.unstable_steps = sim.unstable_steps;
  RateSeries l2 = sim.series(&DiagnosticSample::log_l2);
  RateSeries low = sim.series(&DiagnosticSample::log_low);
  l2.window = low.window = c.rate_window;
  s.rate_global = decay_rate(l2, RateMode::kGlobalSlope);
  s.rate_global_low = decay_rate(low, RateMode::kGlobalSlope);
  s.rate_limsup_proxy = decay_rate(low, RateMode::kLimsupProxy);
  std::vector<double> t, ell;
  for (const auto& d : sim.samples) t.push_back(d.t), ell.push_back(d.ell);
  if (!t.empty()) s.ell_mean = time_average(t, ell, 0.5 * t.back());
  if (!sim.final_state.empty() && l2_norm(sim.final_state) > 0)
    s.spectrum_radius_95 = spectrum_radius(power_spectrum(sim.final_state), 0.95);
  for (std::size_t i = 0; i < c.diagnostics.sobolev_s.size(); ++i) {
    RateSeries h = sim.hms_series(i);
    h.window = c.rate_window;
    s.gamma_s.emplace_back(c.diagnostics.sobolev_s[i], gamma_s_estimate(h, c.diagnostics.sobolev_s[i], c.mixing_fit));
  }
  return s;
}

struct RunOutcome {
  RunConfig config;
  SimulationResult sim;
  RunSummary summary;
  std::vector<std::string> files;
  double wall_seconds = 0;
};

/**
 * Executes one run. With `write_outputs`, writes into config.output:
 * config.json, diagnostics.ndjson, snapshots, figure data, summary.json and
 * manifest.json (last, atomically).
 */
inline RunOutcome execute_run(const RunConfig& cfg, bool write_outputs = true) {
  validate(cfg);
  const auto t0 = std::chrono::steady_clock::now();
  RunOutcome out;
  out.config = cfg;
  const fs::path dir = cfg.output;
  std::ofstream ndjson;
  if (write_outputs) {
    fs::create_directories(dir / "snapshots");
    {
      std::ofstream os(dir / "config.json");
      os << to_json(cfg).dump(2) << '\n';
    }
    out.files.push_back((dir / "config.json").string());
    ndjson.open(dir / "diagnostics.ndjson");
    out.files.push_back((dir / "diagnostics.ndjson").string());
  }
  SnapshotSink sink;
  if (write_outputs) {
    sink = [&](const SpectralField& f, double t) {
      std::ostringstream name;
      name << "snapshot_t" << std::fixed << std::setprecision(4) << t;
      const fs::path csv = dir / "snapshots" / (name.str() + ".csv");
      const fs::path pgm = dir / "snapshots" / (name.str() + ".pgm");
      {
        std::ofstream os(csv);
        write_spectral_csv(os, f);
      }
      write_pgm16(pgm, to_physical(f, figure_grid_size(f.cutoff())));
      out.files.push_back(csv.string());
      out.files.push_back(pgm.string());
    };
  }
  const SpectralField f0 = make_initial_field(cfg);
  out.sim = simulate(f0, cfg.model, cfg.plan, cfg.horizon, cfg.diagnostics, sink);
  out.summary = summarize(cfg, out.sim);
  out.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (write_outputs) {
    for (const auto& d : out.sim.samples) ndjson << diagnostic_record(d, cfg).dump() << '\n';
    ndjson.close();
    if (!out.sim.final_state.empty()) {
      for (auto& f : export_figure_data(out.sim.final_state, dir / "figure")) out.files.push_back(f);
      std::ofstream os(dir / "final_state.csv");
      write_spectral_csv(os, out.sim.final_state);
      out.files.push_back((dir / "final_state.csv").string());
    }
    write_atomic(dir / "summary.json", to_json(out.summary).dump(2) + "\n");
    out.files.push_back((dir / "summary.json").string());
    json manifest{{"config_hash", config_hash(cfg)},
                  {"code_version", BATCHELOR_VERSION},
                  {"seed", cfg.plan.seed},
                  {"wall_clock_seconds", out.wall_seconds},
                  {"files", out.files},
                  {"summary", to_json(out.summary)}};
    write_atomic(dir / "manifest.json", manifest.dump(2) + "\n");
  }
  return out;
}

// ---------------------------------------------------------------------------
// Parallel helpers.

/// Worker count: `requested` (0 = hardware), capped by BATCHELOR_LAB_THREADS.
inline unsigned worker_count(unsigned requested) {
  unsigned n = requested ? requested : std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("BATCHELOR_LAB_THREADS")) {
    const long cap = std::strtol(env, nullptr, 10);
    if (cap >= 1) n = std::min<unsigned>(n, static_cast<unsigned>(cap));
  }
  return std::max(1u, n);
}

/// Runs task(i) for i in [0, count) on up to `workers` threads.
template <class Task>
void parallel_for(std::size_t count, unsigned workers, Task&& task) {
  workers = static_cast<unsigned>(std::min<std::size_t>(std::max(1u, workers), std::max<std::size_t>(count, 1)));
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) task(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (unsigned w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < count; i = next++) task(i);
    });
  for (auto& t : pool) t.join();
}

// ---------------------------------------------------------------------------
// Sweeps.

/// Per-kappa replacement of selected run parameters.
struct SweepOverride {
  double kappa = 0;
  std::optional<int> cutoff;
  std::optional<double> dt;
  std::optional<double> horizon;
  std::optional<std::size_t> ensemble;
  std::optional<double> cadence;
};

struct SweepConfig {
  RunConfig base;
  std::vector<double> kappas;
  std::size_t ensemble = 1;
  std::vector<SweepOverride> overrides;
};

inline SweepConfig sweep_config_from_json(const json& j) {
  using experiment_detail::get_or;
  SweepConfig s;
  s.base = run_config_from_json(j);
  const json sw = j.value("sweep", json::object());
  s.kappas = get_or<std::vector<double>>(sw, "kappas", {});
  s.ensemble = get_or<std::size_t>(sw, "ensemble", 1);
  if (sw.is_object() && sw.contains("overrides")) {
    for (const auto& o : sw.at("overrides")) {
      SweepOverride ov;
      ov.kappa = get_or(o, "kappa", 0.0);
      if (o.contains("cutoff")) ov.cutoff = get_or(o, "cutoff", 0);
      if (o.contains("dt")) ov.dt = get_or(o, "dt", 0.0);
      if (o.contains("horizon")) ov.horizon = get_or(o, "horizon", 0.0);
      if (o.contains("ensemble")) ov.ensemble = get_or<std::size_t>(o, "ensemble", 1);
      if (o.contains("cadence")) ov.cadence = get_or(o, "cadence", 0.0);
      s.overrides.push_back(ov);
    }
  }
  if (s.kappas.empty()) throw ConfigError("sweep: kappa list is empty");
  if (s.ensemble < 1) throw ConfigError("sweep: ensemble must be >= 1");
  for (double k : s.kappas)
    if (!(k >= 0)) throw ConfigError("sweep: kappas must be >= 0");
  return s;
}

struct SweepMember {
  RunConfig config;
  std::optional<RunSummary> summary;
  std::string error;
};

struct KappaGroup {
  double kappa = 0;
  std::vector<SweepMember> members;
  std::optional<double> ell_mean;
  std::optional<double> spectrum_radius_95_max;
  std::optional<double> rate_global_mean;
  std::optional<double> rate_limsup_min;
  std::vector<std::uint64_t> failed_seeds;
};

struct SweepReport {
  std::vector<KappaGroup> groups;
  BatchelorFit fit;
  bool any_failed() const {
    return std::any_of(groups.begin(), groups.end(), [](const KappaGroup& g) { return !g.failed_seeds.empty(); });
  }
};

inline RunConfig member_config(const SweepConfig& s, double kappa, std::size_t i) {
  RunConfig c = s.base;
  c.model.kappa = kappa;
  for (const auto& o : s.overrides) {
    if (std::abs(o.kappa - kappa) > 1e-12 * std::max(1.0, kappa)) continue;
    if (o.cutoff) c.model.cutoff = *o.cutoff;
    if (o.dt) c.plan.dt = *o.dt;
    if (o.horizon) c.horizon = *o.horizon;
    if (o.cadence) c.diagnostics.cadence = *o.cadence;
  }
  c.plan.seed = s.base.plan.seed + i;
  if (s.base.initial.seed) c.initial.seed = *s.base.initial.seed + i;
  std::ostringstream name;
  name << "kappa_" << experiment_detail::format_double(kappa) << "/seed_" << c.plan.seed;
  c.output = (fs::path(s.base.output) / name.str()).string();
  return c;
}

inline std::size_t ensemble_for(const SweepConfig& s, double kappa) {
  for (const auto& o : s.overrides)
    if (std::abs(o.kappa - kappa) <= 1e-12 * std::max(1.0, kappa) && o.ensemble) return *o.ensemble;
  return s.ensemble;
}

inline json to_json(const SweepReport& r) {
  using experiment_detail::number_or_null;
  json groups = json::array();
  for (const auto& g : r.groups) {
    json members = json::array();
    for (const auto& m : g.members) {
      json mj{{"seed", m.config.plan.seed}, {"output", m.config.output}};
      if (m.summary) mj["summary"] = to_json(*m.summary);
      if (!m.error.empty()) mj["error"] = m.error;
      members.push_back(mj);
    }
    groups.push_back({{"kappa", g.kappa},
                      {"ell_mean", number_or_null(g.ell_mean)},
                      {"spectrum_radius_95_max", number_or_null(g.spectrum_radius_95_max)},
                      {"rate_global_mean", number_or_null(g.rate_global_mean)},
                      {"rate_limsup_proxy_min", number_or_null(g.rate_limsup_min)},
                      {"failed_seeds", g.failed_seeds},
                      {"members", members}});
  }
  json fit{{"exponent", number_or_null(r.fit.exponent)},
           {"prefactor", number_or_null(r.fit.prefactor)},
           {"exponent_stderr", r.fit.exponent_stderr},
           {"distinct_kappa", r.fit.distinct_kappa},
           {"degenerate", r.fit.degenerate}};
  return json{{"groups", groups}, {"batchelor_fit", fit}};
}

/// Runs every (kappa, seed) member, then reduces per kappa and fits l ~ C kappa^p.
inline SweepReport execute_sweep(const SweepConfig& s, unsigned parallel, bool write_outputs = true) {
  std::vector<SweepMember> jobs;
  std::vector<std::size_t> group_of;
  for (std::size_t g = 0; g < s.kappas.size(); ++g) {
    const std::size_t n = ensemble_for(s, s.kappas[g]);
    for (std::size_t i = 0; i < n; ++i) {
      jobs.push_back({member_config(s, s.kappas[g], i), std::nullopt, {}});
      group_of.push_back(g);
    }
  }
  for (const auto& j : jobs) validate(j.config);
  std::vector<std::optional<SpectralField>> finals(s.kappas.size());
  std::mutex mu;
  parallel_for(jobs.size(), worker_count(parallel), [&](std::size_t i) {
    try {
      RunOutcome o = execute_run(jobs[i].config, write_outputs);
      std::lock_guard<std::mutex> lock(mu);
      jobs[i].summary = o.summary;
      auto& slot = finals[group_of[i]];
      if (!slot && !o.sim.final_state.empty()) slot = o.sim.final_state;
    } catch (const std::exception& e) {
      std::lock_guard<std::mutex> lock(mu);
      jobs[i].error = e.what();
    }
  });

  SweepReport rep;
  std::vector<std::pair<double, double>> pairs;
  for (std::size_t g = 0; g < s.kappas.size(); ++g) {
    KappaGroup grp;
    grp.kappa = s.kappas[g];
    double ell = 0, rate = 0;
    std::size_t n_ell = 0, n_rate = 0;
    for (std::size_t i = 0; i < jobs.size(); ++i) {
      if (group_of[i] != g) continue;
      const auto& m = jobs[i];
      grp.members.push_back(m);
      if (!m.summary) {
        grp.failed_seeds.push_back(m.config.plan.seed);
        continue;
      }
      if (m.summary->ell_mean) ell += *m.summary->ell_mean, ++n_ell;
      if (m.summary->rate_global) rate += m.summary->rate_global->rate, ++n_rate;
      if (m.summary->spectrum_radius_95)
        grp.spectrum_radius_95_max = std::max(grp.spectrum_radius_95_max.value_or(0.0), *m.summary->spectrum_radius_95);
      if (m.summary->rate_limsup_proxy)
        grp.rate_limsup_min = std::min(grp.rate_limsup_min.value_or(INFINITY), m.summary->rate_limsup_proxy->rate);
    }
    if (n_ell) grp.ell_mean = ell / static_cast<double>(n_ell);
    if (n_rate) grp.rate_global_mean = rate / static_cast<double>(n_rate);
    if (grp.ell_mean && grp.kappa > 0) pairs.emplace_back(grp.kappa, *grp.ell_mean);
    rep.groups.push_back(std::move(grp));
  }
  rep.fit = batchelor_fit(pairs);
  if (write_outputs) {
    const fs::path dir = s.base.output;
    fs::create_directories(dir);
    for (std::size_t g = 0; g < s.kappas.size(); ++g)
      if (finals[g])
        export_figure_data(*finals[g], dir / "figure" / ("kappa_" + experiment_detail::format_double(s.kappas[g])));
    write_atomic(dir / "sweep.json", to_json(rep).dump(2) + "\n");
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Mixing rates (kappa = 0).

struct MixingReport {
  std::vector<double> s;
  std::vector<std::optional<RateEstimate>> gamma;
  bool monotone = true;
  bool capped = true;
  bool transfer = true;
};

/// Flags: nondecreasing within 2 stderr, below 2 pi^2 + 3 stderr, above the transfer bound from s0 = 1.
inline MixingReport assess_mixing(const std::vector<double>& s, const std::vector<std::optional<RateEstimate>>& g) {
  MixingReport r;
  r.s = s;
  r.gamma = g;
  const double cap = 2.0 * kPi * kPi;
  std::optional<RateEstimate> g1;
  for (std::size_t i = 0; i < s.size(); ++i)
    if (std::abs(s[i] - 1.0) < 1e-12) g1 = g[i];
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (!g[i]) {
      r.monotone = r.capped = r.transfer = false;
      continue;
    }
    if (g[i]->rate > cap + 3 * g[i]->std_error) r.capped = false;
    for (std::size_t j = i + 1; j < s.size(); ++j) {
      if (!g[j] || s[j] <= s[i]) continue;
      const double tol = 2.0 * std::hypot(g[i]->std_error, g[j]->std_error);
      if (g[j]->rate < g[i]->rate - tol) r.monotone = false;
    }
    if (g1 && s[i] < 1.0 && g[i]->rate < mixing_rate_transfer(1.0, std::max(0.0, g1->rate), s[i]) - 3 * g[i]->std_error)
      r.transfer = false;
  }
  return r;
}

/**
 * Runs `ensemble` kappa = 0 members (seeds base, base + 1, ...) and averages
 * their gamma_s estimates. The standard error is the ensemble spread over
 * sqrt(n); a single member keeps its regression error.
 */
inline MixingReport execute_mixing(const RunConfig& base, std::size_t ensemble, unsigned parallel,
                                   bool write_outputs = true) {
  if (base.model.kappa != 0.0) throw ConfigError("mixing: requires kappa = 0");
  if (base.diagnostics.sobolev_s.empty()) throw ConfigError("mixing: empty s grid");
  if (ensemble < 1) throw ConfigError("mixing: ensemble must be >= 1");
  validate(base);
  std::vector<std::optional<RunSummary>> out(ensemble);
  std::vector<std::string> errors(ensemble);
  parallel_for(ensemble, worker_count(parallel), [&](std::size_t i) {
    RunConfig c = base;
    c.plan.seed = base.plan.seed + i;
    if (base.initial.seed) c.initial.seed = *base.initial.seed + i;
    c.output = (fs::path(base.output) / ("seed_" + std::to_string(c.plan.seed))).string();
    try {
      out[i] = execute_run(c, write_outputs).summary;
    } catch (const NumericalAbort& e) {
      errors[i] = e.what();
    }
  });
  for (const auto& e : errors)
    if (!e.empty()) throw NumericalAbort("mixing member: " + e);

  std::vector<std::optional<RateEstimate>> g;
  for (std::size_t k = 0; k < base.diagnostics.sobolev_s.size(); ++k) {
    std::vector<RateEstimate> v;
    for (const auto& m : out)
      if (m->gamma_s[k].second) v.push_back(*m->gamma_s[k].second);
    if (v.empty()) {
      g.emplace_back();
      continue;
    }
    if (v.size() == 1) {
      g.push_back(v.front());
      continue;
    }
    double sum = 0, sum2 = 0;
    std::size_t samples = 0;
    for (const auto& r : v) sum += r.rate, sum2 += r.rate * r.rate, samples += r.samples;
    const double n = static_cast<double>(v.size());
    RateEstimate r;
    r.rate = sum / n;
    r.std_error = std::sqrt(std::max(0.0, (sum2 - sum * sum / n) / (n - 1)) / n);
    r.samples = samples;
    g.push_back(r);
  }
  return assess_mixing(base.diagnostics.sobolev_s, g);
}

inline json to_json(const MixingReport& r) {
  json rows = json::array();
  for (std::size_t i = 0; i < r.s.size(); ++i)
    rows.push_back({{"s", r.s[i]},
                    {"gamma", r.gamma[i] ? json(r.gamma[i]->rate) : json()},
                    {"std_error", r.gamma[i] ? json(r.gamma[i]->std_error) : json()}});
  return json{{"rates", rows},
              {"monotone", r.monotone},
              {"below_cap_2pi2", r.capped},
              {"transfer_bound", r.transfer},
              {"cap", 2.0 * kPi * kPi}};
}

// ---------------------------------------------------------------------------
// Presets.

/// Named configurations. Run presets return a run config; sweep presets add a "sweep" block.
inline json preset(const std::string& name) {
  auto base = [](double kappa, int cutoff, double dt, double horizon) {
    RunConfig c;
    c.model = {2, kappa, cutoff};
    c.plan.dt = dt;
    c.horizon = horizon;
    c.diagnostics.cadence = 0.01;
    return to_json(c);
  };
  if (name == "quick") {
    json j = base(0.01, 16, 1e-3, 1.0);
    j["diagnostics"]["sobolev_s"] = {0.5, 1.0, 2.0};
    return j;
  }
  if (name == "acceptance") {
    // Figure-1 kappa triple at desk scale.
    json j = base(0.01, 64, 2e-4, 20.0);
    j["sweep"] = {{"kappas", {0.04, 0.01, 0.0025}}, {"ensemble", 8}};
    return j;
  }
  if (name == "lower-bound") {
    json j = base(0.0, 64, 2e-4, 20.0);
    j["sweep"] = {{"kappas", {0.0, 0.0025, 0.01, 0.04}}, {"ensemble", 8}};
    return j;
  }
  if (name == "full") {
    // Long-running: resolves the kappa = 0.0025 spectrum at N = 256.
    json j = base(0.01, 64, 2e-4, 20.0);
    j["sweep"] = {{"kappas", {0.04, 0.01, 0.0025}},
                  {"ensemble", 8},
                  {"overrides", {{{"kappa", 0.0025}, {"cutoff", 256}, {"ensemble", 1}, {"cadence", 0.05}}}}};
    return j;
  }
  if (name == "mixing") {
    // At N = 64 the negative norms stop decaying once the scalar reaches the
    // grid scale (t near 1), so the fit stays on the earlier stretch.
    json j = base(0.0, 64, 2e-4, 0.8);
    j["diagnostics"]["sobolev_s"] = {0.25, 0.5, 1.0, 2.0, 4.0};
    j["diagnostics"]["cadence"] = 0.005;
    j["diagnostics"]["mixing_fit"] = {0.1, 0.8};
    j["mixing"] = {{"ensemble", 8}};
    return j;
  }
  if (name == "smoke-3d") {
    json j = base(0.01, 16, 1e-3, 5.0);
    j["model"]["dim"] = 3;
    return j;
  }
  if (name == "lagrangian") {
    json j = base(0.0, 16, 1e-3, 1.0);
    j["lagrangian"] = {{"particles", 1000}, {"horizon", 50.0}, {"dt", 1e-3}, {"s", {0.5, 1.0, 2.0}}};
    return j;
  }
  throw ConfigError("unknown preset '" + name + "'");
}

inline std::vector<std::string> preset_names() {
  return {"quick", "acceptance", "lower-bound", "full", "mixing", "smoke-3d", "lagrangian"};
}

}  // namespace batchelor
