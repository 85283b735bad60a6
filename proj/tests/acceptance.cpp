// Acceptance runner: one PASS/FAIL line per criterion.
//
//   acceptance [criterion ...]
//
// With no arguments every criterion runs. Expensive ensembles are cached as
// JSON under the scratch directory, keyed by their full configuration, so the
// separate ctest entries share them. BATCHELOR_ACCEPTANCE_FULL=1 switches the
// diffusive sweeps to dt = 2e-4 and the N = 256 run to T = 20.

#include "batchelor/experiment.hpp"

#include <cstdlib>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>

using namespace batchelor;

namespace {

const fs::path kWork = BATCHELOR_SCRATCH;

bool full_workload() {
  const char* v = std::getenv("BATCHELOR_ACCEPTANCE_FULL");
  return v && std::string(v) == "1";
}

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v, int precision = 4) {
  std::ostringstream os;
  os << std::setprecision(precision) << v;
  return os.str();
}

json cached(const std::string& name, const json& key, const std::function<json()>& compute) {
  fs::create_directories(kWork);
  const fs::path file = kWork / (name + "-" + experiment_detail::hex64(experiment_detail::fnv1a(key.dump())) + ".json");
  if (fs::exists(file)) {
    const json j = read_json_file(file);
    if (j.value("key", json()) == key) return j["value"];
  }
  std::cerr << "[acceptance] computing " << name << " (" << file.filename().string() << ")\n";
  const auto t0 = std::chrono::steady_clock::now();
  const json value = compute();
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  write_atomic(file, json{{"key", key}, {"value", value}, {"seconds", secs}}.dump(1) + "\n");
  std::cerr << "[acceptance] " << name << " took " << fmt(secs, 4) << " s\n";
  return value;
}

// ---------------------------------------------------------------------------
// Shared workloads.

json lower_bound_sweep() {
  json cfg = preset("lower-bound");
  if (!full_workload()) cfg["plan"]["dt"] = 1e-3;
  cfg["output"] = (kWork / "lower-bound").string();
  return cached("lower-bound-sweep", cfg, [&] { return to_json(execute_sweep(sweep_config_from_json(cfg), 1, false)); });
}

const json& group(const json& sweep, double kappa) {
  for (const auto& g : sweep["groups"])
    if (std::abs(g["kappa"].get<double>() - kappa) <= 1e-12) return g;
  throw std::runtime_error("sweep has no kappa " + fmt(kappa));
}

// kappa = 0.0025 resolved at N = 256.
json fine_run() {
  RunConfig c = run_config_from_json(preset("acceptance"));
  c.model.kappa = 0.0025;
  c.model.cutoff = 256;
  c.diagnostics.cadence = 0.05;
  if (!full_workload()) {
    c.plan.dt = 1e-3;
    c.horizon = 5.0;
  }
  c.output = (kWork / "fine-0.0025").string();
  return cached("fine-run", to_json(c), [&] { return to_json(execute_run(c, false).summary); });
}

json mixing_report() {
  const json cfg = preset("mixing");
  const RunConfig c = run_config_from_json(cfg);
  const std::size_t ensemble = cfg["mixing"]["ensemble"].get<std::size_t>();
  return cached("mixing", cfg, [&] { return to_json(execute_mixing(c, ensemble, 1, false)); });
}

json lagrangian_estimate() {
  LagrangianOptions o;
  o.dim = 2;
  o.particles = 1000;
  o.horizon = 50;
  o.dt = 1e-3;
  const json key{{"dim", o.dim}, {"particles", o.particles}, {"horizon", o.horizon}, {"dt", o.dt}, {"seed", o.seed}};
  return cached("lagrangian", key, [&] {
    const LyapunovEstimate e = lyapunov_estimate(o);
    return json{{"lambda", e.lambda},
                {"mean", e.mean},
                {"std_error", e.std_error},
                {"max_abs_log_det", e.max_abs_log_det}};
  });
}

// ---------------------------------------------------------------------------
// Criteria.

Verdict lower_bound() {
  const json sweep = lower_bound_sweep();
  Verdict v{true, ""};
  std::ostringstream os;
  for (const auto& g : sweep["groups"]) {
    if (!g["failed_seeds"].empty()) v.pass = false;
    double worst = std::numeric_limits<double>::infinity();
    std::size_t n = 0;
    for (const auto& m : g["members"]) {
      if (!m.contains("summary") || m["summary"]["rate_limsup_proxy"].is_null()) {
        v.pass = false;
        continue;
      }
      const json& s = m["summary"];
      const double margin = s["rate_limsup_proxy"].get<double>() -
                            (s["bound"].get<double>() - 3.0 * s["rate_limsup_proxy_stderr"].get<double>());
      worst = std::min(worst, margin);
      if (margin < 0) v.pass = false;
      ++n;
    }
    os << "kappa=" << g["kappa"].get<double>() << " seeds=" << n
       << " min_proxy=" << fmt(g["rate_limsup_proxy_min"].is_null() ? NAN : g["rate_limsup_proxy_min"].get<double>())
       << " bound=" << fmt(-ModelSpec{2, g["kappa"].get<double>(), 64}.inner_rate()) << " worst_margin=" << fmt(worst)
       << "; ";
  }
  v.detail = os.str();
  return v;
}

Verdict drift_nonnegativity() {
  CheckOptions opt;
  opt.trials_2d = opt.trials_3d = 1000000;
  opt.interpolation_fields = 1;
  opt.max_connectivity_cutoff = 1;
  const CheckReport rep = run_check_suite(opt);
  Verdict v{true, ""};
  std::ostringstream os;
  for (const auto& r : rep.results) {
    const bool wanted = r.check.rfind("drift_", 0) == 0 || r.check.rfind("frobenius_", 0) == 0 ||
                        r.check.rfind("block_norm_chain_", 0) == 0;
    if (!wanted) continue;
    if (!r.pass()) v.pass = false;
    os << r.check << " trials=" << r.trials << " failures=" << r.failures << " worst_margin=" << fmt(r.worst_margin)
       << "; ";
  }
  v.detail = os.str();
  return v;
}

Verdict conservation() {
  RunConfig c = run_config_from_json(preset("lower-bound"));
  c.model.kappa = 0.0;
  const SpectralField f0 = make_initial_field(c);
  SplittingStepper st(f0, c.model, c.plan);
  const BrownianPath path(c.plan.seed, c.model.noise_count(), c.plan.dt);
  const double before = st.grid().l2_norm();
  const std::uint64_t steps = 10000;
  for (std::uint64_t n = 0; n < steps; ++n) st.step(path.step(n));
  const double drift = std::abs(std::log(st.grid().l2_norm() / before));
  return {drift < 1e-9, "N=64 dt=" + fmt(c.plan.dt) + " steps=10000 |dlog L2|=" + fmt(drift, 3)};
}

Verdict batchelor_scaling() {
  const json sweep = lower_bound_sweep();
  const json fine = fine_run();
  std::vector<std::pair<double, double>> pairs;
  for (double kappa : {0.04, 0.01}) pairs.emplace_back(kappa, group(sweep, kappa)["ell_mean"].get<double>());
  pairs.emplace_back(0.0025, fine["ell_mean"].get<double>());
  const BatchelorFit fit = batchelor_fit(pairs);
  std::ostringstream os;
  for (const auto& [k, l] : pairs) os << "ell(" << k << ")=" << fmt(l) << " ";
  if (!fit.exponent) return {false, os.str() + "fit degenerate"};
  os << "exponent=" << fmt(*fit.exponent) << " (se " << fmt(fit.exponent_stderr, 2) << ", band [0.35, 0.65])";
  return {*fit.exponent >= 0.35 && *fit.exponent <= 0.65, os.str()};
}

Verdict spectrum_confinement() {
  const json sweep = lower_bound_sweep();
  const json fine = fine_run();
  std::vector<std::pair<double, double>> radii;
  for (double kappa : {0.04, 0.01}) radii.emplace_back(kappa, group(sweep, kappa)["spectrum_radius_95_max"].get<double>());
  radii.emplace_back(0.0025, fine["spectrum_radius_95"].get<double>());
  Verdict v{true, ""};
  std::ostringstream os;
  for (const auto& [k, r] : radii) {
    const double cap = 10.0 / std::sqrt(k);
    if (r > cap) v.pass = false;
    os << "kappa=" << k << " radius95=" << fmt(r) << " cap=" << fmt(cap) << "; ";
  }
  v.detail = os.str();
  return v;
}

Verdict dissipation_rate() {
  const json sweep = lower_bound_sweep();
  Verdict v{true, ""};
  std::ostringstream os;
  double lo = std::numeric_limits<double>::infinity(), hi = 0;
  for (double kappa : {0.04, 0.01, 0.0025}) {
    const json& g = group(sweep, kappa);
    const double bound = -ModelSpec{2, kappa, 64}.inner_rate();
    for (const auto& m : g["members"]) {
      if (!m.contains("summary") || m["summary"]["rate_global"].is_null()) {
        v.pass = false;
        continue;
      }
      const double r = m["summary"]["rate_global"].get<double>();
      if (r < bound || r > -0.05) v.pass = false;
    }
    const double mean = g["rate_global_mean"].get<double>();
    lo = std::min(lo, std::abs(mean));
    hi = std::max(hi, std::abs(mean));
    os << "kappa=" << kappa << " mean_rate=" << fmt(mean) << " range=[" << fmt(bound) << ", -0.05]; ";
  }
  const double ratio = hi / lo;
  if (!(ratio < 3.0)) v.pass = false;
  os << "max/min=" << fmt(ratio);
  v.detail = os.str();
  return v;
}

Verdict mixing_shape() {
  const json rep = mixing_report();
  std::ostringstream os;
  for (const auto& r : rep["rates"])
    os << "g(" << r["s"].get<double>() << ")=" << (r["gamma"].is_null() ? std::string("n/a") : fmt(r["gamma"].get<double>()))
       << "+-" << (r["std_error"].is_null() ? std::string("n/a") : fmt(r["std_error"].get<double>(), 2)) << " ";
  const bool pass = rep["monotone"].get<bool>() && rep["below_cap_2pi2"].get<bool>() && rep["transfer_bound"].get<bool>();
  os << "monotone=" << rep["monotone"] << " capped=" << rep["below_cap_2pi2"] << " transfer=" << rep["transfer_bound"];
  return {pass, os.str()};
}

Verdict quadratic_variation() {
  const ModelSpec spec{2, 0.01, 6};
  const double dt = 1e-4, horizon = 1.0;
  const std::size_t paths = 1000;
  const ModeIndex target{1, 1, 0};
  RunConfig c;
  c.model = spec;
  c.initial = {"random-shell", 1, 11};
  const SpectralField f0 = make_initial_field(c);
  const double drift = drift_coefficient(spec, target);
  const auto steps = static_cast<std::uint64_t>(std::llround(horizon / dt));
  std::vector<double> diff(paths), raw(paths), predicted(paths);
  for (std::size_t p = 0; p < paths; ++p) {
    EulerMaruyamaStepper em(f0, spec, dt);
    const BrownianPath path(1000 + p, spec.noise_count(), dt);
    double realized = 0, compensator = 0, integral = 0;
    for (std::uint64_t n = 0; n < steps; ++n) {
      const Complex before = em.state()[target];
      integral += quadratic_variation_rate(em.state(), target) * dt;
      compensator += std::norm(drift * before * dt);
      em.step(path.step(n));
      realized += std::norm(em.state()[target] - before);
    }
    raw[p] = realized;
    predicted[p] = integral;
    diff[p] = realized - compensator - integral;
  }
  auto mean_se = [](const std::vector<double>& v) {
    double s = 0, s2 = 0;
    for (double x : v) s += x, s2 += x * x;
    const double n = static_cast<double>(v.size());
    const double m = s / n;
    return std::pair{m, std::sqrt(std::max(0.0, (s2 - n * m * m) / (n - 1)) / n)};
  };
  const auto [d, se] = mean_se(diff);
  const double qv = mean_se(raw).first, pred = mean_se(predicted).first;
  return {std::abs(d) <= 3.0 * se,
          "paths=1000 N=6 dt=1e-4 realized=" + fmt(qv, 6) + " predicted=" + fmt(pred, 6) +
              " compensated_diff=" + fmt(d, 3) + " se=" + fmt(se, 3)};
}

Verdict one_point() {
  const OnePointStats st = one_point_statistics<2>(100000, 1.0, 1e-2, 2024);
  const json lag = lagrangian_estimate();
  Verdict v{true, ""};
  std::ostringstream os;
  for (std::size_t a = 0; a < st.variance.size(); ++a) {
    if (std::abs(st.variance[a] - st.t) > 3.0 * st.variance_std_error[a]) v.pass = false;
    os << "var[" << a << "]=" << fmt(st.variance[a], 5) << "+-" << fmt(st.variance_std_error[a], 2) << " ";
  }
  const double log_det = lag["max_abs_log_det"].get<double>();
  const double det_err = std::expm1(log_det);
  if (!(det_err <= 1e-8)) v.pass = false;
  os << "t=" << st.t << " particles=100000; max|det J - 1| at T=50 = " << fmt(det_err, 3);
  v.detail = os.str();
  return v;
}

Verdict lagrangian_cap() {
  const json lag = lagrangian_estimate();
  const json mix = mixing_report();
  const double lambda = lag["lambda"].get<double>();
  Verdict v{true, ""};
  std::ostringstream os;
  os << "lambda=" << fmt(lambda) << " (mean " << fmt(lag["mean"].get<double>()) << "); ";
  for (double s : {0.5, 1.0, 2.0}) {
    bool found = false;
    for (const auto& r : mix["rates"]) {
      if (std::abs(r["s"].get<double>() - s) > 1e-12 || r["gamma"].is_null()) continue;
      found = true;
      const double g = r["gamma"].get<double>(), se = r["std_error"].get<double>();
      const double cap = mixing_rate_cap(lambda, s);
      if (cap < g - 3.0 * se) v.pass = false;
      os << "s=" << s << " cap=" << fmt(cap) << " gamma=" << fmt(g) << "; ";
    }
    if (!found) v.pass = false;
  }
  v.detail = os.str();
  return v;
}

Verdict structural() {
  CheckOptions opt;
  opt.trials_2d = opt.trials_3d = 1;
  opt.interpolation_fields = 10000;
  opt.max_connectivity_cutoff = 16;
  const CheckReport rep = run_check_suite(opt);
  Verdict v{true, ""};
  std::ostringstream os;
  for (const auto& r : rep.results) {
    const bool wanted = r.check.rfind("interpolation_", 0) == 0 || r.check == "approximant_bounds" ||
                        r.check.rfind("adjacency_", 0) == 0 || r.check == "mixing_rate_transfer_arithmetic";
    if (!wanted) continue;
    if (!r.pass()) v.pass = false;
    os << r.check << " trials=" << r.trials << " failures=" << r.failures << "; ";
  }
  v.detail = os.str();
  return v;
}

Verdict smoke_3d() {
  RunConfig c = run_config_from_json(preset("smoke-3d"));
  c.output = (kWork / "smoke-3d").string();
  const json s = cached("smoke-3d", to_json(c), [&] { return to_json(execute_run(c, false).summary); });
  if (s["rate_limsup_proxy"].is_null()) return {false, "no rate estimate"};
  const double r = s["rate_limsup_proxy"].get<double>(), se = s["rate_limsup_proxy_stderr"].get<double>();
  const double bound = s["bound"].get<double>();
  return {r >= bound - 3.0 * se, "N=16 kappa=0.01 T=5 proxy=" + fmt(r) + "+-" + fmt(se, 2) + " bound=" + fmt(bound)};
}

const std::vector<std::pair<std::string, std::function<Verdict()>>>& criteria() {
  static const std::vector<std::pair<std::string, std::function<Verdict()>>> all{
      {"lower-bound", lower_bound},
      {"drift-nonnegativity", drift_nonnegativity},
      {"conservation", conservation},
      {"batchelor-scaling", batchelor_scaling},
      {"spectrum-confinement", spectrum_confinement},
      {"dissipation-rate", dissipation_rate},
      {"mixing-shape", mixing_shape},
      {"quadratic-variation", quadratic_variation},
      {"one-point", one_point},
      {"lagrangian-cap", lagrangian_cap},
      {"structural", structural},
      {"smoke-3d", smoke_3d},
  };
  return all;
}

}  // namespace

int main(int argc, char** argv) {
  std::vector<std::string> wanted(argv + 1, argv + argc);
  for (const auto& w : wanted) {
    const bool known = std::any_of(criteria().begin(), criteria().end(), [&](const auto& c) { return c.first == w; });
    if (!known) {
      std::cerr << "unknown criterion '" << w << "'\n";
      return 2;
    }
  }
  std::cout << "workload: " << (full_workload() ? "full" : "reduced") << '\n';
  bool all_pass = true;
  for (const auto& [name, run] : criteria()) {
    if (!wanted.empty() && std::find(wanted.begin(), wanted.end(), name) == wanted.end()) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = run();
    } catch (const std::exception& e) {
      v = {false, std::string("error: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::cout << (v.pass ? "PASS " : "FAIL ") << name << ": " << v.detail << " [" << fmt(secs, 3) << " s]" << std::endl;
    all_pass = all_pass && v.pass;
  }
  return all_pass ? 0 : 1;
}
