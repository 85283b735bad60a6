// Time stepping for the shear-noise advection-diffusion equation.
//
// Two schemes:
//  - splitting: each sin/cos shear group is applied as the exact shear map
//    with amplitudes equal to the Brownian increments, followed by the exact
//    heat semigroup. The state lives on an odd M^d grid in a "pencil" layout:
//    at any time at most one axis is held as a half spectrum, so a shear
//    along that axis is a per-line phase multiplication.
//  - euler-maruyama: explicit Ito update of the truncated Fourier system.
#pragma once

#include "batchelor/diagnostics.hpp"
#include "batchelor/fft.hpp"
#include "batchelor/models.hpp"
#include "batchelor/noise.hpp"
#include "batchelor/spectral.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace batchelor {

enum class Scheme { kSplitting, kEulerMaruyama };

inline std::string to_string(Scheme s) { return s == Scheme::kSplitting ? "splitting" : "euler-maruyama"; }

inline Scheme parse_scheme(const std::string& s) {
  if (s == "splitting") return Scheme::kSplitting;
  if (s == "euler-maruyama" || s == "em") return Scheme::kEulerMaruyama;
  throw std::invalid_argument("unknown scheme '" + s + "'");
}

struct StepPlan {
  double dt = 1e-3;
  Scheme scheme = Scheme::kSplitting;
  std::uint64_t seed = 1;
  /// Fine Brownian steps summed per step; see BrownianPath.
  int substeps = 1;
  /// Grid side for the splitting scheme; 0 picks default_grid_size(cutoff).
  std::size_t grid = 0;
  /// Order in which shear groups are applied (0-based); empty means 0, 1, 2, ...
  std::vector<int> group_order;

  void validate(const ModelSpec& spec) const {
    if (!(dt > 0)) throw std::invalid_argument("StepPlan: dt must be positive");
    if (substeps < 1) throw std::invalid_argument("StepPlan: substeps must be >= 1");
    if (!group_order.empty()) {
      std::vector<int> sorted = group_order;
      std::sort(sorted.begin(), sorted.end());
      for (int i = 0; i < spec.shear_groups(); ++i)
        if (static_cast<int>(sorted.size()) != spec.shear_groups() || sorted[static_cast<std::size_t>(i)] != i)
          throw std::invalid_argument("StepPlan: group_order must be a permutation of the shear groups");
    }
  }

  std::vector<int> order(const ModelSpec& spec) const {
    if (!group_order.empty()) return group_order;
    std::vector<int> o(static_cast<std::size_t>(spec.shear_groups()));
    std::iota(o.begin(), o.end(), 0);
    return o;
  }
};

/// Smallest odd M >= 4N whose prime factors are all <= 13.
inline std::size_t default_grid_size(int cutoff) {
  std::size_t m = static_cast<std::size_t>(4 * std::max(cutoff, 1));
  if (m % 2 == 0) ++m;
  for (;; m += 2) {
    std::size_t r = m;
    for (std::size_t p : {3u, 5u, 7u, 11u, 13u})
      while (r % p == 0) r /= p;
    if (r == 1) return m;
  }
}

/// Largest stable explicit step suggested for the Euler-Maruyama scheme.
inline double euler_maruyama_dt_limit(const ModelSpec& spec) {
  return 0.1 / (spec.inner_rate() * double(spec.cutoff) * double(spec.cutoff));
}

/**
 * Real field on an M^d grid (M odd) with at most one axis held in half
 * spectral form. Transforms along an axis happen only when an operation
 * needs a different axis, so consecutive operations on the same axis share
 * one transform pair.
 */
class ShearGrid {
 public:
  ShearGrid() = default;

  ShearGrid(int dim, std::size_t m) : dim_(dim), m_(m), h_(m / 2 + 1) {
    if (dim != 2 && dim != 3) throw std::invalid_argument("ShearGrid: dimension must be 2 or 3");
    if (m < 3 || m % 2 == 0) throw std::invalid_argument("ShearGrid: grid side must be odd and >= 3");
    const std::size_t n = fft_detail::ipow(m, dim);
    real_.assign(n, 0.0);
    half_.assign(n / m * h_, Complex{});
    sin_table_.resize(m);
    cos_table_.resize(m);
    for (std::size_t j = 0; j < m; ++j) {
      const double th = 2.0 * kPi * static_cast<double>(j) / static_cast<double>(m);
      sin_table_[j] = std::sin(th);
      cos_table_[j] = std::cos(th);
    }
  }

  static ShearGrid from_spectral(const SpectralField& f, std::size_t m) {
    ShearGrid g(f.dim(), m);
    g.load(to_physical(f, m));
    return g;
  }

  int dim() const { return dim_; }
  std::size_t side() const { return m_; }
  int active_axis() const { return active_; }
  std::uint64_t line_transforms() const { return transforms_; }

  void load(const GridField& g) {
    if (g.dim != dim_ || g.side != m_) throw std::invalid_argument("ShearGrid::load: shape mismatch");
    std::copy(g.samples.begin(), g.samples.end(), real_.begin());
    active_ = -1;
    pending_scale_ = 1.0;
  }

  const AlignedVector<double>& physical_samples() {
    ensure_physical();
    return real_;
  }

  GridField physical() {
    ensure_physical();
    GridField g;
    g.dim = dim_;
    g.side = m_;
    g.samples = real_;
    return g;
  }

  /// Spectral coefficients truncated to the cube [-N, N]^d.
  SpectralField spectral(int cutoff) {
    ensure_physical();
    GridField g;
    g.dim = dim_;
    g.side = m_;
    g.samples = real_;
    return to_spectral(g, cutoff);
  }

  /// Grid L^2 norm: sqrt of the mean of squared samples.
  double l2_norm() {
    ensure_physical();
    double acc = 0;
    for (double v : real_) acc += v * v;
    return std::sqrt(acc / static_cast<double>(real_.size()));
  }

  /// Subtracts the grid mean (the k = 0 coefficient).
  void remove_mean() {
    ensure_physical();
    double acc = 0;
    for (double v : real_) acc += v;
    const double mean = acc / static_cast<double>(real_.size());
    for (double& v : real_) v -= mean;
  }

  void scale(double a) {
    if (active_ >= 0) {
      pending_scale_ *= a;
    } else {
      for (double& v : real_) v *= a;
    }
  }

  /// f <- f(x - c(x_driver) e_moved) with c = a_sin sin(2 pi x_driver) + a_cos cos(2 pi x_driver).
  void shear(int moved, int driver, double a_sin, double a_cos) {
    std::vector<double> c(m_);
    for (std::size_t j = 0; j < m_; ++j) c[j] = a_sin * sin_table_[j] + a_cos * cos_table_[j];
    shear_profile(moved, driver, c, nullptr);
  }

  /// As shear(), also multiplying wavenumber k along `moved` by axis_multiplier[k].
  void shear(int moved, int driver, double a_sin, double a_cos, const std::vector<double>& axis_multiplier) {
    std::vector<double> c(m_);
    for (std::size_t j = 0; j < m_; ++j) c[j] = a_sin * sin_table_[j] + a_cos * cos_table_[j];
    shear_profile(moved, driver, c, &axis_multiplier);
  }

  /**
   * Translates every line along `moved` by displacement[j], j the grid index
   * along `driver`: the k-th coefficient along `moved` is multiplied by
   * exp(-2 pi i k displacement[j]).
   */
  void shear_profile(int moved, int driver, const std::vector<double>& displacement,
                     const std::vector<double>* axis_multiplier = nullptr) {
    if (moved == driver || moved < 0 || driver < 0 || moved >= dim_ || driver >= dim_)
      throw std::invalid_argument("ShearGrid::shear: moved and driver axes must differ");
    if (displacement.size() != m_) throw std::invalid_argument("ShearGrid::shear: profile length mismatch");
    ensure_spectral(moved);
    // phase[j * h + k] = exp(-2 pi i k c_j), by recurrence re-anchored every 32 steps.
    phase_.resize(m_ * h_);
    for (std::size_t j = 0; j < m_; ++j) {
      const double c = displacement[j];
      const Complex w = std::polar(1.0, -2.0 * kPi * c);
      Complex* row = phase_.data() + j * h_;
      Complex p{1.0, 0.0};
      for (std::size_t k = 0; k < h_; ++k) {
        if (k % 32 == 0) {
          const double frac = static_cast<double>(k) * c - std::floor(static_cast<double>(k) * c);
          p = std::polar(1.0, -2.0 * kPi * frac);
        }
        row[k] = p;
        p *= w;
      }
    }
    const double s = pending_scale_;
    pending_scale_ = 1.0;
    const auto ext = extents(moved);
    const auto str = strides(moved);
    const int pm = padded(moved), pd = padded(driver);
    std::array<std::size_t, 3> idx{};
    for (idx[0] = 0; idx[0] < ext[0]; ++idx[0]) {
      for (idx[1] = 0; idx[1] < ext[1]; ++idx[1]) {
        Complex* base = half_.data() + idx[0] * str[0] + idx[1] * str[1];
        if (pm == 2) {
          // Lines run along the contiguous axis.
          const Complex* row = phase_.data() + idx[static_cast<std::size_t>(pd)] * h_;
          for (std::size_t k = 0; k < h_; ++k) {
            const double mult = axis_multiplier ? s * (*axis_multiplier)[k] : s;
            base[k] *= row[k] * mult;
          }
        } else {
          const std::size_t k = idx[static_cast<std::size_t>(pm)];
          const double mult = axis_multiplier ? s * (*axis_multiplier)[k] : s;
          if (pd == 2) {
            for (std::size_t j = 0; j < ext[2]; ++j) base[j] *= phase_[j * h_ + k] * mult;
          } else {
            const Complex ph = phase_[idx[static_cast<std::size_t>(pd)] * h_ + k] * mult;
            for (std::size_t j = 0; j < ext[2]; ++j) base[j] *= ph;
          }
        }
      }
    }
  }

  /// Multiplies wavenumber k (>= 0, mirrored for k < 0) along `axis` by mult[k].
  void multiply_axis(int axis, const std::vector<double>& mult) {
    if (mult.size() != h_) throw std::invalid_argument("ShearGrid::multiply_axis: length mismatch");
    ensure_spectral(axis);
    const double s = pending_scale_;
    pending_scale_ = 1.0;
    const auto ext = extents(axis);
    const auto str = strides(axis);
    const int pa = padded(axis);
    std::array<std::size_t, 3> idx{};
    for (idx[0] = 0; idx[0] < ext[0]; ++idx[0]) {
      for (idx[1] = 0; idx[1] < ext[1]; ++idx[1]) {
        Complex* base = half_.data() + idx[0] * str[0] + idx[1] * str[1];
        if (pa == 2) {
          for (std::size_t k = 0; k < h_; ++k) base[k] *= s * mult[k];
        } else {
          const double f = s * mult[idx[static_cast<std::size_t>(pa)]];
          for (std::size_t j = 0; j < ext[2]; ++j) base[j] *= f;
        }
      }
    }
  }

  void ensure_physical() {
    if (active_ < 0) return;
    if (pending_scale_ != 1.0) {
      for (auto& c : half_) c *= pending_scale_;
      pending_scale_ = 1.0;
    }
    LineFft::get(dim_, m_, active_, LineDirection::kBackward).backward(half_.data(), real_.data());
    ++transforms_;
    active_ = -1;
  }

  void ensure_spectral(int axis) {
    if (active_ == axis) return;
    ensure_physical();
    LineFft::get(dim_, m_, axis, LineDirection::kForward).forward(real_.data(), half_.data());
    ++transforms_;
    active_ = axis;
    pending_scale_ = 1.0 / static_cast<double>(m_);
  }

 private:
  int padded(int axis) const { return axis + (3 - dim_); }

  // Extents of the half layout with `axis` spectral, padded to three axes.
  std::array<std::size_t, 3> extents(int axis) const {
    std::array<std::size_t, 3> e{1, m_, m_};
    if (dim_ == 3) e[0] = m_;
    e[static_cast<std::size_t>(padded(axis))] = h_;
    return e;
  }
  std::array<std::size_t, 3> strides(int axis) const {
    const auto e = extents(axis);
    return {e[1] * e[2], e[2], 1};
  }

  int dim_ = 2;
  std::size_t m_ = 0;
  std::size_t h_ = 0;
  int active_ = -1;
  double pending_scale_ = 1.0;
  std::uint64_t transforms_ = 0;
  AlignedVector<double> real_;
  AlignedVector<Complex> half_;
  std::vector<Complex> phase_;
  std::vector<double> sin_table_;
  std::vector<double> cos_table_;
};

/// Heat multipliers exp(-kappa (2 pi)^2 k^2 dt) for k = 0 .. h-1 along one axis.
inline std::vector<double> heat_multipliers(double kappa, double dt, std::size_t h) {
  std::vector<double> out(h);
  for (std::size_t k = 0; k < h; ++k) out[k] = std::exp(-kappa * kTwoPiSq * double(k) * double(k) * dt);
  return out;
}

/// Exact heat semigroup on the truncated lattice.
inline SpectralField heat_step(const SpectralField& f, double kappa, double dt) {
  if (!(kappa >= 0) || !(dt >= 0)) throw std::invalid_argument("heat_step: kappa and dt must be >= 0");
  SpectralField out = f;
  out.time = f.time + dt;
  if (kappa == 0.0) return out;
  auto& c = out.raw();
  for (std::size_t i = 0; i < c.size(); ++i) {
    const ModeIndex k = out.mode_at(i);
    c[i] *= std::exp(-kappa * kTwoPiSq * static_cast<double>(k.norm2()) * dt);
  }
  return out;
}

/// One shear of a spectral field, evaluated on a grid of side m and truncated back.
inline SpectralField shear_step(const SpectralField& f, int moved, int driver, double a_sin, double a_cos,
                                std::size_t m = 0) {
  if (moved == driver) throw std::invalid_argument("shear_step: moved and driver axes must differ");
  if (m == 0) m = default_grid_size(f.cutoff());
  ShearGrid g = ShearGrid::from_spectral(f, m);
  g.shear(moved, driver, a_sin, a_cos);
  SpectralField out = g.spectral(f.cutoff());
  out.time = f.time;
  return out;
}

/// Splitting integrator state: one run of the grid-based scheme.
class SplittingStepper {
 public:
  SplittingStepper(const SpectralField& f0, const ModelSpec& spec, const StepPlan& plan)
      : spec_(spec), plan_(plan), order_(plan.order(spec)) {
    spec.validate();
    plan.validate(spec);
    if (f0.dim() != spec.dim) throw std::invalid_argument("SplittingStepper: field dimension mismatch");
    const std::size_t m = plan.grid ? plan.grid : default_grid_size(spec.cutoff);
    grid_ = ShearGrid::from_spectral(f0, m);
    time_ = f0.time;
    heat_ = heat_multipliers(spec.kappa, plan.dt, m / 2 + 1);
  }

  /// Shear groups in plan order, then the heat factors along every axis.
  void step(const NoiseDraw& draw) {
    if (draw.increments.size() != static_cast<std::size_t>(spec_.noise_count()))
      throw std::invalid_argument("SplittingStepper: draw length mismatch");
    for (int g : order_) {
      const ShearAxes ax = kShearGroups[static_cast<std::size_t>(g)];
      grid_.shear(ax.moved, ax.driver, draw.increments[static_cast<std::size_t>(2 * g)],
                  draw.increments[static_cast<std::size_t>(2 * g + 1)]);
    }
    if (spec_.kappa > 0) {
      // Heat factors commute with each other; visit the active axis first and
      // finish on the axis the next step starts with.
      const int first_next = kShearGroups[static_cast<std::size_t>(order_.front())].moved;
      std::vector<int> axes;
      if (grid_.active_axis() >= 0) axes.push_back(grid_.active_axis());
      for (int a = spec_.dim - 1; a >= 0; --a)
        if (a != first_next && std::find(axes.begin(), axes.end(), a) == axes.end()) axes.push_back(a);
      if (std::find(axes.begin(), axes.end(), first_next) == axes.end()) axes.push_back(first_next);
      for (int a : axes) grid_.multiply_axis(a, heat_);
    }
    time_ += plan_.dt;
  }

  double time() const { return time_; }
  ShearGrid& grid() { return grid_; }
  const ModelSpec& spec() const { return spec_; }

 private:
  ModelSpec spec_;
  StepPlan plan_;
  std::vector<int> order_;
  ShearGrid grid_;
  std::vector<double> heat_;
  double time_ = 0;
};

/// Convenience: a single splitting step on a spectral field (grid round trip).
inline SpectralField splitting_step(const SpectralField& f, const ModelSpec& spec, const StepPlan& plan,
                                    const NoiseDraw& draw) {
  SplittingStepper s(f, spec, plan);
  s.step(draw);
  SpectralField out = s.grid().spectral(f.cutoff());
  out.time = f.time + plan.dt;
  return out;
}

struct StepReport {
  bool unstable = false;
};

/**
 * Euler-Maruyama on the truncated Fourier system: every coefficient is
 * updated from a frozen copy of the previous state. Neighbors outside the
 * cube read zero.
 */
class EulerMaruyamaStepper {
 public:
  EulerMaruyamaStepper(const SpectralField& f0, const ModelSpec& spec, double dt) : spec_(spec), dt_(dt), state_(f0) {
    spec.validate();
    if (!(dt > 0)) throw std::invalid_argument("EulerMaruyamaStepper: dt must be positive");
    if (f0.dim() != spec.dim) throw std::invalid_argument("EulerMaruyamaStepper: dimension mismatch");
    const std::size_t n = state_.size();
    comps_.resize(n);
    growth_.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      const ModeIndex k = state_.mode_at(i);
      comps_[i] = {k.k, k.l, k.m};
      growth_[i] = k.is_zero() ? 0.0 : 1.0 + drift_coefficient(spec, k) * dt;
    }
    const int s = state_.side();
    stride_ = spec.dim == 2 ? std::array<std::ptrdiff_t, 3>{s, 1, 0}
                            : std::array<std::ptrdiff_t, 3>{std::ptrdiff_t(s) * s, s, 1};
  }

  StepReport step(const NoiseDraw& draw) {
    if (draw.increments.size() != static_cast<std::size_t>(spec_.noise_count()))
      throw std::invalid_argument("EulerMaruyamaStepper: draw length mismatch");
    prev_ = state_.raw();
    const auto& old = prev_;
    auto& out = state_.raw();
    const int n_cut = spec_.cutoff;
    const int groups = spec_.shear_groups();
    double old_sup = 0, new_sup = 0;
    StepReport rep;
    for (std::size_t i = 0; i < old.size(); ++i) {
      if (growth_[i] == 0.0) continue;
      const auto& c = comps_[i];
      Complex acc = old[i] * growth_[i];
      for (int g = 0; g < groups; ++g) {
        const ShearAxes ax = kShearGroups[static_cast<std::size_t>(g)];
        const int ka = c[static_cast<std::size_t>(ax.moved)];
        if (ka == 0) continue;
        const int kb = c[static_cast<std::size_t>(ax.driver)];
        const std::ptrdiff_t sb = stride_[static_cast<std::size_t>(ax.driver)];
        const auto ii = static_cast<std::ptrdiff_t>(i);
        const Complex lo = kb - 1 >= -n_cut ? old[static_cast<std::size_t>(ii - sb)] : Complex{};
        const Complex hi = kb + 1 <= n_cut ? old[static_cast<std::size_t>(ii + sb)] : Complex{};
        const double w = kPi * ka;
        const double dw_sin = draw.increments[static_cast<std::size_t>(2 * g)];
        const double dw_cos = draw.increments[static_cast<std::size_t>(2 * g + 1)];
        const Complex diff = lo - hi;
        const Complex sum = lo + hi;
        acc += (w * diff) * dw_sin;
        // -i w (lo + hi), written without a complex product so that k and -k
        // stay exact conjugates.
        acc += Complex(w * sum.imag(), -w * sum.real()) * dw_cos;
      }
      out[i] = acc;
      old_sup = std::max(old_sup, std::abs(old[i]));
      new_sup = std::max(new_sup, std::abs(acc));
      if (std::abs(acc) > 10.0 * std::abs(old[i]) && std::abs(old[i]) > 1e-6 * old_sup) rep.unstable = true;
    }
    if (new_sup > 10.0 * old_sup && old_sup > 0) rep.unstable = true;
    state_.time += dt_;
    return rep;
  }

  const SpectralField& state() const { return state_; }
  SpectralField& state() { return state_; }

 private:
  ModelSpec spec_;
  double dt_;
  SpectralField state_;
  std::vector<Complex> prev_;
  std::vector<std::array<int, 3>> comps_;
  std::vector<double> growth_;
  std::array<std::ptrdiff_t, 3> stride_{};
};

inline SpectralField euler_maruyama_step(const SpectralField& f, const ModelSpec& spec, const StepPlan& plan,
                                         const NoiseDraw& draw, StepReport* report = nullptr) {
  EulerMaruyamaStepper s(f, spec, plan.dt);
  const StepReport r = s.step(draw);
  if (report) *report = r;
  return s.state();
}

/// Raised when a trajectory produces NaN or Inf.
class NumericalAbort : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct DiagnosticsSchedule {
  /// Time between diagnostic samples; 0 samples every step.
  double cadence = 0.01;
  /// Regularities s for which log |f|_{H^{-s}} is recorded.
  std::vector<double> sobolev_s;
  /// Time between snapshots handed to the sink; 0 emits only the final state.
  double snapshot_cadence = 0.0;
};

struct DiagnosticSample {
  double t = 0;
  double log_l2 = 0;
  double log_low = 0;
  std::vector<double> log_hms;
  /// Filamentation length; NaN when undefined.
  double ell = std::numeric_limits<double>::quiet_NaN();
};

struct SimulationResult {
  std::vector<DiagnosticSample> samples;
  /// Final state normalized to unit L^2 norm (truncated to the cutoff).
  SpectralField final_state;
  double final_log_scale = 0;
  std::uint64_t steps = 0;
  std::uint64_t unstable_steps = 0;

  RateSeries series(double DiagnosticSample::*member) const {
    RateSeries s;
    for (const auto& d : samples) s.push(d.t, d.*member);
    return s;
  }
  RateSeries hms_series(std::size_t index) const {
    RateSeries s;
    for (const auto& d : samples) s.push(d.t, d.log_hms.at(index));
    return s;
  }
};

/// Receives the normalized spectral state at snapshot times.
using SnapshotSink = std::function<void(const SpectralField& normalized, double t)>;

namespace integrators_detail {

inline double safe_log(double x) { return x > 0 ? std::log(x) : -std::numeric_limits<double>::infinity(); }

inline DiagnosticSample sample(const SpectralField& f, double t, double log_scale, double l2,
                               const DiagnosticsSchedule& sched) {
  DiagnosticSample d;
  d.t = t;
  d.log_l2 = safe_log(l2) + log_scale;
  d.log_low = safe_log(l2_norm(project_low_modes(f))) + log_scale;
  for (double s : sched.sobolev_s) d.log_hms.push_back(safe_log(sobolev_norm(f, -s)) + log_scale);
  if (auto ell = filamentation_length(f)) d.ell = *ell;
  return d;
}

inline void check_finite(const SpectralField& f, double t) {
  for (const auto& c : f.raw())
    if (!std::isfinite(c.real()) || !std::isfinite(c.imag()))
      throw NumericalAbort("non-finite coefficient at t = " + std::to_string(t));
}

}  // namespace integrators_detail

/**
 * Runs f0 to `horizon`, sampling diagnostics every `cadence` (and at the
 * end). The state is renormalized at every sample and the log scale carried
 * separately, so long dissipative runs do not underflow.
 */
inline SimulationResult simulate(const SpectralField& f0, const ModelSpec& spec, const StepPlan& plan, double horizon,
                                 const DiagnosticsSchedule& sched, const SnapshotSink& sink = {}) {
  using integrators_detail::sample;
  if (!(horizon >= 0)) throw std::invalid_argument("simulate: horizon must be >= 0");
  spec.validate();
  plan.validate(spec);
  if (f0.dim() != spec.dim) throw std::invalid_argument("simulate: field dimension mismatch");
  SpectralField start = f0;
  if (f0.cutoff() != spec.cutoff) {
    start = SpectralField::zeros(spec.dim, spec.cutoff);
    f0.for_each_mode([&](const ModeIndex& k, Complex c) {
      if (start.contains(k)) start.raw()[start.index(k)] = c;
    });
  }
  start.time = 0;

  const auto steps = static_cast<std::uint64_t>(std::llround(horizon / plan.dt));
  const std::uint64_t every = sched.cadence > 0 ? std::max<std::uint64_t>(1, std::llround(sched.cadence / plan.dt)) : 1;
  const std::uint64_t snap_every =
      sched.snapshot_cadence > 0 ? std::max<std::uint64_t>(1, std::llround(sched.snapshot_cadence / plan.dt)) : 0;
  BrownianPath path(plan.seed, spec.noise_count(), plan.dt, plan.substeps);

  SimulationResult res;
  double log_scale = 0;
  // The mean is a conserved quantity. For mean-free data, rounding would
  // otherwise seed a k = 0 component that outlives the decaying field.
  const bool mean_free = std::abs(start[ModeIndex{}]) <= 1e-14 * l2_norm(start);

  auto emit = [&](SpectralField f, double t, double l2, bool snapshot) {
    integrators_detail::check_finite(f, t);
    res.samples.push_back(sample(f, t, log_scale, l2, sched));
    if (snapshot || sink) {
      const double n = l2_norm(f);
      SpectralField normalized = f;
      if (n > 0) normalized *= 1.0 / n;
      normalized.time = t;
      if (snapshot && sink) sink(normalized, t);
      res.final_state = std::move(normalized);
    }
  };

  if (plan.scheme == Scheme::kSplitting) {
    SplittingStepper st(start, spec, plan);
    auto observe = [&](std::uint64_t n, bool force_snapshot) {
      const double t = static_cast<double>(n) * plan.dt;
      if (mean_free) st.grid().remove_mean();
      const double l2 = st.grid().l2_norm();
      if (!std::isfinite(l2)) throw NumericalAbort("non-finite grid norm at t = " + std::to_string(t));
      const bool snap = force_snapshot || (snap_every && n % snap_every == 0);
      emit(st.grid().spectral(spec.cutoff), t, l2, snap);
      res.final_log_scale = log_scale;
      if (l2 > 0) {
        st.grid().scale(1.0 / l2);
        log_scale += std::log(l2);
      }
    };
    observe(0, steps == 0);
    for (std::uint64_t n = 0; n < steps; ++n) {
      st.step(path.step(n));
      ++res.steps;
      if ((n + 1) % every == 0 || n + 1 == steps) observe(n + 1, n + 1 == steps);
    }
  } else {
    EulerMaruyamaStepper st(start, spec, plan.dt);
    auto observe = [&](std::uint64_t n, bool force_snapshot) {
      const double t = static_cast<double>(n) * plan.dt;
      const double l2 = l2_norm(st.state());
      const bool snap = force_snapshot || (snap_every && n % snap_every == 0);
      emit(st.state(), t, l2, snap);
      res.final_log_scale = log_scale;
      if (l2 > 0) {
        st.state() *= 1.0 / l2;
        log_scale += std::log(l2);
      }
    };
    observe(0, steps == 0);
    for (std::uint64_t n = 0; n < steps; ++n) {
      if (st.step(path.step(n)).unstable) ++res.unstable_steps;
      ++res.steps;
      if ((n + 1) % every == 0 || n + 1 == steps) observe(n + 1, n + 1 == steps);
    }
  }
  return res;
}

}  // namespace batchelor
