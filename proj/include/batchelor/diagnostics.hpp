// Observables of simulated trajectories: decay-rate estimators,
// filamentation length, shell spectra and the diffusive-scale fit.
#pragma once

#include "batchelor/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <set>
#include <stdexcept>
#include <utility>
#include <vector>

namespace batchelor {

/// Time-stamped samples of a log-norm. Non-finite values (log 0) are kept but
/// ignored by the estimators.
struct RateSeries {
  std::vector<double> t;
  std::vector<double> value;
  /// Sliding-window width for the limsup proxy; 0 selects span / 10.
  double window = 0.0;

  void push(double time, double v) {
    if (!t.empty() && !(time > t.back())) throw std::invalid_argument("RateSeries: times must increase strictly");
    t.push_back(time);
    value.push_back(v);
  }
  std::size_t size() const { return t.size(); }
};

enum class RateMode { kLimsupProxy, kGlobalSlope };

struct RateEstimate {
  double rate = 0.0;
  double std_error = 0.0;
  std::size_t samples = 0;
};

namespace diag_detail {

struct Moments {
  double n = 0, st = 0, sv = 0, stt = 0, stv = 0, svv = 0;

  void add(double t, double v) {
    n += 1, st += t, sv += v, stt += t * t, stv += t * v, svv += v * v;
  }
  Moments operator-(const Moments& o) const {
    return {n - o.n, st - o.st, sv - o.sv, stt - o.stt, stv - o.stv, svv - o.svv};
  }
};

// Least-squares slope with its standard error, on centered data for accuracy.
inline std::optional<RateEstimate> fit(const std::vector<double>& t, const std::vector<double>& v) {
  const std::size_t n = t.size();
  if (n < 2) return std::nullopt;
  double tm = 0, vm = 0;
  for (std::size_t i = 0; i < n; ++i) tm += t[i], vm += v[i];
  tm /= static_cast<double>(n);
  vm /= static_cast<double>(n);
  double sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    sxx += (t[i] - tm) * (t[i] - tm);
    sxy += (t[i] - tm) * (v[i] - vm);
  }
  if (sxx <= 0) return std::nullopt;
  RateEstimate r;
  r.rate = sxy / sxx;
  r.samples = n;
  if (n > 2) {
    double ssr = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const double e = v[i] - vm - r.rate * (t[i] - tm);
      ssr += e * e;
    }
    r.std_error = std::sqrt(ssr / static_cast<double>(n - 2) / sxx);
  }
  return r;
}

inline std::pair<std::vector<double>, std::vector<double>> finite_part(const RateSeries& s) {
  std::pair<std::vector<double>, std::vector<double>> out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (std::isfinite(s.value[i])) {
      out.first.push_back(s.t[i]);
      out.second.push_back(s.value[i]);
    }
  }
  return out;
}

}  // namespace diag_detail

/**
 * Exponential rate of a log-norm series.
 *
 * kGlobalSlope fits a line to the tail half of the time span. kLimsupProxy
 * takes the largest least-squares slope over all windows of the configured
 * width that fit inside the data. Returns nullopt for insufficient data.
 */
inline std::optional<RateEstimate> decay_rate(const RateSeries& series, RateMode mode) {
  const auto [t, v] = diag_detail::finite_part(series);
  if (t.size() < 2) return std::nullopt;
  const double span = t.back() - t.front();
  const double window = series.window > 0 ? series.window : span / 10.0;
  if (span <= 0 || span < window * (1.0 - 1e-12)) return std::nullopt;

  if (mode == RateMode::kGlobalSlope) {
    const double cut = t.front() + 0.5 * span;
    std::vector<double> tt, vv;
    for (std::size_t i = 0; i < t.size(); ++i) {
      if (t[i] >= cut - 1e-12 * span) tt.push_back(t[i]), vv.push_back(v[i]);
    }
    return diag_detail::fit(tt, vv);
  }

  // Prefix moments, relative to the first sample to limit cancellation.
  const double t0 = t.front(), v0 = v.front();
  std::vector<diag_detail::Moments> pre(t.size() + 1);
  for (std::size_t i = 0; i < t.size(); ++i) {
    pre[i + 1] = pre[i];
    pre[i + 1].add(t[i] - t0, v[i] - v0);
  }
  // Scan with prefix sums, then refit the winning window on centered data so
  // that affine input comes out exact.
  double best_slope = -std::numeric_limits<double>::infinity();
  std::size_t best_lo = 0, best_hi = 0;
  std::size_t end = 0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    const double stop = t[i] + window;
    if (stop > t.back() + 1e-12 * span) break;
    end = std::max(end, i + 1);
    while (end < t.size() && t[end] <= stop + 1e-12 * span) ++end;
    const auto mo = pre[end] - pre[i];
    if (mo.n < 2) continue;
    const double sxx = mo.stt - mo.st * mo.st / mo.n;
    if (sxx <= 0) continue;
    const double slope = (mo.stv - mo.st * mo.sv / mo.n) / sxx;
    if (slope > best_slope) best_slope = slope, best_lo = i, best_hi = end;
  }
  if (best_hi == 0) return std::nullopt;
  const auto lo = static_cast<std::ptrdiff_t>(best_lo), hi = static_cast<std::ptrdiff_t>(best_hi);
  return diag_detail::fit(std::vector<double>(t.begin() + lo, t.begin() + hi),
                          std::vector<double>(v.begin() + lo, v.begin() + hi));
}

/// l(f) = |f|_{L^2} / |grad f|_{L^2}; nullopt for the zero field.
inline std::optional<double> filamentation_length(const SpectralField& f) {
  const double h1 = sobolev_norm(f, 1.0);
  if (h1 == 0.0) return std::nullopt;
  return sobolev_norm(f, 0.0) / (2.0 * std::numbers::pi * h1);
}

/// Shell-summed |fhat_k|^2, binned by round(|k|).
struct SpectrumProfile {
  std::vector<double> power;

  double total() const {
    double s = 0;
    for (double p : power) s += p;
    return s;
  }
};

inline SpectrumProfile power_spectrum(const SpectralField& f) {
  SpectrumProfile p;
  f.for_each_mode([&](const ModeIndex& k, Complex c) {
    const auto r = static_cast<std::size_t>(std::lround(k.norm()));
    if (p.power.size() <= r) p.power.resize(r + 1, 0.0);
    p.power[r] += std::norm(c);
  });
  return p;
}

/// Smallest shell radius r whose cumulative power reaches fraction q of the total.
inline double spectrum_radius(const SpectrumProfile& profile, double q) {
  const double total = profile.total();
  if (total <= 0) throw std::domain_error("spectrum_radius: zero spectrum");
  double acc = 0;
  for (std::size_t r = 0; r < profile.power.size(); ++r) {
    acc += profile.power[r];
    if (acc >= q * total * (1.0 - 1e-14)) return static_cast<double>(r);
  }
  return static_cast<double>(profile.power.size() - 1);
}

struct BatchelorFit {
  std::optional<double> exponent;
  std::optional<double> prefactor;
  double exponent_stderr = 0.0;
  std::size_t distinct_kappa = 0;
  bool degenerate = true;
};

/// Least-squares fit log l = log C + p log kappa over (kappa, mean l) pairs.
inline BatchelorFit batchelor_fit(const std::vector<std::pair<double, double>>& pairs) {
  BatchelorFit out;
  std::set<double> kappas;
  std::vector<double> x, y;
  for (const auto& [kappa, ell] : pairs) {
    if (!(kappa > 0) || !(ell > 0)) throw std::invalid_argument("batchelor_fit: kappa and length must be positive");
    kappas.insert(kappa);
    x.push_back(std::log(kappa));
    y.push_back(std::log(ell));
  }
  out.distinct_kappa = kappas.size();
  out.degenerate = kappas.size() < 3;
  if (kappas.size() < 2) return out;
  const auto r = diag_detail::fit(x, y);
  if (!r) return out;
  out.exponent = r->rate;
  out.exponent_stderr = r->std_error;
  double xm = 0, ym = 0;
  for (std::size_t i = 0; i < x.size(); ++i) xm += x[i], ym += y[i];
  xm /= static_cast<double>(x.size());
  ym /= static_cast<double>(y.size());
  out.prefactor = std::exp(ym - r->rate * xm);
  return out;
}

/// Least-squares slope over the finite samples with t in [t0, t1].
inline std::optional<RateEstimate> slope_between(const RateSeries& series, double t0, double t1) {
  if (!(t1 > t0)) throw std::invalid_argument("slope_between: empty time range");
  const auto [t, v] = diag_detail::finite_part(series);
  const double eps = 1e-12 * std::max(1.0, std::abs(t1));
  std::vector<double> tt, vv;
  for (std::size_t i = 0; i < t.size(); ++i)
    if (t[i] >= t0 - eps && t[i] <= t1 + eps) tt.push_back(t[i]), vv.push_back(v[i]);
  return diag_detail::fit(tt, vv);
}

/**
 * Mixing-rate estimate: minus the global slope of log |f_t|_{H^{-s}}. With a
 * fit window the slope is taken over [window.first, window.second] instead,
 * which keeps a truncated run from fitting its grid-scale plateau.
 */
inline std::optional<RateEstimate> gamma_s_estimate(const RateSeries& log_hms, double s,
                                                    std::optional<std::pair<double, double>> window = {}) {
  if (!(s > 0)) throw std::invalid_argument("gamma_s_estimate: s must be positive");
  auto r = window ? slope_between(log_hms, window->first, window->second) : decay_rate(log_hms, RateMode::kGlobalSlope);
  if (r) r->rate = -r->rate;
  return r;
}

/// Mean of the finite samples with t >= from.
inline std::optional<double> time_average(const std::vector<double>& t, const std::vector<double>& v, double from) {
  double acc = 0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (t[i] >= from && std::isfinite(v[i])) acc += v[i], ++n;
  }
  if (n == 0) return std::nullopt;
  return acc / static_cast<double>(n);
}

}  // namespace batchelor
