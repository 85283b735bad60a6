// Particle flow of the shear-noise model: exact shear sub-maps,
// Jacobians, inverse-Jacobian growth and one-point statistics.
#pragma once

#include "batchelor/models.hpp"
#include "batchelor/noise.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <ostream>
#include <stdexcept>
#include <vector>

namespace batchelor {

/**
 * One particle of the flow. Besides the raw Jacobian J, the state carries
 * G = J^{-T} in factored form G = Q * exp(log_scale) * R with Q orthogonal
 * and R upper triangular, plus the running sums of log R_ii. This keeps
 * |J^{-1}| and det J accurate when the entries of J grow exponentially.
 */
template <int Dim>
struct ParticleState {
  static_assert(Dim == 2 || Dim == 3, "particles live on T^2 or T^3");
  using Vec = Eigen::Matrix<double, Dim, 1>;
  using Mat = Eigen::Matrix<double, Dim, Dim>;

  /// Position in [0, 1)^Dim.
  Vec position = Vec::Zero();
  /// Displacement on the universal cover.
  Vec displacement = Vec::Zero();
  Mat jacobian = Mat::Identity();

  Mat q = Mat::Identity();
  Mat r = Mat::Identity();
  double log_scale = 0;
  Vec log_diag = Vec::Zero();

  static ParticleState at(const Vec& x) {
    ParticleState p;
    p.position = x.unaryExpr([](double v) { return v - std::floor(v); });
    return p;
  }

  /// log |J^{-1}|, the operator norm.
  double log_inv_jacobian_norm() const {
    Eigen::JacobiSVD<Mat> svd(r);
    return log_scale + std::log(svd.singularValues()(0));
  }
  /// log det J from the factored inverse-transpose.
  double log_det_jacobian() const { return -log_diag.sum(); }
};

namespace lagrangian_detail {

inline double wrap01(double v) { return v - std::floor(v); }

// Q R with positive diagonal.
template <int Dim>
void qr_positive(const Eigen::Matrix<double, Dim, Dim>& m, Eigen::Matrix<double, Dim, Dim>& q,
                 Eigen::Matrix<double, Dim, Dim>& r) {
  Eigen::HouseholderQR<Eigen::Matrix<double, Dim, Dim>> qr(m);
  q = qr.householderQ();
  r = qr.matrixQR().template triangularView<Eigen::Upper>();
  for (int i = 0; i < Dim; ++i) {
    if (r(i, i) < 0) {
      r.row(i) *= -1.0;
      q.col(i) *= -1.0;
    }
  }
}

}  // namespace lagrangian_detail

/**
 * Applies the shear groups in the splitting order: for group g with moved
 * axis a and driver b, x_a += dW_sin sin(2 pi x_b) + dW_cos cos(2 pi x_b).
 */
template <int Dim>
void particle_step(ParticleState<Dim>& p, const NoiseDraw& draw, const std::vector<int>& order = {}) {
  using Mat = typename ParticleState<Dim>::Mat;
  const int groups = Dim == 2 ? 2 : 6;
  if (draw.increments.size() != static_cast<std::size_t>(2 * groups))
    throw std::invalid_argument("particle_step: draw length mismatch");
  Mat step_inv_t = Mat::Identity();
  for (int n = 0; n < groups; ++n) {
    const int g = order.empty() ? n : order[static_cast<std::size_t>(n)];
    const ShearAxes ax = kShearGroups[static_cast<std::size_t>(g)];
    const double ws = draw.increments[static_cast<std::size_t>(2 * g)];
    const double wc = draw.increments[static_cast<std::size_t>(2 * g + 1)];
    if (ws == 0.0 && wc == 0.0) continue;
    const double th = 2.0 * kPi * p.position(ax.driver);
    const double s = std::sin(th), c = std::cos(th);
    const double shift = ws * s + wc * c;
    const double slope = 2.0 * kPi * (ws * c - wc * s);
    p.position(ax.moved) = lagrangian_detail::wrap01(p.position(ax.moved) + shift);
    p.displacement(ax.moved) += shift;
    // Sub-map Jacobian I + slope e_a e_b^T; its inverse transpose is I - slope e_b e_a^T.
    p.jacobian.row(ax.moved) += slope * p.jacobian.row(ax.driver);
    step_inv_t.row(ax.driver) -= slope * step_inv_t.row(ax.moved);
  }
  Mat q, r;
  lagrangian_detail::qr_positive<Dim>(step_inv_t * p.q, q, r);
  p.q = q;
  p.r = r * p.r;
  for (int i = 0; i < Dim; ++i) p.log_diag(i) += std::log(r(i, i));
  const double m = p.r.cwiseAbs().maxCoeff();
  if (m > 1e100 || m < 1e-100) {
    p.r /= m;
    p.log_scale += std::log(m);
  }
}

struct LyapunovEstimate {
  /// Ensemble max of (1/T) log |J^{-1}|.
  double lambda = 0;
  /// Ensemble mean of the same quantity and its standard error.
  double mean = 0;
  double std_error = 0;
  double horizon = 0;
  std::size_t ensemble = 0;
  /// Largest |log det J| seen over the ensemble.
  double max_abs_log_det = 0;
};

struct LagrangianOptions {
  int dim = 2;
  std::size_t particles = 1000;
  double horizon = 50;
  double dt = 1e-3;
  std::uint64_t seed = 7;
  /// Every `trace_stride` steps the first particle is reported to the trace callback; 0 disables.
  std::uint64_t trace_stride = 0;
};

struct TracePoint {
  double t;
  std::vector<double> position;
  double log_inv_jac_norm;
};

namespace lagrangian_detail {

template <int Dim>
ParticleState<Dim> uniform_particle(std::uint64_t seed, std::size_t i) {
  typename ParticleState<Dim>::Vec x;
  for (int a = 0; a < Dim; ++a)
    x(a) = counter_uniform(seed ^ 0x5DEECE66DULL, static_cast<std::uint64_t>(i), static_cast<std::uint64_t>(a));
  return ParticleState<Dim>::at(x);
}

template <int Dim>
LyapunovEstimate lyapunov_impl(const LagrangianOptions& o, std::vector<TracePoint>* trace) {
  std::vector<ParticleState<Dim>> ps;
  ps.reserve(o.particles);
  for (std::size_t i = 0; i < o.particles; ++i) ps.push_back(uniform_particle<Dim>(o.seed, i));
  const BrownianPath env(o.seed, Dim == 2 ? 4 : 12, o.dt);
  const auto steps = static_cast<std::uint64_t>(std::llround(o.horizon / o.dt));
  auto record = [&](std::uint64_t n) {
    if (!trace || ps.empty()) return;
    const auto& p = ps.front();
    trace->push_back({static_cast<double>(n) * o.dt, {p.position.data(), p.position.data() + Dim},
                      p.log_inv_jacobian_norm()});
  };
  if (o.trace_stride) record(0);
  for (std::uint64_t n = 0; n < steps; ++n) {
    const NoiseDraw d = env.step(n);
    for (auto& p : ps) particle_step<Dim>(p, d);
    if (o.trace_stride && (n + 1) % o.trace_stride == 0) record(n + 1);
  }
  LyapunovEstimate est;
  est.horizon = static_cast<double>(steps) * o.dt;
  est.ensemble = ps.size();
  if (ps.empty() || steps == 0) return est;
  double sum = 0, sum2 = 0;
  est.lambda = -std::numeric_limits<double>::infinity();
  for (const auto& p : ps) {
    const double l = p.log_inv_jacobian_norm() / est.horizon;
    est.lambda = std::max(est.lambda, l);
    sum += l;
    sum2 += l * l;
    est.max_abs_log_det = std::max(est.max_abs_log_det, std::abs(p.log_det_jacobian()));
  }
  const double n = static_cast<double>(ps.size());
  est.mean = sum / n;
  est.std_error = n > 1 ? std::sqrt(std::max(0.0, (sum2 - sum * sum / n) / (n - 1)) / n) : 0.0;
  return est;
}

}  // namespace lagrangian_detail

/// Particles seeded uniformly, all driven by one environment (one Brownian path).
inline LyapunovEstimate lyapunov_estimate(const LagrangianOptions& o, std::vector<TracePoint>* trace = nullptr) {
  if (!(o.horizon > 0) || !(o.dt > 0)) throw std::invalid_argument("lyapunov_estimate: T and dt must be positive");
  if (o.dim == 2) return lagrangian_detail::lyapunov_impl<2>(o, trace);
  if (o.dim == 3) return lagrangian_detail::lyapunov_impl<3>(o, trace);
  throw std::invalid_argument("lyapunov_estimate: dimension must be 2 or 3");
}

struct OnePointStats {
  std::size_t particles = 0;
  double t = 0;
  /// Per-coordinate displacement variance and its standard error.
  std::vector<double> variance;
  std::vector<double> variance_std_error;
  /// Largest |correlation| between two coordinates.
  double max_abs_correlation = 0;
};

/**
 * Displacements of particles that each see their own environment, so the
 * samples are independent.
 */
template <int Dim>
OnePointStats one_point_statistics(std::size_t particles, double horizon, double dt, std::uint64_t seed) {
  if (particles < 2) throw std::invalid_argument("one_point_statistics: need at least 2 particles");
  const auto steps = static_cast<std::uint64_t>(std::llround(horizon / dt));
  const int nc = Dim == 2 ? 4 : 12;
  std::vector<Eigen::Matrix<double, Dim, 1>> disp(particles);
  for (std::size_t i = 0; i < particles; ++i) {
    auto p = lagrangian_detail::uniform_particle<Dim>(seed, i);
    const BrownianPath env(noise_detail::splitmix64(seed + 0x9E37ULL * (i + 1)), nc, dt);
    for (std::uint64_t n = 0; n < steps; ++n) particle_step<Dim>(p, env.step(n));
    disp[i] = p.displacement;
  }
  OnePointStats st;
  st.particles = particles;
  st.t = static_cast<double>(steps) * dt;
  const double n = static_cast<double>(particles);
  Eigen::Matrix<double, Dim, 1> mean = Eigen::Matrix<double, Dim, 1>::Zero();
  for (const auto& d : disp) mean += d;
  mean /= n;
  Eigen::Matrix<double, Dim, Dim> cov = Eigen::Matrix<double, Dim, Dim>::Zero();
  Eigen::Matrix<double, Dim, 1> m4 = Eigen::Matrix<double, Dim, 1>::Zero();
  for (const auto& d : disp) {
    const auto c = (d - mean).eval();
    cov += c * c.transpose();
    m4 += c.array().pow(4).matrix();
  }
  cov /= (n - 1);
  m4 /= n;
  for (int a = 0; a < Dim; ++a) {
    st.variance.push_back(cov(a, a));
    st.variance_std_error.push_back(std::sqrt(std::max(0.0, m4(a) - cov(a, a) * cov(a, a)) / n));
    for (int b = a + 1; b < Dim; ++b)
      st.max_abs_correlation = std::max(st.max_abs_correlation, std::abs(cov(a, b) / std::sqrt(cov(a, a) * cov(b, b))));
  }
  return st;
}

inline void write_trajectory_csv(std::ostream& os, const std::vector<TracePoint>& trace, int dim) {
  os << (dim == 2 ? "t,x,y,log_inv_jac_norm\n" : "t,x,y,z,log_inv_jac_norm\n");
  os.precision(17);
  for (const auto& p : trace) {
    os << p.t;
    for (double v : p.position) os << ',' << v;
    os << ',' << p.log_inv_jac_norm << '\n';
  }
}

}  // namespace batchelor
