// The 4-mode (2D) and 12-mode (3D) shear-noise models: drift and
// coupling coefficients of the Fourier system, and the low-mode
// reduction X, Y, A(Y).
#pragma once

#include "batchelor/spectral.hpp"

#include <Eigen/Dense>

#include <array>
#include <numbers>
#include <stdexcept>
#include <utility>
#include <vector>

namespace batchelor {

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kTwoPiSq = 4.0 * kPi * kPi;

struct ModelSpec {
  int dim = 2;
  double kappa = 0.0;
  int cutoff = 8;

  int noise_count() const { return dim == 2 ? 4 : 12; }
  /// Number of shear groups; each group is a sin/cos pair along one axis.
  int shear_groups() const { return noise_count() / 2; }
  /// Rate gamma of the inner-mode drift: (2 pi)^2 (1/2 + kappa) in 2D, (2 pi)^2 (1 + kappa) in 3D.
  double inner_rate() const { return kTwoPiSq * ((dim == 2 ? 0.5 : 1.0) + kappa); }

  void validate() const {
    if (dim != 2 && dim != 3) throw std::invalid_argument("ModelSpec: dimension must be 2 or 3");
    if (!(kappa >= 0.0)) throw std::invalid_argument("ModelSpec: kappa must be >= 0");
    if (cutoff < 1) throw std::invalid_argument("ModelSpec: cutoff must be >= 1");
  }
};

/// Shear group g moves coordinate `moved` by sin/cos of 2 pi x_{driver}.
struct ShearAxes {
  int moved;
  int driver;
};

/// Group order (sigma_1,sigma_2), (sigma_3,sigma_4), ... ; in 2D only the first two apply.
inline constexpr std::array<ShearAxes, 6> kShearGroups{{{0, 1}, {1, 0}, {0, 2}, {2, 0}, {1, 2}, {2, 1}}};

inline ShearAxes shear_axes(int noise) {
  if (noise < 1 || noise > 12) throw std::out_of_range("noise index must be in 1..12");
  return kShearGroups[static_cast<std::size_t>((noise - 1) / 2)];
}

inline ModeIndex unit(int axis, int sign = 1) {
  ModeIndex e;
  if (axis == 0) e.k = sign;
  else if (axis == 1) e.l = sign;
  else e.m = sign;
  return e;
}

inline ModeIndex operator+(ModeIndex a, const ModeIndex& b) { return {a.k + b.k, a.l + b.l, a.m + b.m}; }

/// Drift prefactor of mode k: -(2 pi)^2 (1/2 + kappa) |k|^2 in 2D, -(2 pi)^2 (1 + kappa) |k|^2 in 3D.
inline double drift_coefficient(const ModelSpec& spec, const ModeIndex& k) {
  if (k.is_zero()) throw std::invalid_argument("drift_coefficient: zero mode");
  return -spec.inner_rate() * static_cast<double>(k.norm2());
}

struct StencilTerm {
  ModeIndex neighbor;
  Complex weight;
};

/**
 * Coefficients multiplying dW^i in d fhat_k. Odd i (sine shears) couple
 * pi k_a (fhat_{k-e_b} - fhat_{k+e_b}); even i (cosine shears) couple
 * -i pi k_a (fhat_{k-e_b} + fhat_{k+e_b}), where a is the moved axis and b the
 * driving axis of the group. Neighbors outside a lattice read as zero in the
 * integrator; they are still listed here.
 */
inline std::vector<StencilTerm> coupling_stencil(const ModelSpec& spec, const ModeIndex& k, int noise) {
  if (noise < 1 || noise > spec.noise_count()) throw std::out_of_range("coupling_stencil: noise index");
  const ShearAxes ax = shear_axes(noise);
  const int ka = k.component(ax.moved);
  if (ka == 0) return {};
  const ModeIndex lo = k + unit(ax.driver, -1);
  const ModeIndex hi = k + unit(ax.driver, +1);
  const double w = kPi * ka;
  if (noise % 2 == 1) return {{lo, Complex{w, 0.0}}, {hi, Complex{-w, 0.0}}};
  return {{lo, Complex{0.0, -w}}, {hi, Complex{0.0, -w}}};
}

using LowModeVector = Eigen::VectorXd;
using NeighborVector = Eigen::VectorXd;
using NoiseMatrix = Eigen::MatrixXd;

/// Inner modes in X order: (1,0), (0,1) in 2D; (1,0,0), (0,1,0), (0,0,1) in 3D.
inline std::vector<ModeIndex> inner_modes(int dim) {
  if (dim == 2) return {{1, 0, 0}, {0, 1, 0}};
  return {{1, 0, 0}, {0, 1, 0}, {0, 0, 1}};
}

/// Pairs (p, q) with Y_{2j+1} + i Y_{2j+2} = fhat_p + fhat_q and
/// Y_{2j+3} + i Y_{2j+4} = fhat_p - fhat_q.
inline std::vector<std::pair<ModeIndex, ModeIndex>> neighbor_pairs(int dim) {
  if (dim == 2) return {{{1, -1, 0}, {1, 1, 0}}};
  return {{{1, -1, 0}, {1, 1, 0}}, {{1, 0, -1}, {1, 0, 1}}, {{0, 1, -1}, {0, 1, 1}}};
}

struct LowModeState {
  LowModeVector x;
  NeighborVector y;
};

inline LowModeState extract_XY(const SpectralField& f) {
  LowModeState s;
  const auto inner = inner_modes(f.dim());
  s.x.resize(static_cast<Eigen::Index>(2 * inner.size()));
  for (std::size_t j = 0; j < inner.size(); ++j) {
    const Complex c = f[inner[j]];
    s.x(static_cast<Eigen::Index>(2 * j)) = c.real();
    s.x(static_cast<Eigen::Index>(2 * j + 1)) = c.imag();
  }
  const auto pairs = neighbor_pairs(f.dim());
  s.y.resize(static_cast<Eigen::Index>(4 * pairs.size()));
  for (std::size_t j = 0; j < pairs.size(); ++j) {
    const Complex p = f[pairs[j].first];
    const Complex q = f[pairs[j].second];
    const auto o = static_cast<Eigen::Index>(4 * j);
    s.y(o) = (p + q).real();
    s.y(o + 1) = (p + q).imag();
    s.y(o + 2) = (p - q).real();
    s.y(o + 3) = (p - q).imag();
  }
  return s;
}

/// The matrix A with dX = -gamma X dt + pi A dW, entries placed as in the
/// 4x4 (2D) and 6x12 (3D) noise matrices of the low-mode reduction.
inline NoiseMatrix build_noise_matrix(const NeighborVector& y) {
  auto Y = [&](int i) { return y(i - 1); };
  if (y.size() == 4) {
    NoiseMatrix a = NoiseMatrix::Zero(4, 4);
    a(0, 0) = Y(3), a(0, 1) = Y(2);
    a(1, 0) = Y(4), a(1, 1) = -Y(1);
    a(2, 2) = Y(3), a(2, 3) = -Y(4);
    a(3, 2) = -Y(2), a(3, 3) = -Y(1);
    return a;
  }
  if (y.size() == 12) {
    NoiseMatrix a = NoiseMatrix::Zero(6, 12);
    a(0, 0) = Y(3), a(0, 1) = Y(2), a(0, 4) = Y(7), a(0, 5) = Y(6);
    a(1, 0) = Y(4), a(1, 1) = -Y(1), a(1, 4) = Y(8), a(1, 5) = -Y(5);
    a(2, 2) = Y(3), a(2, 3) = -Y(4), a(2, 8) = Y(11), a(2, 9) = Y(10);
    a(3, 2) = -Y(2), a(3, 3) = -Y(1), a(3, 8) = Y(12), a(3, 9) = -Y(9);
    a(4, 6) = Y(7), a(4, 7) = -Y(8), a(4, 10) = Y(11), a(4, 11) = -Y(12);
    a(5, 6) = -Y(6), a(5, 7) = -Y(5), a(5, 10) = -Y(10), a(5, 11) = -Y(9);
    return a;
  }
  throw std::invalid_argument("build_noise_matrix: Y must have length 4 or 12");
}

}  // namespace batchelor
