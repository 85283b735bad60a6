// Truncated Fourier representation of mean-free real scalar fields on
// the torus T^d (d = 2, 3), with Sobolev norms, projections and the
// physical <-> spectral transforms.
//
// Coefficients follow the analytic convention
//   f(x) = sum_k fhat_k exp(2 pi i k.x),   fhat_k = int f(x) exp(-2 pi i k.x) dx,
// so grid transforms carry the 1/M^d factor on the forward side.
#pragma once

#include "batchelor/fft.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <functional>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace batchelor {

/// Integer wavenumber. In 2D the third component is always 0.
struct ModeIndex {
  int k = 0;
  int l = 0;
  int m = 0;

  constexpr ModeIndex operator-() const { return {-k, -l, -m}; }
  constexpr bool is_zero() const { return k == 0 && l == 0 && m == 0; }
  constexpr long norm2() const { return long(k) * k + long(l) * l + long(m) * m; }
  double norm() const { return std::sqrt(static_cast<double>(norm2())); }
  constexpr int component(int axis) const { return axis == 0 ? k : (axis == 1 ? l : m); }
  constexpr int max_abs() const {
    const int a = k < 0 ? -k : k, b = l < 0 ? -l : l, c = m < 0 ? -m : m;
    return std::max(a, std::max(b, c));
  }
  /// Representative of the pair {k, -k}: first nonzero component positive.
  constexpr bool is_canonical() const { return k > 0 || (k == 0 && (l > 0 || (l == 0 && m > 0))); }

  friend constexpr bool operator==(const ModeIndex&, const ModeIndex&) = default;
};

inline std::ostream& operator<<(std::ostream& os, const ModeIndex& k) {
  return os << '(' << k.k << ',' << k.l << ',' << k.m << ')';
}

/// Spectral coefficients on the cube [-N, N]^d minus the origin. Both k and -k
/// are stored; every mutator keeps them conjugate.
class SpectralField {
 public:
  SpectralField() = default;

  static SpectralField zeros(int dim, int cutoff) {
    if (dim != 2 && dim != 3) throw std::invalid_argument("SpectralField: dimension must be 2 or 3");
    if (cutoff < 1) throw std::invalid_argument("SpectralField: cutoff must be >= 1");
    SpectralField f;
    f.dim_ = dim;
    f.cutoff_ = cutoff;
    f.side_ = 2 * cutoff + 1;
    std::size_t n = 1;
    for (int a = 0; a < dim; ++a) n *= static_cast<std::size_t>(f.side_);
    f.coeffs_.assign(n, Complex{});
    return f;
  }

  /// Builds a field from values on canonical representatives; the mirror
  /// half follows by conjugation and the zero mode is dropped.
  static SpectralField from_half(int dim, int cutoff, const std::function<Complex(const ModeIndex&)>& assign) {
    SpectralField f = zeros(dim, cutoff);
    f.for_each_canonical([&](const ModeIndex& k) {
      const Complex v = assign(k);
      if (!std::isfinite(v.real()) || !std::isfinite(v.imag()))
        throw std::invalid_argument("SpectralField: non-finite coefficient");
      f.set(k, v);
    });
    return f;
  }

  int dim() const { return dim_; }
  int cutoff() const { return cutoff_; }
  int side() const { return side_; }
  std::size_t size() const { return coeffs_.size(); }
  bool empty() const { return coeffs_.empty(); }

  double time = 0.0;

  bool contains(const ModeIndex& k) const {
    if (dim_ == 2 && k.m != 0) return false;
    return k.max_abs() <= cutoff_;
  }

  std::size_t index(const ModeIndex& k) const {
    const auto s = static_cast<std::size_t>(side_);
    std::size_t i = static_cast<std::size_t>(k.k + cutoff_) * s + static_cast<std::size_t>(k.l + cutoff_);
    if (dim_ == 3) i = i * s + static_cast<std::size_t>(k.m + cutoff_);
    return i;
  }

  ModeIndex mode_at(std::size_t i) const {
    const auto s = static_cast<std::size_t>(side_);
    ModeIndex k;
    if (dim_ == 3) {
      k.m = static_cast<int>(i % s) - cutoff_;
      i /= s;
    }
    k.l = static_cast<int>(i % s) - cutoff_;
    k.k = static_cast<int>(i / s) - cutoff_;
    return k;
  }

  /// Coefficient at k; modes outside the cube read as zero.
  Complex operator[](const ModeIndex& k) const { return contains(k) ? coeffs_[index(k)] : Complex{}; }

  /// Sets fhat_k and fhat_{-k} = conj(v). The zero mode is pinned to 0.
  void set(const ModeIndex& k, Complex v) {
    if (!contains(k)) throw std::out_of_range("SpectralField::set: mode outside lattice");
    if (k.is_zero()) return;
    coeffs_[index(k)] = v;
    coeffs_[index(-k)] = std::conj(v);
  }

  std::vector<Complex>& raw() { return coeffs_; }
  const std::vector<Complex>& raw() const { return coeffs_; }

  template <class F>
  void for_each_mode(F&& fn) const {
    for (std::size_t i = 0; i < coeffs_.size(); ++i) {
      const ModeIndex k = mode_at(i);
      if (!k.is_zero()) fn(k, coeffs_[i]);
    }
  }

  template <class F>
  void for_each_canonical(F&& fn) const {
    for (std::size_t i = 0; i < coeffs_.size(); ++i) {
      const ModeIndex k = mode_at(i);
      if (k.is_canonical()) fn(k);
    }
  }

  /// Throws std::domain_error on broken symmetry, nonzero mean or non-finite data.
  void validate(double symmetry_tol = 1e-12) const {
    if (coeffs_.empty()) throw std::domain_error("SpectralField: empty");
    if (coeffs_[index(ModeIndex{})] != Complex{}) throw std::domain_error("SpectralField: nonzero mean");
    for (std::size_t i = 0; i < coeffs_.size(); ++i) {
      const Complex v = coeffs_[i];
      if (!std::isfinite(v.real()) || !std::isfinite(v.imag())) throw std::domain_error("SpectralField: non-finite");
      const Complex w = std::conj(coeffs_[index(-mode_at(i))]);
      if (std::abs(v - w) > symmetry_tol) throw std::domain_error("SpectralField: Hermitian symmetry violated");
    }
  }

  SpectralField& operator*=(double a) {
    for (auto& c : coeffs_) c *= a;
    return *this;
  }

 private:
  int dim_ = 0;
  int cutoff_ = 0;
  int side_ = 0;
  std::vector<Complex> coeffs_;
};

/// ( sum_{k != 0} |fhat_k|^2 |k|^{2s} )^{1/2}
inline double sobolev_norm(const SpectralField& f, double s) {
  double acc = 0.0;
  f.for_each_mode([&](const ModeIndex& k, Complex c) {
    const double w = s == 0.0 ? 1.0 : std::pow(static_cast<double>(k.norm2()), s);
    acc += std::norm(c) * w;
  });
  return std::sqrt(acc);
}

inline double l2_norm(const SpectralField& f) { return sobolev_norm(f, 0.0); }

/// Keeps the modes with |k|^2 = 1 only.
inline SpectralField project_low_modes(const SpectralField& f) {
  SpectralField out = SpectralField::zeros(f.dim(), f.cutoff());
  out.time = f.time;
  f.for_each_mode([&](const ModeIndex& k, Complex c) {
    if (k.norm2() == 1) out.raw()[out.index(k)] = c;
  });
  return out;
}

/// Keeps the modes with |k| <= radius.
inline SpectralField project_ball(const SpectralField& f, double radius) {
  SpectralField out = SpectralField::zeros(f.dim(), f.cutoff());
  out.time = f.time;
  const double r2 = radius * radius;
  f.for_each_mode([&](const ModeIndex& k, Complex c) {
    if (static_cast<double>(k.norm2()) <= r2) out.raw()[out.index(k)] = c;
  });
  return out;
}

inline SpectralField operator-(const SpectralField& a, const SpectralField& b) {
  if (a.dim() != b.dim() || a.cutoff() != b.cutoff()) throw std::invalid_argument("SpectralField: shape mismatch");
  SpectralField out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out.raw()[i] -= b.raw()[i];
  return out;
}

/// Real samples on the uniform grid x_j = j / M along every axis (row-major,
/// axis 0 slowest).
struct GridField {
  int dim = 2;
  std::size_t side = 0;
  AlignedVector<double> samples;

  std::size_t size() const { return samples.size(); }
  std::size_t index(std::size_t i0, std::size_t i1, std::size_t i2 = 0) const {
    return dim == 2 ? i0 * side + i1 : (i0 * side + i1) * side + i2;
  }
  /// Mean of the squared samples, i.e. the L^2(T^d) norm squared by quadrature.
  double mean_square() const {
    double acc = 0.0;
    for (double v : samples) acc += v * v;
    return acc / static_cast<double>(samples.size());
  }
};

namespace spectral_detail {

inline std::size_t wrap(int k, std::size_t m) {
  const long mm = static_cast<long>(m);
  long r = k % mm;
  if (r < 0) r += mm;
  return static_cast<std::size_t>(r);
}

inline std::size_t cube(std::size_t m, int dim) { return fft_detail::ipow(m, dim); }

}  // namespace spectral_detail

/**
 * Samples the trigonometric polynomial of f on an M^d grid. M < 2N+1 folds
 * modes onto each other and is refused unless `allow_aliasing` is set.
 */
inline GridField to_physical(const SpectralField& f, std::size_t m, bool allow_aliasing = false) {
  using spectral_detail::wrap;
  if (m < 2) throw std::invalid_argument("to_physical: grid size must be >= 2");
  if (m < static_cast<std::size_t>(2 * f.cutoff() + 1) && !allow_aliasing)
    throw std::invalid_argument("to_physical: grid size below 2N+1 aliases; pass allow_aliasing");
  const int d = f.dim();
  const std::size_t h = m / 2 + 1;
  const std::size_t nhalf = spectral_detail::cube(m, d) / m * h;
  AlignedVector<Complex> half(nhalf, Complex{});
  // Accumulate every stored mode whose wrapped last index lands in the
  // non-redundant half; the other half is implied by symmetry.
  f.for_each_mode([&](const ModeIndex& k, Complex c) {
    const int last = d == 2 ? k.l : k.m;
    const std::size_t wl = wrap(last, m);
    if (wl >= h) return;
    // For even m the Nyquist plane would be fed from both signs; keep one.
    if (m % 2 == 0 && wl == m / 2 && last < 0) return;
    std::size_t idx = wrap(k.k, m);
    if (d == 3) idx = idx * m + wrap(k.l, m);
    idx = idx * h + wl;
    half[idx] += c;
  });
  GridField g;
  g.dim = d;
  g.side = m;
  g.samples.assign(spectral_detail::cube(m, d), 0.0);
  CubeFft::get(d, m, LineDirection::kBackward).backward(half.data(), g.samples.data());
  return g;
}

/// Forward transform of grid samples, truncated to the cube [-N, N]^d. The
/// mean is discarded.
inline SpectralField to_spectral(const GridField& g, int cutoff) {
  using spectral_detail::wrap;
  const std::size_t m = g.side;
  if (m < static_cast<std::size_t>(2 * cutoff + 1))
    throw std::invalid_argument("to_spectral: cutoff exceeds grid bandwidth");
  const int d = g.dim;
  const std::size_t h = m / 2 + 1;
  AlignedVector<double> work(g.samples.begin(), g.samples.end());
  AlignedVector<Complex> half(spectral_detail::cube(m, d) / m * h);
  CubeFft::get(d, m, LineDirection::kForward).forward(work.data(), half.data());
  const double scale = 1.0 / static_cast<double>(spectral_detail::cube(m, d));
  SpectralField f = SpectralField::zeros(d, cutoff);
  f.for_each_canonical([&](const ModeIndex& k) {
    ModeIndex q = k;
    bool conj = false;
    const int last = d == 2 ? q.l : q.m;
    if (last < 0) {
      q = -q;
      conj = true;
    }
    std::size_t idx = wrap(q.k, m);
    if (d == 3) idx = idx * m + wrap(q.l, m);
    idx = idx * h + static_cast<std::size_t>(d == 2 ? q.l : q.m);
    Complex c = half[idx] * scale;
    f.set(k, conj ? std::conj(c) : c);
  });
  return f;
}

/// CSV snapshot: header then one row per canonical mode, columns k1,k2[,k3],re,im.
inline void write_spectral_csv(std::ostream& os, const SpectralField& f) {
  os << (f.dim() == 2 ? "k1,k2,re,im\n" : "k1,k2,k3,re,im\n");
  os.precision(17);
  f.for_each_canonical([&](const ModeIndex& k) {
    const Complex c = f[k];
    os << k.k << ',' << k.l;
    if (f.dim() == 3) os << ',' << k.m;
    os << ',' << c.real() << ',' << c.imag() << '\n';
  });
}

inline SpectralField read_spectral_csv(std::istream& is) {
  std::string header;
  if (!std::getline(is, header)) throw std::runtime_error("spectral csv: missing header");
  while (!header.empty() && (header.back() == '\r' || header.back() == ' ')) header.pop_back();
  int dim = 0;
  if (header == "k1,k2,re,im") dim = 2;
  else if (header == "k1,k2,k3,re,im") dim = 3;
  else throw std::runtime_error("spectral csv: unexpected header '" + header + "'");
  struct Row {
    ModeIndex k;
    Complex v;
  };
  std::vector<Row> rows;
  int cutoff = 1;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream ls(line);
    Row r;
    double re = 0, im = 0;
    ls >> r.k.k >> r.k.l;
    if (dim == 3) ls >> r.k.m;
    ls >> re >> im;
    if (!ls) throw std::runtime_error("spectral csv: malformed row '" + line + "'");
    if (!r.k.is_canonical()) throw std::runtime_error("spectral csv: non-canonical mode");
    r.v = {re, im};
    cutoff = std::max(cutoff, r.k.max_abs());
    rows.push_back(r);
  }
  SpectralField f = SpectralField::zeros(dim, cutoff);
  for (const auto& r : rows) f.set(r.k, r.v);
  return f;
}

}  // namespace batchelor
