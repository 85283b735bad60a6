// Numerical versions of the structural facts behind the low-mode
// lower bound: Ito drift of log |X|, the Frobenius/operator norm
// inequality for A(Y), mode adjacency, quadratic variation, Sobolev
// interpolation and mixing-rate transfer.
#pragma once

#include "batchelor/models.hpp"
#include "batchelor/spectral.hpp"

#include <json.hpp>

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <queue>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace batchelor {

/// mu = (pi^2 / 2) |X|^-2 (|A|_F^2 - 2 |A^T X / |X||^2).
inline double drift_mu(const LowModeVector& x, const NoiseMatrix& a) {
  if (x.size() != a.rows()) throw std::invalid_argument("drift_mu: X and A sizes differ");
  const double n2 = x.squaredNorm();
  if (!(n2 > 0)) throw std::invalid_argument("drift_mu: X must be nonzero");
  const double fro2 = a.squaredNorm();
  const double proj = (a.transpose() * x).squaredNorm() / n2;
  return 0.5 * kPi * kPi * (fro2 - 2.0 * proj) / n2;
}

/// The same drift as (pi^2 / 2) tr(A^T H A) with H the Hessian of log |x| at X.
inline double drift_mu_trace(const LowModeVector& x, const NoiseMatrix& a) {
  if (x.size() != a.rows()) throw std::invalid_argument("drift_mu_trace: X and A sizes differ");
  const double n2 = x.squaredNorm();
  if (!(n2 > 0)) throw std::invalid_argument("drift_mu_trace: X must be nonzero");
  const Eigen::MatrixXd hess =
      Eigen::MatrixXd::Identity(x.size(), x.size()) / n2 - 2.0 * x * x.transpose() / (n2 * n2);
  return 0.5 * kPi * kPi * (a.transpose() * hess * a).trace();
}

struct NormCheck {
  double frobenius2 = 0;
  double two_op2 = 0;
  bool pass = true;
  double margin() const { return frobenius2 - two_op2; }
};

inline double operator_norm(const Eigen::MatrixXd& a) {
  if (a.size() == 0) return 0.0;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a);
  return svd.singularValues()(0);
}

/// |A|_F^2 >= 2 |A|_op^2 with an absolute slack of 1e-10.
inline NormCheck frobenius_op_check(const NoiseMatrix& a, double slack = 1e-10) {
  NormCheck c;
  c.frobenius2 = a.squaredNorm();
  const double op = operator_norm(a);
  c.two_op2 = 2.0 * op * op;
  c.pass = c.frobenius2 >= c.two_op2 - slack;
  return c;
}

/// Row pairs of the 3D matrix and the columns they touch: three 2x4 blocks.
inline std::vector<Eigen::MatrixXd> noise_matrix_blocks(const NoiseMatrix& a) {
  if (a.rows() == 4 && a.cols() == 4) return {a.block(0, 0, 2, 2), a.block(2, 2, 2, 2)};
  if (a.rows() != 6 || a.cols() != 12) throw std::invalid_argument("noise_matrix_blocks: unexpected shape");
  const std::array<std::array<int, 4>, 3> cols{{{0, 1, 4, 5}, {2, 3, 8, 9}, {6, 7, 10, 11}}};
  std::vector<Eigen::MatrixXd> out;
  for (int b = 0; b < 3; ++b) {
    Eigen::MatrixXd m(2, 4);
    for (int r = 0; r < 2; ++r)
      for (int c = 0; c < 4; ++c) m(r, c) = a(2 * b + r, cols[static_cast<std::size_t>(b)][static_cast<std::size_t>(c)]);
    out.push_back(m);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Mode adjacency (2D).

/// Lattice [-N, N]^2 minus the origin, with (k, l) ~ (k, l +- 1) for k != 0 and
/// (k, l) ~ (k +- 1, l) for l != 0.
class AdjacencyGraph {
 public:
  using EdgeFilter = std::function<bool(const ModeIndex&, const ModeIndex&)>;

  explicit AdjacencyGraph(int cutoff) : n_(cutoff) {
    if (cutoff < 1) throw std::invalid_argument("AdjacencyGraph: cutoff must be >= 1");
    for (int k = -n_; k <= n_; ++k)
      for (int l = -n_; l <= n_; ++l)
        if (k != 0 || l != 0) vertices_.push_back({k, l, 0});
  }

  static bool adjacent(const ModeIndex& a, const ModeIndex& b) {
    if (a.k == b.k && a.k != 0 && std::abs(a.l - b.l) == 1) return true;
    if (a.l == b.l && a.l != 0 && std::abs(a.k - b.k) == 1) return true;
    return false;
  }

  const std::vector<ModeIndex>& vertices() const { return vertices_; }

  std::vector<ModeIndex> neighbors(const ModeIndex& v) const {
    std::vector<ModeIndex> out;
    const ModeIndex cand[4] = {{v.k, v.l - 1, 0}, {v.k, v.l + 1, 0}, {v.k - 1, v.l, 0}, {v.k + 1, v.l, 0}};
    for (const auto& c : cand) {
      if (c.is_zero() || std::abs(c.k) > n_ || std::abs(c.l) > n_) continue;
      if (adjacent(v, c)) out.push_back(c);
    }
    return out;
  }

  std::size_t edge_count() const {
    std::size_t e = 0;
    for (const auto& v : vertices_) e += neighbors(v).size();
    return e / 2;
  }

  /// Number of connected components, keeping only edges accepted by `keep`.
  int components(const EdgeFilter& keep = {}) const {
    const int side = 2 * n_ + 1;
    auto id = [&](const ModeIndex& v) { return static_cast<std::size_t>((v.k + n_) * side + (v.l + n_)); };
    std::vector<char> seen(static_cast<std::size_t>(side * side), 0);
    int count = 0;
    for (const auto& start : vertices_) {
      if (seen[id(start)]) continue;
      ++count;
      std::queue<ModeIndex> q;
      q.push(start);
      seen[id(start)] = 1;
      while (!q.empty()) {
        const ModeIndex v = q.front();
        q.pop();
        for (const auto& w : neighbors(v)) {
          if (seen[id(w)] || (keep && !keep(v, w))) continue;
          seen[id(w)] = 1;
          q.push(w);
        }
      }
    }
    return count;
  }

 private:
  int n_;
  std::vector<ModeIndex> vertices_;
};

struct Connectivity {
  bool connected = false;
  int components = 0;
};

inline Connectivity adjacency_connectivity(int cutoff, const AdjacencyGraph::EdgeFilter& keep = {}) {
  const AdjacencyGraph g(cutoff);
  Connectivity c;
  c.components = g.components(keep);
  c.connected = c.components == 1;
  return c;
}

// ---------------------------------------------------------------------------
// Quadratic variation.

/**
 * 2 [k^2 (|f_{k,l-1}|^2 + |f_{k,l+1}|^2) + l^2 (|f_{k-1,l}|^2 + |f_{k+1,l}|^2)]
 * at the current state. The rate of <Re f_k> + <Im f_k> under the Fourier
 * system is pi^2 times this; see quadratic_variation_rate.
 */
inline double quadratic_variation_density(const SpectralField& f, const ModeIndex& k) {
  if (f.dim() != 2) throw std::invalid_argument("quadratic_variation_density: 2D fields only");
  const double kk = static_cast<double>(k.k) * k.k, ll = static_cast<double>(k.l) * k.l;
  const double a = std::norm(f[{k.k, k.l - 1, 0}]) + std::norm(f[{k.k, k.l + 1, 0}]);
  const double b = std::norm(f[{k.k - 1, k.l, 0}]) + std::norm(f[{k.k + 1, k.l, 0}]);
  return 2.0 * (kk * a + ll * b);
}

/// d(<Re f_k> + <Im f_k>)/dt, i.e. the sum of squared noise coefficients of mode k.
inline double quadratic_variation_rate(const SpectralField& f, const ModeIndex& k) {
  return kPi * kPi * quadratic_variation_density(f, k);
}

/// Same rate summed directly from the coupling stencil; in-cube neighbors only.
inline double quadratic_variation_rate_from_stencil(const ModelSpec& spec, const SpectralField& f,
                                                    const ModeIndex& k) {
  double acc = 0;
  for (int i = 1; i <= spec.noise_count(); ++i) {
    Complex c{};
    for (const auto& t : coupling_stencil(spec, k, i)) c += t.weight * f[t.neighbor];
    acc += std::norm(c);
  }
  return acc;
}

// ---------------------------------------------------------------------------
// Interpolation and the low-mode approximant.

struct InterpolationResult {
  double lhs = 0;
  double rhs = 0;
  bool pass = true;
};

/// |f|_{s2} <= |f|_{s1}^{(s3-s2)/(s3-s1)} |f|_{s3}^{(s2-s1)/(s3-s1)}, relative slack rel_tol.
inline InterpolationResult interpolation_check(const SpectralField& f, double s1, double s2, double s3,
                                               double rel_tol = 1e-12) {
  if (!(s1 < s2 && s2 < s3)) throw std::invalid_argument("interpolation_check: need s1 < s2 < s3");
  const double n1 = sobolev_norm(f, s1), n2 = sobolev_norm(f, s2), n3 = sobolev_norm(f, s3);
  if (n2 == 0) throw std::invalid_argument("interpolation_check: zero field");
  InterpolationResult r;
  r.lhs = n2;
  // Evaluated in logs so that large s does not overflow.
  const double th = (s3 - s2) / (s3 - s1);
  r.rhs = std::exp(th * std::log(n1) + (1.0 - th) * std::log(n3));
  r.pass = r.lhs <= r.rhs * (1.0 + rel_tol);
  return r;
}

struct Approximant {
  SpectralField field;
  double radius = 0;
  /// R exceeds the lattice cutoff, so the approximant is f itself.
  bool truncated = false;
  // Left and right sides of the three bounds.
  double err_s1 = 0, err_bound = 0;
  double norm_s2 = 0, norm_s2_bound = 0;
  double norm_s3 = 0, norm_s3_bound = 0;

  bool pass(double rel_tol = 1e-12) const {
    auto le = [&](double a, double b) { return a <= b * (1.0 + rel_tol) + 1e-300; };
    return le(err_s1, err_bound) && le(norm_s2, norm_s2_bound) && le(norm_s3, norm_s3_bound);
  }
};

/// f^eps = projection onto |k| <= R, R = eps^(-1/(s2-s1)), with its three bounds evaluated.
inline Approximant low_mode_approximant(const SpectralField& f, double s1, double s2, double s3, double eps) {
  if (!(s1 < s2 && s2 < s3)) throw std::invalid_argument("low_mode_approximant: need s1 < s2 < s3");
  if (!(eps > 0)) throw std::invalid_argument("low_mode_approximant: eps must be positive");
  Approximant a;
  a.radius = std::pow(eps, -1.0 / (s2 - s1));
  a.truncated = a.radius >= std::sqrt(static_cast<double>(f.dim())) * f.cutoff();
  a.field = project_ball(f, a.radius);
  const double f2 = sobolev_norm(f, s2);
  a.err_s1 = sobolev_norm(f - a.field, s1);
  a.err_bound = eps * f2;
  a.norm_s2 = sobolev_norm(a.field, s2);
  a.norm_s2_bound = f2;
  a.norm_s3 = sobolev_norm(a.field, s3);
  a.norm_s3_bound = std::pow(eps, -(s3 - s2) / (s2 - s1)) * f2;
  return a;
}

// ---------------------------------------------------------------------------
// Mixing-rate arithmetic.

/// s / (2 s0 - s) * gamma0, defined for 0 < s < 2 s0.
inline double mixing_rate_transfer_below(double s0, double gamma0, double s) {
  if (!(s0 > 0) || !(s > 0)) throw std::invalid_argument("mixing_rate_transfer: s and s0 must be positive");
  if (s >= 2.0 * s0) throw std::domain_error("mixing_rate_transfer: s must be below 2 s0");
  return s / (2.0 * s0 - s) * gamma0;
}

/// Lower bound on gamma_s from gamma_{s0}: gamma0 for s >= s0, s/(2s0-s) gamma0 below.
inline double mixing_rate_transfer(double s0, double gamma0, double s) {
  if (!(s0 > 0) || !(s > 0)) throw std::invalid_argument("mixing_rate_transfer: s and s0 must be positive");
  if (!(gamma0 >= 0)) throw std::invalid_argument("mixing_rate_transfer: gamma0 must be >= 0");
  if (s >= s0) return gamma0;
  return mixing_rate_transfer_below(s0, gamma0, s);
}

/// Upper bound Lambda * s.
inline double mixing_rate_cap(double lambda, double s) {
  if (!(lambda >= 0) || !(s > 0)) throw std::invalid_argument("mixing_rate_cap: need lambda >= 0 and s > 0");
  return lambda * s;
}

// ---------------------------------------------------------------------------
// Randomized check suite.

struct CheckResult {
  CheckResult() = default;
  explicit CheckResult(std::string name) : check(std::move(name)) {}

  std::string check;
  std::uint64_t trials = 0;
  std::uint64_t failures = 0;
  double worst_margin = std::numeric_limits<double>::infinity();
  nlohmann::json counterexample;

  void record(double margin, bool ok, const std::function<nlohmann::json()>& dump = {}) {
    ++trials;
    if (margin < worst_margin) worst_margin = margin;
    if (!ok) {
      if (failures == 0 && dump) counterexample = dump();
      ++failures;
    }
  }
  bool pass() const { return failures == 0 && trials > 0; }
};

inline void to_json(nlohmann::json& j, const CheckResult& r) {
  j = nlohmann::json{{"check", r.check}, {"trials", r.trials}, {"failures", r.failures},
                     {"worst_margin", std::isfinite(r.worst_margin) ? nlohmann::json(r.worst_margin) : nlohmann::json()}};
  if (!r.counterexample.is_null()) j["counterexample"] = r.counterexample;
}

struct CheckOptions {
  std::uint64_t trials_2d = 1000000;
  std::uint64_t trials_3d = 1000000;
  std::uint64_t interpolation_fields = 10000;
  int max_connectivity_cutoff = 16;
  std::uint64_t seed = 20240611;
  /// Replaces build_noise_matrix; the test harness uses it to inject faults.
  std::function<NoiseMatrix(const NeighborVector&)> noise_matrix = build_noise_matrix;
};

/// build_noise_matrix with the sign of entry (0, 0) flipped; a known-bad variant.
inline NoiseMatrix sign_flipped_noise_matrix(const NeighborVector& y) {
  NoiseMatrix a = build_noise_matrix(y);
  a(0, 0) = -a(0, 0);
  return a;
}

namespace theory_detail {

inline std::vector<double> to_vec(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

// Y samples: Gaussian, single coordinate, equal magnitudes with random signs.
inline NeighborVector sample_y(std::mt19937_64& rng, int len, std::uint64_t trial) {
  std::normal_distribution<double> n01;
  NeighborVector y(len);
  switch (trial % 8) {
    case 5: {
      y.setZero();
      y(static_cast<Eigen::Index>(rng() % static_cast<std::uint64_t>(len))) = n01(rng);
      break;
    }
    case 6: {
      const double m = std::abs(n01(rng)) + 0.1;
      for (int i = 0; i < len; ++i) y(i) = (rng() & 1) ? m : -m;
      break;
    }
    default:
      for (int i = 0; i < len; ++i) y(i) = n01(rng);
  }
  return y;
}

// X samples: Gaussian, a coordinate axis, or close to the top left singular vector of A.
inline LowModeVector sample_x(std::mt19937_64& rng, const NoiseMatrix& a, std::uint64_t trial) {
  std::normal_distribution<double> n01;
  const auto rows = a.rows();
  LowModeVector x(rows);
  switch (trial % 4) {
    case 1:
      x.setZero();
      x(static_cast<Eigen::Index>(rng() % static_cast<std::uint64_t>(rows))) = 1.0;
      break;
    case 2:
    case 3: {
      Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeThinU);
      x = svd.matrixU().col(0);
      const double jitter = trial % 4 == 2 ? 0.0 : 1e-6;
      for (int i = 0; i < rows; ++i) x(i) += jitter * n01(rng);
      break;
    }
    default:
      for (int i = 0; i < rows; ++i) x(i) = n01(rng);
  }
  if (x.squaredNorm() == 0) x(0) = 1.0;
  return x;
}

// Random coefficients on the cube [-n, n]^d with a random radial weight.
inline SpectralField random_field(std::mt19937_64& rng, int dim, int n, double decay) {
  std::normal_distribution<double> n01;
  return SpectralField::from_half(dim, n, [&](const ModeIndex& k) {
    const double w = std::pow(k.norm(), -decay);
    return Complex{w * n01(rng), w * n01(rng)};
  });
}

}  // namespace theory_detail

/// Drift and norm inequality over random (X, Y) in one dimension.
inline std::vector<CheckResult> check_drift(int dim, std::uint64_t trials, std::uint64_t seed,
                                            const std::function<NoiseMatrix(const NeighborVector&)>& builder) {
  using namespace theory_detail;
  std::mt19937_64 rng(seed);
  const std::string tag = dim == 2 ? "2d" : "3d";
  CheckResult mu{"drift_mu_nonnegative_" + tag}, fro{"frobenius_vs_operator_" + tag},
      agree{"drift_trace_matches_expanded_" + tag}, blocks{"block_norm_chain_" + tag};
  const int ylen = dim == 2 ? 4 : 12;
  for (std::uint64_t t = 0; t < trials; ++t) {
    const NeighborVector y = sample_y(rng, ylen, t);
    const NoiseMatrix a = builder(y);
    const LowModeVector x = sample_x(rng, a, t);
    const double m = drift_mu(x, a);
    const double scale = 0.5 * kPi * kPi * a.squaredNorm() / x.squaredNorm();
    mu.record(m, m >= -1e-10, [&] { return nlohmann::json{{"X", to_vec(x)}, {"Y", to_vec(y)}, {"mu", m}}; });
    const NormCheck nc = frobenius_op_check(a);
    fro.record(nc.margin(), nc.pass, [&] {
      return nlohmann::json{{"Y", to_vec(y)}, {"frobenius2", nc.frobenius2}, {"two_op2", nc.two_op2}};
    });
    // The trace form costs a dense product; sample it on a subset.
    if (t % 16 == 0) {
      const double mt = drift_mu_trace(x, a);
      const double err = std::abs(mt - m) - 1e-12 * std::max(1.0, scale);
      agree.record(-err, err <= 0, [&] { return nlohmann::json{{"X", to_vec(x)}, {"Y", to_vec(y)}}; });
      const auto bl = noise_matrix_blocks(a);
      double fro_sum = 0, op_max = 0;
      for (const auto& b : bl) {
        fro_sum += b.squaredNorm();
        op_max = std::max(op_max, operator_norm(b));
      }
      const double op = operator_norm(a);
      const double tol = 1e-10 * std::max(1.0, a.squaredNorm());
      const bool ok = std::abs(fro_sum - a.squaredNorm()) <= tol && op * op <= op_max * op_max + tol;
      blocks.record(std::min(op_max * op_max - op * op, tol - std::abs(fro_sum - a.squaredNorm())), ok,
                    [&] { return nlohmann::json{{"Y", to_vec(y)}}; });
    }
  }
  return {mu, fro, agree, blocks};
}

/**
 * For random fields, the inner-mode noise coefficients assembled from the
 * coupling stencil equal pi A(Y) column by column.
 */
inline CheckResult check_stencil_consistency(int dim, std::uint64_t trials, std::uint64_t seed,
                                             const std::function<NoiseMatrix(const NeighborVector&)>& builder) {
  std::mt19937_64 rng(seed);
  CheckResult r{dim == 2 ? "stencil_matches_noise_matrix_2d" : "stencil_matches_noise_matrix_3d"};
  const ModelSpec spec{dim, 0.0, 2};
  const auto inner = inner_modes(dim);
  for (std::uint64_t t = 0; t < trials; ++t) {
    const SpectralField f = theory_detail::random_field(rng, dim, 2, 0.0);
    const LowModeState s = extract_XY(f);
    const NoiseMatrix a = builder(s.y);
    double worst = 0;
    for (int i = 1; i <= spec.noise_count(); ++i) {
      for (std::size_t j = 0; j < inner.size(); ++j) {
        Complex c{};
        for (const auto& term : coupling_stencil(spec, inner[j], i)) c += term.weight * f[term.neighbor];
        const auto row = static_cast<Eigen::Index>(2 * j);
        worst = std::max(worst, std::abs(c.real() - kPi * a(row, i - 1)));
        worst = std::max(worst, std::abs(c.imag() - kPi * a(row + 1, i - 1)));
      }
    }
    r.record(-worst, worst <= 1e-12, [&] { return nlohmann::json{{"Y", theory_detail::to_vec(s.y)}, {"error", worst}}; });
  }
  return r;
}

inline CheckResult check_connectivity(int max_cutoff) {
  CheckResult r{"adjacency_connected"};
  for (int n = 1; n <= max_cutoff; ++n) {
    const auto c = adjacency_connectivity(n);
    r.record(c.connected ? 0.0 : -static_cast<double>(c.components - 1), c.connected,
             [&] { return nlohmann::json{{"cutoff", n}, {"components", c.components}}; });
  }
  return r;
}

/// Control: dropping every edge that touches the row l = 0 must disconnect the graph.
inline CheckResult check_connectivity_control(int max_cutoff) {
  CheckResult r{"adjacency_control_disconnects"};
  const auto keep = [](const ModeIndex& a, const ModeIndex& b) { return a.l != 0 && b.l != 0; };
  for (int n = 1; n <= max_cutoff; ++n) {
    const auto c = adjacency_connectivity(n, keep);
    r.record(static_cast<double>(c.components - 1), !c.connected, [&] { return nlohmann::json{{"cutoff", n}}; });
  }
  return r;
}

inline std::vector<CheckResult> check_interpolation(std::uint64_t fields, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  std::uniform_real_distribution<double> ueps(0.01, 1.0);
  std::normal_distribution<double> n01;
  CheckResult ineq{"interpolation_inequality"}, equality{"interpolation_single_shell_equality"},
      approx{"approximant_bounds"};
  for (std::uint64_t t = 0; t < fields; ++t) {
    const int dim = t % 5 == 4 ? 3 : 2;
    const int n = dim == 2 ? 6 : 3;
    std::array<double, 3> s{u(rng), u(rng), u(rng)};
    std::sort(s.begin(), s.end());
    if (!(s[0] < s[1] && s[1] < s[2])) continue;
    const SpectralField f = theory_detail::random_field(rng, dim, n, std::abs(u(rng)));
    const auto r = interpolation_check(f, s[0], s[1], s[2]);
    ineq.record((r.rhs - r.lhs) / r.rhs, r.pass, [&] {
      return nlohmann::json{{"s", s}, {"lhs", r.lhs}, {"rhs", r.rhs}};
    });

    // Single shell: all mass at one |k|^2, taken from a random nonzero lattice point so the shell is never empty.
    std::uniform_int_distribution<int> comp(-n, n);
    long shell = 0;
    while (shell == 0) {
      const int a = comp(rng), b = comp(rng), c = dim == 3 ? comp(rng) : 0;
      shell = static_cast<long>(a) * a + static_cast<long>(b) * b + static_cast<long>(c) * c;
    }
    const SpectralField g = SpectralField::from_half(dim, n, [&](const ModeIndex& k) {
      return k.norm2() == shell ? Complex{n01(rng), n01(rng)} : Complex{};
    });
    if (l2_norm(g) > 0) {
      const auto e = interpolation_check(g, s[0], s[1], s[2]);
      const double rel = std::abs(e.lhs - e.rhs) / e.rhs;
      equality.record(-rel, rel <= 1e-12, [&] { return nlohmann::json{{"s", s}, {"shell", shell}, {"rel", rel}}; });
    }

    const double eps = ueps(rng);
    const Approximant a = low_mode_approximant(f, s[0], s[1], s[2], eps);
    const double margin = std::min({a.err_bound - a.err_s1, a.norm_s2_bound - a.norm_s2, a.norm_s3_bound - a.norm_s3});
    approx.record(margin, a.pass(), [&] { return nlohmann::json{{"s", s}, {"eps", eps}, {"radius", a.radius}}; });
  }
  return {ineq, equality, approx};
}

inline CheckResult check_transfer_arithmetic() {
  CheckResult r{"mixing_rate_transfer_arithmetic"};
  auto expect = [&](double got, double want, const char* what) {
    const double err = std::abs(got - want);
    r.record(-err, err <= 1e-14 * std::max(1.0, std::abs(want)), [&] { return nlohmann::json{{"case", what}}; });
  };
  expect(mixing_rate_transfer(1.0, 3.0, 0.5), 1.0, "s0=1,g=3,s=1/2");
  expect(mixing_rate_transfer(1.0, 3.0, 1.0), 3.0, "s=s0");
  expect(mixing_rate_transfer(1.0, 3.0, 2.0), 3.0, "s>s0");
  expect(mixing_rate_transfer_below(1.0, 3.0, 1.0 - 1e-9), 3.0 * (1.0 - 1e-9) / (1.0 + 1e-9), "continuity");
  expect(mixing_rate_cap(3.0, 2.0), 6.0, "cap");
  return r;
}

struct CheckReport {
  std::vector<CheckResult> results;
  bool pass() const {
    return std::all_of(results.begin(), results.end(), [](const CheckResult& r) { return r.pass(); });
  }
};

inline void to_json(nlohmann::json& j, const CheckReport& r) {
  j = nlohmann::json::array();
  for (const auto& c : r.results) j.push_back(c);
}

inline CheckReport run_check_suite(const CheckOptions& opt) {
  if (opt.trials_2d < 1 || opt.trials_3d < 1 || opt.interpolation_fields < 1 || opt.max_connectivity_cutoff < 1)
    throw std::invalid_argument("check suite: trial counts must be >= 1");
  CheckReport rep;
  for (auto& r : check_drift(2, opt.trials_2d, opt.seed, opt.noise_matrix)) rep.results.push_back(r);
  for (auto& r : check_drift(3, opt.trials_3d, opt.seed + 1, opt.noise_matrix)) rep.results.push_back(r);
  const std::uint64_t stencil_trials = std::min<std::uint64_t>(1000, std::max(opt.trials_2d, opt.trials_3d));
  rep.results.push_back(check_stencil_consistency(2, stencil_trials, opt.seed + 2, opt.noise_matrix));
  rep.results.push_back(check_stencil_consistency(3, stencil_trials, opt.seed + 3, opt.noise_matrix));
  rep.results.push_back(check_connectivity(opt.max_connectivity_cutoff));
  rep.results.push_back(check_connectivity_control(opt.max_connectivity_cutoff));
  for (auto& r : check_interpolation(opt.interpolation_fields, opt.seed + 4)) rep.results.push_back(r);
  rep.results.push_back(check_transfer_arithmetic());
  return rep;
}

}  // namespace batchelor
