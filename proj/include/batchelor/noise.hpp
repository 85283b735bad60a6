// Counter-based Gaussian increments keyed by (seed, step, index).
//
// Each Brownian increment is a pure function of its key, so runs at dt and
// dt/2 (or ensemble members replayed on another worker) see the same path:
// a coarse increment is the sum of the fine increments it covers.
#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

namespace batchelor {

namespace noise_detail {

constexpr std::uint64_t splitmix64(std::uint64_t z) {
  z += 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

constexpr std::uint64_t key(std::uint64_t seed, std::uint64_t step, std::uint64_t index) {
  return splitmix64(splitmix64(splitmix64(seed) ^ step) ^ (index * 0xD1B54A32D192ED03ULL));
}

// (0, 1], 53 random bits.
constexpr double to_unit(std::uint64_t bits) {
  return (static_cast<double>(bits >> 11) + 1.0) * 0x1.0p-53;
}

}  // namespace noise_detail

/// Standard normal variate for a (seed, step, index) key via Box-Muller.
inline double counter_normal(std::uint64_t seed, std::uint64_t step, std::uint64_t index) {
  const std::uint64_t h = noise_detail::key(seed, step, index);
  const double u1 = noise_detail::to_unit(h);
  const double u2 = noise_detail::to_unit(noise_detail::splitmix64(h ^ 0xA0761D6478BD642FULL));
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

/// Uniform variate in [0, 1) for a key; used for initial particle positions.
inline double counter_uniform(std::uint64_t seed, std::uint64_t step, std::uint64_t index) {
  return static_cast<double>(noise_detail::key(seed, step, index) >> 11) * 0x1.0p-53;
}

/// Brownian increments over one step, one entry per noise index.
struct NoiseDraw {
  std::vector<double> increments;
};

/**
 * Brownian path sampled on a fine grid of width dt / substeps. step(n)
 * returns the increments over [n dt, (n+1) dt]. A run with (dt, substeps = 2)
 * and a run with (dt / 2, substeps = 1) on the same seed share one path.
 */
class BrownianPath {
 public:
  BrownianPath(std::uint64_t seed, int noise_count, double dt, int substeps = 1)
      : seed_(seed), count_(noise_count), substeps_(substeps), fine_sd_(std::sqrt(dt / substeps)) {}

  NoiseDraw step(std::uint64_t n) const {
    NoiseDraw d;
    d.increments.assign(static_cast<std::size_t>(count_), 0.0);
    for (int j = 0; j < substeps_; ++j) {
      const std::uint64_t fine = n * static_cast<std::uint64_t>(substeps_) + static_cast<std::uint64_t>(j);
      for (int i = 0; i < count_; ++i)
        d.increments[static_cast<std::size_t>(i)] += fine_sd_ * counter_normal(seed_, fine, static_cast<std::uint64_t>(i));
    }
    return d;
  }

  std::uint64_t seed() const { return seed_; }
  int noise_count() const { return count_; }

 private:
  std::uint64_t seed_;
  int count_;
  int substeps_;
  double fine_sd_;
};

}  // namespace batchelor
