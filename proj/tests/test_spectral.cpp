#include "batchelor/spectral.hpp"

#include <gtest/gtest.h>

#include <numbers>
#include <random>
#include <sstream>

using namespace batchelor;

namespace {

constexpr double kPiTest = std::numbers::pi;

SpectralField random_field(int dim, int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  return SpectralField::from_half(dim, n, [&](const ModeIndex&) { return Complex{g(rng), g(rng)}; });
}

SpectralField single(int dim, int n, ModeIndex k, Complex v) {
  SpectralField f = SpectralField::zeros(dim, n);
  f.set(k, v);
  return f;
}

// Independent scan: every stored coefficient is the conjugate of its mirror.
bool hermitian(const SpectralField& f, double tol) {
  for (std::size_t i = 0; i < f.size(); ++i) {
    const ModeIndex k = f.mode_at(i);
    if (std::abs(f.raw()[i] - std::conj(f[-k])) > tol) return false;
  }
  return std::abs(f[(ModeIndex{})]) == 0.0;
}

}  // namespace

TEST(SpectralField, CosineFromHalf) {
  const auto f = SpectralField::from_half(2, 1, [](const ModeIndex& k) {
    return k == ModeIndex{1, 0, 0} ? Complex{1, 0} : Complex{};
  });
  EXPECT_EQ(f[(ModeIndex{1, 0, 0})], Complex(1, 0));
  EXPECT_EQ(f[(ModeIndex{-1, 0, 0})], Complex(1, 0));
  const GridField g = to_physical(f, 9);
  for (std::size_t i = 0; i < 9; ++i)
    for (std::size_t j = 0; j < 9; ++j)
      EXPECT_NEAR(g.samples[g.index(i, j)], 2 * std::cos(2 * kPiTest * double(i) / 9), 1e-14);
}

TEST(SpectralField, ZeroModeIsDropped) {
  const auto f = SpectralField::from_half(2, 2, [](const ModeIndex& k) {
    return k.is_zero() ? Complex{5, 0} : Complex{};
  });
  EXPECT_EQ(f[(ModeIndex{})], Complex(0, 0));
}

TEST(SpectralField, RejectsBadInput) {
  EXPECT_THROW(SpectralField::zeros(2, 0), std::invalid_argument);
  EXPECT_THROW(SpectralField::zeros(4, 3), std::invalid_argument);
  EXPECT_THROW(SpectralField::from_half(2, 2, [](const ModeIndex&) { return Complex{NAN, 0}; }),
               std::invalid_argument);
}

TEST(SpectralField, RandomHalfAssignmentIsValid) {
  for (int dim : {2, 3}) {
    const auto f = random_field(dim, 4, 11 + dim);
    EXPECT_NO_THROW(f.validate());
    EXPECT_TRUE(hermitian(f, 0.0));
  }
}

TEST(SobolevNorm, UnitShellIsIndependentOfS) {
  const auto f = single(2, 3, {1, 0, 0}, 1.0);
  for (double s : {-2.0, -0.5, 0.0, 1.0, 3.0}) EXPECT_NEAR(sobolev_norm(f, s), std::sqrt(2.0), 1e-14);
}

TEST(SobolevNorm, SingleModeValue) {
  const auto f = single(2, 3, {2, 1, 0}, 1.0);
  EXPECT_NEAR(sobolev_norm(f, 1.0), std::sqrt(10.0), 1e-13);
}

TEST(SobolevNorm, MonotoneInS) {
  const auto f = random_field(2, 6, 3);
  double prev = 0;
  for (double s = -3; s <= 3; s += 0.5) {
    const double v = sobolev_norm(f, s);
    EXPECT_GE(v, prev * (1 - 1e-14));
    prev = v;
  }
}

TEST(SobolevNorm, ParsevalAgainstGridQuadrature) {
  for (int dim : {2, 3}) {
    const int n = dim == 2 ? 7 : 4;
    const auto f = random_field(dim, n, 5);
    const GridField g = to_physical(f, 2 * n + 2);
    const double l2 = sobolev_norm(f, 0.0);
    EXPECT_NEAR(g.mean_square(), l2 * l2, 1e-10 * l2 * l2);
  }
}

TEST(ProjectLowModes, Examples) {
  EXPECT_EQ(l2_norm(project_low_modes(single(2, 3, {1, 1, 0}, 1.0))), 0.0);
  SpectralField f = single(2, 3, {0, 1, 0}, Complex{0, 1});
  f.set({2, 0, 0}, 3.0);
  const auto p = project_low_modes(f);
  EXPECT_EQ(p[(ModeIndex{0, 1, 0})], Complex(0, 1));
  EXPECT_EQ(p[(ModeIndex{0, -1, 0})], Complex(0, -1));
  EXPECT_EQ(p[(ModeIndex{2, 0, 0})], Complex(0, 0));
  EXPECT_NEAR(l2_norm(p), std::sqrt(2.0), 1e-14);
}

TEST(ProjectLowModes, IdempotentAndContractive) {
  for (int dim : {2, 3}) {
    const auto f = random_field(dim, 4, 7 + dim);
    const auto p = project_low_modes(f);
    const auto pp = project_low_modes(p);
    EXPECT_EQ(pp.raw(), p.raw());
    std::size_t count = 0;
    p.for_each_mode([&](const ModeIndex& k, Complex c) { if (c == Complex{}) return;
      ++count;
      EXPECT_EQ(k.norm2(), 1); });
    EXPECT_EQ(count, dim == 2 ? 4u : 6u);
    for (double s : {0.0, 0.5, 1.0, 3.0}) {
      EXPECT_LE(sobolev_norm(p, -s), sobolev_norm(f, -s));
      EXPECT_NEAR(sobolev_norm(p, -s), sobolev_norm(p, 0.0), 1e-14);
    }
  }
}

TEST(Transforms, CosineOnEvenGridWithAliasFlag) {
  const auto f = single(2, 1, {1, 0, 0}, 1.0);
  const GridField g = to_physical(f, 8);
  for (std::size_t i = 0; i < 8; ++i) EXPECT_NEAR(g.samples[g.index(i, 0)], 2 * std::cos(2 * kPiTest * i / 8.0), 1e-14);
  const auto f3 = random_field(2, 5, 1);
  EXPECT_THROW(to_physical(f3, 10), std::invalid_argument);
  EXPECT_NO_THROW(to_physical(f3, 10, true));
}

TEST(Transforms, RoundTrip) {
  for (int dim : {2, 3}) {
    const int n = dim == 2 ? 9 : 4;
    const auto f = random_field(dim, n, 21);
    for (std::size_t m : {std::size_t(2 * n + 2), std::size_t(2 * n + 1), std::size_t(4 * n + 1)}) {
      const auto back = to_spectral(to_physical(f, m), n);
      double err = 0;
      for (std::size_t i = 0; i < f.size(); ++i) err = std::max(err, std::abs(back.raw()[i] - f.raw()[i]));
      EXPECT_LT(err, 1e-12) << "dim " << dim << " m " << m;
    }
  }
}

TEST(Transforms, TruncatedWhiteNoiseIsHermitian) {
  std::mt19937_64 rng(9);
  std::normal_distribution<double> g;
  GridField grid;
  grid.dim = 2;
  grid.side = 24;
  grid.samples.resize(24 * 24);
  for (auto& v : grid.samples) v = g(rng);
  const auto f = to_spectral(grid, 6);
  EXPECT_TRUE(hermitian(f, 1e-12));
  EXPECT_NO_THROW(f.validate());
}

TEST(SpectralCsv, RoundTrip) {
  for (int dim : {2, 3}) {
    const auto f = random_field(dim, 3, 4);
    std::stringstream ss;
    write_spectral_csv(ss, f);
    std::string header;
    std::getline(std::stringstream(ss.str()), header);
    EXPECT_EQ(header, dim == 2 ? "k1,k2,re,im" : "k1,k2,k3,re,im");
    const auto g = read_spectral_csv(ss);
    ASSERT_EQ(g.cutoff(), f.cutoff());
    for (std::size_t i = 0; i < f.size(); ++i) EXPECT_EQ(g.raw()[i], f.raw()[i]);
  }
}
