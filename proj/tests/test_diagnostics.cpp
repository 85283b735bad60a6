#include "batchelor/diagnostics.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace batchelor;

namespace {

constexpr double kPiTest = std::numbers::pi;

RateSeries synthetic(double horizon, double step, const std::function<double(double)>& v) {
  RateSeries s;
  const auto n = static_cast<int>(std::llround(horizon / step));
  for (int i = 0; i <= n; ++i) s.push(i * step, v(i * step));
  return s;
}

SpectralField single(int dim, int n, ModeIndex k) {
  SpectralField f = SpectralField::zeros(dim, n);
  f.set(k, 1.0);
  return f;
}

}  // namespace

TEST(DecayRate, ExactLine) {
  const auto s = synthetic(10, 0.01, [](double t) { return -3 * t; });
  for (auto mode : {RateMode::kGlobalSlope, RateMode::kLimsupProxy}) {
    const auto r = decay_rate(s, mode);
    ASSERT_TRUE(r);
    EXPECT_NEAR(r->rate, -3.0, 1e-12);
  }
}

TEST(DecayRate, AffineInputIsExact) {
  const auto s = synthetic(37, 0.05, [](double t) { return 12.5 - 0.731 * t; });
  EXPECT_NEAR(decay_rate(s, RateMode::kGlobalSlope)->rate, -0.731, 1e-12);
  EXPECT_NEAR(decay_rate(s, RateMode::kLimsupProxy)->rate, -0.731, 1e-12);
}

TEST(DecayRate, OscillationAveragesOut) {
  const auto s = synthetic(100, 0.01, [](double t) { return -5 * t + std::sin(t); });
  const auto r = decay_rate(s, RateMode::kGlobalSlope);
  EXPECT_NEAR(r->rate, -5.0, 0.1);
  EXPECT_GT(r->std_error, 0.0);
}

TEST(DecayRate, PiecewiseSlopes) {
  const auto s = synthetic(100, 0.01, [](double t) { return t < 50 ? -3 * t : -150 - (t - 50); });
  const double proxy = decay_rate(s, RateMode::kLimsupProxy)->rate;
  const double global = decay_rate(s, RateMode::kGlobalSlope)->rate;
  EXPECT_NEAR(proxy, -1.0, 1e-9);
  EXPECT_GE(global, -3.0);
  EXPECT_LE(global, -1.0 + 1e-9);
}

TEST(DecayRate, InsufficientData) {
  RateSeries one;
  one.push(0, 1);
  EXPECT_FALSE(decay_rate(one, RateMode::kGlobalSlope));
  auto s = synthetic(1, 0.1, [](double t) { return -t; });
  s.window = 5;
  EXPECT_FALSE(decay_rate(s, RateMode::kLimsupProxy));
  RateSeries dead;
  for (int i = 0; i < 5; ++i) dead.push(i, -std::numeric_limits<double>::infinity());
  EXPECT_FALSE(decay_rate(dead, RateMode::kGlobalSlope));
  RateSeries bad;
  bad.push(1, 0);
  EXPECT_THROW(bad.push(1, 0), std::invalid_argument);
}

TEST(DecayRate, SlopeBetweenWindow) {
  const auto s = synthetic(4, 0.01, [](double t) { return t < 1 ? -4 * t : -4.0; });
  EXPECT_NEAR(slope_between(s, 0.1, 0.9)->rate, -4.0, 1e-12);
  EXPECT_NEAR(decay_rate(s, RateMode::kGlobalSlope)->rate, 0.0, 1e-12);
  EXPECT_THROW(slope_between(s, 1, 1), std::invalid_argument);
}

TEST(FilamentationLength, Examples) {
  EXPECT_NEAR(*filamentation_length(single(2, 3, {1, 0, 0})), 1 / (2 * kPiTest), 1e-15);
  EXPECT_NEAR(*filamentation_length(single(2, 6, {3, 4, 0})), 1 / (2 * kPiTest * 5), 1e-15);
  EXPECT_FALSE(filamentation_length(SpectralField::zeros(2, 3)));
}

TEST(FilamentationLength, ShellBounds) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> g;
  for (int dim : {2, 3}) {
    const int n = 5;
    for (int t = 0; t < 20; ++t) {
      const auto f = SpectralField::from_half(dim, n, [&](const ModeIndex&) { return Complex{g(rng), g(rng)}; });
      const double ell = *filamentation_length(f);
      EXPECT_LE(ell, 1 / (2 * kPiTest) * (1 + 1e-14));
      EXPECT_GE(ell, 1 / (2 * kPiTest * n * std::sqrt(double(dim))));
    }
  }
}

TEST(Spectrum, UnitShellAndTotal) {
  const auto f = single(2, 4, {0, 1, 0});
  EXPECT_EQ(spectrum_radius(power_spectrum(f), 0.99), 1.0);
  std::mt19937_64 rng(2);
  std::normal_distribution<double> g;
  const auto r = SpectralField::from_half(3, 4, [&](const ModeIndex&) { return Complex{g(rng), g(rng)}; });
  const double l2 = l2_norm(r);
  EXPECT_NEAR(power_spectrum(r).total(), l2 * l2, 1e-12 * l2 * l2);
  EXPECT_THROW(spectrum_radius(power_spectrum(SpectralField::zeros(2, 2)), 0.9), std::domain_error);
}

TEST(Spectrum, RadiusIsMassQuantile) {
  SpectralField f = SpectralField::zeros(2, 8);
  f.set({1, 0, 0}, 1.0);   // power 2 at r = 1
  f.set({0, 5, 0}, 3.0);   // power 18 at r = 5
  f.set({6, 6, 0}, 0.5);   // power 0.5 at r = 8
  const auto p = power_spectrum(f);
  EXPECT_EQ(spectrum_radius(p, 0.09), 1.0);
  EXPECT_EQ(spectrum_radius(p, 0.95), 5.0);
  EXPECT_EQ(spectrum_radius(p, 0.99), 8.0);
}

TEST(BatchelorFit, SquareRootLaw) {
  std::vector<std::pair<double, double>> pairs;
  for (double k : {0.04, 0.01, 0.0025}) pairs.emplace_back(k, 2 * std::sqrt(k));
  const auto fit = batchelor_fit(pairs);
  EXPECT_FALSE(fit.degenerate);
  EXPECT_NEAR(*fit.exponent, 0.5, 1e-12);
  EXPECT_NEAR(*fit.prefactor, 2.0, 1e-12);
}

TEST(BatchelorFit, LinearLawAndDegenerateCases) {
  std::vector<std::pair<double, double>> pairs;
  for (double k : {0.1, 0.2, 0.4}) pairs.emplace_back(k, k);
  EXPECT_NEAR(*batchelor_fit(pairs).exponent, 1.0, 1e-12);
  EXPECT_TRUE(batchelor_fit({{0.01, 0.1}, {0.01, 0.12}}).degenerate);
  EXPECT_FALSE(batchelor_fit({{0.01, 0.1}, {0.01, 0.12}}).exponent);
  EXPECT_THROW(batchelor_fit({{0.0, 0.1}}), std::invalid_argument);
}

TEST(GammaS, NegatedSlope) {
  const auto s = synthetic(4, 0.01, [](double t) { return -2.5 * t; });
  EXPECT_NEAR(gamma_s_estimate(s, 1.0)->rate, 2.5, 1e-12);
  EXPECT_NEAR(gamma_s_estimate(s, 1.0, std::make_pair(0.5, 1.5))->rate, 2.5, 1e-12);
  EXPECT_THROW(gamma_s_estimate(s, 0.0), std::invalid_argument);
}

TEST(TimeAverage, TailMean) {
  std::vector<double> t{0, 1, 2, 3}, v{10, 1, NAN, 3};
  EXPECT_NEAR(*time_average(t, v, 1.0), 2.0, 1e-15);
  EXPECT_FALSE(time_average(t, v, 5.0));
}
