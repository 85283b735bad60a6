#include "batchelor/lagrangian.hpp"

#include <gtest/gtest.h>

using namespace batchelor;

TEST(ParticleStep, ZeroDrawIsIdentity) {
  auto p = ParticleState<2>::at({0.3, 0.8});
  particle_step<2>(p, NoiseDraw{{0, 0, 0, 0}});
  EXPECT_EQ(p.position, Eigen::Vector2d(0.3, 0.8));
  EXPECT_EQ(p.jacobian, Eigen::Matrix2d::Identity());
  EXPECT_EQ(p.log_inv_jacobian_norm(), 0.0);
  EXPECT_THROW(particle_step<2>(p, NoiseDraw{{0, 0}}), std::invalid_argument);
}

TEST(ParticleStep, SingleShearJacobian) {
  const double y = 0.21, w1 = 0.13, w2 = -0.07;
  auto p = ParticleState<2>::at({0.4, y});
  particle_step<2>(p, NoiseDraw{{w1, w2, 0, 0}});
  const double th = 2 * kPi * y;
  EXPECT_NEAR(p.position(0), 0.4 + w1 * std::sin(th) + w2 * std::cos(th), 1e-15);
  EXPECT_EQ(p.position(1), y);
  Eigen::Matrix2d expect;
  expect << 1, 2 * kPi * (std::cos(th) * w1 - std::sin(th) * w2), 0, 1;
  EXPECT_NEAR((p.jacobian - expect).norm(), 0.0, 1e-15);
  EXPECT_EQ(p.jacobian.determinant(), 1.0);
}

TEST(ParticleStep, VolumePreservedOverLongRun) {
  for (int dim : {2, 3}) {
    LagrangianOptions o;
    o.dim = dim;
    o.particles = 20;
    o.horizon = 50;
    o.dt = 1e-3;
    const auto est = lyapunov_estimate(o);
    EXPECT_LT(est.max_abs_log_det, 1e-8);
  }
}

TEST(ParticleStep, InverseJacobianTracksRawJacobian) {
  auto p = ParticleState<3>::at({0.1, 0.5, 0.9});
  const BrownianPath path(5, 12, 1e-3);
  for (std::uint64_t n = 0; n < 200; ++n) particle_step<3>(p, path.step(n));
  const Eigen::Matrix3d inv = p.jacobian.inverse();
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(inv);
  EXPECT_NEAR(p.log_inv_jacobian_norm(), std::log(svd.singularValues()(0)), 1e-9);
  EXPECT_NEAR(p.log_det_jacobian(), std::log(p.jacobian.determinant()), 1e-9);
}

TEST(ParticleStep, EqualStartsStayEqual) {
  auto a = ParticleState<2>::at({0.25, 0.75});
  auto b = a;
  const BrownianPath path(3, 4, 1e-3);
  for (std::uint64_t n = 0; n < 1000; ++n) {
    const auto d = path.step(n);
    particle_step<2>(a, d);
    particle_step<2>(b, d);
  }
  EXPECT_EQ(a.position, b.position);
  EXPECT_EQ(a.jacobian, b.jacobian);
}

TEST(ParticleStep, FlowProperty) {
  // Stepping [0, t1] then [t1, t2] is the same map as stepping [0, t2] at once.
  const BrownianPath path(8, 4, 1e-3);
  auto whole = ParticleState<2>::at({0.6, 0.1});
  for (std::uint64_t n = 0; n < 500; ++n) particle_step<2>(whole, path.step(n));
  auto first = ParticleState<2>::at({0.6, 0.1});
  for (std::uint64_t n = 0; n < 200; ++n) particle_step<2>(first, path.step(n));
  auto second = ParticleState<2>::at({first.position(0), first.position(1)});
  for (std::uint64_t n = 200; n < 500; ++n) particle_step<2>(second, path.step(n));
  EXPECT_NEAR((second.position - whole.position).norm(), 0.0, 1e-12);
  EXPECT_NEAR((second.jacobian * first.jacobian - whole.jacobian).norm(), 0.0, 1e-9 * whole.jacobian.norm());
}

TEST(OnePoint, VarianceIsTime) {
  for (int dim : {2, 3}) {
    const auto st = dim == 2 ? one_point_statistics<2>(20000, 0.5, 1e-2, 4) : one_point_statistics<3>(5000, 0.5, 1e-2, 4);
    for (std::size_t a = 0; a < st.variance.size(); ++a) {
      // Each coordinate is a sum of independent shears (a sin and cos pair per group
      // moving it), so its variance rate is the number of groups that move it.
      const double rate = dim == 2 ? 1.0 : 2.0;
      EXPECT_NEAR(st.variance[a], rate * st.t, 3 * st.variance_std_error[a]) << dim << " " << a;
    }
    EXPECT_LT(st.max_abs_correlation, 4.0 / std::sqrt(double(st.particles)));
  }
}

TEST(Lyapunov, PositiveForTwoDimensionalModel) {
  LagrangianOptions o;
  o.particles = 100;
  o.horizon = 20;
  const auto est = lyapunov_estimate(o);
  EXPECT_GT(est.lambda - 3 * est.std_error, 0.0);
  EXPECT_GE(est.lambda, est.mean);
  EXPECT_EQ(est.ensemble, 100u);
}

TEST(Lyapunov, TraceAndValidation) {
  LagrangianOptions o;
  o.particles = 3;
  o.horizon = 0.1;
  o.trace_stride = 10;
  std::vector<TracePoint> trace;
  lyapunov_estimate(o, &trace);
  ASSERT_EQ(trace.size(), 11u);
  EXPECT_EQ(trace.front().log_inv_jac_norm, 0.0);
  std::ostringstream os;
  write_trajectory_csv(os, trace, 2);
  EXPECT_EQ(os.str().substr(0, 26), "t,x,y,log_inv_jac_norm\n0,0");
  o.horizon = 0;
  EXPECT_THROW(lyapunov_estimate(o), std::invalid_argument);
  o.horizon = 1;
  o.dim = 4;
  EXPECT_THROW(lyapunov_estimate(o), std::invalid_argument);
}
