#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "pairhalo/kinematics.hpp"

using namespace pairhalo;
using namespace pairhalo::kinematics;

namespace {

const PhysicalConstants kC;

DetectorGeometry at_rest() { return DetectorGeometry{}; }

}  // namespace

TEST(Kinematics, RecoilVelocity) {
  EXPECT_DOUBLE_EQ(kC.recoil_velocity(), kC.hbar * kC.wavevector / kC.mass);
  EXPECT_NEAR(kC.recoil_velocity(), 9.2e-2, 0.005 * 9.2e-2);
}

TEST(Kinematics, FreeFallArrival) {
  // sqrt(2H/g)
  EXPECT_NEAR(com_arrival_time(at_rest(), kC), std::sqrt(2.0 * 0.465 / 9.81), 1e-12);
  EXPECT_NEAR(com_arrival_time(at_rest(), kC), 0.3079, 5e-5);
}

TEST(Kinematics, UpwardRecoilArrival) {
  const auto g = DetectorGeometry::standard(kC);
  const double vz = kC.recoil_velocity();
  const double oracle = (vz + std::sqrt(vz * vz + 2.0 * 9.81 * 0.465)) / 9.81;
  EXPECT_NEAR(com_arrival_time(g, kC), oracle, 1e-12);
  EXPECT_NEAR(com_arrival_time(g, kC), 0.3175, 5e-4);
  EXPECT_GE(com_arrival_time(g, kC), 0.31);
  EXPECT_LE(com_arrival_time(g, kC), 0.33);
}

TEST(Kinematics, ShortDropLimit) {
  auto g = at_rest();
  g.drop_height = 1e-12;
  EXPECT_LT(com_arrival_time(g, kC), 1e-5);
}

TEST(Kinematics, NoPositiveRoot) {
  PhysicalConstants up = kC;
  up.gravity = -9.81;  // accelerating away from the plane
  EXPECT_THROW(com_arrival_time(at_rest(), up), std::domain_error);
}

TEST(Kinematics, InvalidGeometry) {
  auto g = at_rest();
  g.drop_height = 0.0;
  EXPECT_THROW(validate(g), std::invalid_argument);
  g = at_rest();
  g.detector_radius = -1.0;
  EXPECT_THROW(validate(g), std::invalid_argument);
}

TEST(Kinematics, ForwardAtRest) {
  const auto g = DetectorGeometry::standard(kC);
  const auto e = forward_tof({0, 0, 0}, g, kC, 7);
  ASSERT_TRUE(e);
  EXPECT_EQ(e->shot_id, 7);
  EXPECT_NEAR(e->t, com_arrival_time(g, kC), 1e-15);
  EXPECT_EQ(e->x, 0.0);
  EXPECT_EQ(e->y, 0.0);
}

TEST(Kinematics, ForwardUnitX) {
  const auto g = DetectorGeometry::standard(kC);
  const auto e = forward_tof({1, 0, 0}, g, kC);
  ASSERT_TRUE(e);
  const double t0 = com_arrival_time(g, kC);
  EXPECT_NEAR(e->x, kC.recoil_velocity() * t0, 1e-15);
  EXPECT_NEAR(e->x, 0.0292, 1e-4);
}

TEST(Kinematics, InverseExamples) {
  const auto g = DetectorGeometry::standard(kC);
  const double t0 = com_arrival_time(g, kC);
  const Velocity v0 = invert_tof({0, t0, 0.0, 0.0}, g, kC);
  EXPECT_NEAR(norm(v0), 0.0, 1e-12);
  const Velocity v1 = invert_tof({0, t0, 0.0292, 0.0}, g, kC);
  EXPECT_NEAR(v1.x, 1.0, 0.01);
  EXPECT_NEAR(v1.y, 0.0, 1e-12);
  const Velocity late = invert_tof({0, 2.0 * t0, 0.0, 0.0}, g, kC);
  // A late arrival on axis was launched upward: H = -vz t + g t^2 / 2.
  const double t = 2.0 * t0;
  const double vz = (0.5 * kC.gravity * t * t - g.drop_height) / t / kC.recoil_velocity() - 1.0;
  EXPECT_NEAR(late.z, vz, 1e-9);
  EXPECT_GT(late.z, 20.0);
  EXPECT_THROW(invert_tof({0, 0.0, 0.0, 0.0}, g, kC), std::domain_error);
  EXPECT_THROW(invert_tof({0, -1.0, 0.0, 0.0}, g, kC), std::domain_error);
}

TEST(Kinematics, LostUpward) {
  PhysicalConstants c = kC;
  c.gravity = 0.0;
  auto g = at_rest();
  EXPECT_FALSE(forward_tof({0, 0, 1}, g, c));
}

TEST(Kinematics, RoundTripRandom) {
  const auto g = DetectorGeometry::standard(kC);
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  int checked = 0;
  for (int i = 0; i < 10000; ++i) {
    const Velocity v{u(rng), u(rng), u(rng)};
    const auto e = forward_tof(v, g, kC);
    ASSERT_TRUE(e);
    if (e->x * e->x + e->y * e->y > g.detector_radius * g.detector_radius) continue;
    const Velocity back = invert_tof(*e, g, kC);
    const double scale = std::max(1.0, norm(v));
    EXPECT_NEAR(back.x, v.x, 1e-12 * scale);
    EXPECT_NEAR(back.y, v.y, 1e-12 * scale);
    EXPECT_NEAR(back.z, v.z, 1e-12 * scale);
    ++checked;
  }
  EXPECT_GT(checked, 5000);
}

TEST(Kinematics, JacobianMatchesFiniteDifferences) {
  const auto g = DetectorGeometry::standard(kC);
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-0.9, 0.9);
  for (int trial = 0; trial < 50; ++trial) {
    const Velocity v{u(rng), u(rng), u(rng)};
    // Analytic derivatives of (t, x, y) with respect to v, from implicit
    // differentiation of H = -vz t + g t^2 / 2.
    const double vr = kC.recoil_velocity();
    const auto e = *forward_tof(v, g, kC);
    const double vlz = v.z * vr + g.com_velocity.z;
    const double dt_dvz = e.t * vr / (kC.gravity * e.t - vlz);
    const double vlx = v.x * vr, vly = v.y * vr;
    const double h = 1e-6;
    for (int a = 0; a < 3; ++a) {
      Velocity p = v, m = v;
      if (a == 0) { p.x += h; m.x -= h; }
      if (a == 1) { p.y += h; m.y -= h; }
      if (a == 2) { p.z += h; m.z -= h; }
      const auto ep = *forward_tof(p, g, kC), em = *forward_tof(m, g, kC);
      const double fd_t = (ep.t - em.t) / (2 * h);
      const double fd_x = (ep.x - em.x) / (2 * h);
      const double fd_y = (ep.y - em.y) / (2 * h);
      const double an_t = a == 2 ? dt_dvz : 0.0;
      const double an_x = (a == 0 ? vr * e.t : 0.0) + vlx * an_t;
      const double an_y = (a == 1 ? vr * e.t : 0.0) + vly * an_t;
      auto rel = [](double fd, double an) { return std::abs(fd - an) / std::max(std::abs(an), 1e-9); };
      if (std::abs(an_t) > 0) EXPECT_LT(rel(fd_t, an_t), 1e-6);
      if (std::abs(an_x) > 1e-9) EXPECT_LT(rel(fd_x, an_x), 1e-6);
      if (std::abs(an_y) > 1e-9) EXPECT_LT(rel(fd_y, an_y), 1e-6);
    }
  }
}
