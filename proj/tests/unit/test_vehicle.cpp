#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "racelab/errors.hpp"
#include "racelab/vehicle.hpp"

namespace racelab {
namespace {

constexpr double kDt = 0.01;

TEST(Vehicle, DefaultParameters) {
  const VehicleParams p = default_params();
  EXPECT_EQ(p.mass, 1500.0);
  EXPECT_EQ(p.yaw_inertia, 2500.0);
  EXPECT_EQ(p.dist_front, 1.2);
  EXPECT_EQ(p.dist_rear, 1.5);
  EXPECT_EQ(p.cornering_stiffness_front, 8e4);
  EXPECT_EQ(p.cornering_stiffness_rear, 8e4);
  EXPECT_EQ(p.max_engine_force, 9000.0);
  EXPECT_EQ(p.drag_coeff, 3.0);
  EXPECT_EQ(p.rolling_coeff, 0.015);
  EXPECT_EQ(p.friction_mu, 1.0);
  EXPECT_EQ(p.max_steer_angle, 0.5);
  EXPECT_EQ(p.steer_time_constant, 0.1);
  EXPECT_EQ(p.half_length, 2.4);
  EXPECT_EQ(p.half_width, 0.95);
  EXPECT_NO_THROW(validate(p));
}

TEST(Vehicle, InvalidParametersAreNamed) {
  VehicleParams p;
  p.mass = 0.0;
  try {
    validate(p);
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("mass"), std::string::npos);
  }
  p = {};
  p.max_steer_angle = 1.6;
  EXPECT_THROW(validate(p), ValidationError);
}

TEST(Vehicle, StraightLineKeepsHeadingAndLane) {
  VehicleState s;
  s.u = 10.0;
  const VehicleState n = step_dynamics(s, default_params(), {0, 0.2}, kDt);
  EXPECT_EQ(n.pose.heading, 0.0);
  EXPECT_EQ(n.pose.y, 0.0);
  EXPECT_EQ(n.v_lat, 0.0);
  EXPECT_NEAR(n.pose.x, 10.0 * kDt, 1e-4);
  EXPECT_DOUBLE_EQ(n.t, kDt);
}

TEST(Vehicle, AcceleratesFromRest) {
  const VehicleParams p;
  const VehicleState n = step_dynamics(VehicleState{}, p, {0, 0.2}, kDt);
  // At u = 0 the rolling term has no direction yet; once moving it opposes motion.
  const double accel_moving = (0.2 * p.max_engine_force - p.rolling_coeff * p.mass * kGravity) / p.mass;
  const double accel_rest = 0.2 * p.max_engine_force / p.mass;
  EXPECT_GT(n.u, 0.0);
  EXPECT_GT(n.u, accel_moving * kDt * 0.99);
  EXPECT_LT(n.u, accel_rest * kDt * 1.0001);
}

TEST(Vehicle, ConvergesToEquilibriumSpeed) {
  const VehicleParams p;
  const double u_star = testing::oracle_equilibrium_speed(0.2, p.max_engine_force, p.drag_coeff,
                                                          p.rolling_coeff, p.mass, kGravity);
  EXPECT_NEAR(u_star, 22.93, 0.02);
  // Straight-line speed obeys du/dt = (drag / m) (u*^2 - u^2), so from rest
  // u(t) = u* tanh(drag u* t / m). Track that closed form, then check the gap.
  const double k = p.drag_coeff * u_star / p.mass;
  VehicleState s;
  double worst = 0.0;
  for (int i = 1; i <= 9000; ++i) {
    s = step_dynamics(s, p, {0, 0.2}, kDt);
    worst = std::max(worst, std::abs(s.u - u_star * std::tanh(k * i * kDt)));
    if (i == 6000) {
      EXPECT_NEAR(s.t, 60.0, 1e-9);
      EXPECT_NEAR(forward_speed(s), u_star, 0.2);
    }
  }
  EXPECT_LT(worst, 1e-3);
  EXPECT_NEAR(forward_speed(s), u_star, 0.1);
  // From a rolling start at 10 m/s the 0.1 m/s band is reached within 60 s.
  VehicleState r;
  r.u = 10.0;
  for (int i = 0; i < 6000; ++i) r = step_dynamics(r, p, {0, 0.2}, kDt);
  EXPECT_NEAR(forward_speed(r), u_star, 0.1);
}

TEST(Vehicle, ForwardSpeedIsU) {
  VehicleState s;
  EXPECT_EQ(forward_speed(s), 0.0);
  s.u = 21.5;
  EXPECT_EQ(forward_speed(s), 21.5);
}

TEST(Vehicle, CoastingSlowsStrictly) {
  VehicleState s;
  s.u = 20.0;
  double prev = s.u;
  for (int i = 0; i < 2000; ++i) {
    s = step_dynamics(s, default_params(), {0, 0.0}, kDt);
    ASSERT_LT(s.u, prev);
    prev = s.u;
  }
}

TEST(Vehicle, ActuatorIsFirstOrder) {
  // With the car held at rest the steering state decouples: delta(t) = target (1 - exp(-t/tau)).
  const VehicleParams p;
  VehicleState s;
  for (int i = 1; i <= 30; ++i) {
    s = step_dynamics(s, p, {-1, 0.0}, kDt);
    const double expected = p.max_steer_angle * (1.0 - std::exp(-i * kDt / p.steer_time_constant));
    ASSERT_NEAR(s.steer_angle, expected, 1e-6) << "step " << i;
  }
  EXPECT_EQ(steer_target_angle(-1, p), 0.5);
  EXPECT_EQ(steer_target_angle(1, p), -0.5);
}

TEST(Vehicle, LeftCommandTurnsLeft) {
  VehicleState s;
  s.u = 15.0;
  for (int i = 0; i < 100; ++i) s = step_dynamics(s, default_params(), {-1, 0.2}, kDt);
  EXPECT_GT(s.pose.heading, 0.1);
  EXPECT_GT(s.pose.y, 0.0);
}

VehicleState mirror(const VehicleState& s) {
  VehicleState m = s;
  m.pose.y = -s.pose.y;
  m.pose.heading = -s.pose.heading;
  m.v_lat = -s.v_lat;
  m.yaw_rate = -s.yaw_rate;
  m.steer_angle = -s.steer_angle;
  return m;
}

TEST(Vehicle, MirrorSymmetry) {
  std::mt19937_64 rng(1);
  std::uniform_int_distribution<int> cmd(-1, 1);
  VehicleState a;
  a.u = 18.0;
  a.pose = {3.0, 0.7, 0.2};
  a.v_lat = 0.3;
  a.yaw_rate = -0.1;
  VehicleState b = mirror(a);
  int c = 0;
  for (int i = 0; i < 1000; ++i) {
    if (i % 5 == 0) c = cmd(rng);
    a = step_dynamics(a, default_params(), {c, 0.2}, kDt);
    b = step_dynamics(b, default_params(), {-c, 0.2}, kDt);
    const VehicleState m = mirror(b);
    ASSERT_NEAR(a.pose.x, m.pose.x, 1e-9) << i;
    ASSERT_NEAR(a.pose.y, m.pose.y, 1e-9) << i;
    ASSERT_NEAR(std::remainder(a.pose.heading - m.pose.heading, 2 * std::numbers::pi), 0.0, 1e-9) << i;
    ASSERT_NEAR(a.u, m.u, 1e-9) << i;
    ASSERT_NEAR(a.v_lat, m.v_lat, 1e-9) << i;
    ASSERT_NEAR(a.yaw_rate, m.yaw_rate, 1e-9) << i;
    ASSERT_NEAR(a.steer_angle, m.steer_angle, 1e-9) << i;
  }
}

TEST(Vehicle, LateralForcesSaturate) {
  const VehicleParams p;
  const double front_limit = p.friction_mu * p.mass * kGravity * p.dist_rear / (p.dist_front + p.dist_rear);
  const double rear_limit = p.friction_mu * p.mass * kGravity * p.dist_front / (p.dist_front + p.dist_rear);
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0.0, 30.0), v(-8.0, 8.0), r(-2.0, 2.0), d(-0.5, 0.5);
  bool saw_saturation = false;
  for (int i = 0; i < 10000; ++i) {
    VehicleState s;
    s.u = u(rng);
    s.v_lat = v(rng);
    s.yaw_rate = r(rng);
    s.steer_angle = d(rng);
    const TireForces f = lateral_forces(s, p);
    EXPECT_NEAR(f.front_limit, front_limit, 1e-9);
    EXPECT_NEAR(f.rear_limit, rear_limit, 1e-9);
    ASSERT_LE(std::abs(f.front), front_limit * (1 + 1e-15));
    ASSERT_LE(std::abs(f.rear), rear_limit * (1 + 1e-15));
    saw_saturation |= std::abs(f.front) == f.front_limit;
  }
  EXPECT_TRUE(saw_saturation);
}

TEST(Vehicle, LinearRegimeMatchesSlipFormula) {
  const VehicleParams p;
  VehicleState s;
  s.u = 20.0;
  s.v_lat = 0.1;
  s.yaw_rate = 0.05;
  s.steer_angle = 0.01;
  const TireForces f = lateral_forces(s, p);
  const double af = std::atan2(0.1 + 1.2 * 0.05, 20.0) - 0.01;
  const double ar = std::atan2(0.1 - 1.5 * 0.05, 20.0);
  EXPECT_DOUBLE_EQ(f.front, -8e4 * af);
  EXPECT_DOUBLE_EQ(f.rear, -8e4 * ar);
}

TEST(Vehicle, Deterministic) {
  VehicleState s;
  s.u = 12.0;
  s.yaw_rate = 0.3;
  const VehicleState a = step_dynamics(s, default_params(), {1, 0.2}, kDt);
  const VehicleState b = step_dynamics(s, default_params(), {1, 0.2}, kDt);
  EXPECT_EQ(a, b);
}

TEST(Vehicle, DriftExistsWhenSwitchingSteer) {
  VehicleState s;
  s.u = 22.0;
  double max_vlat = 0.0;
  for (int i = 0; i < 2000; ++i) {
    const int cmd = (i / 50) % 2 == 0 ? 1 : -1;  // alternate every half second
    s = step_dynamics(s, default_params(), {cmd, 0.2}, kDt);
    max_vlat = std::max(max_vlat, std::abs(s.v_lat));
  }
  EXPECT_GT(max_vlat, 1.0);
}

TEST(Vehicle, DtContract) {
  EXPECT_THROW(step_dynamics(VehicleState{}, default_params(), {}, 0.0), ContractViolation);
  EXPECT_THROW(step_dynamics(VehicleState{}, default_params(), {}, 0.06), ContractViolation);
  EXPECT_NO_THROW(step_dynamics(VehicleState{}, default_params(), {}, 0.05));
}

TEST(Vehicle, StaysFiniteAndBoundedUnderRandomCommands) {
  const VehicleParams p;
  std::mt19937_64 rng(9);
  std::uniform_int_distribution<int> cmd(-1, 1);
  VehicleState s;
  for (int i = 0; i < 20000; ++i) {
    s = step_dynamics(s, p, {cmd(rng), 0.2}, 0.02);
    ASSERT_LE(std::abs(s.steer_angle), p.max_steer_angle);
    ASSERT_GT(s.pose.heading, -std::numbers::pi);
    ASSERT_LE(s.pose.heading, std::numbers::pi);
  }
}

}  // namespace
}  // namespace racelab
