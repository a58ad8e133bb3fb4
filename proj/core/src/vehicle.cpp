#include "racelab/vehicle.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <string>

#include "racelab/errors.hpp"

namespace racelab {
namespace {

using Vec7 = std::array<double, 7>;  // x, y, heading, u, v_lat, yaw_rate, steer_angle

Vec7 pack(const VehicleState& s) {
  return {s.pose.x, s.pose.y, s.pose.heading, s.u, s.v_lat, s.yaw_rate, s.steer_angle};
}

VehicleState unpack(const Vec7& v, double t) {
  VehicleState s;
  s.pose = {v[0], v[1], v[2]};
  s.u = v[3];
  s.v_lat = v[4];
  s.yaw_rate = v[5];
  s.steer_angle = v[6];
  s.t = t;
  return s;
}

double sgn(double v) { return (v > 0.0) - (v < 0.0); }

Vec7 derivative(const Vec7& x, const VehicleParams& p, const DriveCommand& cmd) {
  const double heading = x[2];
  const double u = x[3];
  const double v = x[4];
  const double r = x[5];
  const double steer = x[6];

  VehicleState s;
  s.u = u;
  s.v_lat = v;
  s.yaw_rate = r;
  s.steer_angle = steer;
  const TireForces f = lateral_forces(s, p);

  const double fx = cmd.throttle * p.max_engine_force - p.drag_coeff * u * std::abs(u) -
                    p.rolling_coeff * p.mass * kGravity * sgn(u);
  const double cs = std::cos(steer);
  const double sn = std::sin(steer);

  Vec7 d{};
  d[0] = u * std::cos(heading) - v * std::sin(heading);
  d[1] = u * std::sin(heading) + v * std::cos(heading);
  d[2] = r;
  d[3] = (fx - f.front * sn) / p.mass + v * r;
  d[4] = (f.front * cs + f.rear) / p.mass - u * r;
  d[5] = (p.dist_front * f.front * cs - p.dist_rear * f.rear) / p.yaw_inertia;
  d[6] = (steer_target_angle(cmd.steer_target, p) - steer) / p.steer_time_constant;
  return d;
}

Vec7 axpy(const Vec7& x, const Vec7& d, double h) {
  Vec7 out;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] + h * d[i];
  return out;
}

}  // namespace

VehicleParams default_params() { return VehicleParams{}; }

void validate(const VehicleParams& p) {
  const auto positive = [](double v, const char* name) {
    if (!(v > 0.0) || !std::isfinite(v)) {
      throw ValidationError(std::string("vehicle parameter ") + name + " must be positive");
    }
  };
  positive(p.mass, "mass");
  positive(p.yaw_inertia, "yaw_inertia");
  positive(p.dist_front, "dist_front");
  positive(p.dist_rear, "dist_rear");
  positive(p.cornering_stiffness_front, "cornering_stiffness_front");
  positive(p.cornering_stiffness_rear, "cornering_stiffness_rear");
  positive(p.max_engine_force, "max_engine_force");
  positive(p.drag_coeff, "drag_coeff");
  positive(p.rolling_coeff, "rolling_coeff");
  positive(p.friction_mu, "friction_mu");
  positive(p.max_steer_angle, "max_steer_angle");
  positive(p.steer_time_constant, "steer_time_constant");
  positive(p.half_length, "half_length");
  positive(p.half_width, "half_width");
  if (p.max_steer_angle >= std::numbers::pi / 2) {
    throw ValidationError("vehicle parameter max_steer_angle must be below pi/2");
  }
}

TireForces lateral_forces(const VehicleState& s, const VehicleParams& p) {
  const double wheelbase = p.dist_front + p.dist_rear;
  const double u = std::max(s.u, kMinSlipSpeed);
  const double slip_front = std::atan2(s.v_lat + p.dist_front * s.yaw_rate, u) - s.steer_angle;
  const double slip_rear = std::atan2(s.v_lat - p.dist_rear * s.yaw_rate, u);
  TireForces f;
  f.front_limit = p.friction_mu * p.mass * kGravity * p.dist_rear / wheelbase;
  f.rear_limit = p.friction_mu * p.mass * kGravity * p.dist_front / wheelbase;
  f.front = std::clamp(-p.cornering_stiffness_front * slip_front, -f.front_limit, f.front_limit);
  f.rear = std::clamp(-p.cornering_stiffness_rear * slip_rear, -f.rear_limit, f.rear_limit);
  return f;
}

VehicleState step_dynamics(const VehicleState& state, const VehicleParams& params,
                           const DriveCommand& cmd, double dt) {
  if (!(dt > 0.0) || dt > 0.05) throw ContractViolation("step_dynamics: dt must be in (0, 0.05]");
  const Vec7 x = pack(state);
  const Vec7 k1 = derivative(x, params, cmd);
  const Vec7 k2 = derivative(axpy(x, k1, 0.5 * dt), params, cmd);
  const Vec7 k3 = derivative(axpy(x, k2, 0.5 * dt), params, cmd);
  const Vec7 k4 = derivative(axpy(x, k3, dt), params, cmd);
  Vec7 next;
  for (std::size_t i = 0; i < next.size(); ++i) {
    next[i] = x[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
  }
  for (double v : next) {
    if (!std::isfinite(v)) throw TrainingFault("step_dynamics: non-finite vehicle state");
  }
  next[2] = normalize_angle(next[2]);
  next[6] = std::clamp(next[6], -params.max_steer_angle, params.max_steer_angle);
  return unpack(next, state.t + dt);
}

}  // namespace racelab
