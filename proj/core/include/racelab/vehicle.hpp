#pragma once

#include "racelab/geometry.hpp"

namespace racelab {

inline constexpr double kGravity = 9.81;       // m/s^2
inline constexpr double kRaceThrottle = 0.20;  // fixed fraction of max engine force
inline constexpr double kMinSlipSpeed = 0.5;   // m/s, guards atan2 at standstill

// Planar dynamic-bicycle parameters. The defaults are stand-ins chosen so the
// terminal speed at race throttle sits near 23 m/s; they are not measured data.
struct VehicleParams {
  double mass{1500.0};                    // kg
  double yaw_inertia{2500.0};             // kg m^2
  double dist_front{1.2};                 // m, CG to front axle
  double dist_rear{1.5};                  // m, CG to rear axle
  double cornering_stiffness_front{8e4};  // N/rad
  double cornering_stiffness_rear{8e4};   // N/rad
  double max_engine_force{9000.0};        // N
  double drag_coeff{3.0};                 // kg/m
  double rolling_coeff{0.015};
  double friction_mu{1.0};
  double max_steer_angle{0.5};      // rad
  double steer_time_constant{0.1};  // s
  double half_length{2.4};          // m
  double half_width{0.95};          // m
};

VehicleParams default_params();

// Throws ValidationError naming the offending field.
void validate(const VehicleParams& p);

struct VehicleState {
  Pose2D pose;
  double u{0.0};          // body-frame longitudinal velocity, m/s
  double v_lat{0.0};      // body-frame lateral velocity, m/s
  double yaw_rate{0.0};   // rad/s
  double steer_angle{0.0};  // rad, actuator state
  double t{0.0};          // s

  bool operator==(const VehicleState&) const = default;
};

struct DriveCommand {
  int steer_target{0};  // -1 left, 0 straight, +1 right
  double throttle{kRaceThrottle};
};

// Body frame is x forward, y left, so a positive road-wheel angle turns left.
// Command -1 (left) therefore targets +max_steer_angle.
inline double steer_target_angle(int steer_cmd, const VehicleParams& p) {
  return -static_cast<double>(steer_cmd) * p.max_steer_angle;
}

struct TireForces {
  double front{0.0};  // N, lateral, front axle frame
  double rear{0.0};   // N, lateral
  double front_limit{0.0};
  double rear_limit{0.0};
};

TireForces lateral_forces(const VehicleState& s, const VehicleParams& p);

// One RK4 step of the model. dt in (0, 0.05]. Throws TrainingFault on a
// non-finite result.
VehicleState step_dynamics(const VehicleState& state, const VehicleParams& params,
                           const DriveCommand& cmd, double dt);

inline double forward_speed(const VehicleState& s) { return s.u; }

}  // namespace racelab
