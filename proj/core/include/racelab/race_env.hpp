#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>

#include "racelab/track.hpp"
#include "racelab/vehicle.hpp"

namespace racelab {

inline constexpr int kNumRays = 11;
inline constexpr int kObsSize = 1 + kNumRays;
inline constexpr int kNumActions = 3;
inline constexpr double kRaySpacingDeg = 18.0;

// Network input: [v_norm, ray(-90deg), ray(-72deg), ..., ray(+90deg)], every
// entry in [0, 1]. Ray offsets are measured counter-clockwise from the heading,
// so the first ray points to the right of the car.
struct Observation {
  std::array<double, kObsSize> values{};

  double v_norm() const { return values[0]; }
  double ray(int i) const { return values[1 + i]; }
  bool operator==(const Observation&) const = default;
};

// Discrete steering command: -1 left, 0 straight, +1 right.
class SteerAction {
 public:
  constexpr SteerAction() = default;
  // Throws ValidationError for anything outside {-1, 0, +1}.
  explicit SteerAction(int value);
  static SteerAction from_index(int index);  // 0, 1, 2 -> -1, 0, +1

  constexpr int value() const { return value_; }
  constexpr int index() const { return value_ + 1; }
  constexpr bool operator==(const SteerAction&) const = default;

 private:
  int value_{0};
};

struct EnvConfig {
  double physics_dt{0.01};
  int decision_interval{5};
  int max_decision_steps{6000};
  double r_collision{-100.0};
  double r_checkpoint{1.0};
  double r_best_lap{10.0};
  double velocity_coeff{0.01};
  double range_max{50.0};
  double v_norm_cap{30.0};
  bool collision_terminates{true};
  double spawn_jitter{0.0};  // m, lateral spawn perturbation drawn from the reset seed
  VehicleParams vehicle{};

  double decision_period() const { return physics_dt * decision_interval; }
  // Everything that changes what an observation means. Saved with policies and demos.
  std::string normalization_fingerprint() const;
};

void validate(const EnvConfig& cfg);

struct StepEvents {
  bool collision{false};
  std::optional<char> checkpoint;
  std::optional<double> lap_completed;  // lap time, s
  bool best_lap{false};

  // "collision", "checkpoint:C", "lap:63.25", "best_lap", joined by '|'.
  std::string to_string() const;
};

struct StepResult {
  Observation obs;
  double extrinsic_reward{0.0};
  bool terminated{false};
  bool truncated{false};  // terminated by the decision-step limit, not a crash
  StepEvents events;
};

Observation sense(const Track& track, const VehicleState& state, const EnvConfig& cfg);

// Ray directions in the world frame for a vehicle heading.
std::array<Vec2, kNumRays> ray_directions(double heading);

// Episodic racing environment. Owns its vehicle state; shares the track read-only.
class RaceEnv {
 public:
  RaceEnv(std::shared_ptr<const Track> track, EnvConfig cfg);

  Observation reset(std::uint64_t seed);
  StepResult step(SteerAction action);

  // Tick-level stepping for real-time hosts. step() is exactly
  // begin_decision + decision_interval x advance_tick + finish_decision.
  void begin_decision(SteerAction action);
  // Advances one physics tick; returns true once the decision period is complete
  // (or a terminating collision happened).
  bool advance_tick();
  StepResult finish_decision();

  // Seconds since the lap clock started; nullopt before the first gate-A crossing.
  std::optional<double> lap_time_now() const;
  std::optional<double> best_lap() const { return best_lap_; }
  // Forget the best lap (start of a new run).
  void clear_best_lap() { best_lap_.reset(); pending_best_bonus_ = false; }

  const VehicleState& state() const { return state_; }
  const Track& track() const { return *track_; }
  const std::shared_ptr<const Track>& track_ptr() const { return track_; }
  const EnvConfig& config() const { return cfg_; }
  int next_checkpoint() const { return next_gate_; }
  int decision_step() const { return decision_step_; }
  int laps_completed() const { return laps_; }
  bool terminated() const { return terminated_; }
  SteerAction last_action() const { return action_; }
  const Observation& observation() const { return obs_; }

  // Per-decision CSV trajectory log; pass nullptr to detach.
  void set_trajectory_log(std::ostream* out);
  static const char* trajectory_header();

 private:
  std::shared_ptr<const Track> track_;
  EnvConfig cfg_;
  VehicleState state_;
  Observation obs_;
  SteerAction action_;
  int next_gate_{0};
  int decision_step_{0};
  int tick_in_decision_{0};
  int laps_{0};
  bool reset_done_{false};
  bool in_decision_{false};
  bool terminated_{false};
  bool pending_best_bonus_{false};
  std::optional<double> lap_start_;
  std::optional<double> best_lap_;
  StepEvents pending_events_;
  std::ostream* log_{nullptr};
};

}  // namespace racelab
