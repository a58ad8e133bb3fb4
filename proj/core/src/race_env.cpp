#include "racelab/race_env.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <random>
#include <sstream>

#include "format.hpp"
#include "racelab/errors.hpp"

namespace racelab {

SteerAction::SteerAction(int value) : value_(value) {
  if (value < -1 || value > 1) {
    throw ValidationError("steer action must be -1, 0 or +1, got " + std::to_string(value));
  }
}

SteerAction SteerAction::from_index(int index) { return SteerAction(index - 1); }

std::string EnvConfig::normalization_fingerprint() const {
  std::ostringstream os;
  os << "obs=v+11rays;range_max=" << detail::fmt_exact(range_max)
     << ";v_norm_cap=" << detail::fmt_exact(v_norm_cap)
     << ";physics_dt=" << detail::fmt_exact(physics_dt) << ";decision_interval=" << decision_interval;
  return os.str();
}

void validate(const EnvConfig& cfg) {
  if (!(cfg.physics_dt > 0.0) || cfg.physics_dt > 0.05) {
    throw ValidationError("env physics_dt must be in (0, 0.05]");
  }
  if (cfg.decision_interval < 1) throw ValidationError("env decision_interval must be >= 1");
  if (cfg.max_decision_steps < 1) throw ValidationError("env max_decision_steps must be >= 1");
  if (!(cfg.range_max > 0.0)) throw ValidationError("env range_max must be positive");
  if (!(cfg.v_norm_cap > 0.0)) throw ValidationError("env v_norm_cap must be positive");
  if (cfg.spawn_jitter < 0.0) throw ValidationError("env spawn_jitter must be non-negative");
  validate(cfg.vehicle);
}

std::string StepEvents::to_string() const {
  std::string out;
  const auto add = [&](const std::string& s) {
    if (!out.empty()) out += '|';
    out += s;
  };
  if (collision) add("collision");
  if (checkpoint) add(std::string("checkpoint:") + *checkpoint);
  if (lap_completed) add("lap:" + detail::fmt_exact(*lap_completed));
  if (best_lap) add("best_lap");
  return out;
}

std::array<Vec2, kNumRays> ray_directions(double heading) {
  std::array<Vec2, kNumRays> dirs;
  for (int i = 0; i < kNumRays; ++i) {
    const double offset = (-90.0 + kRaySpacingDeg * i) * std::numbers::pi / 180.0;
    dirs[i] = {std::cos(heading + offset), std::sin(heading + offset)};
  }
  return dirs;
}

Observation sense(const Track& track, const VehicleState& state, const EnvConfig& cfg) {
  Observation obs;
  obs.values[0] = std::clamp(forward_speed(state) / cfg.v_norm_cap, 0.0, 1.0);
  const Vec2 origin = state.pose.position();
  const bool inside = track.contains(origin);
  const auto dirs = ray_directions(state.pose.heading);
  for (int i = 0; i < kNumRays; ++i) {
    const double range = inside ? track.raycast_unchecked(origin, dirs[i], cfg.range_max) : 0.0;
    obs.values[1 + i] = std::clamp(range / cfg.range_max, 0.0, 1.0);
  }
  return obs;
}

RaceEnv::RaceEnv(std::shared_ptr<const Track> track, EnvConfig cfg)
    : track_(std::move(track)), cfg_(cfg) {
  if (!track_) throw ContractViolation("RaceEnv needs a track");
  validate(cfg_);
}

Observation RaceEnv::reset(std::uint64_t seed) {
  state_ = VehicleState{};
  state_.pose = track_->spawn();
  if (cfg_.spawn_jitter > 0.0) {
    std::mt19937_64 rng(seed);
    const double unit = static_cast<double>(rng() >> 11) * 0x1.0p-53;  // [0, 1)
    const double lateral = (2.0 * unit - 1.0) * cfg_.spawn_jitter;
    state_.pose.x -= lateral * std::sin(state_.pose.heading);
    state_.pose.y += lateral * std::cos(state_.pose.heading);
  }
  next_gate_ = 0;
  decision_step_ = 0;
  tick_in_decision_ = 0;
  laps_ = 0;
  in_decision_ = false;
  terminated_ = false;
  pending_best_bonus_ = false;
  lap_start_.reset();
  action_ = SteerAction{};
  reset_done_ = true;
  obs_ = sense(*track_, state_, cfg_);
  return obs_;
}

void RaceEnv::begin_decision(SteerAction action) {
  if (!reset_done_) throw ContractViolation("RaceEnv::step before reset");
  if (terminated_) throw ContractViolation("RaceEnv::step on a terminated episode");
  if (in_decision_) throw ContractViolation("RaceEnv::begin_decision while a decision is open");
  action_ = action;
  in_decision_ = true;
  tick_in_decision_ = 0;
  pending_events_ = {};
}

bool RaceEnv::advance_tick() {
  if (!in_decision_) throw ContractViolation("RaceEnv::advance_tick outside a decision");
  if (pending_events_.collision && cfg_.collision_terminates) return true;
  if (tick_in_decision_ >= cfg_.decision_interval) return true;

  const Vec2 prev = state_.pose.position();
  state_ = step_dynamics(state_, cfg_.vehicle, DriveCommand{action_.value(), kRaceThrottle},
                         cfg_.physics_dt);
  ++tick_in_decision_;
  const Vec2 curr = state_.pose.position();

  const Gate& gate = track_->checkpoints()[next_gate_];
  if (gate_crossed(gate, prev, curr) && orient(gate.p0, gate.p1, curr) > orient(gate.p0, gate.p1, prev)) {
    pending_events_.checkpoint = gate.id;
    if (next_gate_ == 0 && !lap_start_) lap_start_ = state_.t;
    if (next_gate_ == kCheckpointCount - 1) {
      const double lap_time = state_.t - *lap_start_;
      pending_events_.lap_completed = lap_time;
      ++laps_;
      lap_start_ = state_.t;
      if (!best_lap_ || lap_time < *best_lap_) {
        best_lap_ = lap_time;
        pending_events_.best_lap = true;
      }
    }
    next_gate_ = (next_gate_ + 1) % kCheckpointCount;
  }

  if (collides(*track_, state_.pose, cfg_.vehicle.half_length, cfg_.vehicle.half_width)) {
    pending_events_.collision = true;
    if (cfg_.collision_terminates) return true;
  }
  return tick_in_decision_ >= cfg_.decision_interval;
}

StepResult RaceEnv::finish_decision() {
  if (!in_decision_) throw ContractViolation("RaceEnv::finish_decision outside a decision");
  in_decision_ = false;
  ++decision_step_;

  StepResult r;
  r.events = pending_events_;
  obs_ = sense(*track_, state_, cfg_);
  r.obs = obs_;

  // Exactly one reward case per step: collision > checkpoint > best lap > velocity.
  // The lap-completing step is always a checkpoint step, so a new best lap's
  // bonus is paid on the next step that has no higher-precedence event.
  if (r.events.collision) {
    r.extrinsic_reward = cfg_.r_collision;
    pending_best_bonus_ = false;
  } else if (r.events.checkpoint) {
    r.extrinsic_reward = cfg_.r_checkpoint;
  } else if (pending_best_bonus_) {
    r.extrinsic_reward = cfg_.r_best_lap;
    pending_best_bonus_ = false;
  } else {
    r.extrinsic_reward =
        cfg_.velocity_coeff * std::clamp(forward_speed(state_), 0.0, cfg_.v_norm_cap);
  }
  if (r.events.best_lap) pending_best_bonus_ = true;

  if (r.events.collision && cfg_.collision_terminates) {
    r.terminated = true;
  } else if (decision_step_ >= cfg_.max_decision_steps) {
    r.terminated = true;
    r.truncated = true;
  }
  terminated_ = r.terminated;

  if (log_) {
    *log_ << decision_step_ << ',' << detail::fmt_exact(state_.t) << ','
          << detail::fmt_exact(state_.pose.x) << ',' << detail::fmt_exact(state_.pose.y) << ','
          << detail::fmt_exact(state_.pose.heading) << ',' << detail::fmt_exact(state_.u) << ','
          << detail::fmt_exact(state_.v_lat) << ',' << detail::fmt_exact(state_.yaw_rate) << ','
          << action_.value() << ',' << detail::fmt_exact(state_.steer_angle) << ','
          << detail::fmt_exact(r.extrinsic_reward) << ',' << r.events.to_string() << '\n';
  }
  return r;
}

StepResult RaceEnv::step(SteerAction action) {
  begin_decision(action);
  while (!advance_tick()) {
  }
  return finish_decision();
}

std::optional<double> RaceEnv::lap_time_now() const {
  if (!lap_start_) return std::nullopt;
  return state_.t - *lap_start_;
}

void RaceEnv::set_trajectory_log(std::ostream* out) {
  log_ = out;
  if (log_) *log_ << trajectory_header() << '\n';
}

const char* RaceEnv::trajectory_header() {
  return "step,t,x,y,heading,u,v_lat,yaw_rate,steer_cmd,steer_angle,reward,event";
}

}  // namespace racelab
