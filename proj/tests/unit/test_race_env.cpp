#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <sstream>

#include "oracles.hpp"
#include "racelab/errors.hpp"
#include "racelab/race_env.hpp"
#include "racelab/scripted_driver.hpp"

namespace racelab {
namespace {

using testing::corridor_track;

std::shared_ptr<const Track> corridor() { return std::make_shared<const Track>(corridor_track()); }
std::shared_ptr<const Track> oval() { return std::make_shared<const Track>(generate_track(TrackKind::kOval)); }

TEST(Sense, CentredInCorridor) {
  const Track t = corridor_track();
  VehicleState s;
  s.pose = {300.0, 6.0, 0.0};
  const Observation o = sense(t, s, EnvConfig{});
  EXPECT_NEAR(o.ray(0), 0.12, 1e-12);
  EXPECT_NEAR(o.ray(10), 0.12, 1e-12);
  EXPECT_EQ(o.ray(5), 1.0);
  EXPECT_EQ(o.v_norm(), 0.0);
  // Off-axis rays hit a side wall at 6 / |sin(offset)|.
  for (int i = 0; i < kNumRays; ++i) {
    const double offset = (-90.0 + 18.0 * i) * std::numbers::pi / 180.0;
    const double expected = i == 5 ? 50.0 : std::min(50.0, 6.0 / std::abs(std::sin(offset)));
    EXPECT_NEAR(o.ray(i) * 50.0, expected, 1e-9) << "ray " << i;
  }
}

TEST(Sense, FirstRayPointsRight) {
  const Track t = corridor_track();
  VehicleState s;
  s.pose = {300.0, 4.0, 0.0};  // 4 m from the right wall, 8 m from the left
  const Observation o = sense(t, s, EnvConfig{});
  EXPECT_NEAR(o.ray(0) * 50.0, 4.0, 1e-9);
  EXPECT_NEAR(o.ray(10) * 50.0, 8.0, 1e-9);
}

TEST(Sense, RaysMatchMarcherOnMiniOasis) {
  const Track t = generate_track(TrackKind::kMiniOasis);
  VehicleState s;
  s.pose = t.spawn();
  s.pose.heading += 0.3;
  const Observation o = sense(t, s, EnvConfig{});
  const auto dirs = ray_directions(s.pose.heading);
  for (int i = 0; i < kNumRays; ++i) {
    EXPECT_NEAR(o.ray(i) * 50.0, testing::oracle_march(t, s.pose.position(), dirs[i], 50.0), 0.01);
  }
}

TEST(Sense, SpeedNormalizationCaps) {
  const Track t = corridor_track();
  VehicleState s;
  s.pose = {300.0, 6.0, 0.0};
  s.u = 30.0;
  EXPECT_EQ(sense(t, s, EnvConfig{}).v_norm(), 1.0);
  s.u = 45.0;
  EXPECT_EQ(sense(t, s, EnvConfig{}).v_norm(), 1.0);
  s.u = 15.0;
  EXPECT_EQ(sense(t, s, EnvConfig{}).v_norm(), 0.5);
}

TEST(SteerActionTest, OnlyThreeValues) {
  EXPECT_EQ(SteerAction(-1).index(), 0);
  EXPECT_EQ(SteerAction::from_index(2).value(), 1);
  EXPECT_THROW(SteerAction(2), ValidationError);
  EXPECT_THROW(SteerAction(-2), ValidationError);
}

TEST(EnvConfigTest, DefaultsAreTheRewardTable) {
  const EnvConfig c;
  EXPECT_EQ(c.r_collision, -100.0);
  EXPECT_EQ(c.r_checkpoint, 1.0);
  EXPECT_EQ(c.r_best_lap, 10.0);
  EXPECT_EQ(c.velocity_coeff, 0.01);
  EXPECT_EQ(c.range_max, 50.0);
  EXPECT_EQ(c.v_norm_cap, 30.0);
  EXPECT_EQ(c.decision_interval, 5);
  EXPECT_EQ(c.physics_dt, 0.01);
  EXPECT_EQ(c.max_decision_steps, 6000);
  EXPECT_TRUE(c.collision_terminates);
}

TEST(Reset, AtRestAndDeterministic) {
  RaceEnv env(corridor(), {});
  const Observation a = env.reset(7);
  EXPECT_EQ(forward_speed(env.state()), 0.0);
  EXPECT_EQ(env.next_checkpoint(), 0);
  EXPECT_FALSE(env.lap_time_now());
  const Observation b = env.reset(7);
  EXPECT_EQ(a, b);
}

TEST(Step, ContractViolations) {
  RaceEnv env(corridor(), {});
  EXPECT_THROW(env.step(SteerAction(0)), ContractViolation);
  env.reset(0);
  StepResult r;
  do {
    r = env.step(SteerAction(1));
  } while (!r.terminated);
  EXPECT_THROW(env.step(SteerAction(0)), ContractViolation);
}

TEST(Reward, CollisionCase) {
  RaceEnv env(corridor(), {});
  env.reset(0);
  StepResult r;
  int steps = 0;
  do {
    r = env.step(SteerAction(1));
    ++steps;
  } while (!r.terminated && steps < 1000);
  ASSERT_TRUE(r.terminated);
  EXPECT_FALSE(r.truncated);
  EXPECT_TRUE(r.events.collision);
  EXPECT_EQ(r.extrinsic_reward, -100.0);
}

TEST(Reward, CheckpointBeatsVelocity) {
  RaceEnv env(corridor(), {});
  env.reset(0);
  int checkpoints = 0;
  for (int i = 0; i < 2000 && checkpoints < 4; ++i) {
    const StepResult r = env.step(SteerAction(0));
    ASSERT_FALSE(r.terminated);
    if (r.events.checkpoint) {
      EXPECT_EQ(*r.events.checkpoint, 'A' + checkpoints);
      EXPECT_GT(env.state().u, 10.0 * (checkpoints > 0));
      EXPECT_EQ(r.extrinsic_reward, 1.0);  // not 1 + 0.01 u
      ++checkpoints;
    } else {
      EXPECT_EQ(r.extrinsic_reward, 0.01 * env.state().u);
    }
  }
  EXPECT_EQ(checkpoints, 4);
}

TEST(Reward, VelocityCaseAtTwenty) {
  RaceEnv env(corridor(), {});
  env.reset(0);
  StepResult r;
  while (env.state().u < 20.0) r = env.step(SteerAction(0));
  ASSERT_FALSE(r.events.checkpoint);
  EXPECT_EQ(r.extrinsic_reward, 0.01 * env.state().u);
  EXPECT_NEAR(r.extrinsic_reward, 0.2, 0.002);
}

TEST(Reward, VelocityTermIsClampedToCap) {
  EnvConfig cfg;
  cfg.v_norm_cap = 10.0;
  RaceEnv env(corridor(), cfg);
  env.reset(0);
  StepResult r;
  while (env.state().u < 15.0) r = env.step(SteerAction(0));
  if (!r.events.checkpoint) {
    EXPECT_EQ(r.extrinsic_reward, 0.1);
  }
}

struct LapRun {
  std::vector<StepResult> steps;
};

// Drives until `laps` laps are done, then `extra` more steps.
LapRun drive_scripted(RaceEnv& env, std::uint64_t seed, int laps, int extra = 0) {
  ScriptedDriver driver;
  LapRun run;
  Observation o = env.reset(seed);
  int after = 0;
  for (int i = 0; i < 20000 && (env.laps_completed() < laps || after++ < extra); ++i) {
    StepResult r = env.step(driver.act(o));
    o = r.obs;
    run.steps.push_back(r);
    if (r.terminated) break;
  }
  return run;
}

TEST(Reward, BestLapBonusAndPrecedence) {
  RaceEnv env(oval(), {});
  const LapRun run = drive_scripted(env, 0, 3, 1);
  ASSERT_EQ(env.laps_completed(), 3);
  int best_events = 0;
  for (std::size_t i = 0; i < run.steps.size(); ++i) {
    const auto& r = run.steps[i];
    if (r.events.best_lap) {
      ++best_events;
      ASSERT_TRUE(r.events.lap_completed);  // best lap implies lap completed
      ASSERT_TRUE(r.events.checkpoint);
      EXPECT_EQ(*r.events.checkpoint, 'N');
      EXPECT_EQ(r.extrinsic_reward, 1.0);  // checkpoint outranks best lap
      ASSERT_LT(i + 1, run.steps.size());
      EXPECT_EQ(run.steps[i + 1].extrinsic_reward, 10.0);  // paid on the next free step
    }
  }
  EXPECT_GE(best_events, 1);
}

TEST(Reward, PartitionOrderingAndBounds) {
  RaceEnv env(oval(), {});
  const LapRun run = drive_scripted(env, 0, 3);
  const EnvConfig cfg;
  int expected_gate = 0;
  int checkpoints_this_lap = 0;
  for (const auto& r : run.steps) {
    const double x = r.extrinsic_reward;
    const bool in_set = x == -100.0 || x == 1.0 || x == 10.0 || (x >= 0.0 && x <= 0.01 * cfg.v_norm_cap);
    ASSERT_TRUE(in_set) << x;
    for (double v : r.obs.values) ASSERT_TRUE(v >= 0.0 && v <= 1.0 && std::isfinite(v));
    if (r.events.checkpoint) {
      ASSERT_EQ(*r.events.checkpoint, 'A' + expected_gate);
      expected_gate = (expected_gate + 1) % kCheckpointCount;
      ++checkpoints_this_lap;
    }
    if (r.events.lap_completed) {
      EXPECT_EQ(checkpoints_this_lap, 14);
      checkpoints_this_lap = 0;
    }
  }
}

TEST(Reset, BestLapPersistsAcrossResets) {
  RaceEnv env(oval(), {});
  drive_scripted(env, 0, 2);
  ASSERT_TRUE(env.best_lap());
  const double best = *env.best_lap();
  env.reset(1);
  EXPECT_EQ(env.best_lap(), best);
  const LapRun again = drive_scripted(env, 0, 2);
  double running = best;
  for (const auto& r : again.steps) {
    if (!r.events.lap_completed) continue;
    EXPECT_EQ(r.events.best_lap, *r.events.lap_completed < running);
    running = std::min(running, *r.events.lap_completed);
  }
  env.clear_best_lap();
  EXPECT_FALSE(env.best_lap());
}

TEST(LapClock, StartsAtGateAAndRestartsAtN) {
  RaceEnv env(oval(), {});
  ScriptedDriver driver;
  Observation o = env.reset(0);
  const double period = EnvConfig{}.decision_period();
  int since_start = -1;
  bool checked_restart = false;
  for (int i = 0; i < 5000 && env.laps_completed() < 2; ++i) {
    const StepResult r = env.step(driver.act(o));
    o = r.obs;
    if (since_start < 0 && !r.events.checkpoint) {
      EXPECT_FALSE(env.lap_time_now());
    }
    if (r.events.checkpoint && *r.events.checkpoint == 'A' && since_start < 0) {
      since_start = 0;
    } else if (since_start >= 0) {
      ++since_start;
    }
    if (r.events.lap_completed) {
      EXPECT_LE(*env.lap_time_now(), period + 1e-9);
      since_start = 0;
      checked_restart = true;
    }
    if (since_start >= 0) {
      // The clock (re)starts somewhere inside the crossing step.
      ASSERT_TRUE(env.lap_time_now());
      EXPECT_NEAR(*env.lap_time_now(), since_start * period, period + 1e-9);
    }
  }
  EXPECT_TRUE(checked_restart);
}

TEST(LapClock, MatchesTrajectoryLog) {
  RaceEnv env(oval(), {});
  std::ostringstream log;
  env.set_trajectory_log(&log);
  drive_scripted(env, 0, 3);
  env.set_trajectory_log(nullptr);
  std::istringstream in(log.str());
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, RaceEnv::trajectory_header());
  std::vector<double> lap_end_t, lap_times;
  double prev_t = 0.0;
  while (std::getline(in, line)) {
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (line.back() == ',') f.push_back("");
    ASSERT_EQ(f.size(), 12u);
    const double t = std::stod(f[1]);
    EXPECT_NEAR(t - prev_t, 0.05, 1e-9);
    prev_t = t;
    const auto pos = f[11].find("lap:");
    if (pos != std::string::npos) {
      lap_end_t.push_back(t);
      lap_times.push_back(std::stod(f[11].substr(pos + 4)));
    }
  }
  ASSERT_EQ(lap_times.size(), 3u);
  for (std::size_t i = 1; i < lap_times.size(); ++i) {
    EXPECT_NEAR(lap_times[i], lap_end_t[i] - lap_end_t[i - 1], 0.05 + 1e-9);
  }
}

TEST(Step, TickLevelSteppingEqualsStep) {
  RaceEnv a(oval(), {}), b(oval(), {});
  ScriptedDriver da, db;
  Observation oa = a.reset(3), ob = b.reset(3);
  for (int i = 0; i < 800; ++i) {
    const StepResult ra = a.step(da.act(oa));
    b.begin_decision(db.act(ob));
    while (!b.advance_tick()) {
    }
    const StepResult rb = b.finish_decision();
    ASSERT_EQ(ra.obs, rb.obs);
    ASSERT_EQ(ra.extrinsic_reward, rb.extrinsic_reward);
    ASSERT_EQ(a.state(), b.state());
    oa = ra.obs;
    ob = rb.obs;
    if (ra.terminated) break;
  }
}

TEST(Step, DeterministicGivenSeedAndActions) {
  EnvConfig cfg;
  cfg.spawn_jitter = 1.0;
  const auto run = [&](std::uint64_t seed) {
    RaceEnv env(oval(), cfg);
    env.reset(seed);
    std::vector<double> trace;
    for (int i = 0; i < 300; ++i) {
      const StepResult r = env.step(SteerAction((i / 7) % 3 - 1));
      trace.push_back(r.extrinsic_reward);
      for (double v : r.obs.values) trace.push_back(v);
      if (r.terminated) break;
    }
    return trace;
  };
  EXPECT_EQ(run(5), run(5));
  EXPECT_NE(run(5), run(6));
}

TEST(Step, TruncatesAtStepLimit) {
  EnvConfig cfg;
  cfg.max_decision_steps = 10;
  RaceEnv env(corridor(), cfg);
  env.reset(0);
  StepResult r;
  for (int i = 0; i < 10; ++i) r = env.step(SteerAction(0));
  EXPECT_TRUE(r.terminated);
  EXPECT_TRUE(r.truncated);
  EXPECT_FALSE(r.events.collision);
}

TEST(Step, CollisionCanBeNonTerminal) {
  EnvConfig cfg;
  cfg.collision_terminates = false;
  cfg.max_decision_steps = 400;
  RaceEnv env(corridor(), cfg);
  env.reset(0);
  int collisions = 0;
  StepResult r;
  do {
    r = env.step(SteerAction(1));
    if (r.events.collision) {
      ++collisions;
      EXPECT_EQ(r.extrinsic_reward, -100.0);
    }
  } while (!r.terminated);
  EXPECT_TRUE(r.truncated);
  EXPECT_GT(collisions, 1);
}

TEST(Events, ToString) {
  StepEvents e;
  e.checkpoint = 'N';
  e.lap_completed = 63.25;
  e.best_lap = true;
  EXPECT_EQ(e.to_string(), "checkpoint:N|lap:63.25|best_lap");
}

}  // namespace
}  // namespace racelab
