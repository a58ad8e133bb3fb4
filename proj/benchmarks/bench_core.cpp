#include <benchmark/benchmark.h>

#include <cmath>
#include <memory>

#include "racelab/hybrid_trainer.hpp"
#include "racelab/networks.hpp"
#include "racelab/race_env.hpp"
#include "racelab/track.hpp"
#include "racelab/vehicle.hpp"

namespace {

using namespace racelab;

std::shared_ptr<const Track> mini_oasis() {
  static const auto t = std::make_shared<const Track>(generate_track(TrackKind::kMiniOasis));
  return t;
}

void BM_CastRay(benchmark::State& state) {
  const auto track = mini_oasis();
  const Pose2D s = track->spawn();
  double a = 0.0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(cast_ray(*track, {s.x, s.y}, {std::cos(a), std::sin(a)}, 50.0));
    a += 0.1;
  }
}
BENCHMARK(BM_CastRay);

void BM_Sense(benchmark::State& state) {
  const auto track = mini_oasis();
  RaceEnv env(track, {});
  env.reset(0);
  for (auto _ : state) benchmark::DoNotOptimize(sense(*track, env.state(), env.config()));
}
BENCHMARK(BM_Sense);

void BM_StepDynamics(benchmark::State& state) {
  const VehicleParams p;
  VehicleState s;
  s.u = 20.0;
  const DriveCommand cmd{1};
  for (auto _ : state) {
    s = step_dynamics(s, p, cmd, 0.01);
    if (std::abs(s.yaw_rate) > 5.0 || s.t > 1e4) s = VehicleState{};
    benchmark::DoNotOptimize(s);
  }
}
BENCHMARK(BM_StepDynamics);

void BM_EnvStep(benchmark::State& state) {
  RaceEnv env(mini_oasis(), {});
  env.reset(0);
  for (auto _ : state) {
    const StepResult r = env.step(SteerAction(0));
    if (r.terminated) env.reset(0);
    benchmark::DoNotOptimize(r);
  }
}
BENCHMARK(BM_EnvStep);

void BM_PolicyForward(benchmark::State& state) {
  nn::PolicyNet policy;
  policy.init(1);
  RaceEnv env(mini_oasis(), {});
  const Observation o = env.reset(0);
  for (auto _ : state) benchmark::DoNotOptimize(nn::forward_policy(policy, o));
}
BENCHMARK(BM_PolicyForward);

void BM_RolloutCollect(benchmark::State& state) {
  TrainerConfig cfg;
  nn::PolicyNet policy;
  policy.init(1);
  RolloutCollector collector(mini_oasis(), cfg);
  Rng rng(0);
  for (auto _ : state) {
    RolloutBuffer b(cfg.buffer_size, cfg.num_envs);
    benchmark::DoNotOptimize(collector.collect(policy, b, rng, 0));
  }
}
BENCHMARK(BM_RolloutCollect)->Unit(benchmark::kMillisecond);

void BM_PpoUpdate(benchmark::State& state) {
  TrainerConfig cfg;
  nn::PolicyNet policy;
  policy.init(1);
  RolloutCollector collector(mini_oasis(), cfg);
  RolloutBuffer b(cfg.buffer_size, cfg.num_envs);
  Rng rng(0);
  collector.collect(policy, b, rng, 0);
  compute_advantages(b, cfg);
  nn::AdamState adam(policy.size());
  for (auto _ : state) benchmark::DoNotOptimize(ppo_update(policy, adam, b, cfg, 0.0, rng));
}
BENCHMARK(BM_PpoUpdate)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
