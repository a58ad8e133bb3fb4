// racelab command-line front end. Exit codes: 0 success, 2 validation error,
// 3 training or deployment fault.
#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "racelab/demo_store.hpp"
#include "racelab/errors.hpp"
#include "racelab/gradcheck.hpp"
#include "racelab/hybrid_trainer.hpp"
#include "racelab/race_harness.hpp"
#include "racelab/track.hpp"
#ifdef RACELAB_HAVE_SERVER
#include "racelab/realtime_server.hpp"
#endif

namespace fs = std::filesystem;
using namespace racelab;

namespace {

constexpr int kExitValidation = 2;
constexpr int kExitFault = 3;

std::shared_ptr<const Track> open_track(const std::string& path) {
  return std::make_shared<const Track>(load_track(path));
}

TrainerConfig config_or_default(const std::string& path) {
  return path.empty() ? TrainerConfig{} : load_trainer_config(path);
}

nn::PolicyNet open_policy(const std::string& path, const EnvConfig& env) {
  nn::LoadedPolicy loaded = nn::load_params(path);
  const std::string want = env.normalization_fingerprint();
  if (normalization_part(loaded.fingerprint) != want) {
    throw ValidationError("policy was trained with a different observation convention: " +
                          nn::fingerprint_diff(normalization_part(loaded.fingerprint), want));
  }
  return std::move(loaded.net);
}

int cmd_gen_track(const std::string& kind, const TrackParams& params, const std::string& out) {
  const Track track = generate_track(parse_track_kind(kind), params);
  save_track(track, out);
  std::printf("%s: %zu + %zu barrier vertices, 14 gates -> %s\n", track.name().c_str(),
              track.left_barrier().size(), track.right_barrier().size(), out.c_str());
  return 0;
}

int cmd_gen_demos(const std::string& track_path, const std::string& out, const std::string& config, int laps,
                  std::uint64_t seed) {
  const TrainerConfig cfg = config_or_default(config);
  ScriptedDemoOptions opt;
  opt.laps = laps;
  opt.seed = seed;
  const DemoMetadata meta = record_scripted_demos(open_track(track_path), cfg.env, opt, out);
  std::printf("recorded %d laps in %d episode(s) -> %s\n", meta.lap_count, meta.episode_count, out.c_str());
  return 0;
}

int cmd_check_demos(const std::string& demos_path, const std::string& track_path, const std::string& config) {
  const TrainerConfig cfg = config_or_default(config);
  const Demonstration d = load_demos(demos_path, cfg.env.normalization_fingerprint());
  std::printf("%s: %zu episodes, %zu steps, %d laps, recorded by '%s'\n", demos_path.c_str(), d.episodes.size(),
              d.total_steps(), d.metadata.lap_count, d.metadata.recorded_by.c_str());
  if (!track_path.empty()) {
    if (auto bad = replay_mismatch(d, open_track(track_path), cfg.env)) {
      throw ValidationError(fmt::format("replay diverges from the recording at record {}", *bad));
    }
    std::printf("replay: bit-exact\n");
  }
  return 0;
}

struct TrainArgs {
  std::string track, demos, config, out;
  std::optional<std::uint64_t> seed;
  long long max_steps{0};
  bool stop_after_first_lap{false};
  int print_every{10};
};

int cmd_train(const TrainArgs& a) {
  TrainerConfig cfg = config_or_default(a.config);
  if (a.seed) cfg.seed = *a.seed;
  if (a.max_steps > 0) cfg.max_steps = a.max_steps;
  cfg.track_path = a.track;
  if (!a.demos.empty()) cfg.demo_path = a.demos;
  validate(cfg);
  const auto track = open_track(a.track);
  std::optional<Demonstration> demos;
  if (!cfg.demo_path.empty()) demos = load_demos(cfg.demo_path, cfg.env.normalization_fingerprint());
  HybridTrainer trainer(track, cfg, std::move(demos));
  TrainOptions opt;
  opt.out_dir = a.out;
  opt.stop_after_first_lap = a.stop_after_first_lap;
  const auto start = std::chrono::steady_clock::now();
  opt.on_update = [&](const MetricsRow& r, int update) {
    if (a.print_every > 0 && update % a.print_every == 0) {
      const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      std::printf("update %5d  step %9lld  bc %.3f  gail %.3f  curiosity %.4f  return %8.1f  entropy %.3f  "
                  "len %6.0f  laps %lld  best %.2f  [%.0f s]\n",
                  update, r.step, r.bc_loss, r.gail_reward, r.curiosity_reward, r.extrinsic_return, r.entropy,
                  r.episode_length, r.laps_completed, r.best_lap_time, s);
      std::fflush(stdout);
    }
  };
  const TrainSummary s = trainer.train(opt);
  std::printf("done: %lld steps, %d updates, first lap at %s, %lld laps, %.0f s -> %s\n", s.steps, s.updates,
              s.first_lap_step ? std::to_string(*s.first_lap_step).c_str() : "never", s.laps_completed,
              s.wall_seconds, a.out.c_str());
  return 0;
}

int cmd_race(const std::string& policy_path, const std::string& track_path, const std::string& config, int laps,
             const std::string& mode, std::uint64_t seed, const std::string& out) {
  const TrainerConfig cfg = config_or_default(config);
  const nn::PolicyNet policy = open_policy(policy_path, cfg.env);
  RaceOptions opt;
  opt.laps = laps;
  opt.mode = parse_policy_mode(mode);
  opt.seed = seed;
  fs::create_directories(out);
  std::ofstream traj(fs::path(out) / "trajectory.csv");
  opt.trajectory = &traj;
  const RaceOutcome r = run_autonomous_laps(policy, open_track(track_path), cfg.env, opt);
  export_lap_csv(r.laps, fs::path(out) / "laps.csv");
  std::ofstream summary(fs::path(out) / "race.txt");
  const auto report = [&](std::FILE* f) {
    std::fprintf(f, "mode %s, %zu/%d laps, %d collisions, %lld decision steps\n", to_string(r.mode), r.laps.size(),
                 laps, r.collisions, r.decision_steps);
    for (const auto& l : r.laps) std::fprintf(f, "lap %2d  %.3f s  mean %.2f m/s\n", l.lap, l.lap_time, l.mean_speed());
    if (!r.laps.empty()) {
      const EntityStats s = lap_stats(opt.entity, r.laps);
      std::fprintf(f, "mean %.3f s, best %.3f s\n", s.mean_lap_time, s.best_lap_time);
    }
    if (!r.success) std::fprintf(f, "FAILED: %s\n", r.failure.c_str());
  };
  report(stdout);
  if (std::FILE* f = std::fopen((fs::path(out) / "race.txt").c_str(), "w")) {
    report(f);
    std::fclose(f);
  }
  return r.success ? 0 : kExitFault;
}

int cmd_compare(const std::string& agent, const std::string& human, const std::string& out) {
  const RaceReport r = compare_reports(import_lap_dir(agent), import_lap_dir(human));
  std::ofstream f(out);
  if (!f) throw std::runtime_error("cannot write " + out);
  write_report_csv(r, f);
  write_report_csv(r, std::cout);
  return 0;
}

int cmd_latency(const std::string& policy_path, const std::string& track_path, long long cycles) {
  const EnvConfig env;
  const nn::PolicyNet policy = open_policy(policy_path, env);
  const auto track = track_path.empty() ? std::make_shared<const Track>(generate_track(TrackKind::kMiniOasis))
                                        : open_track(track_path);
  const LatencyReport r = measure_latency(policy, track, env, cycles);
  std::printf("cycles %lld  mean %.4f ms  p99 %.4f ms  max %.4f ms\n", r.cycles, r.mean_ms, r.p99_ms, r.max_ms);
  return 0;
}

int cmd_gradcheck() {
  const auto start = std::chrono::steady_clock::now();
  bool ok = true;
  for (const auto& r : nn::run_gradcheck()) {
    std::printf("%-28s coords %3d  max rel err %.3e  max abs err %.3e  %s\n", r.loss.c_str(), r.coordinates,
                r.max_rel_error, r.max_abs_error, r.passed ? "ok" : "FAIL");
    ok = ok && r.passed;
  }
  std::printf("%.2f s\n", std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
  return ok ? 0 : kExitFault;
}

#ifdef RACELAB_HAVE_SERVER
int cmd_serve(const std::string& track_path, const std::string& mode, const std::string& policy_path,
              unsigned short port, const std::string& out, const std::string& static_dir, double duration,
              const std::string& entity) {
  SessionConfig cfg;
  cfg.mode = parse_session_mode(mode);
  cfg.port = port;
  cfg.track = open_track(track_path);
  cfg.out_dir = out;
  cfg.static_dir = static_dir;
  if (!entity.empty()) cfg.entity = entity;
  if (!policy_path.empty()) cfg.policy = std::make_shared<const nn::PolicyNet>(open_policy(policy_path, cfg.env));
  RealtimeServer server(cfg);
  std::printf("serving %s (%s mode) on http://localhost:%u/  websocket /ws\n", cfg.track->name().c_str(),
              mode.c_str(), server.port());
  std::fflush(stdout);
  const auto stats = server.run(duration);
  std::printf("session over: %lld ticks, %.2f s simulated in %.2f s, %lld broadcasts, %lld malformed, %zu laps\n",
              stats.ticks, stats.sim_seconds, stats.wall_seconds, stats.broadcasts, stats.malformed,
              server.session().laps().size());
  return 0;
}
#endif

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"racelab: 2D racing simulator and hybrid imitation/reinforcement learning trainer"};
  app.require_subcommand(1);

  std::string kind, out, track, demos, config, policy, mode = "det", agent, human, static_dir, entity;
  TrackParams params;
  int laps = 10;
  std::uint64_t seed = 0;
  long long cycles = 10000;
  unsigned short port = 8080;
  double duration = 0.0;
  TrainArgs train;

  auto* gen = app.add_subcommand("gen-track", "Generate a track file");
  gen->add_option("--kind", kind, "oval | mini-oasis")->required();
  gen->add_option("--out", out, "Output path")->required();
  gen->add_option("--width", params.width, "Track width (m)");
  gen->add_option("--scale", params.scale, "mini-oasis layout scale");
  gen->add_option("--length-x", params.length_x, "oval centerline extent along x (m)");
  gen->add_option("--length-y", params.length_y, "oval centerline extent along y (m)");

  int demo_laps = 6;
  auto* gdemo = app.add_subcommand("gen-demos", "Record scripted-controller demonstrations");
  gdemo->add_option("--track", track)->required();
  gdemo->add_option("--out", out)->required();
  gdemo->add_option("--config", config, "Trainer config (only env fields are used)");
  gdemo->add_option("--laps", demo_laps, "Laps to record");
  gdemo->add_option("--seed", seed);

  auto* cdemo = app.add_subcommand("check-demos", "Validate a demo file and optionally replay it");
  cdemo->add_option("--demos", demos)->required();
  cdemo->add_option("--track", track, "Replay against this track");
  cdemo->add_option("--config", config);

  auto* tr = app.add_subcommand("train", "Train a policy");
  tr->add_option("--track", train.track)->required();
  tr->add_option("--demos", train.demos, "Demonstration file");
  tr->add_option("--config", train.config, "Trainer config file (defaults otherwise)");
  tr->add_option("--seed", train.seed, "Overrides the config seed");
  tr->add_option("--out", train.out, "Run directory")->required();
  tr->add_option("--max-steps", train.max_steps, "Overrides max_steps");
  tr->add_flag("--stop-after-first-lap", train.stop_after_first_lap, "End the run at the first completed lap");
  tr->add_option("--print-every", train.print_every, "Progress line every n updates (0 = quiet)");

  auto* race = app.add_subcommand("race", "Drive timed laps with a trained policy");
  race->add_option("--policy", policy)->required();
  race->add_option("--track", track)->required();
  race->add_option("--laps", laps);
  race->add_option("--mode", mode, "det | stoch");
  race->add_option("--seed", seed);
  race->add_option("--config", config, "Trainer config (only env fields are used)");
  race->add_option("--out", out)->required();

  auto* cmp = app.add_subcommand("compare", "Compare agent and human lap CSVs");
  cmp->add_option("--agent", agent, "Directory or CSV of agent laps")->required();
  cmp->add_option("--human", human, "Directory or CSV of human laps")->required();
  cmp->add_option("--out", out, "Report CSV")->required();

  auto* lat = app.add_subcommand("latency", "Time the observation-action cycle");
  lat->add_option("--policy", policy)->required();
  lat->add_option("--cycles", cycles);
  lat->add_option("--track", track, "Track (default: generated mini-oasis)");

  app.add_subcommand("gradcheck", "Finite-difference check of every loss gradient");

#ifdef RACELAB_HAVE_SERVER
  auto* serve = app.add_subcommand("serve", "Host a real-time session for the browser client");
  serve->add_option("--track", track)->required();
  serve->add_option("--mode", mode, "record | race | spectate")->required();
  serve->add_option("--policy", policy, "Policy for spectate mode");
  serve->add_option("--port", port);
  serve->add_option("--out", out, "Session artifact directory");
  serve->add_option("--static", static_dir, "Directory of client assets");
  serve->add_option("--duration", duration, "Stop after this many seconds (0 = until stopped)");
  serve->add_option("--entity", entity, "Entity id written to lap records");
#endif

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitValidation;
  }

  try {
    if (gen->parsed()) return cmd_gen_track(kind, params, out);
    if (gdemo->parsed()) return cmd_gen_demos(track, out, config, demo_laps, seed);
    if (cdemo->parsed()) return cmd_check_demos(demos, track, config);
    if (tr->parsed()) return cmd_train(train);
    if (race->parsed()) return cmd_race(policy, track, config, laps, mode, seed, out);
    if (cmp->parsed()) return cmd_compare(agent, human, out);
    if (lat->parsed()) return cmd_latency(policy, track, cycles);
    if (app.got_subcommand("gradcheck")) return cmd_gradcheck();
#ifdef RACELAB_HAVE_SERVER
    if (serve->parsed()) {
      return cmd_serve(track, mode, policy, port, out, static_dir, duration, entity);
    }
#endif
  } catch (const ValidationError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitValidation;
  } catch (const ParseError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitValidation;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "fault: %s\n", e.what());
    return kExitFault;
  }
  return 0;
}
