#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "racelab/demo_store.hpp"
#include "racelab/networks.hpp"
#include "racelab/race_env.hpp"
#include "racelab/race_harness.hpp"

namespace racelab {

enum class SessionMode { kRecord, kRace, kSpectate };
SessionMode parse_session_mode(const std::string& s);
const char* to_string(SessionMode mode);

struct SessionConfig {
  SessionMode mode{SessionMode::kRace};
  double broadcast_hz{30.0};
  unsigned short port{8080};
  std::shared_ptr<const Track> track;
  std::shared_ptr<const nn::PolicyNet> policy;  // spectate only
  EnvConfig env{};
  std::filesystem::path out_dir;  // session artifacts; empty writes nothing
  std::filesystem::path static_dir;
  std::string entity{"human"};
};

// Throws ValidationError: spectate needs a policy, record and race must not have one.
void validate(const SessionConfig& cfg);

struct WireInput {
  int steer{0};
  double client_ts{0.0};  // client clock, ms; echoed back in state messages
};

// Parses a client message into an input. Returns nullopt (and does not throw)
// for anything malformed or out of range.
std::optional<WireInput> parse_wire_input(const std::string& text);

// Latest-wins single-slot input box shared between network readers and the
// tick loop. Never blocks for longer than a copy.
class InputMailbox {
 public:
  void post(const WireInput& in);
  std::optional<WireInput> take();

 private:
  std::mutex mu_;
  std::optional<WireInput> slot_;
};

// Tick-driven session state machine, independent of any transport. The owner
// calls tick() at the physics rate; everything else is thread-safe to call.
class Session {
 public:
  explicit Session(SessionConfig cfg);
  ~Session();
  Session(const Session&) = delete;
  Session& operator=(const Session&) = delete;

  // Handles any client text message: input, control, hello, bye. Malformed
  // messages increment the malformed counter and are otherwise ignored.
  void handle_message(const std::string& text);

  // Advances one physics tick. Returns true when this tick is a broadcast tick.
  bool tick();
  static bool is_broadcast_tick(long long tick, double physics_hz, double broadcast_hz);

  std::string state_message() const;
  std::string hello_message() const;

  // Flushes demos and lap CSVs. Idempotent.
  void finish();
  bool stop_requested() const;

  long long ticks() const { return ticks_; }
  long long malformed() const;
  int held_steer() const { return held_.steer; }
  const RaceEnv& env() const { return env_; }
  const std::vector<LapRecord>& laps() const { return laps_.laps(); }
  const SessionConfig& config() const { return cfg_; }
  double physics_hz() const { return 1.0 / cfg_.env.physics_dt; }

 private:
  void start_decision();
  void end_decision();
  void reset_episode();
  void flush_pending(bool done);

  SessionConfig cfg_;
  RaceEnv env_;
  InputMailbox mailbox_;
  mutable std::mutex control_mu_;
  std::vector<std::string> controls_;
  long long malformed_{0};
  bool stop_{false};

  WireInput held_{};
  long long ticks_{0};
  std::uint64_t episode_{0};
  bool decision_open_{false};
  Observation decision_obs_;
  SteerAction decision_action_;
  double decision_t_{0.0};
  StepEvents last_events_;
  std::vector<std::string> recent_events_;

  std::unique_ptr<DemoRecorder> demos_;
  std::optional<DemoStep> pending_;  // held back one step so a stop can mark it done
  LapRecorder laps_;
  bool finished_{false};
};

}  // namespace racelab
