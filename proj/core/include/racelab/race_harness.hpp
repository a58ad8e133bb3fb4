#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include "racelab/networks.hpp"
#include "racelab/race_env.hpp"

namespace racelab {

struct LapSample {
  double t{0.0};
  double x{0.0};
  double y{0.0};
  double u{0.0};
  int steer_cmd{0};
  double steer_angle{0.0};
  bool operator==(const LapSample&) const = default;
};

// One N-to-N lap.
struct LapRecord {
  std::string entity;
  int lap{0};
  double lap_time{0.0};
  std::vector<LapSample> samples;

  // Arithmetic mean of the sampled forward speeds.
  double mean_speed() const;
  bool operator==(const LapRecord&) const = default;
};

// Collects flying laps from a running environment: the lap that starts at the
// first gate-N crossing is the first one recorded, so the standing-start
// opening lap is never reported.
class LapRecorder {
 public:
  explicit LapRecorder(std::string entity) : entity_(std::move(entity)) {}

  // Call after every decision step with the step's result and the env state.
  // Returns true when the step completed a recorded lap.
  bool observe(const StepResult& result, const VehicleState& state, SteerAction action);
  void restart();  // new episode: discard the partial lap

  const std::vector<LapRecord>& laps() const { return laps_; }
  std::vector<LapRecord>& laps() { return laps_; }

 private:
  std::string entity_;
  std::vector<LapRecord> laps_;
  std::vector<LapSample> current_;
  bool flying_{false};
};

enum class PolicyMode { kDeterministic, kStochastic };
PolicyMode parse_policy_mode(const std::string& s);  // "det" | "stoch"
const char* to_string(PolicyMode mode);

struct RaceOutcome {
  std::vector<LapRecord> laps;
  bool success{false};
  std::string failure;  // empty on success
  int collisions{0};
  long long decision_steps{0};
  PolicyMode mode{PolicyMode::kDeterministic};
};

struct RaceOptions {
  int laps{10};
  PolicyMode mode{PolicyMode::kDeterministic};
  std::uint64_t seed{0};
  // 0 picks 3000 decision steps per requested lap plus one for the out-lap.
  long long step_budget{0};
  std::string entity{"agent"};
  std::ostream* trajectory{nullptr};  // optional per-step trajectory CSV
};

// Never throws for a collision or timeout: the outcome carries the partial laps
// and a failure description instead.
RaceOutcome run_autonomous_laps(const nn::PolicyNet& policy, std::shared_ptr<const Track> track,
                                const EnvConfig& cfg, const RaceOptions& options);

struct EntityStats {
  std::string entity;
  int laps{0};
  double mean_lap_time{0.0};
  double best_lap_time{0.0};
};

struct PairDelta {
  std::string agent;
  std::string human;
  double mean_delta{0.0};  // agent mean - human mean
  double best_delta{0.0};  // agent best - human best
};

struct RaceReport {
  std::vector<EntityStats> agents;  // sorted by entity
  std::vector<EntityStats> humans;  // sorted by entity
  EntityStats agent_pool;           // all agent laps together
  EntityStats human_pool;
  std::vector<PairDelta> deltas;    // every agent x human pair, then pool vs pool
};

EntityStats lap_stats(const std::string& entity, const std::vector<LapRecord>& laps);
// Throws ValidationError if either side is empty.
RaceReport compare_reports(const std::vector<LapRecord>& agent_laps, const std::vector<LapRecord>& human_laps);
void write_report_csv(const RaceReport& report, std::ostream& out);

const char* lap_csv_header();
void export_lap_csv(const std::vector<LapRecord>& laps, std::ostream& out);
void export_lap_csv(const std::vector<LapRecord>& laps, const std::filesystem::path& path);
// Reads laps back; each lap needs its summary row. Throws ParseError / ValidationError.
std::vector<LapRecord> import_lap_csv(std::istream& in, const std::string& source = "lap csv");
std::vector<LapRecord> import_lap_csv(const std::filesystem::path& path);
// Every *.csv under dir whose header is the lap CSV header, in path order.
std::vector<LapRecord> import_lap_dir(const std::filesystem::path& dir);

struct LatencyReport {
  long long cycles{0};
  double mean_ms{0.0};
  double p99_ms{0.0};
  double max_ms{0.0};
};
// Times sense -> forward -> argmax against a live environment that keeps
// driving (and resetting) between timed cycles.
LatencyReport measure_latency(const nn::PolicyNet& policy, std::shared_ptr<const Track> track,
                              const EnvConfig& cfg, long long n_cycles);

}  // namespace racelab
