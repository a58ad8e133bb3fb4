#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "racelab/race_env.hpp"
#include "racelab/rng.hpp"
#include "racelab/scripted_driver.hpp"

namespace racelab {

struct DemoMetadata {
  std::string track;
  double physics_dt{0.01};
  int decision_interval{5};
  double range_max{50.0};
  double v_norm_cap{30.0};
  std::string recorded_by;
  std::string date;  // ISO 8601
  int lap_count{0};
  int episode_count{0};

  // Same format as EnvConfig::normalization_fingerprint.
  std::string fingerprint() const;
  static DemoMetadata for_env(const std::string& track, const EnvConfig& cfg, std::string recorded_by);
};

struct DemoStep {
  Observation obs;
  SteerAction action;
  double t{0.0};
  bool done{false};
  bool operator==(const DemoStep&) const = default;
};

struct Demonstration {
  DemoMetadata metadata;
  std::vector<std::vector<DemoStep>> episodes;

  std::size_t total_steps() const;
};

// Streams a demonstration to disk, one record per line. The metadata line is
// padded so the lap and episode counts can be rewritten in place on close.
class DemoRecorder {
 public:
  DemoRecorder(const std::filesystem::path& path, DemoMetadata metadata);
  ~DemoRecorder();
  DemoRecorder(const DemoRecorder&) = delete;
  DemoRecorder& operator=(const DemoRecorder&) = delete;

  // Opens the next episode. Throws ContractViolation if one is already open.
  void begin_episode();
  // Throws ContractViolation when closed or when no episode is open (including
  // right after a done step); ValidationError for out-of-bounds observations;
  // std::runtime_error on write failure. Flushes when done is set.
  void append_step(const Observation& obs, SteerAction action, double t, bool done);
  void add_laps(int n) { metadata_.lap_count += n; }

  // Any open episode is left unterminated in the file (and rejected by
  // load_demos), so callers should finish episodes with done=true first.
  void close();

  bool open() const { return open_; }
  bool episode_open() const { return episode_open_; }
  std::size_t steps_written() const { return steps_; }
  const DemoMetadata& metadata() const { return metadata_; }

 private:
  void write_header();

  std::filesystem::path path_;
  std::ofstream out_;
  DemoMetadata metadata_;
  bool open_{false};
  bool episode_open_{false};
  std::size_t steps_{0};
};

// Parses and validates a demo file. Errors name the offending line.
Demonstration load_demos(const std::filesystem::path& path);
// As above, and throws ValidationError when the stored fingerprint differs.
Demonstration load_demos(const std::filesystem::path& path, const std::string& expected_fingerprint);
void save_demos(const Demonstration& demos, const std::filesystem::path& path);

// Flattened (obs, action) pairs drawn batch by batch from an epoch-shuffled
// ordering; the tail of each epoch that does not fill a batch is dropped.
class DemoSampler {
 public:
  DemoSampler(const Demonstration& demos, std::uint64_t seed);

  struct Batch {
    std::vector<Observation> obs;
    std::vector<int> actions;  // action indices 0..2
  };
  // Throws ValidationError when the dataset holds fewer than batch_size steps.
  Batch sample_batch(std::size_t batch_size);

  std::size_t size() const { return obs_.size(); }
  std::size_t epoch() const { return epoch_; }

 private:
  void reshuffle();

  std::vector<Observation> obs_;
  std::vector<int> actions_;
  std::vector<std::size_t> order_;
  std::size_t cursor_{0};
  std::size_t epoch_{0};
  Rng rng_;
};

// Replays every episode's recorded actions through a fresh environment reset
// with seed first_seed + episode index and compares observations bit for bit.
// Returns the flat index of the first mismatching record, or nullopt.
std::optional<std::size_t> replay_mismatch(const Demonstration& demos, std::shared_ptr<const Track> track,
                                           const EnvConfig& cfg, std::uint64_t first_seed = 0);

struct ScriptedDemoOptions {
  int laps{6};
  std::uint64_t seed{0};
  int max_steps_per_episode{20000};
};

// Drives the scripted controller until `laps` laps have been completed and
// records every decision step. Throws TrainingFault if the controller crashes.
DemoMetadata record_scripted_demos(std::shared_ptr<const Track> track, const EnvConfig& cfg,
                                   const ScriptedDemoOptions& options, const std::filesystem::path& path);

}  // namespace racelab
