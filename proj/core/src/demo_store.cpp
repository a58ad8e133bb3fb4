#include "racelab/demo_store.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <fmt/chrono.h>
#include <fmt/format.h>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

#include "format.hpp"
#include "racelab/errors.hpp"

namespace racelab {
namespace {

constexpr std::size_t kHeaderWidth = 511;  // bytes before the newline

bool obs_in_bounds(const Observation& o, int* bad_index) {
  for (int i = 0; i < kObsSize; ++i) {
    const double v = o.values[i];
    if (!(v >= 0.0 && v <= 1.0)) {
      if (bad_index) *bad_index = i;
      return false;
    }
  }
  return true;
}

nlohmann::json metadata_json(const DemoMetadata& m) {
  return {{"format", "racelab-demo/1"},
          {"track", m.track},
          {"physics_dt", m.physics_dt},
          {"decision_interval", m.decision_interval},
          {"range_max", m.range_max},
          {"v_norm_cap", m.v_norm_cap},
          {"recorded_by", m.recorded_by},
          {"date", m.date},
          {"lap_count", m.lap_count},
          {"episode_count", m.episode_count},
          {"fingerprint", m.fingerprint()}};
}

std::string step_line(const DemoStep& s) {
  std::string line = "{\"o\":[";
  for (int i = 0; i < kObsSize; ++i) {
    if (i) line += ',';
    line += detail::fmt_exact(s.obs.values[i]);
  }
  line += "],\"a\":" + std::to_string(s.action.value()) + ",\"t\":" + detail::fmt_exact(s.t) +
          ",\"d\":" + (s.done ? "1" : "0") + "}\n";
  return line;
}

std::string today_iso() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  return fmt::format("{:%Y-%m-%dT%H:%M:%SZ}", fmt::gmtime(now));
}

}  // namespace

std::string DemoMetadata::fingerprint() const {
  EnvConfig cfg;
  cfg.physics_dt = physics_dt;
  cfg.decision_interval = decision_interval;
  cfg.range_max = range_max;
  cfg.v_norm_cap = v_norm_cap;
  return cfg.normalization_fingerprint();
}

DemoMetadata DemoMetadata::for_env(const std::string& track, const EnvConfig& cfg, std::string recorded_by) {
  DemoMetadata m;
  m.track = track;
  m.physics_dt = cfg.physics_dt;
  m.decision_interval = cfg.decision_interval;
  m.range_max = cfg.range_max;
  m.v_norm_cap = cfg.v_norm_cap;
  m.recorded_by = std::move(recorded_by);
  m.date = today_iso();
  return m;
}

std::size_t Demonstration::total_steps() const {
  return std::accumulate(episodes.begin(), episodes.end(), std::size_t{0},
                         [](std::size_t n, const auto& e) { return n + e.size(); });
}

// --- recorder -------------------------------------------------------------------------

DemoRecorder::DemoRecorder(const std::filesystem::path& path, DemoMetadata metadata)
    : path_(path), metadata_(std::move(metadata)) {
  out_.open(path, std::ios::binary | std::ios::trunc);
  if (!out_) throw std::runtime_error("cannot open demo file for writing: " + path.string());
  open_ = true;
  write_header();
}

DemoRecorder::~DemoRecorder() {
  try {
    close();
  } catch (...) {
  }
}

void DemoRecorder::write_header() {
  std::string header = metadata_json(metadata_).dump();
  if (header.size() > kHeaderWidth) throw ValidationError("demo metadata too long");
  header.resize(kHeaderWidth, ' ');
  header += '\n';
  out_.seekp(0);
  out_.write(header.data(), static_cast<std::streamsize>(header.size()));
  out_.seekp(0, std::ios::end);
  if (!out_) throw std::runtime_error("write failure: " + path_.string());
}

void DemoRecorder::begin_episode() {
  if (!open_) throw ContractViolation("begin_episode on a closed recording");
  if (episode_open_) throw ContractViolation("begin_episode while an episode is open");
  episode_open_ = true;
  ++metadata_.episode_count;
}

void DemoRecorder::append_step(const Observation& obs, SteerAction action, double t, bool done) {
  if (!open_) throw ContractViolation("append_step on a closed recording");
  if (!episode_open_) throw ContractViolation("append_step with no open episode (call begin_episode after done)");
  int bad = 0;
  if (!obs_in_bounds(obs, &bad)) {
    throw ValidationError(fmt::format("demo record {}: observation[{}] = {} outside [0, 1]", steps_, bad,
                                      obs.values[bad]));
  }
  const std::string line = step_line({obs, action, t, done});
  out_.write(line.data(), static_cast<std::streamsize>(line.size()));
  if (!out_) throw std::runtime_error("write failure: " + path_.string());
  ++steps_;
  if (done) {
    episode_open_ = false;
    out_.flush();
  }
}

void DemoRecorder::close() {
  if (!open_) return;
  write_header();
  out_.close();
  open_ = false;
  if (out_.fail()) throw std::runtime_error("write failure: " + path_.string());
}

// --- loading -----------------------------------------------------------------------------

namespace {

DemoMetadata parse_metadata(const std::string& line) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("demo line 1: ") + e.what());
  }
  DemoMetadata m;
  try {
    m.track = j.at("track").get<std::string>();
    m.physics_dt = j.at("physics_dt").get<double>();
    m.decision_interval = j.at("decision_interval").get<int>();
    m.range_max = j.at("range_max").get<double>();
    m.v_norm_cap = j.at("v_norm_cap").get<double>();
    m.recorded_by = j.value("recorded_by", "");
    m.date = j.value("date", "");
    m.lap_count = j.value("lap_count", 0);
    m.episode_count = j.value("episode_count", 0);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("demo line 1: ") + e.what());
  }
  if (j.contains("fingerprint") && j["fingerprint"].get<std::string>() != m.fingerprint()) {
    throw ValidationError("demo line 1: stored fingerprint disagrees with metadata fields");
  }
  return m;
}

DemoStep parse_step(const std::string& line, std::size_t record) {
  const auto where = [&] { return fmt::format("demo record {}", record); };
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(where() + ": " + e.what());
  }
  DemoStep s;
  try {
    const auto& o = j.at("o");
    if (!o.is_array() || o.size() != kObsSize) {
      throw ParseError(fmt::format("{}: expected {} observation values", where(), kObsSize));
    }
    for (int i = 0; i < kObsSize; ++i) s.obs.values[i] = o[i].get<double>();
    const auto& a = j.at("a");
    if (!a.is_number_integer()) throw ParseError(where() + ": action must be an integer");
    try {
      s.action = SteerAction(a.get<int>());
    } catch (const ValidationError&) {
      throw ValidationError(fmt::format("{}: action {} not in {{-1, 0, 1}}", where(), a.dump()));
    }
    s.t = j.at("t").get<double>();
    const int d = j.at("d").get<int>();
    if (d != 0 && d != 1) throw ValidationError(where() + ": done flag must be 0 or 1");
    s.done = d == 1;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(where() + ": " + e.what());
  }
  int bad = 0;
  if (!obs_in_bounds(s.obs, &bad)) {
    throw ValidationError(fmt::format("{}: bounds violation, observation[{}] = {} outside [0, 1]", where(), bad,
                                      s.obs.values[bad]));
  }
  if (!std::isfinite(s.t)) throw ValidationError(where() + ": non-finite time");
  return s;
}

}  // namespace

Demonstration load_demos(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open demo file " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw ParseError("demo file is empty: " + path.string());
  Demonstration d;
  d.metadata = parse_metadata(line);

  std::vector<DemoStep> episode;
  std::size_t record = 0;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    DemoStep s = parse_step(line, record++);
    const bool done = s.done;
    episode.push_back(std::move(s));
    if (done) d.episodes.push_back(std::move(episode)), episode.clear();
  }
  if (!episode.empty()) {
    throw ValidationError(fmt::format("demo record {}: final episode does not end with done=1", record - 1));
  }
  d.metadata.episode_count = static_cast<int>(d.episodes.size());
  return d;
}

Demonstration load_demos(const std::filesystem::path& path, const std::string& expected_fingerprint) {
  Demonstration d = load_demos(path);
  const std::string got = d.metadata.fingerprint();
  if (got != expected_fingerprint) {
    throw ValidationError("demo fingerprint mismatch: file has '" + got + "', environment expects '" +
                          expected_fingerprint + "'");
  }
  return d;
}

void save_demos(const Demonstration& demos, const std::filesystem::path& path) {
  DemoMetadata meta = demos.metadata;
  meta.episode_count = 0;
  DemoRecorder rec(path, meta);
  for (const auto& ep : demos.episodes) {
    rec.begin_episode();
    for (const auto& s : ep) rec.append_step(s.obs, s.action, s.t, s.done);
  }
  rec.close();
}

// --- sampler ------------------------------------------------------------------------------

DemoSampler::DemoSampler(const Demonstration& demos, std::uint64_t seed) : rng_(seed) {
  for (const auto& ep : demos.episodes) {
    for (const auto& s : ep) {
      obs_.push_back(s.obs);
      actions_.push_back(s.action.index());
    }
  }
  order_.resize(obs_.size());
  reshuffle();
  epoch_ = 0;
}

void DemoSampler::reshuffle() {
  std::iota(order_.begin(), order_.end(), std::size_t{0});
  rng_.shuffle(order_.begin(), order_.end());
  cursor_ = 0;
  ++epoch_;
}

DemoSampler::Batch DemoSampler::sample_batch(std::size_t batch_size) {
  if (batch_size == 0) throw ContractViolation("sample_batch: batch_size must be positive");
  if (obs_.size() < batch_size) {
    throw ValidationError(fmt::format("insufficient demonstration data: {} steps, batch of {}", obs_.size(),
                                      batch_size));
  }
  if (cursor_ + batch_size > order_.size()) reshuffle();
  Batch b;
  b.obs.reserve(batch_size);
  b.actions.reserve(batch_size);
  for (std::size_t i = 0; i < batch_size; ++i) {
    const std::size_t k = order_[cursor_ + i];
    b.obs.push_back(obs_[k]);
    b.actions.push_back(actions_[k]);
  }
  cursor_ += batch_size;
  return b;
}

std::optional<std::size_t> replay_mismatch(const Demonstration& demos, std::shared_ptr<const Track> track,
                                           const EnvConfig& cfg, std::uint64_t first_seed) {
  EnvConfig run_cfg = cfg;
  run_cfg.max_decision_steps = std::numeric_limits<int>::max();
  RaceEnv env(std::move(track), run_cfg);
  std::size_t flat = 0;
  for (std::size_t e = 0; e < demos.episodes.size(); ++e) {
    Observation obs = env.reset(first_seed + e);
    for (const auto& s : demos.episodes[e]) {
      if (env.terminated() || !(obs == s.obs)) return flat;
      obs = env.step(s.action).obs;
      ++flat;
    }
  }
  return std::nullopt;
}

// --- scripted demonstrations ----------------------------------------------------------------

DemoMetadata record_scripted_demos(std::shared_ptr<const Track> track, const EnvConfig& cfg,
                                   const ScriptedDemoOptions& options, const std::filesystem::path& path) {
  EnvConfig run_cfg = cfg;
  run_cfg.max_decision_steps = options.max_steps_per_episode;
  RaceEnv env(track, run_cfg);
  ScriptedDriver driver;
  DemoRecorder rec(path, DemoMetadata::for_env(track->name(), cfg, "scripted"));
  int laps = 0;
  std::uint64_t episode_seed = options.seed;
  while (laps < options.laps) {
    Observation obs = env.reset(episode_seed++);
    driver.reset();
    rec.begin_episode();
    const int laps_before = laps;
    for (;;) {
      const SteerAction a = driver.act(obs);
      const double t = env.state().t;
      const StepResult r = env.step(a);
      if (r.events.collision) {
        throw TrainingFault(fmt::format("scripted driver collided at t = {:.2f} s on {}", env.state().t,
                                        track->name()));
      }
      if (r.events.lap_completed) {
        ++laps;
        rec.add_laps(1);
      }
      const bool done = r.terminated || r.truncated || laps >= options.laps;
      rec.append_step(obs, a, t, done);
      obs = r.obs;
      if (done) break;
    }
    if (laps == laps_before) throw TrainingFault("scripted driver completed no lap within an episode");
  }
  rec.close();
  return rec.metadata();
}

}  // namespace racelab
