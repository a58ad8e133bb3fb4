#include "racelab/race_harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include <fmt/format.h>

#include "format.hpp"
#include "racelab/errors.hpp"

namespace racelab {

double LapRecord::mean_speed() const {
  if (samples.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& s : samples) sum += s.u;
  return sum / static_cast<double>(samples.size());
}

// --- lap recording ------------------------------------------------------------------------------

bool LapRecorder::observe(const StepResult& r, const VehicleState& state, SteerAction action) {
  const bool crossed_n = r.events.checkpoint && *r.events.checkpoint == 'N';
  if (flying_) {
    current_.push_back({state.t, state.pose.x, state.pose.y, forward_speed(state), action.value(),
                        state.steer_angle});
  }
  bool completed = false;
  if (crossed_n && r.events.lap_completed && !r.events.collision) {
    if (flying_) {
      laps_.push_back({entity_, static_cast<int>(laps_.size()) + 1, *r.events.lap_completed, std::move(current_)});
      completed = true;
    }
    // The crossing step closes one lap and opens the next, so both share it.
    current_.assign(1, {state.t, state.pose.x, state.pose.y, forward_speed(state), action.value(), state.steer_angle});
    flying_ = true;
  }
  if (r.terminated) restart();
  return completed;
}

void LapRecorder::restart() {
  current_.clear();
  flying_ = false;
}

PolicyMode parse_policy_mode(const std::string& s) {
  if (s == "det" || s == "deterministic") return PolicyMode::kDeterministic;
  if (s == "stoch" || s == "stochastic") return PolicyMode::kStochastic;
  throw ValidationError("mode must be det or stoch, got '" + s + "'");
}

const char* to_string(PolicyMode mode) { return mode == PolicyMode::kDeterministic ? "det" : "stoch"; }

RaceOutcome run_autonomous_laps(const nn::PolicyNet& policy, std::shared_ptr<const Track> track,
                                const EnvConfig& cfg, const RaceOptions& options) {
  if (options.laps < 1) throw ValidationError("laps must be at least 1");
  const long long budget =
      options.step_budget > 0 ? options.step_budget : 3000LL * (static_cast<long long>(options.laps) + 1);
  EnvConfig run_cfg = cfg;
  run_cfg.max_decision_steps = static_cast<int>(std::min<long long>(budget, 1'000'000'000));
  RaceEnv env(std::move(track), run_cfg);
  if (options.trajectory) env.set_trajectory_log(options.trajectory);
  Rng rng(options.seed);
  LapRecorder recorder(options.entity);

  RaceOutcome out;
  out.mode = options.mode;
  Observation obs = env.reset(options.seed);
  nn::Matrix x(1, kObsSize);
  while (static_cast<int>(recorder.laps().size()) < options.laps) {
    for (int i = 0; i < kObsSize; ++i) x(0, i) = obs.values[i];
    const auto logits = policy.forward(x).logits;
    const int index = options.mode == PolicyMode::kDeterministic
                          ? nn::argmax(logits.data(), kNumActions)
                          : nn::sample_action(logits.data(), kNumActions, rng).index;
    const SteerAction action = SteerAction::from_index(index);
    const StepResult r = env.step(action);
    ++out.decision_steps;
    recorder.observe(r, env.state(), action);
    obs = r.obs;
    if (r.events.collision) {
      ++out.collisions;
      out.failure = fmt::format("collision at t = {:.2f} s, ({:.1f}, {:.1f}), after {} completed laps",
                                env.state().t, env.state().pose.x, env.state().pose.y, recorder.laps().size());
      break;
    }
    if (r.terminated) {
      out.failure = fmt::format("timeout: {} of {} laps after {} decision steps (t = {:.1f} s, next gate {}, "
                                "u = {:.2f} m/s)",
                                recorder.laps().size(), options.laps, out.decision_steps, env.state().t,
                                static_cast<char>('A' + env.next_checkpoint()), forward_speed(env.state()));
      break;
    }
  }
  out.laps = recorder.laps();
  out.success = out.failure.empty();
  return out;
}

// --- reports ---------------------------------------------------------------------------------------

EntityStats lap_stats(const std::string& entity, const std::vector<LapRecord>& laps) {
  if (laps.empty()) throw ValidationError("no laps for " + entity);
  EntityStats s{entity, static_cast<int>(laps.size()), 0.0, laps.front().lap_time};
  for (const auto& l : laps) {
    s.mean_lap_time += l.lap_time;
    s.best_lap_time = std::min(s.best_lap_time, l.lap_time);
  }
  s.mean_lap_time /= static_cast<double>(laps.size());
  return s;
}

namespace {

std::map<std::string, std::vector<LapRecord>> by_entity(const std::vector<LapRecord>& laps) {
  std::map<std::string, std::vector<LapRecord>> out;
  for (const auto& l : laps) out[l.entity].push_back(l);
  for (auto& [_, v] : out) {
    std::stable_sort(v.begin(), v.end(), [](const LapRecord& a, const LapRecord& b) { return a.lap < b.lap; });
  }
  return out;
}

std::vector<LapRecord> pooled(const std::map<std::string, std::vector<LapRecord>>& groups) {
  std::vector<LapRecord> all;
  for (const auto& [_, v] : groups) all.insert(all.end(), v.begin(), v.end());
  return all;
}

}  // namespace

RaceReport compare_reports(const std::vector<LapRecord>& agent_laps, const std::vector<LapRecord>& human_laps) {
  if (agent_laps.empty()) throw ValidationError("compare: no agent laps");
  if (human_laps.empty()) throw ValidationError("compare: no human laps");
  const auto agents = by_entity(agent_laps);
  const auto humans = by_entity(human_laps);
  RaceReport r;
  for (const auto& [e, v] : agents) r.agents.push_back(lap_stats(e, v));
  for (const auto& [e, v] : humans) r.humans.push_back(lap_stats(e, v));
  r.agent_pool = lap_stats("all-agents", pooled(agents));
  r.human_pool = lap_stats("all-humans", pooled(humans));
  const auto delta = [](const EntityStats& a, const EntityStats& h) {
    return PairDelta{a.entity, h.entity, a.mean_lap_time - h.mean_lap_time, a.best_lap_time - h.best_lap_time};
  };
  for (const auto& a : r.agents) {
    for (const auto& h : r.humans) r.deltas.push_back(delta(a, h));
  }
  r.deltas.push_back(delta(r.agent_pool, r.human_pool));
  return r;
}

void write_report_csv(const RaceReport& r, std::ostream& out) {
  out << "section,entity,versus,laps,mean_lap_time,best_lap_time,mean_delta,best_delta\n";
  const auto row = [&](const char* section, const EntityStats& s) {
    out << section << ',' << s.entity << ",," << s.laps << ',' << detail::fmt_exact(s.mean_lap_time) << ','
        << detail::fmt_exact(s.best_lap_time) << ",,\n";
  };
  for (const auto& s : r.agents) row("agent", s);
  for (const auto& s : r.humans) row("human", s);
  row("agent_pool", r.agent_pool);
  row("human_pool", r.human_pool);
  for (const auto& d : r.deltas) {
    out << "delta," << d.agent << ',' << d.human << ",,,," << detail::fmt_exact(d.mean_delta) << ','
        << detail::fmt_exact(d.best_delta) << '\n';
  }
}

// --- lap CSV ------------------------------------------------------------------------------------------

const char* lap_csv_header() { return "entity,lap,t,x,y,u,steer_cmd,steer_angle"; }

void export_lap_csv(const std::vector<LapRecord>& laps, std::ostream& out) {
  out << lap_csv_header() << '\n';
  for (const auto& l : laps) {
    if (!(l.lap_time > 0.0)) throw ValidationError(fmt::format("lap {} of {}: lap_time must be positive", l.lap, l.entity));
    if (l.entity.find(',') != std::string::npos) throw ValidationError("entity ids cannot contain commas");
    for (const auto& s : l.samples) {
      out << l.entity << ',' << l.lap << ',' << detail::fmt_exact(s.t) << ',' << detail::fmt_exact(s.x) << ','
          << detail::fmt_exact(s.y) << ',' << detail::fmt_exact(s.u) << ',' << s.steer_cmd << ','
          << detail::fmt_exact(s.steer_angle) << '\n';
    }
    // Summary row: t holds the lap time and u the lap's mean speed.
    out << l.entity << ',' << l.lap << ":summary," << detail::fmt_exact(l.lap_time) << ",,,"
        << detail::fmt_exact(l.mean_speed()) << ",,\n";
  }
}

void export_lap_csv(const std::vector<LapRecord>& laps, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  export_lap_csv(laps, out);
}

namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

double parse_num(const std::string& s, const std::string& where) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ParseError(where + ": not a number: '" + s + "'");
  }
}

}  // namespace

std::vector<LapRecord> import_lap_csv(std::istream& in, const std::string& source) {
  std::string line;
  if (!std::getline(in, line)) throw ParseError(source + ": empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != lap_csv_header()) throw ParseError(source + ": unexpected header '" + line + "'");
  std::vector<LapRecord> laps;
  LapRecord current;
  bool open = false;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::string where = fmt::format("{} line {}", source, lineno);
    const auto c = split_csv(line);
    if (c.size() != 8) throw ParseError(where + ": expected 8 columns");
    const bool summary = c[1].size() > 8 && c[1].ends_with(":summary");
    const std::string lap_text = summary ? c[1].substr(0, c[1].size() - 8) : c[1];
    const int lap = static_cast<int>(parse_num(lap_text, where));
    if (open && (current.entity != c[0] || current.lap != lap)) {
      throw ValidationError(where + ": lap " + std::to_string(current.lap) + " of " + current.entity +
                            " has no summary row");
    }
    if (!open) {
      current = LapRecord{c[0], lap, 0.0, {}};
      open = true;
    }
    if (summary) {
      current.lap_time = parse_num(c[2], where);
      if (!(current.lap_time > 0.0)) throw ValidationError(where + ": lap_time must be positive");
      laps.push_back(std::move(current));
      open = false;
      continue;
    }
    LapSample s{parse_num(c[2], where), parse_num(c[3], where), parse_num(c[4], where),
                parse_num(c[5], where), static_cast<int>(parse_num(c[6], where)), parse_num(c[7], where)};
    if (!current.samples.empty() && s.t < current.samples.back().t) {
      throw ValidationError(where + ": samples are not time-ordered");
    }
    current.samples.push_back(s);
  }
  if (open) throw ValidationError(source + ": final lap has no summary row");
  return laps;
}

std::vector<LapRecord> import_lap_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path.string());
  return import_lap_csv(in, path.string());
}

std::vector<LapRecord> import_lap_dir(const std::filesystem::path& dir) {
  if (std::filesystem::is_regular_file(dir)) return import_lap_csv(dir);
  if (!std::filesystem::is_directory(dir)) throw ValidationError("not a directory: " + dir.string());
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::recursive_directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".csv") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<LapRecord> laps;
  for (const auto& f : files) {
    std::ifstream in(f);
    std::string header;
    std::getline(in, header);
    if (!header.empty() && header.back() == '\r') header.pop_back();
    if (header != lap_csv_header()) continue;
    auto part = import_lap_csv(f);
    laps.insert(laps.end(), part.begin(), part.end());
  }
  return laps;
}

// --- latency ------------------------------------------------------------------------------------------

LatencyReport measure_latency(const nn::PolicyNet& policy, std::shared_ptr<const Track> track,
                              const EnvConfig& cfg, long long n_cycles) {
  if (n_cycles < 1) throw ValidationError("cycles must be positive");
  RaceEnv env(track, cfg);
  env.reset(0);
  std::uint64_t episode = 0;
  std::vector<double> ms;
  ms.reserve(static_cast<std::size_t>(n_cycles));
  nn::Matrix x(1, kObsSize);
  using clock = std::chrono::steady_clock;
  // Untimed warm-up cycles fault in caches and allocations first.
  constexpr long long kWarmup = 100;
  for (long long k = -kWarmup; k < n_cycles; ++k) {
    const auto t0 = clock::now();
    const Observation obs = sense(env.track(), env.state(), env.config());
    for (int i = 0; i < kObsSize; ++i) x(0, i) = obs.values[i];
    const auto logits = policy.forward(x).logits;
    const int index = nn::argmax(logits.data(), kNumActions);
    const auto t1 = clock::now();
    if (k >= 0) ms.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
    if (env.step(SteerAction::from_index(index)).terminated) env.reset(++episode);
  }
  LatencyReport r;
  r.cycles = static_cast<long long>(ms.size());
  for (double v : ms) r.mean_ms += v;
  r.mean_ms /= static_cast<double>(ms.size());
  std::vector<double> sorted = ms;
  std::sort(sorted.begin(), sorted.end());
  const auto rank = static_cast<std::size_t>(std::ceil(0.99 * static_cast<double>(sorted.size())));
  r.p99_ms = sorted[std::max<std::size_t>(rank, 1) - 1];
  r.max_ms = sorted.back();
  return r;
}

}  // namespace racelab
