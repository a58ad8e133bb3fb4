#include "racelab/session.hpp"

#include <cmath>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "racelab/errors.hpp"

namespace racelab {

using nlohmann::json;

SessionMode parse_session_mode(const std::string& s) {
  if (s == "record") return SessionMode::kRecord;
  if (s == "race") return SessionMode::kRace;
  if (s == "spectate") return SessionMode::kSpectate;
  throw ValidationError("session mode must be record, race or spectate, got '" + s + "'");
}

const char* to_string(SessionMode mode) {
  switch (mode) {
    case SessionMode::kRecord: return "record";
    case SessionMode::kRace: return "race";
    case SessionMode::kSpectate: return "spectate";
  }
  return "?";
}

void validate(const SessionConfig& cfg) {
  if (!cfg.track) throw ValidationError("session needs a track");
  if (cfg.mode == SessionMode::kSpectate && !cfg.policy) throw ValidationError("spectate mode requires a policy");
  if (cfg.mode != SessionMode::kSpectate && cfg.policy) {
    throw ValidationError(std::string(to_string(cfg.mode)) + " mode takes no policy");
  }
  if (!(cfg.broadcast_hz > 0.0) || cfg.broadcast_hz > 1.0 / cfg.env.physics_dt) {
    throw ValidationError("broadcast rate must be positive and at most the physics rate");
  }
  validate(cfg.env);
}

std::optional<WireInput> parse_wire_input(const std::string& text) {
  const json j = json::parse(text, nullptr, false);
  if (j.is_discarded() || !j.is_object()) return std::nullopt;
  const auto type = j.find("type");
  if (type == j.end() || *type != "input") return std::nullopt;
  const auto steer = j.find("steer");
  if (steer == j.end() || !steer->is_number_integer()) return std::nullopt;
  const auto v = steer->get<long long>();
  if (v < -1 || v > 1) return std::nullopt;
  WireInput in{static_cast<int>(v), 0.0};
  const auto ts = j.find("ts");
  if (ts != j.end()) {
    if (!ts->is_number()) return std::nullopt;
    in.client_ts = ts->get<double>();
  }
  return in;
}

void InputMailbox::post(const WireInput& in) {
  std::lock_guard lock(mu_);
  slot_ = in;
}

std::optional<WireInput> InputMailbox::take() {
  std::lock_guard lock(mu_);
  auto out = slot_;
  slot_.reset();
  return out;
}

// --- session -----------------------------------------------------------------------------------

namespace {

SessionConfig checked(SessionConfig cfg) {
  validate(cfg);
  if (cfg.mode == SessionMode::kSpectate && cfg.entity == "human") cfg.entity = "agent";
  return cfg;
}

}  // namespace

Session::Session(SessionConfig cfg)
    : cfg_(checked(std::move(cfg))), env_(cfg_.track, cfg_.env), laps_(cfg_.entity) {
  if (!cfg_.out_dir.empty()) {
    std::filesystem::create_directories(cfg_.out_dir);
    if (cfg_.mode == SessionMode::kRecord) {
      demos_ = std::make_unique<DemoRecorder>(cfg_.out_dir / "demos.ndjson",
                                              DemoMetadata::for_env(cfg_.track->name(), cfg_.env, cfg_.entity));
    }
  }
  env_.reset(episode_);
}

Session::~Session() {
  try {
    finish();
  } catch (...) {
  }
}

long long Session::malformed() const {
  std::lock_guard lock(control_mu_);
  return malformed_;
}

bool Session::stop_requested() const {
  std::lock_guard lock(control_mu_);
  return stop_;
}

void Session::handle_message(const std::string& text) {
  if (auto in = parse_wire_input(text)) {
    if (cfg_.mode != SessionMode::kSpectate) mailbox_.post(*in);
    return;
  }
  const json j = json::parse(text, nullptr, false);
  std::lock_guard lock(control_mu_);
  if (j.is_discarded() || !j.is_object() || !j.contains("type") || !j["type"].is_string()) {
    ++malformed_;
    return;
  }
  const std::string type = j["type"];
  if (type == "hello" || type == "bye") return;
  if (type == "control" && j.contains("command") && j["command"].is_string()) {
    const std::string cmd = j["command"];
    if (cmd == "reset" || cmd == "stop" || cmd == "start") {
      controls_.push_back(cmd);
      if (cmd == "stop") stop_ = true;
      return;
    }
  }
  ++malformed_;  // unknown type, bad control, or an input that failed validation
}

bool Session::is_broadcast_tick(long long tick, double physics_hz, double broadcast_hz) {
  // Tick k (1-based) broadcasts when floor(k * b / p) advances: a fixed subset
  // of exactly b ticks per p ticks.
  const auto slot = [&](long long k) { return static_cast<long long>(std::floor(k * broadcast_hz / physics_hz + 1e-9)); };
  return slot(tick) > slot(tick - 1);
}

void Session::reset_episode() {
  if (decision_open_) {
    env_.finish_decision();
    decision_open_ = false;
  }
  flush_pending(true);
  laps_.restart();
  env_.reset(++episode_);
}

void Session::start_decision() {
  std::vector<std::string> controls;
  {
    std::lock_guard lock(control_mu_);
    controls.swap(controls_);
  }
  for (const auto& c : controls) {
    if (c == "reset") reset_episode();
  }
  if (auto in = mailbox_.take()) held_ = *in;

  SteerAction action(held_.steer);
  if (cfg_.mode == SessionMode::kSpectate) {
    nn::Matrix x(1, kObsSize);
    for (int i = 0; i < kObsSize; ++i) x(0, i) = env_.observation().values[i];
    const auto logits = cfg_.policy->forward(x).logits;
    action = SteerAction::from_index(nn::argmax(logits.data(), kNumActions));
  }
  decision_obs_ = env_.observation();
  decision_action_ = action;
  decision_t_ = env_.state().t;
  env_.begin_decision(action);
  decision_open_ = true;
}

void Session::flush_pending(bool done) {
  if (!pending_ || !demos_) {
    pending_.reset();
    return;
  }
  if (!demos_->episode_open()) demos_->begin_episode();
  demos_->append_step(pending_->obs, pending_->action, pending_->t, done || pending_->done);
  pending_.reset();
}

void Session::end_decision() {
  const StepResult r = env_.finish_decision();
  decision_open_ = false;
  last_events_ = r.events;
  const std::string ev = r.events.to_string();
  if (!ev.empty()) {
    recent_events_.push_back(ev);
    if (recent_events_.size() > 4) recent_events_.erase(recent_events_.begin());
  }
  laps_.observe(r, env_.state(), decision_action_);
  if (demos_) {
    flush_pending(false);
    pending_ = DemoStep{decision_obs_, decision_action_, decision_t_, r.terminated};
    if (r.events.lap_completed && !r.events.collision) demos_->add_laps(1);
  }
  if (r.terminated) {
    flush_pending(true);
    laps_.restart();
    env_.reset(++episode_);
  }
}

bool Session::tick() {
  if (finished_) throw ContractViolation("tick on a finished session");
  if (!decision_open_) start_decision();
  if (env_.advance_tick()) end_decision();
  ++ticks_;
  return is_broadcast_tick(ticks_, physics_hz(), cfg_.broadcast_hz);
}

std::string Session::state_message() const {
  const auto& s = env_.state();
  json ranges = json::array();
  const Observation& obs = env_.observation();
  for (int i = 0; i < kNumRays; ++i) ranges.push_back(std::round(obs.ray(i) * cfg_.env.range_max * 1000.0) / 1000.0);
  json j = {{"type", "state"},
            {"tick", ticks_},
            {"t", s.t},
            {"mode", to_string(cfg_.mode)},
            {"pose", {{"x", s.pose.x}, {"y", s.pose.y}, {"heading", s.pose.heading}}},
            {"u", forward_speed(s)},
            {"steer", env_.last_action().value()},
            {"steer_angle", s.steer_angle},
            {"ranges", ranges},
            {"lap_time", nullptr},
            {"best_lap", nullptr},
            {"lap_count", env_.laps_completed()},
            {"next_gate", std::string(1, static_cast<char>('A' + env_.next_checkpoint()))},
            {"events", recent_events_},
            {"input_ts", held_.client_ts}};
  if (auto lt = env_.lap_time_now()) j["lap_time"] = *lt;
  if (auto bl = env_.best_lap()) j["best_lap"] = *bl;
  return j.dump();
}

std::string Session::hello_message() const {
  const json j = {{"type", "hello"},
                  {"protocol", 1},
                  {"mode", to_string(cfg_.mode)},
                  {"track", cfg_.track->name()},
                  {"track_url", "/track.json"},
                  {"physics_hz", physics_hz()},
                  {"decision_hz", 1.0 / cfg_.env.decision_period()},
                  {"broadcast_hz", cfg_.broadcast_hz},
                  {"range_max", cfg_.env.range_max}};
  return j.dump();
}

void Session::finish() {
  if (finished_) return;
  finished_ = true;
  if (decision_open_) {
    // Complete the open decision so the recorded step has its outcome.
    while (!env_.advance_tick()) {
    }
    end_decision();
  }
  flush_pending(true);
  if (demos_) demos_->close();
  if (!cfg_.out_dir.empty()) export_lap_csv(laps_.laps(), cfg_.out_dir / "laps.csv");
}

}  // namespace racelab
