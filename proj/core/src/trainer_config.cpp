#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

#include <fmt/format.h>

#include "format.hpp"
#include "racelab/errors.hpp"
#include "racelab/hybrid_trainer.hpp"

namespace racelab {
namespace {

struct Field {
  const char* key;
  std::function<void(TrainerConfig&, const std::string&)> set;
  std::function<std::string(const TrainerConfig&)> get;
};

double to_double(const std::string& key, const std::string& v) {
  double out = 0.0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) throw ParseError("config: " + key + ": not a number: " + v);
  return out;
}

long long to_int(const std::string& key, const std::string& v) {
  // Accept 5e6-style literals as long as they are integral.
  const double d = to_double(key, v);
  const auto i = static_cast<long long>(d);
  if (static_cast<double>(i) != d) throw ParseError("config: " + key + ": not an integer: " + v);
  return i;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ParseError("config: " + key + ": not a boolean: " + v);
}

template <typename T>
Field number(const char* key, T TrainerConfig::*member) {
  return {key,
          [key, member](TrainerConfig& c, const std::string& v) {
            if constexpr (std::is_floating_point_v<T>) c.*member = to_double(key, v);
            else c.*member = static_cast<T>(to_int(key, v));
          },
          [member](const TrainerConfig& c) {
            if constexpr (std::is_floating_point_v<T>) return detail::fmt_exact(c.*member);
            else return std::to_string(c.*member);
          }};
}

template <typename T>
Field env_number(const char* key, T EnvConfig::*member) {
  return {key,
          [key, member](TrainerConfig& c, const std::string& v) {
            if constexpr (std::is_same_v<T, bool>) c.env.*member = to_bool(key, v);
            else if constexpr (std::is_floating_point_v<T>) c.env.*member = to_double(key, v);
            else c.env.*member = static_cast<T>(to_int(key, v));
          },
          [member](const TrainerConfig& c) {
            if constexpr (std::is_same_v<T, bool>) return std::string(c.env.*member ? "true" : "false");
            else if constexpr (std::is_floating_point_v<T>) return detail::fmt_exact(c.env.*member);
            else return std::to_string(c.env.*member);
          }};
}

template <typename T>
Field stream(const char* key, RewardStreamConfig TrainerConfig::*s, T RewardStreamConfig::*member) {
  return {key,
          [key, s, member](TrainerConfig& c, const std::string& v) {
            if constexpr (std::is_floating_point_v<T>) (c.*s).*member = to_double(key, v);
            else (c.*s).*member = static_cast<T>(to_int(key, v));
          },
          [s, member](const TrainerConfig& c) {
            if constexpr (std::is_floating_point_v<T>) return detail::fmt_exact((c.*s).*member);
            else return std::to_string((c.*s).*member);
          }};
}

Field text(const char* key, std::string TrainerConfig::*member) {
  return {key, [member](TrainerConfig& c, const std::string& v) { c.*member = v; },
          [member](const TrainerConfig& c) { return c.*member; }};
}

const std::vector<Field>& fields() {
  using C = TrainerConfig;
  using S = RewardStreamConfig;
  static const std::vector<Field> f = {
      number("batch_size", &C::batch_size),
      number("buffer_size", &C::buffer_size),
      number("lr", &C::lr),
      number("entropy_beta", &C::entropy_beta),
      number("clip_epsilon", &C::clip_epsilon),
      number("gae_lambda", &C::gae_lambda),
      number("epochs", &C::epochs),
      number("max_steps", &C::max_steps),
      number("bc_strength", &C::bc_strength),
      stream("extrinsic.gamma", &C::extrinsic, &S::gamma),
      stream("extrinsic.strength", &C::extrinsic, &S::strength),
      stream("gail.gamma", &C::gail, &S::gamma),
      stream("gail.strength", &C::gail, &S::strength),
      stream("gail.encoding", &C::gail, &S::encoding),
      stream("gail.lr", &C::gail, &S::lr),
      stream("curiosity.gamma", &C::curiosity, &S::gamma),
      stream("curiosity.strength", &C::curiosity, &S::strength),
      stream("curiosity.encoding", &C::curiosity, &S::encoding),
      stream("curiosity.lr", &C::curiosity, &S::lr),
      number("seed", &C::seed),
      text("demo_path", &C::demo_path),
      text("track_path", &C::track_path),
      number("num_envs", &C::num_envs),
      number("hidden_units", &C::hidden_units),
      number("hidden_layers", &C::hidden_layers),
      number("value_coeff", &C::value_coeff),
      number("grad_clip", &C::grad_clip),
      number("icm_forward_weight", &C::icm_forward_weight),
      number("icm_inverse_weight", &C::icm_inverse_weight),
      number("bc_interval", &C::bc_interval),
      number("checkpoint_interval", &C::checkpoint_interval),
      env_number("env.physics_dt", &EnvConfig::physics_dt),
      env_number("env.decision_interval", &EnvConfig::decision_interval),
      env_number("env.max_decision_steps", &EnvConfig::max_decision_steps),
      env_number("env.r_collision", &EnvConfig::r_collision),
      env_number("env.r_checkpoint", &EnvConfig::r_checkpoint),
      env_number("env.r_best_lap", &EnvConfig::r_best_lap),
      env_number("env.velocity_coeff", &EnvConfig::velocity_coeff),
      env_number("env.range_max", &EnvConfig::range_max),
      env_number("env.v_norm_cap", &EnvConfig::v_norm_cap),
      env_number("env.collision_terminates", &EnvConfig::collision_terminates),
      env_number("env.spawn_jitter", &EnvConfig::spawn_jitter),
  };
  return f;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

std::string TrainerConfig::to_text() const {
  std::string out;
  for (const auto& f : fields()) out += std::string(f.key) + " = " + f.get(*this) + "\n";
  return out;
}

std::string TrainerConfig::fingerprint() const {
  std::string out = env.normalization_fingerprint() + "|";
  bool first = true;
  for (const auto& f : fields()) {
    const std::string key = f.key;
    // Paths and the seed identify a run, not a configuration.
    if (key == "seed" || key == "demo_path" || key == "track_path") continue;
    if (!first) out += ';';
    out += key + "=" + f.get(*this);
    first = false;
  }
  return out;
}

std::string normalization_part(const std::string& fingerprint) {
  return fingerprint.substr(0, fingerprint.find('|'));
}

void validate(const TrainerConfig& c) {
  const auto fail = [](const std::string& m) { throw ValidationError("trainer config: " + m); };
  if (c.batch_size < 1) fail("batch_size must be positive");
  if (c.buffer_size < 1 || c.buffer_size % c.batch_size != 0) fail("buffer_size must be a multiple of batch_size");
  if (c.num_envs < 1 || c.buffer_size % c.num_envs != 0) fail("buffer_size must be a multiple of num_envs");
  if (!(c.lr >= 0.0)) fail("lr must be non-negative");
  if (!(c.entropy_beta >= 0.0)) fail("entropy_beta must be non-negative");
  if (!(c.clip_epsilon > 0.0 && c.clip_epsilon < 1.0)) fail("clip_epsilon must be in (0, 1)");
  if (!(c.gae_lambda >= 0.0 && c.gae_lambda <= 1.0)) fail("gae_lambda must be in [0, 1]");
  if (c.epochs < 1) fail("epochs must be positive");
  if (c.max_steps < c.buffer_size) fail("max_steps must be at least buffer_size");
  if (!(c.bc_strength >= 0.0)) fail("bc_strength must be non-negative");
  for (const auto* s : {&c.extrinsic, &c.gail, &c.curiosity}) {
    if (!(s->gamma >= 0.0 && s->gamma <= 1.0)) fail("stream gamma must be in [0, 1]");
    if (!(s->strength >= 0.0)) fail("stream strength must be non-negative");
    if (!(s->lr >= 0.0)) fail("stream lr must be non-negative");
  }
  if (c.gail.encoding < 1 || c.curiosity.encoding < 1) fail("encoding sizes must be positive");
  if (c.hidden_units < 1 || c.hidden_layers < 1) fail("policy architecture must be non-empty");
  if (!(c.grad_clip > 0.0)) fail("grad_clip must be positive");
  if (c.bc_interval < 1) fail("bc_interval must be positive");
  if (c.checkpoint_interval < 1) fail("checkpoint_interval must be positive");
  validate(c.env);
}

TrainerConfig parse_trainer_config(const std::string& text) {
  TrainerConfig cfg;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError(fmt::format("config line {}: expected 'key = value'", lineno));
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    bool found = false;
    for (const auto& f : fields()) {
      if (key == f.key) {
        try {
          f.set(cfg, value);
        } catch (const ParseError& e) {
          throw ParseError(fmt::format("config line {}: {}", lineno, e.what()));
        }
        found = true;
        break;
      }
    }
    if (!found) throw ParseError(fmt::format("config line {}: unknown key '{}'", lineno, key));
  }
  return cfg;
}

TrainerConfig load_trainer_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_trainer_config(ss.str());
}

}  // namespace racelab
