#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "racelab/demo_store.hpp"
#include "racelab/networks.hpp"
#include "racelab/race_env.hpp"

namespace racelab {

struct RewardStreamConfig {
  double gamma{0.99};
  double strength{1.0};
  int encoding{0};  // hidden width of the stream's auxiliary network, 0 if none
  double lr{3e-4};
};

struct TrainerConfig {
  int batch_size{64};
  int buffer_size{1024};
  double lr{3e-4};  // decays linearly to 0 at max_steps
  double entropy_beta{0.01};
  double clip_epsilon{0.2};
  double gae_lambda{0.97};
  int epochs{3};
  long long max_steps{5'000'000};
  double bc_strength{0.5};
  RewardStreamConfig extrinsic{0.99, 1.0, 0, 3e-4};
  RewardStreamConfig gail{0.99, 0.01, 128, 3e-4};
  RewardStreamConfig curiosity{0.99, 0.02, 256, 3e-4};
  std::uint64_t seed{0};
  EnvConfig env{};
  std::string demo_path;
  std::string track_path;

  // Not in the hyperparameter table; declared here so they are recorded with runs.
  int num_envs{4};
  int hidden_units{128};
  int hidden_layers{2};
  double value_coeff{0.5};
  double grad_clip{10.0};
  double icm_forward_weight{0.2};
  double icm_inverse_weight{0.8};
  int bc_interval{1};  // BC phase after every n-th PPO update
  int checkpoint_interval{50};

  // Normalization fingerprint, then '|', then the training hyperparameters.
  std::string fingerprint() const;
  // `key = value` lines, one per field; parse_trainer_config reads it back.
  std::string to_text() const;
};

void validate(const TrainerConfig& cfg);
// Unspecified keys keep their defaults. Unknown keys and bad values throw ParseError.
TrainerConfig parse_trainer_config(const std::string& text);
TrainerConfig load_trainer_config(const std::filesystem::path& path);

// Everything before the '|' of a stored fingerprint.
std::string normalization_part(const std::string& fingerprint);

// Decision-step records for one policy update. Each environment's steps are
// stored contiguously: row = env * steps_per_env + t.
struct RolloutBuffer {
  RolloutBuffer(int capacity, int num_envs);

  int capacity;
  int num_envs;
  int steps_per_env;
  int filled{0};

  std::vector<Observation> obs;
  std::vector<Observation> next_obs;  // observation after the step (pre-reset)
  std::vector<int> actions;           // indices 0..2
  nn::Vector log_probs;
  nn::Matrix rewards;  // N x 3 raw rewards: extrinsic, gail, curiosity
  nn::Matrix values;   // N x 3 value-head outputs at collection time
  std::vector<std::uint8_t> dones;      // episode ended at this step
  std::vector<std::uint8_t> truncated;  // ended by the step limit
  nn::Matrix truncation_values;         // N x 3, V(next_obs) for truncated rows
  nn::Matrix bootstrap;                 // num_envs x 3, V(obs) after the final step
  nn::Matrix advantages;                // N x 3
  nn::Matrix returns;                   // N x 3

  int row(int env, int t) const { return env * steps_per_env + t; }
  bool full() const { return filled == capacity; }
};

struct GaeResult {
  std::vector<double> advantages;
  std::vector<double> returns;
};

// delta_t = r_t + gamma V_{t+1} (1 - done_t) - V_t, A_t = delta_t + gamma lambda (1 - done_t) A_{t+1},
// with V_T = bootstrap_value. returns = advantages + values.
GaeResult compute_gae(const std::vector<double>& rewards, const std::vector<double>& values,
                      const std::vector<std::uint8_t>& dones, double bootstrap_value, double gamma,
                      double lambda);

// -ln(1 - D + 1e-7) clamped to [0, 10].
double gail_reward(double d);
nn::Vector gail_rewards(const nn::Discriminator& disc, const nn::Matrix& obs, const std::vector<int>& actions);

struct DiscriminatorStats {
  double loss{0.0};
  double demo_accuracy{0.0};
  double policy_accuracy{0.0};
};
// One epoch over the buffer: each policy minibatch is paired with an equally
// sized demo batch, labels 1 (demo) and 0 (policy).
DiscriminatorStats update_discriminator(nn::Discriminator& disc, nn::AdamState& adam, DemoSampler& demos,
                                        const RolloutBuffer& buffer, const TrainerConfig& cfg, Rng& rng);

struct IcmStats {
  double forward_loss{0.0};
  double inverse_loss{0.0};
  double inverse_accuracy{0.0};
};
IcmStats update_icm(nn::IcmNets& icm, nn::AdamState& adam, const RolloutBuffer& buffer,
                    const TrainerConfig& cfg, Rng& rng);

// Fills the GAIL and curiosity reward columns from the current networks.
void score_intrinsic_rewards(RolloutBuffer& buffer, const nn::Discriminator* disc, const nn::IcmNets* icm);

// Per-stream GAE into buffer.advantages / buffer.returns.
void compute_advantages(RolloutBuffer& buffer, const TrainerConfig& cfg);

// strength-weighted sum of stream advantages, normalized to zero mean, unit variance.
nn::Vector combined_advantages(const RolloutBuffer& buffer, const TrainerConfig& cfg);

struct PpoStats {
  double policy_loss{0.0};
  double value_loss{0.0};
  double entropy{0.0};
  double clip_fraction{0.0};
  double approx_kl{0.0};
  double grad_norm{0.0};
};
PpoStats ppo_update(nn::PolicyNet& policy, nn::AdamState& adam, const RolloutBuffer& buffer,
                    const TrainerConfig& cfg, double progress, Rng& rng);

// Cross-entropy of demo actions; returns the mean unscaled loss. The loss is
// scaled by bc_strength, and since Adam is invariant to loss scale the step
// size is scaled by it as well.
double bc_update(nn::PolicyNet& policy, nn::AdamState& adam, DemoSampler& demos, std::size_t demo_steps,
                 const TrainerConfig& cfg, double progress);

double learning_rate(const TrainerConfig& cfg, double progress);

// Runs environments under a fixed policy snapshot, round-robin over envs.
class RolloutCollector {
 public:
  RolloutCollector(std::shared_ptr<const Track> track, const TrainerConfig& cfg);

  struct Stats {
    std::vector<double> episode_returns;  // extrinsic, completed episodes
    std::vector<int> episode_lengths;
    int laps{0};
    std::vector<double> lap_times;
    std::optional<long long> first_lap_step;  // global decision-step index (1-based)
    int collisions{0};
    double mean_entropy{0.0};
  };
  // step_offset: global decision steps taken before this collection.
  Stats collect(const nn::PolicyNet& policy, RolloutBuffer& buffer, Rng& rng, long long step_offset);

  std::vector<RaceEnv>& envs() { return envs_; }

 private:
  struct Running {
    Observation obs;
    double episode_return{0.0};
    int episode_length{0};
    std::uint64_t episodes{0};
  };
  void start_episode(int env);

  TrainerConfig cfg_;
  std::vector<RaceEnv> envs_;
  std::vector<Running> running_;
};

struct MetricsRow {
  long long step{0};
  double bc_loss{0.0};
  double gail_reward{0.0};
  double curiosity_reward{0.0};
  double extrinsic_return{0.0};
  double entropy{0.0};
  double episode_length{0.0};
  double lr{0.0};
  long long laps_completed{0};
  double best_lap_time{0.0};  // NaN until a lap is completed
};
const char* metrics_header();
std::string metrics_line(const MetricsRow& row);
std::vector<MetricsRow> read_metrics(const std::filesystem::path& path);

struct TrainOptions {
  std::filesystem::path out_dir;
  bool stop_after_first_lap{false};
  std::function<void(const MetricsRow&, int update)> on_update;
};

struct TrainSummary {
  long long steps{0};
  int updates{0};
  std::optional<long long> first_lap_step;
  std::optional<double> best_lap_time;
  long long laps_completed{0};
  double wall_seconds{0.0};
  bool stopped_early{false};
};

// Demonstrations are required whenever bc_strength or gail.strength is positive.
class HybridTrainer {
 public:
  HybridTrainer(std::shared_ptr<const Track> track, TrainerConfig cfg,
                std::optional<Demonstration> demos = std::nullopt);

  TrainSummary train(const TrainOptions& options);

  // One collect-update cycle; exposed for tests.
  MetricsRow update_cycle();

  const nn::PolicyNet& policy() const { return policy_; }
  nn::PolicyNet& policy() { return policy_; }
  const nn::Discriminator& discriminator() const { return disc_; }
  const nn::IcmNets& icm() const { return icm_; }
  const RolloutBuffer& buffer() const { return buffer_; }
  const TrainerConfig& config() const { return cfg_; }
  long long steps() const { return steps_; }
  const TrainSummary& summary() const { return summary_; }

 private:
  bool use_demos() const;

  std::shared_ptr<const Track> track_;
  TrainerConfig cfg_;
  std::optional<Demonstration> demos_;
  std::unique_ptr<DemoSampler> disc_sampler_;
  std::unique_ptr<DemoSampler> bc_sampler_;
  nn::PolicyNet policy_;
  nn::Discriminator disc_;
  nn::IcmNets icm_;
  nn::AdamState policy_adam_;
  nn::AdamState bc_adam_;
  nn::AdamState disc_adam_;
  nn::AdamState icm_adam_;
  RolloutBuffer buffer_;
  RolloutCollector collector_;
  Rng action_rng_;
  Rng update_rng_;
  long long steps_{0};
  int updates_{0};
  double last_return_;
  double last_length_;
  TrainSummary summary_;
};

}  // namespace racelab
