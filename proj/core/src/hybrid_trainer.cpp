#include "racelab/hybrid_trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include <fmt/format.h>

#include "format.hpp"
#include "racelab/errors.hpp"

namespace racelab {

using nn::Matrix;
using nn::Vector;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::vector<std::size_t> shuffled_indices(std::size_t n, Rng& rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  rng.shuffle(idx.begin(), idx.end());
  return idx;
}

Matrix gather_obs(const std::vector<Observation>& obs, const std::size_t* idx, std::size_t n) {
  Matrix x(static_cast<Eigen::Index>(n), kObsSize);
  for (std::size_t r = 0; r < n; ++r) {
    for (int i = 0; i < kObsSize; ++i) x(static_cast<Eigen::Index>(r), i) = obs[idx[r]].values[i];
  }
  return x;
}

void check_finite(double v, const std::string& what) {
  if (!std::isfinite(v)) throw TrainingFault("non-finite " + what + "; update aborted");
}

std::uint64_t mix(std::uint64_t seed, std::uint64_t salt) {
  // splitmix64 finalizer: decorrelates sub-seeds derived from one run seed.
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ull * (salt + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

}  // namespace

// --- buffer ---------------------------------------------------------------------------------

RolloutBuffer::RolloutBuffer(int capacity_, int num_envs_)
    : capacity(capacity_), num_envs(num_envs_), steps_per_env(capacity_ / num_envs_) {
  if (num_envs < 1 || capacity < 1 || capacity % num_envs != 0) {
    throw ContractViolation("RolloutBuffer: capacity must be a positive multiple of num_envs");
  }
  obs.resize(capacity);
  next_obs.resize(capacity);
  actions.assign(capacity, 1);
  log_probs = Vector::Zero(capacity);
  rewards = Matrix::Zero(capacity, nn::kNumStreams);
  values = Matrix::Zero(capacity, nn::kNumStreams);
  dones.assign(capacity, 0);
  truncated.assign(capacity, 0);
  truncation_values = Matrix::Zero(capacity, nn::kNumStreams);
  bootstrap = Matrix::Zero(num_envs, nn::kNumStreams);
  advantages = Matrix::Zero(capacity, nn::kNumStreams);
  returns = Matrix::Zero(capacity, nn::kNumStreams);
}

// --- advantage estimation ----------------------------------------------------------------------

GaeResult compute_gae(const std::vector<double>& rewards, const std::vector<double>& values,
                      const std::vector<std::uint8_t>& dones, double bootstrap_value, double gamma,
                      double lambda) {
  const std::size_t n = rewards.size();
  if (values.size() != n || dones.size() != n) throw ContractViolation("compute_gae: length mismatch");
  if (!(gamma >= 0.0 && gamma <= 1.0 && lambda >= 0.0 && lambda <= 1.0)) {
    throw ContractViolation("compute_gae: gamma and lambda must be in [0, 1]");
  }
  GaeResult out{std::vector<double>(n), std::vector<double>(n)};
  double next_value = bootstrap_value;
  double next_adv = 0.0;
  for (std::size_t k = n; k-- > 0;) {
    const double live = dones[k] ? 0.0 : 1.0;
    const double delta = rewards[k] + gamma * next_value * live - values[k];
    next_adv = delta + gamma * lambda * live * next_adv;
    out.advantages[k] = next_adv;
    out.returns[k] = next_adv + values[k];
    next_value = values[k];
  }
  return out;
}

void compute_advantages(RolloutBuffer& b, const TrainerConfig& cfg) {
  const double gammas[nn::kNumStreams] = {cfg.extrinsic.gamma, cfg.gail.gamma, cfg.curiosity.gamma};
  const int T = b.steps_per_env;
  std::vector<double> r(T), v(T);
  std::vector<std::uint8_t> d(T);
  for (int e = 0; e < b.num_envs; ++e) {
    for (int s = 0; s < nn::kNumStreams; ++s) {
      for (int t = 0; t < T; ++t) {
        const int i = b.row(e, t);
        // A truncated episode did not end in the MDP: fold V(s_T) into the last reward.
        r[t] = b.rewards(i, s) + (b.truncated[i] ? gammas[s] * b.truncation_values(i, s) : 0.0);
        v[t] = b.values(i, s);
        d[t] = b.dones[i];
      }
      const GaeResult g = compute_gae(r, v, d, b.bootstrap(e, s), gammas[s], cfg.gae_lambda);
      for (int t = 0; t < T; ++t) {
        b.advantages(b.row(e, t), s) = g.advantages[t];
        b.returns(b.row(e, t), s) = g.returns[t];
      }
    }
  }
}

Vector combined_advantages(const RolloutBuffer& b, const TrainerConfig& cfg) {
  Vector w(nn::kNumStreams);
  w << cfg.extrinsic.strength, cfg.gail.strength, cfg.curiosity.strength;
  Vector a = b.advantages * w;
  const double mean = a.mean();
  const double var = (a.array() - mean).square().mean();
  return (a.array() - mean) / (std::sqrt(var) + 1e-8);
}

double learning_rate(const TrainerConfig& cfg, double progress) {
  return cfg.lr * std::max(0.0, 1.0 - progress);
}

// --- intrinsic rewards ---------------------------------------------------------------------------

double gail_reward(double d) { return std::clamp(-std::log(1.0 - d + 1e-7), 0.0, 10.0); }

Vector gail_rewards(const nn::Discriminator& disc, const Matrix& obs, const std::vector<int>& actions) {
  const Vector p = disc.probability(nn::Discriminator::make_input(obs, actions));
  return p.unaryExpr([](double d) { return gail_reward(d); });
}

void score_intrinsic_rewards(RolloutBuffer& b, const nn::Discriminator* disc, const nn::IcmNets* icm) {
  const Matrix obs = nn::obs_matrix(b.obs);
  if (disc) b.rewards.col(nn::kGail) = gail_rewards(*disc, obs, b.actions);
  else b.rewards.col(nn::kGail).setZero();
  if (icm) b.rewards.col(nn::kCuriosity) = icm->curiosity(obs, b.actions, nn::obs_matrix(b.next_obs));
  else b.rewards.col(nn::kCuriosity).setZero();
}

DiscriminatorStats update_discriminator(nn::Discriminator& disc, nn::AdamState& adam, DemoSampler& demos,
                                        const RolloutBuffer& b, const TrainerConfig& cfg, Rng& rng) {
  if (!b.full()) throw ContractViolation("update_discriminator: buffer not full");
  const std::size_t bs = static_cast<std::size_t>(cfg.batch_size);
  const auto order = shuffled_indices(static_cast<std::size_t>(b.capacity), rng);
  const std::size_t batches = order.size() / bs;
  DiscriminatorStats stats;
  Vector labels(2 * bs);
  labels.head(bs).setOnes();
  labels.tail(bs).setZero();
  for (std::size_t k = 0; k < batches; ++k) {
    const auto demo = demos.sample_batch(bs);
    Matrix obs(2 * bs, kObsSize);
    obs.topRows(bs) = nn::obs_matrix(demo.obs);
    obs.bottomRows(bs) = gather_obs(b.obs, &order[k * bs], bs);
    std::vector<int> actions = demo.actions;
    for (std::size_t r = 0; r < bs; ++r) actions.push_back(b.actions[order[k * bs + r]]);

    nn::StackCache cache;
    const Matrix z = disc.logits(nn::Discriminator::make_input(obs, actions), &cache);
    const nn::LossGrad l = nn::sigmoid_bce(z, labels);
    check_finite(l.loss, "discriminator loss");
    Vector grad = Vector::Zero(disc.params().size());
    disc.backward(cache, l.grad, grad);
    nn::clip_grad_norm(grad, cfg.grad_clip);
    nn::adam_step(disc.params(), grad, adam, cfg.gail.lr);

    stats.loss += l.loss;
    for (std::size_t r = 0; r < bs; ++r) {
      stats.demo_accuracy += z(static_cast<Eigen::Index>(r), 0) > 0.0 ? 1.0 : 0.0;
      stats.policy_accuracy += z(static_cast<Eigen::Index>(bs + r), 0) <= 0.0 ? 1.0 : 0.0;
    }
  }
  stats.loss /= static_cast<double>(batches);
  stats.demo_accuracy /= static_cast<double>(batches * bs);
  stats.policy_accuracy /= static_cast<double>(batches * bs);
  return stats;
}

IcmStats update_icm(nn::IcmNets& icm, nn::AdamState& adam, const RolloutBuffer& b, const TrainerConfig& cfg,
                    Rng& rng) {
  if (!b.full()) throw ContractViolation("update_icm: buffer not full");
  const std::size_t bs = static_cast<std::size_t>(cfg.batch_size);
  const auto order = shuffled_indices(static_cast<std::size_t>(b.capacity), rng);
  const std::size_t batches = order.size() / bs;
  IcmStats stats;
  for (std::size_t k = 0; k < batches; ++k) {
    const std::size_t* idx = &order[k * bs];
    const Matrix obs = gather_obs(b.obs, idx, bs);
    const Matrix next = gather_obs(b.next_obs, idx, bs);
    std::vector<int> actions(bs);
    for (std::size_t r = 0; r < bs; ++r) actions[r] = b.actions[idx[r]];
    Vector grad = Vector::Zero(icm.params().size());
    const auto parts =
        icm.loss_and_grad(obs, actions, next, cfg.icm_forward_weight, cfg.icm_inverse_weight, &grad);
    check_finite(parts.total, "curiosity module loss");
    nn::clip_grad_norm(grad, cfg.grad_clip);
    nn::adam_step(icm.params(), grad, adam, cfg.curiosity.lr);
    stats.forward_loss += parts.forward;
    stats.inverse_loss += parts.inverse;
  }
  stats.forward_loss /= static_cast<double>(batches);
  stats.inverse_loss /= static_cast<double>(batches);
  // Inverse-model accuracy on the whole buffer after the epoch.
  const Matrix logits = icm.inverse_logits(icm.encode(nn::obs_matrix(b.obs)), icm.encode(nn::obs_matrix(b.next_obs)));
  double hits = 0.0;
  for (int r = 0; r < b.capacity; ++r) hits += nn::argmax(logits.row(r).data(), kNumActions) == b.actions[r];
  stats.inverse_accuracy = hits / b.capacity;
  return stats;
}

// --- policy updates ------------------------------------------------------------------------------

PpoStats ppo_update(nn::PolicyNet& policy, nn::AdamState& adam, const RolloutBuffer& b,
                    const TrainerConfig& cfg, double progress, Rng& rng) {
  if (!b.full()) throw ContractViolation("ppo_update: buffer not full");
  const double lr = learning_rate(cfg, progress);
  const Vector adv = combined_advantages(b, cfg);
  const std::size_t bs = static_cast<std::size_t>(cfg.batch_size);
  PpoStats stats;
  int count = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto order = shuffled_indices(static_cast<std::size_t>(b.capacity), rng);
    for (std::size_t k = 0; k + bs <= order.size(); k += bs) {
      const std::size_t* idx = &order[k];
      const Matrix obs = gather_obs(b.obs, idx, bs);
      std::vector<int> actions(bs);
      Vector old_lp(bs), a(bs);
      Matrix targets(bs, nn::kNumStreams);
      for (std::size_t r = 0; r < bs; ++r) {
        const auto e = static_cast<Eigen::Index>(r);
        actions[r] = b.actions[idx[r]];
        old_lp[e] = b.log_probs[static_cast<Eigen::Index>(idx[r])];
        a[e] = adv[static_cast<Eigen::Index>(idx[r])];
        targets.row(e) = b.returns.row(static_cast<Eigen::Index>(idx[r]));
      }
      nn::PolicyNet::Cache cache;
      const auto out = policy.forward(obs, &cache);
      const nn::PpoLoss surrogate = nn::ppo_clipped_surrogate(out.logits, actions, old_lp, a, cfg.clip_epsilon);
      const nn::LossGrad value = nn::value_mse(out.values, targets, cfg.value_coeff);
      const nn::LossGrad ent = nn::entropy_bonus(out.logits, cfg.entropy_beta);
      const double total = surrogate.loss + value.loss + ent.loss;
      if (!std::isfinite(total)) {
        throw TrainingFault(fmt::format("non-finite PPO loss (policy {}, value {}, entropy {}) at epoch {}; "
                                        "update aborted",
                                        surrogate.loss, value.loss, ent.loss, epoch));
      }
      Vector grad = Vector::Zero(policy.params().size());
      policy.backward(cache, surrogate.dlogits + ent.grad, value.grad, grad);
      stats.grad_norm += nn::clip_grad_norm(grad, cfg.grad_clip);
      nn::adam_step(policy.params(), grad, adam, lr);

      stats.policy_loss += surrogate.loss;
      stats.value_loss += value.loss;
      stats.entropy += nn::entropy(out.logits).mean();
      stats.clip_fraction += surrogate.clip_fraction;
      stats.approx_kl += surrogate.approx_kl;
      ++count;
    }
  }
  const double n = std::max(count, 1);
  stats.policy_loss /= n;
  stats.value_loss /= n;
  stats.entropy /= n;
  stats.clip_fraction /= n;
  stats.approx_kl /= n;
  stats.grad_norm /= n;
  return stats;
}

double bc_update(nn::PolicyNet& policy, nn::AdamState& adam, DemoSampler& demos, std::size_t demo_steps,
                 const TrainerConfig& cfg, double progress) {
  const std::size_t bs = static_cast<std::size_t>(cfg.batch_size);
  const std::size_t n = std::min<std::size_t>(static_cast<std::size_t>(cfg.buffer_size), demo_steps);
  const std::size_t batches = n / bs;
  if (batches == 0) throw ValidationError("behavioral cloning: fewer demo steps than one batch");
  const double lr = learning_rate(cfg, progress) * cfg.bc_strength;
  double total = 0.0;
  for (std::size_t k = 0; k < batches; ++k) {
    const auto batch = demos.sample_batch(bs);
    nn::PolicyNet::Cache cache;
    const auto out = policy.forward(nn::obs_matrix(batch.obs), &cache);
    const nn::LossGrad ce = nn::cross_entropy(out.logits, batch.actions);
    check_finite(ce.loss, "behavioral cloning loss");
    Vector grad = Vector::Zero(policy.params().size());
    policy.backward(cache, ce.grad * cfg.bc_strength, Matrix(), grad);
    nn::clip_grad_norm(grad, cfg.grad_clip);
    if (lr > 0.0) nn::adam_step(policy.params(), grad, adam, lr);
    total += ce.loss;
  }
  return total / static_cast<double>(batches);
}

// --- collection ----------------------------------------------------------------------------------

RolloutCollector::RolloutCollector(std::shared_ptr<const Track> track, const TrainerConfig& cfg) : cfg_(cfg) {
  envs_.reserve(cfg.num_envs);
  for (int e = 0; e < cfg.num_envs; ++e) envs_.emplace_back(track, cfg.env);
  running_.resize(cfg.num_envs);
  for (int e = 0; e < cfg.num_envs; ++e) start_episode(e);
}

void RolloutCollector::start_episode(int e) {
  Running& run = running_[e];
  run.obs = envs_[e].reset(mix(cfg_.seed, (static_cast<std::uint64_t>(e) << 32) + run.episodes));
  run.episode_return = 0.0;
  run.episode_length = 0;
  ++run.episodes;
}

RolloutCollector::Stats RolloutCollector::collect(const nn::PolicyNet& policy, RolloutBuffer& b, Rng& rng,
                                                  long long step_offset) {
  Stats stats;
  const int E = b.num_envs;
  if (E != static_cast<int>(envs_.size())) throw ContractViolation("collect: env count mismatch");
  Matrix x(E, kObsSize);
  double entropy_sum = 0.0;
  for (int t = 0; t < b.steps_per_env; ++t) {
    for (int e = 0; e < E; ++e) {
      for (int i = 0; i < kObsSize; ++i) x(e, i) = running_[e].obs.values[i];
    }
    const auto out = policy.forward(x);
    entropy_sum += nn::entropy(out.logits).sum();
    for (int e = 0; e < E; ++e) {
      const int i = b.row(e, t);
      const nn::Sample s = nn::sample_action(out.logits.row(e).data(), kNumActions, rng);
      b.obs[i] = running_[e].obs;
      b.actions[i] = s.index;
      b.log_probs[i] = s.log_prob;
      b.values.row(i) = out.values.row(e);

      StepResult r;
      try {
        r = envs_[e].step(SteerAction::from_index(s.index));
      } catch (const TrainingFault& f) {
        throw TrainingFault(fmt::format("env {} episode {} step {}: {}", e, running_[e].episodes,
                                        running_[e].episode_length, f.what()));
      }
      const long long global_step = step_offset + static_cast<long long>(t) * E + e + 1;
      b.next_obs[i] = r.obs;
      b.rewards(i, nn::kExtrinsic) = r.extrinsic_reward;
      b.dones[i] = r.terminated ? 1 : 0;
      b.truncated[i] = r.truncated ? 1 : 0;
      if (r.events.collision) ++stats.collisions;
      if (r.events.lap_completed && !r.events.collision) {
        ++stats.laps;
        stats.lap_times.push_back(*r.events.lap_completed);
        if (!stats.first_lap_step) stats.first_lap_step = global_step;
      }
      Running& run = running_[e];
      run.episode_return += r.extrinsic_reward;
      ++run.episode_length;
      run.obs = r.obs;
      if (r.terminated) {
        stats.episode_returns.push_back(run.episode_return);
        stats.episode_lengths.push_back(run.episode_length);
        start_episode(e);
      }
    }
  }
  b.filled = b.capacity;
  stats.mean_entropy = entropy_sum / b.capacity;

  // Bootstrap values: V(obs) after each stream's last step, and V(next_obs) on truncation.
  for (int e = 0; e < E; ++e) {
    for (int i = 0; i < kObsSize; ++i) x(e, i) = running_[e].obs.values[i];
  }
  b.bootstrap = policy.forward(x).values;
  b.truncation_values.setZero();
  std::vector<Observation> trunc_obs;
  std::vector<int> trunc_rows;
  for (int i = 0; i < b.capacity; ++i) {
    if (b.truncated[i]) {
      trunc_obs.push_back(b.next_obs[i]);
      trunc_rows.push_back(i);
    }
  }
  if (!trunc_rows.empty()) {
    const Matrix v = policy.forward(nn::obs_matrix(trunc_obs)).values;
    for (std::size_t k = 0; k < trunc_rows.size(); ++k) {
      b.truncation_values.row(trunc_rows[k]) = v.row(static_cast<Eigen::Index>(k));
    }
  }
  return stats;
}

// --- metrics ---------------------------------------------------------------------------------------

const char* metrics_header() {
  return "step,bc_loss,gail_reward,curiosity_reward,extrinsic_return,entropy,episode_length,lr,laps_completed,"
         "best_lap_time";
}

std::string metrics_line(const MetricsRow& m) {
  const auto f = [](double v) { return std::isnan(v) ? std::string("nan") : detail::fmt_exact(v); };
  return fmt::format("{},{},{},{},{},{},{},{},{},{}", m.step, f(m.bc_loss), f(m.gail_reward),
                     f(m.curiosity_reward), f(m.extrinsic_return), f(m.entropy), f(m.episode_length), f(m.lr),
                     m.laps_completed, f(m.best_lap_time));
}

std::vector<MetricsRow> read_metrics(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open metrics file " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != metrics_header()) throw ParseError("metrics file: bad header");
  std::vector<MetricsRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != 10) throw ParseError("metrics file: expected 10 columns: " + line);
    const auto d = [](const std::string& s) { return s == "nan" ? kNaN : std::stod(s); };
    rows.push_back({std::stoll(cells[0]), d(cells[1]), d(cells[2]), d(cells[3]), d(cells[4]), d(cells[5]),
                    d(cells[6]), d(cells[7]), std::stoll(cells[8]), d(cells[9])});
  }
  return rows;
}

// --- trainer -----------------------------------------------------------------------------------------

HybridTrainer::HybridTrainer(std::shared_ptr<const Track> track, TrainerConfig cfg,
                             std::optional<Demonstration> demos)
    : track_(std::move(track)),
      cfg_(std::move(cfg)),
      demos_(std::move(demos)),
      policy_(cfg_.hidden_units, cfg_.hidden_layers),
      disc_(cfg_.gail.encoding),
      icm_(cfg_.curiosity.encoding),
      buffer_(cfg_.buffer_size, cfg_.num_envs),
      collector_(track_, cfg_),
      action_rng_(mix(cfg_.seed, 10)),
      update_rng_(mix(cfg_.seed, 11)),
      last_return_(kNaN),
      last_length_(kNaN) {
  validate(cfg_);
  if (!track_) throw ContractViolation("HybridTrainer needs a track");
  if ((cfg_.bc_strength > 0.0 || cfg_.gail.strength > 0.0) && !demos_) {
    throw ValidationError("bc_strength or gail.strength is positive but no demonstrations were given");
  }
  if (demos_) {
    const std::string want = cfg_.env.normalization_fingerprint();
    if (demos_->metadata.fingerprint() != want) {
      throw ValidationError("demo fingerprint mismatch: demos '" + demos_->metadata.fingerprint() +
                            "', environment '" + want + "'");
    }
    if (demos_->total_steps() < static_cast<std::size_t>(cfg_.batch_size)) {
      throw ValidationError("insufficient demonstration data for one batch");
    }
    disc_sampler_ = std::make_unique<DemoSampler>(*demos_, mix(cfg_.seed, 20));
    bc_sampler_ = std::make_unique<DemoSampler>(*demos_, mix(cfg_.seed, 21));
  }
  policy_.init(mix(cfg_.seed, 1));
  disc_.init(mix(cfg_.seed, 2));
  icm_.init(mix(cfg_.seed, 3));
  policy_adam_ = nn::AdamState(policy_.size());
  bc_adam_ = nn::AdamState(policy_.size());
  disc_adam_ = nn::AdamState(disc_.size());
  icm_adam_ = nn::AdamState(icm_.size());
}

bool HybridTrainer::use_demos() const { return demos_.has_value(); }

MetricsRow HybridTrainer::update_cycle() {
  const double progress = static_cast<double>(steps_) / static_cast<double>(cfg_.max_steps);
  const auto stats = collector_.collect(policy_, buffer_, action_rng_, steps_);
  if (stats.first_lap_step && !summary_.first_lap_step) summary_.first_lap_step = stats.first_lap_step;
  steps_ += buffer_.capacity;

  const bool gail_on = use_demos() && cfg_.gail.strength > 0.0;
  const bool curiosity_on = cfg_.curiosity.strength > 0.0;
  score_intrinsic_rewards(buffer_, gail_on ? &disc_ : nullptr, curiosity_on ? &icm_ : nullptr);
  if (gail_on) update_discriminator(disc_, disc_adam_, *disc_sampler_, buffer_, cfg_, update_rng_);
  if (curiosity_on) update_icm(icm_, icm_adam_, buffer_, cfg_, update_rng_);
  compute_advantages(buffer_, cfg_);
  ppo_update(policy_, policy_adam_, buffer_, cfg_, progress, update_rng_);
  ++updates_;

  double bc_loss = kNaN;
  if (use_demos()) {
    if (cfg_.bc_strength > 0.0 && updates_ % cfg_.bc_interval == 0) {
      bc_loss = bc_update(policy_, bc_adam_, *bc_sampler_, demos_->total_steps(), cfg_, progress);
    } else {
      // Still report how well the policy imitates the demos.
      TrainerConfig probe = cfg_;
      probe.bc_strength = 0.0;
      bc_loss = bc_update(policy_, bc_adam_, *bc_sampler_, demos_->total_steps(), probe, progress);
    }
  }

  if (!stats.episode_returns.empty()) {
    last_return_ = std::accumulate(stats.episode_returns.begin(), stats.episode_returns.end(), 0.0) /
                   static_cast<double>(stats.episode_returns.size());
    last_length_ = static_cast<double>(std::accumulate(stats.episode_lengths.begin(), stats.episode_lengths.end(), 0LL)) /
                   static_cast<double>(stats.episode_lengths.size());
  }
  summary_.laps_completed += stats.laps;
  for (double t : stats.lap_times) {
    if (!summary_.best_lap_time || t < *summary_.best_lap_time) summary_.best_lap_time = t;
  }
  summary_.steps = steps_;
  summary_.updates = updates_;

  MetricsRow row;
  row.step = steps_;
  row.bc_loss = bc_loss;
  row.gail_reward = gail_on ? buffer_.rewards.col(nn::kGail).mean() : 0.0;
  row.curiosity_reward = curiosity_on ? buffer_.rewards.col(nn::kCuriosity).mean() : 0.0;
  row.extrinsic_return = last_return_;
  row.entropy = stats.mean_entropy;
  row.episode_length = last_length_;
  row.lr = learning_rate(cfg_, progress);
  row.laps_completed = summary_.laps_completed;
  row.best_lap_time = summary_.best_lap_time.value_or(kNaN);
  return row;
}

TrainSummary HybridTrainer::train(const TrainOptions& options) {
  const auto start = std::chrono::steady_clock::now();
  std::ofstream metrics;
  std::filesystem::path ckpt_dir;
  if (!options.out_dir.empty()) {
    std::filesystem::create_directories(options.out_dir);
    ckpt_dir = options.out_dir / "checkpoints";
    std::filesystem::create_directories(ckpt_dir);
    std::ofstream(options.out_dir / "config.txt") << cfg_.to_text();
    metrics.open(options.out_dir / "metrics.csv");
    if (!metrics) throw std::runtime_error("cannot write metrics.csv in " + options.out_dir.string());
    metrics << metrics_header() << '\n';
  }
  const std::string fingerprint = cfg_.fingerprint();
  const long long total_updates = cfg_.max_steps / cfg_.buffer_size;

  const auto write_summary = [&] {
    summary_.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (options.out_dir.empty()) return;
    std::ofstream s(options.out_dir / "summary.txt");
    s << "steps = " << summary_.steps << "\nupdates = " << summary_.updates
      << "\nfirst_lap_step = " << (summary_.first_lap_step ? std::to_string(*summary_.first_lap_step) : "none")
      << "\nlaps_completed = " << summary_.laps_completed << "\nbest_lap_time = "
      << (summary_.best_lap_time ? detail::fmt_exact(*summary_.best_lap_time) : "none")
      << "\nstopped_early = " << (summary_.stopped_early ? "true" : "false") << "\nwall_seconds = "
      << fmt::format("{:.1f}", summary_.wall_seconds) << "\nseed = " << cfg_.seed << '\n';
  };

  try {
    while (updates_ < total_updates) {
      const MetricsRow row = update_cycle();
      if (metrics.is_open()) metrics << metrics_line(row) << '\n' << std::flush;
      if (options.on_update) options.on_update(row, updates_);
      if (!ckpt_dir.empty() && updates_ % cfg_.checkpoint_interval == 0) {
        nn::save_params(policy_, ckpt_dir / fmt::format("policy_{:06d}.bin", updates_), fingerprint);
      }
      if (options.stop_after_first_lap && summary_.first_lap_step) {
        summary_.stopped_early = true;
        break;
      }
    }
  } catch (...) {
    if (metrics.is_open()) metrics.flush();
    write_summary();
    throw;
  }
  if (!options.out_dir.empty()) nn::save_params(policy_, options.out_dir / "policy.bin", fingerprint);
  write_summary();
  return summary_;
}

}  // namespace racelab
