#include "racelab/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

#include "racelab/networks.hpp"

namespace racelab::nn {
namespace {

Matrix random_obs(int n, Rng& rng) {
  Matrix x(n, kObsSize);
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < kObsSize; ++c) x(r, c) = rng.uniform();
  }
  return x;
}

std::vector<int> random_actions(int n, Rng& rng) {
  std::vector<int> a(n);
  for (auto& v : a) v = static_cast<int>(rng.below(kNumActions));
  return a;
}

struct Range {
  std::size_t lo;
  std::size_t hi;
};

// Samples coordinates uniformly over the union of `ranges` (the parameters the
// loss depends on) and perturbs them in place; loss() must read the live vector.
GradCheckResult check(const std::string& name, Vector& params, const Vector& analytic,
                      const std::vector<Range>& ranges, const std::function<double()>& loss,
                      const GradCheckOptions& o, Rng& rng) {
  std::size_t total = 0;
  for (const auto& r : ranges) total += r.hi - r.lo;
  GradCheckResult r{name, o.coordinates, 0.0, 0.0, true};
  for (int k = 0; k < o.coordinates; ++k) {
    std::size_t pick = rng.below(total);
    std::size_t idx = 0;
    for (const auto& range : ranges) {
      if (pick < range.hi - range.lo) {
        idx = range.lo + pick;
        break;
      }
      pick -= range.hi - range.lo;
    }
    const auto i = static_cast<Eigen::Index>(idx);
    const double saved = params[i];
    params[i] = saved + o.step;
    const double up = loss();
    params[i] = saved - o.step;
    const double down = loss();
    params[i] = saved;
    const double numeric = (up - down) / (2.0 * o.step);
    const double abs_err = std::abs(analytic[i] - numeric);
    const double rel = abs_err / std::max({std::abs(analytic[i]), std::abs(numeric), o.scale_floor});
    r.max_abs_error = std::max(r.max_abs_error, abs_err);
    r.max_rel_error = std::max(r.max_rel_error, rel);
  }
  r.passed = r.max_rel_error < o.tolerance;
  return r;
}

}  // namespace

std::vector<GradCheckResult> run_gradcheck(const GradCheckOptions& o) {
  Rng rng(o.seed);
  std::vector<GradCheckResult> results;
  const int n = o.batch;

  PolicyNet policy;  // production architectures throughout
  policy.init(o.seed + 1);
  // Larger head weights than the real init so gradients are not vanishingly small.
  for (std::size_t i = policy.policy_head().param_begin(); i < policy.policy_head().param_end(); ++i) {
    policy.params()[static_cast<Eigen::Index>(i)] = rng.uniform(-0.5, 0.5);
  }
  const Matrix obs = random_obs(n, rng);
  const std::vector<int> actions = random_actions(n, rng);
  // Trunk plus policy head; the value heads do not feed the policy losses.
  const Range policy_range{policy.trunk().param_begin(), policy.policy_head().param_end()};

  {  // PPO clipped surrogate: half the samples start inside the clip range, half outside.
    const Matrix lp = log_softmax(policy.forward(obs).logits);
    Vector old_lp(n), adv(n);
    for (int r = 0; r < n; ++r) {
      const double shift = (r % 2 == 0) ? rng.uniform(-0.1, 0.1) : (rng.uniform() < 0.5 ? -0.5 : 0.5);
      old_lp[r] = lp(r, actions[r]) - shift;
      adv[r] = rng.uniform(-1.0, 1.0);
    }
    const auto loss = [&] { return ppo_clipped_surrogate(policy.forward(obs).logits, actions, old_lp, adv, 0.2).loss; };
    PolicyNet::Cache cache;
    const auto out = policy.forward(obs, &cache);
    Vector grad = Vector::Zero(policy.params().size());
    policy.backward(cache, ppo_clipped_surrogate(out.logits, actions, old_lp, adv, 0.2).dlogits, Matrix(), grad);
    results.push_back(check("ppo_clipped_surrogate", policy.params(), grad, {policy_range}, loss, o, rng));
  }
  {  // value MSE over the three stream heads
    Matrix targets(n, kNumStreams);
    for (int r = 0; r < n; ++r) {
      for (int s = 0; s < kNumStreams; ++s) targets(r, s) = rng.uniform(-2.0, 2.0);
    }
    const auto loss = [&] { return value_mse(policy.forward(obs).values, targets, 0.5).loss; };
    PolicyNet::Cache cache;
    const auto out = policy.forward(obs, &cache);
    Vector grad = Vector::Zero(policy.params().size());
    policy.backward(cache, Matrix(), value_mse(out.values, targets, 0.5).grad, grad);
    results.push_back(check("value_mse", policy.params(), grad,
                            {{policy.trunk().param_begin(), policy.trunk().param_end()},
                             {policy.value_head().param_begin(), policy.value_head().param_end()}},
                            loss, o, rng));
  }
  {  // entropy bonus
    const auto loss = [&] { return entropy_bonus(policy.forward(obs).logits, 0.01).loss; };
    PolicyNet::Cache cache;
    const auto out = policy.forward(obs, &cache);
    Vector grad = Vector::Zero(policy.params().size());
    policy.backward(cache, entropy_bonus(out.logits, 0.01).grad, Matrix(), grad);
    results.push_back(check("entropy_bonus", policy.params(), grad, {policy_range}, loss, o, rng));
  }
  {  // behavioral cloning cross-entropy
    const auto loss = [&] { return cross_entropy(policy.forward(obs).logits, actions).loss; };
    PolicyNet::Cache cache;
    const auto out = policy.forward(obs, &cache);
    Vector grad = Vector::Zero(policy.params().size());
    policy.backward(cache, cross_entropy(out.logits, actions).grad, Matrix(), grad);
    results.push_back(check("bc_cross_entropy", policy.params(), grad, {policy_range}, loss, o, rng));
  }
  {  // GAIL discriminator BCE
    Discriminator disc;
    disc.init(o.seed + 2);
    const Matrix input = Discriminator::make_input(obs, actions);
    Vector labels(n);
    for (int r = 0; r < n; ++r) labels[r] = r % 2;
    const auto loss = [&] { return sigmoid_bce(disc.logits(input), labels).loss; };
    StackCache cache;
    const Matrix z = disc.logits(input, &cache);
    Vector grad = Vector::Zero(disc.params().size());
    disc.backward(cache, sigmoid_bce(z, labels).grad, grad);
    results.push_back(check("gail_bce", disc.params(), grad, {{0, disc.size()}}, loss, o, rng));
  }
  {  // ICM forward and inverse losses, each through the shared encoder
    IcmNets icm;
    icm.init(o.seed + 3);
    const Matrix next = random_obs(n, rng);
    const auto fwd_loss = [&] { return icm.loss_and_grad(obs, actions, next, 1.0, 0.0, nullptr).total; };
    Vector grad = Vector::Zero(icm.params().size());
    icm.loss_and_grad(obs, actions, next, 1.0, 0.0, &grad);
    results.push_back(check("icm_forward_mse", icm.params(), grad,
                            {{icm.encoder().param_begin(), icm.forward_model().param_end()}}, fwd_loss, o, rng));

    const auto inv_loss = [&] { return icm.loss_and_grad(obs, actions, next, 0.0, 1.0, nullptr).total; };
    grad.setZero();
    icm.loss_and_grad(obs, actions, next, 0.0, 1.0, &grad);
    // Encoder and inverse model; the forward model does not feed this loss.
    results.push_back(check("icm_inverse_cross_entropy", icm.params(), grad,
                            {{icm.encoder().param_begin(), icm.encoder().param_end()},
                             {icm.inverse_model().param_begin(), icm.inverse_model().param_end()}},
                            inv_loss, o, rng));
  }
  return results;
}

}  // namespace racelab::nn
