#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "racelab/rng.hpp"

namespace racelab::nn {

// Row-major batch matrices: one sample per row.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

enum class Activation { kLinear, kSwish };

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
inline double swish(double x) { return x * sigmoid(x); }
inline double swish_grad(double x) {
  const double s = sigmoid(x);
  return s + x * s * (1.0 - s);
}

struct LayerSpec {
  int in{0};
  int out{0};
  Activation act{Activation::kLinear};
  double init_gain{1.0};
};

// Activations saved by a forward pass for the matching backward pass.
struct StackCache {
  std::vector<Matrix> inputs;
  std::vector<Matrix> pre;
};

// Fully connected layers laid out in a caller-owned flat parameter vector.
// Each layer stores W (out x in, row-major) then b (out).
class LayerStack {
 public:
  LayerStack() = default;
  // Assigns parameter offsets starting at `offset` and advances it.
  LayerStack(std::vector<LayerSpec> layers, std::size_t& offset);

  int in_width() const { return layers_.front().in; }
  int out_width() const { return layers_.back().out; }
  std::size_t param_begin() const { return begin_; }
  std::size_t param_end() const { return end_; }
  const std::vector<LayerSpec>& layers() const { return layers_; }

  Matrix forward(const Vector& params, const Matrix& x, StackCache* cache = nullptr) const;
  // Accumulates dLoss/dparams into grad; returns dLoss/dx.
  Matrix backward(const Vector& params, const StackCache& cache, const Matrix& dy, Vector& grad) const;

  // Scaled-uniform init: W ~ U(-a, a), a = gain * sqrt(3 / fan_in); b = 0.
  void init(Vector& params, Rng& rng) const;
  std::string describe() const;

 private:
  struct Placed {
    std::size_t w;
    std::size_t b;
  };
  std::vector<LayerSpec> layers_;
  std::vector<Placed> offsets_;
  std::size_t begin_{0};
  std::size_t end_{0};
};

// --- categorical helpers -------------------------------------------------------

Matrix log_softmax(const Matrix& logits);
Matrix softmax(const Matrix& logits);
// Per-row entropy in nats.
Vector entropy(const Matrix& logits);

struct Sample {
  int index{0};
  double log_prob{0.0};
};
// Draws from softmax(logits) using one uniform draw from rng.
Sample sample_action(const double* logits, int n, Rng& rng);
int argmax(const double* logits, int n);

// --- losses ------------------------------------------------------------------------
// Each returns the scalar loss (averaged over the batch) and its gradient with
// respect to the network outputs it consumes.

struct LossGrad {
  double loss{0.0};
  Matrix grad;
};

struct PpoLoss {
  double loss{0.0};
  Matrix dlogits;
  double clip_fraction{0.0};
  double approx_kl{0.0};
};

// -mean(min(r A, clip(r, 1-eps, 1+eps) A)), r = exp(logp - old_logp).
PpoLoss ppo_clipped_surrogate(const Matrix& logits, const std::vector<int>& actions,
                              const Vector& old_log_probs, const Vector& advantages, double clip_eps);

// coeff * sum_columns mean_rows (v - target)^2
LossGrad value_mse(const Matrix& values, const Matrix& targets, double coeff);

// -beta * mean entropy
LossGrad entropy_bonus(const Matrix& logits, double beta);

// mean -log softmax(logits)[label]
LossGrad cross_entropy(const Matrix& logits, const std::vector<int>& labels);

// mean softplus(z) - y z, i.e. binary cross-entropy on sigmoid(z).
LossGrad sigmoid_bce(const Matrix& z, const Vector& labels);

// mean_rows 0.5 * ||pred - target||^2; grad is with respect to pred (the
// gradient with respect to target is its negation).
LossGrad half_squared_error(const Matrix& pred, const Matrix& target);

}  // namespace racelab::nn
