#pragma once

#include <array>
#include <filesystem>
#include <string>
#include <vector>

#include "racelab/errors.hpp"
#include "racelab/nn.hpp"
#include "racelab/race_env.hpp"

namespace racelab::nn {

inline constexpr int kNumStreams = 3;  // extrinsic, gail, curiosity
enum Stream : int { kExtrinsic = 0, kGail = 1, kCuriosity = 2 };

// Two swish hidden layers, a 3-way logit head and one linear value head per
// reward stream. All parameters live in one flat vector in declaration order:
// trunk, policy head, value heads.
class PolicyNet {
 public:
  explicit PolicyNet(int hidden = 128, int hidden_layers = 2);

  struct Output {
    Matrix logits;  // B x 3
    Matrix values;  // B x 3, columns are reward streams
  };
  struct Cache {
    StackCache trunk;
    StackCache policy;
    StackCache value;
  };

  void init(std::uint64_t seed);
  Output forward(const Matrix& obs, Cache* cache = nullptr) const;
  // Either gradient may be empty (treated as zero).
  void backward(const Cache& cache, const Matrix& dlogits, const Matrix& dvalues, Vector& grad) const;

  Vector& params() { return params_; }
  const Vector& params() const { return params_; }
  std::size_t size() const { return static_cast<std::size_t>(params_.size()); }
  int hidden() const { return hidden_; }
  int hidden_layers() const { return hidden_layers_; }
  std::string descriptor() const;

  const LayerStack& trunk() const { return trunk_; }
  const LayerStack& policy_head() const { return policy_; }
  const LayerStack& value_head() const { return value_; }

 private:
  int hidden_;
  int hidden_layers_;
  LayerStack trunk_;
  LayerStack policy_;
  LayerStack value_;
  Vector params_;
};

struct PolicyOutput {
  std::array<double, kNumActions> logits{};
  std::array<double, kNumStreams> values{};
};
PolicyOutput forward_policy(const PolicyNet& net, const Observation& obs);

Matrix obs_matrix(const std::vector<Observation>& obs);
Matrix one_hot(const std::vector<int>& actions, int n = kNumActions);

// Scores (observation, one-hot action) pairs; D = sigmoid(logit) is the
// probability that the pair came from the demonstrations.
class Discriminator {
 public:
  explicit Discriminator(int hidden = 128);
  void init(std::uint64_t seed);

  static Matrix make_input(const Matrix& obs, const std::vector<int>& actions);
  Matrix logits(const Matrix& input, StackCache* cache = nullptr) const;
  Vector probability(const Matrix& input) const;
  void backward(const StackCache& cache, const Matrix& dlogits, Vector& grad) const;

  Vector& params() { return params_; }
  const Vector& params() const { return params_; }
  std::size_t size() const { return static_cast<std::size_t>(params_.size()); }
  std::string descriptor() const;

 private:
  LayerStack net_;
  Vector params_;
};

// Curiosity module: encoder phi(o), forward model f(phi(o), a) -> phi(o'),
// inverse model g(phi(o), phi(o')) -> action logits.
class IcmNets {
 public:
  explicit IcmNets(int embedding = 256);
  void init(std::uint64_t seed);

  Matrix encode(const Matrix& obs, StackCache* cache = nullptr) const;
  Matrix predict_next(const Matrix& embedding, const std::vector<int>& actions,
                      StackCache* cache = nullptr) const;
  Matrix inverse_logits(const Matrix& embedding, const Matrix& next_embedding,
                        StackCache* cache = nullptr) const;

  // 0.5 * ||f(phi(o), a) - phi(o')||^2 per row.
  Vector curiosity(const Matrix& obs, const std::vector<int>& actions, const Matrix& next_obs) const;

  struct LossParts {
    double forward{0.0};  // mean 0.5 ||.||^2
    double inverse{0.0};  // mean cross-entropy
    double total{0.0};
  };
  // total = forward_weight * forward + inverse_weight * inverse; grad accumulated.
  LossParts loss_and_grad(const Matrix& obs, const std::vector<int>& actions, const Matrix& next_obs,
                          double forward_weight, double inverse_weight, Vector* grad) const;

  Vector& params() { return params_; }
  const Vector& params() const { return params_; }
  std::size_t size() const { return static_cast<std::size_t>(params_.size()); }
  int embedding() const { return embedding_; }
  std::string descriptor() const;

  const LayerStack& encoder() const { return encoder_; }
  const LayerStack& forward_model() const { return forward_; }
  const LayerStack& inverse_model() const { return inverse_; }

 private:
  int embedding_;
  LayerStack encoder_;
  LayerStack forward_;
  LayerStack inverse_;
  Vector params_;
};

// --- optimisation ----------------------------------------------------------------

struct AdamState {
  AdamState() = default;
  explicit AdamState(std::size_t n) : m(Vector::Zero(static_cast<Eigen::Index>(n))), v(m) {}

  Vector m;
  Vector v;
  long long step{0};
  double beta1{0.9};
  double beta2{0.999};
  double eps{1e-8};
};

void adam_step(Vector& params, const Vector& grads, AdamState& state, double lr);

// Rescales grad to at most max_norm; returns the norm before clipping.
double clip_grad_norm(Vector& grad, double max_norm);

// --- parameter files -------------------------------------------------------------

class ArchitectureMismatch : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

// Binary little-endian file: magic, version, architecture descriptor,
// config fingerprint, then parameter blocks of 64-bit floats.
struct ParamFile {
  std::string descriptor;
  std::string fingerprint;
  std::vector<Vector> blocks;
};

void write_param_file(const std::filesystem::path& path, const ParamFile& file);
ParamFile read_param_file(const std::filesystem::path& path);

void save_params(const PolicyNet& net, const std::filesystem::path& path, const std::string& fingerprint);

struct LoadedPolicy {
  PolicyNet net;
  std::string fingerprint;
  std::vector<std::string> warnings;
};
// Throws ArchitectureMismatch when the stored descriptor differs from
// `expected`'s; a differing fingerprint becomes a warning.
LoadedPolicy load_params(const std::filesystem::path& path, const PolicyNet& expected,
                         const std::string& expected_fingerprint);
// Reconstructs the architecture from the stored descriptor.
LoadedPolicy load_params(const std::filesystem::path& path);

// Human-readable list of differing `key=value` fields between two fingerprints.
std::string fingerprint_diff(const std::string& a, const std::string& b);

}  // namespace racelab::nn
