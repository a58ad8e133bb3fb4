#include "racelab/nn.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "racelab/errors.hpp"

namespace racelab::nn {
namespace {

using RowMap = Eigen::Map<const Eigen::RowVectorXd>;
using MatMap = Eigen::Map<const Matrix>;
using MutRowMap = Eigen::Map<Eigen::RowVectorXd>;
using MutMatMap = Eigen::Map<Matrix>;

}  // namespace

LayerStack::LayerStack(std::vector<LayerSpec> layers, std::size_t& offset)
    : layers_(std::move(layers)), begin_(offset) {
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    if (i > 0 && layers_[i].in != layers_[i - 1].out) {
      throw ContractViolation("LayerStack: layer widths do not chain");
    }
    Placed p;
    p.w = offset;
    offset += static_cast<std::size_t>(layers_[i].in) * layers_[i].out;
    p.b = offset;
    offset += layers_[i].out;
    offsets_.push_back(p);
  }
  end_ = offset;
}

Matrix LayerStack::forward(const Vector& params, const Matrix& x, StackCache* cache) const {
  if (cache) {
    cache->inputs.resize(layers_.size());
    cache->pre.resize(layers_.size());
  }
  Matrix a = x;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const auto& L = layers_[i];
    const MatMap w(params.data() + offsets_[i].w, L.out, L.in);
    const RowMap b(params.data() + offsets_[i].b, L.out);
    Matrix z(a.rows(), L.out);
    z.noalias() = a * w.transpose();
    z.rowwise() += b;
    if (cache) {
      cache->inputs[i] = std::move(a);
      cache->pre[i] = z;
    }
    if (L.act == Activation::kSwish) {
      a = z.unaryExpr([](double v) { return swish(v); });
    } else {
      a = std::move(z);
    }
  }
  return a;
}

Matrix LayerStack::backward(const Vector& params, const StackCache& cache, const Matrix& dy,
                            Vector& grad) const {
  Matrix d = dy;
  for (std::size_t k = layers_.size(); k-- > 0;) {
    const auto& L = layers_[k];
    if (L.act == Activation::kSwish) {
      d = d.cwiseProduct(cache.pre[k].unaryExpr([](double v) { return swish_grad(v); }));
    }
    MutMatMap gw(grad.data() + offsets_[k].w, L.out, L.in);
    MutRowMap gb(grad.data() + offsets_[k].b, L.out);
    gw.noalias() += d.transpose() * cache.inputs[k];
    gb += d.colwise().sum();
    const MatMap w(params.data() + offsets_[k].w, L.out, L.in);
    Matrix dx(d.rows(), L.in);
    dx.noalias() = d * w;
    d = std::move(dx);
  }
  return d;
}

void LayerStack::init(Vector& params, Rng& rng) const {
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const auto& L = layers_[i];
    const double a = L.init_gain * std::sqrt(3.0 / L.in);
    const std::size_t nw = static_cast<std::size_t>(L.in) * L.out;
    for (std::size_t j = 0; j < nw; ++j) params[offsets_[i].w + j] = rng.uniform(-a, a);
    for (int j = 0; j < L.out; ++j) params[offsets_[i].b + j] = 0.0;
  }
}

std::string LayerStack::describe() const {
  std::ostringstream os;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    if (i) os << ',';
    os << layers_[i].in << '>' << layers_[i].out
       << (layers_[i].act == Activation::kSwish ? ":swish" : ":linear");
  }
  return os.str();
}

// --- categorical -------------------------------------------------------------------

Matrix log_softmax(const Matrix& logits) {
  Matrix out(logits.rows(), logits.cols());
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    const double m = logits.row(r).maxCoeff();
    const double lse = m + std::log((logits.row(r).array() - m).exp().sum());
    out.row(r) = logits.row(r).array() - lse;
  }
  return out;
}

Matrix softmax(const Matrix& logits) { return log_softmax(logits).array().exp(); }

Vector entropy(const Matrix& logits) {
  const Matrix lp = log_softmax(logits);
  Vector h(logits.rows());
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    h[r] = -(lp.row(r).array().exp() * lp.row(r).array()).sum();
  }
  return h;
}

Sample sample_action(const double* logits, int n, Rng& rng) {
  double m = logits[0];
  for (int i = 1; i < n; ++i) m = std::max(m, logits[i]);
  double z = 0.0;
  for (int i = 0; i < n; ++i) z += std::exp(logits[i] - m);
  const double lse = m + std::log(z);
  const double u = rng.uniform();
  double cum = 0.0;
  int pick = n - 1;
  for (int i = 0; i < n; ++i) {
    cum += std::exp(logits[i] - lse);
    if (u < cum) {
      pick = i;
      break;
    }
  }
  return {pick, logits[pick] - lse};
}

int argmax(const double* logits, int n) {
  int best = 0;
  for (int i = 1; i < n; ++i) {
    if (logits[i] > logits[best]) best = i;
  }
  return best;
}

// --- losses ------------------------------------------------------------------------

PpoLoss ppo_clipped_surrogate(const Matrix& logits, const std::vector<int>& actions,
                              const Vector& old_log_probs, const Vector& advantages, double clip_eps) {
  const Eigen::Index n = logits.rows();
  const Matrix lp = log_softmax(logits);
  PpoLoss out;
  out.dlogits = Matrix::Zero(n, logits.cols());
  double clipped = 0.0;
  for (Eigen::Index r = 0; r < n; ++r) {
    const int a = actions[r];
    const double log_ratio = lp(r, a) - old_log_probs[r];
    const double ratio = std::exp(log_ratio);
    const double adv = advantages[r];
    const double unclipped = ratio * adv;
    const double clipped_ratio = std::clamp(ratio, 1.0 - clip_eps, 1.0 + clip_eps);
    const double clipped_obj = clipped_ratio * adv;
    out.loss -= std::min(unclipped, clipped_obj);
    out.approx_kl += -log_ratio;
    if (unclipped <= clipped_obj) {
      // d(-r A)/dz_j = -r A (1[j=a] - p_j)
      const double g = -unclipped / static_cast<double>(n);
      for (Eigen::Index j = 0; j < logits.cols(); ++j) {
        out.dlogits(r, j) = g * ((j == a ? 1.0 : 0.0) - std::exp(lp(r, j)));
      }
    } else {
      clipped += 1.0;
    }
  }
  out.loss /= static_cast<double>(n);
  out.approx_kl /= static_cast<double>(n);
  out.clip_fraction = clipped / static_cast<double>(n);
  return out;
}

LossGrad value_mse(const Matrix& values, const Matrix& targets, double coeff) {
  const double n = static_cast<double>(values.rows());
  const Matrix diff = values - targets;
  return {coeff * diff.squaredNorm() / n, diff * (2.0 * coeff / n)};
}

LossGrad entropy_bonus(const Matrix& logits, double beta) {
  const Eigen::Index n = logits.rows();
  const Matrix lp = log_softmax(logits);
  LossGrad out;
  out.grad.resize(n, logits.cols());
  for (Eigen::Index r = 0; r < n; ++r) {
    const Eigen::RowVectorXd p = lp.row(r).array().exp();
    const double h = -(p.array() * lp.row(r).array()).sum();
    out.loss -= beta * h;
    // dH/dz_j = -p_j (log p_j + H)
    out.grad.row(r) = (beta / static_cast<double>(n)) * (p.array() * (lp.row(r).array() + h));
  }
  out.loss /= static_cast<double>(n);
  return out;
}

LossGrad cross_entropy(const Matrix& logits, const std::vector<int>& labels) {
  const Eigen::Index n = logits.rows();
  const Matrix lp = log_softmax(logits);
  LossGrad out;
  out.grad = lp.array().exp() / static_cast<double>(n);
  for (Eigen::Index r = 0; r < n; ++r) {
    out.loss -= lp(r, labels[r]);
    out.grad(r, labels[r]) -= 1.0 / static_cast<double>(n);
  }
  out.loss /= static_cast<double>(n);
  return out;
}

LossGrad sigmoid_bce(const Matrix& z, const Vector& labels) {
  const Eigen::Index n = z.rows();
  LossGrad out;
  out.grad.resize(n, 1);
  for (Eigen::Index r = 0; r < n; ++r) {
    const double x = z(r, 0);
    const double softplus = x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
    out.loss += softplus - labels[r] * x;
    out.grad(r, 0) = (sigmoid(x) - labels[r]) / static_cast<double>(n);
  }
  out.loss /= static_cast<double>(n);
  return out;
}

LossGrad half_squared_error(const Matrix& pred, const Matrix& target) {
  const double n = static_cast<double>(pred.rows());
  const Matrix diff = pred - target;
  return {0.5 * diff.squaredNorm() / n, diff / n};
}

}  // namespace racelab::nn
