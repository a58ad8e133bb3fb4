#include "racelab/networks.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

namespace racelab::nn {
namespace {

std::vector<LayerSpec> trunk_spec(int hidden, int layers) {
  std::vector<LayerSpec> out;
  int in = kObsSize;
  for (int i = 0; i < layers; ++i) {
    out.push_back({in, hidden, Activation::kSwish, 1.0});
    in = hidden;
  }
  return out;
}

Matrix hcat(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows(), a.cols() + b.cols());
  out << a, b;
  return out;
}

}  // namespace

// --- PolicyNet -----------------------------------------------------------------------

PolicyNet::PolicyNet(int hidden, int hidden_layers) : hidden_(hidden), hidden_layers_(hidden_layers) {
  if (hidden < 1 || hidden_layers < 1) throw ContractViolation("PolicyNet: bad architecture");
  std::size_t offset = 0;
  trunk_ = LayerStack(trunk_spec(hidden, hidden_layers), offset);
  policy_ = LayerStack({{hidden, kNumActions, Activation::kLinear, 0.01}}, offset);
  value_ = LayerStack({{hidden, kNumStreams, Activation::kLinear, 1.0}}, offset);
  params_ = Vector::Zero(static_cast<Eigen::Index>(offset));
}

void PolicyNet::init(std::uint64_t seed) {
  Rng rng(seed);
  trunk_.init(params_, rng);
  policy_.init(params_, rng);
  value_.init(params_, rng);
}

PolicyNet::Output PolicyNet::forward(const Matrix& obs, Cache* cache) const {
  const Matrix h = trunk_.forward(params_, obs, cache ? &cache->trunk : nullptr);
  Output out;
  out.logits = policy_.forward(params_, h, cache ? &cache->policy : nullptr);
  out.values = value_.forward(params_, h, cache ? &cache->value : nullptr);
  return out;
}

void PolicyNet::backward(const Cache& cache, const Matrix& dlogits, const Matrix& dvalues,
                         Vector& grad) const {
  const Eigen::Index rows = dlogits.size() ? dlogits.rows() : dvalues.rows();
  Matrix dh = Matrix::Zero(rows, hidden_);
  if (dlogits.size()) dh += policy_.backward(params_, cache.policy, dlogits, grad);
  if (dvalues.size()) dh += value_.backward(params_, cache.value, dvalues, grad);
  trunk_.backward(params_, cache.trunk, dh, grad);
}

std::string PolicyNet::descriptor() const {
  std::ostringstream os;
  os << "policy;hidden=" << hidden_ << ";layers=" << hidden_layers_ << ";trunk=" << trunk_.describe()
     << ";pi=" << policy_.describe() << ";v=" << value_.describe();
  return os.str();
}

PolicyOutput forward_policy(const PolicyNet& net, const Observation& obs) {
  Matrix x(1, kObsSize);
  for (int i = 0; i < kObsSize; ++i) x(0, i) = obs.values[i];
  const auto out = net.forward(x);
  PolicyOutput r;
  for (int i = 0; i < kNumActions; ++i) r.logits[i] = out.logits(0, i);
  for (int i = 0; i < kNumStreams; ++i) r.values[i] = out.values(0, i);
  return r;
}

Matrix obs_matrix(const std::vector<Observation>& obs) {
  Matrix x(static_cast<Eigen::Index>(obs.size()), kObsSize);
  for (std::size_t r = 0; r < obs.size(); ++r) {
    for (int i = 0; i < kObsSize; ++i) x(static_cast<Eigen::Index>(r), i) = obs[r].values[i];
  }
  return x;
}

Matrix one_hot(const std::vector<int>& actions, int n) {
  Matrix m = Matrix::Zero(static_cast<Eigen::Index>(actions.size()), n);
  for (std::size_t r = 0; r < actions.size(); ++r) m(static_cast<Eigen::Index>(r), actions[r]) = 1.0;
  return m;
}

// --- Discriminator ---------------------------------------------------------------------

Discriminator::Discriminator(int hidden) {
  std::size_t offset = 0;
  net_ = LayerStack({{kObsSize + kNumActions, hidden, Activation::kSwish, 1.0},
                     {hidden, 1, Activation::kLinear, 1.0}},
                    offset);
  params_ = Vector::Zero(static_cast<Eigen::Index>(offset));
}

void Discriminator::init(std::uint64_t seed) {
  Rng rng(seed);
  net_.init(params_, rng);
}

Matrix Discriminator::make_input(const Matrix& obs, const std::vector<int>& actions) {
  return hcat(obs, one_hot(actions));
}

Matrix Discriminator::logits(const Matrix& input, StackCache* cache) const {
  return net_.forward(params_, input, cache);
}

Vector Discriminator::probability(const Matrix& input) const {
  const Matrix z = logits(input);
  return z.col(0).unaryExpr([](double v) { return sigmoid(v); });
}

void Discriminator::backward(const StackCache& cache, const Matrix& dlogits, Vector& grad) const {
  net_.backward(params_, cache, dlogits, grad);
}

std::string Discriminator::descriptor() const { return "discriminator;net=" + net_.describe(); }

// --- IcmNets -----------------------------------------------------------------------------

IcmNets::IcmNets(int embedding) : embedding_(embedding) {
  std::size_t offset = 0;
  encoder_ = LayerStack({{kObsSize, embedding, Activation::kSwish, 1.0}}, offset);
  forward_ = LayerStack({{embedding + kNumActions, embedding, Activation::kSwish, 1.0},
                         {embedding, embedding, Activation::kLinear, 1.0}},
                        offset);
  inverse_ = LayerStack({{2 * embedding, embedding, Activation::kSwish, 1.0},
                         {embedding, kNumActions, Activation::kLinear, 1.0}},
                        offset);
  params_ = Vector::Zero(static_cast<Eigen::Index>(offset));
}

void IcmNets::init(std::uint64_t seed) {
  Rng rng(seed);
  encoder_.init(params_, rng);
  forward_.init(params_, rng);
  inverse_.init(params_, rng);
}

Matrix IcmNets::encode(const Matrix& obs, StackCache* cache) const {
  return encoder_.forward(params_, obs, cache);
}

Matrix IcmNets::predict_next(const Matrix& embedding, const std::vector<int>& actions,
                             StackCache* cache) const {
  return forward_.forward(params_, hcat(embedding, one_hot(actions)), cache);
}

Matrix IcmNets::inverse_logits(const Matrix& embedding, const Matrix& next_embedding,
                               StackCache* cache) const {
  return inverse_.forward(params_, hcat(embedding, next_embedding), cache);
}

Vector IcmNets::curiosity(const Matrix& obs, const std::vector<int>& actions,
                          const Matrix& next_obs) const {
  const Matrix pred = predict_next(encode(obs), actions);
  const Matrix diff = pred - encode(next_obs);
  return 0.5 * diff.rowwise().squaredNorm();
}

IcmNets::LossParts IcmNets::loss_and_grad(const Matrix& obs, const std::vector<int>& actions,
                                          const Matrix& next_obs, double forward_weight,
                                          double inverse_weight, Vector* grad) const {
  StackCache c_enc, c_enc_next, c_fwd, c_inv;
  const Matrix e = encode(obs, &c_enc);
  const Matrix e_next = encode(next_obs, &c_enc_next);
  const Matrix pred = predict_next(e, actions, &c_fwd);
  const Matrix inv = inverse_logits(e, e_next, &c_inv);

  const LossGrad fwd = half_squared_error(pred, e_next);
  const LossGrad ce = cross_entropy(inv, actions);
  LossParts parts{fwd.loss, ce.loss, forward_weight * fwd.loss + inverse_weight * ce.loss};
  if (!grad) return parts;

  const Eigen::Index n = obs.rows();
  const int E = embedding_;
  const Matrix d_fwd_in = forward_.backward(params_, c_fwd, forward_weight * fwd.grad, *grad);
  const Matrix d_inv_in = inverse_.backward(params_, c_inv, inverse_weight * ce.grad, *grad);
  Matrix de = d_fwd_in.leftCols(E) + d_inv_in.leftCols(E);
  Matrix de_next = d_inv_in.rightCols(E) - forward_weight * fwd.grad;
  (void)n;
  encoder_.backward(params_, c_enc, de, *grad);
  encoder_.backward(params_, c_enc_next, de_next, *grad);
  return parts;
}

std::string IcmNets::descriptor() const {
  return "icm;encoder=" + encoder_.describe() + ";forward=" + forward_.describe() +
         ";inverse=" + inverse_.describe();
}

// --- optimisation --------------------------------------------------------------------------

void adam_step(Vector& params, const Vector& grads, AdamState& s, double lr) {
  if (s.m.size() != params.size() || grads.size() != params.size()) {
    throw ContractViolation("adam_step: shape mismatch");
  }
  ++s.step;
  s.m = s.beta1 * s.m + (1.0 - s.beta1) * grads;
  s.v = s.beta2 * s.v + (1.0 - s.beta2) * grads.cwiseProduct(grads);
  const double c1 = 1.0 - std::pow(s.beta1, static_cast<double>(s.step));
  const double c2 = 1.0 - std::pow(s.beta2, static_cast<double>(s.step));
  params.array() -= lr * (s.m.array() / c1) / ((s.v.array() / c2).sqrt() + s.eps);
}

double clip_grad_norm(Vector& grad, double max_norm) {
  const double n = grad.norm();
  if (n > max_norm && n > 0.0) grad *= max_norm / n;
  return n;
}

// --- parameter files -------------------------------------------------------------------------

namespace {

constexpr char kMagic[8] = {'R', 'L', 'A', 'B', 'P', 'A', 'R', 'M'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::ostream& os, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) os.put(static_cast<char>((v >> (8 * i)) & 0xff));
}
void put_u64(std::ostream& os, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) os.put(static_cast<char>((v >> (8 * i)) & 0xff));
}
void put_string(std::ostream& os, const std::string& s) {
  put_u32(os, static_cast<std::uint32_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::uint64_t get_le(std::istream& is, int bytes) {
  std::uint64_t v = 0;
  for (int i = 0; i < bytes; ++i) {
    const int c = is.get();
    if (c == std::char_traits<char>::eof()) throw ParseError("parameter file truncated");
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(c)) << (8 * i);
  }
  return v;
}
std::string get_string(std::istream& is) {
  const auto n = static_cast<std::size_t>(get_le(is, 4));
  if (n > (1u << 20)) throw ParseError("parameter file corrupt: oversized header string");
  std::string s(n, '\0');
  is.read(s.data(), static_cast<std::streamsize>(n));
  if (!is) throw ParseError("parameter file truncated");
  return s;
}

std::map<std::string, std::string> fields(const std::string& fp) {
  std::map<std::string, std::string> out;
  std::size_t start = 0;
  while (start <= fp.size()) {
    std::size_t end = fp.find_first_of(";|", start);
    if (end == std::string::npos) end = fp.size();
    const std::string item = fp.substr(start, end - start);
    const auto eq = item.find('=');
    if (!item.empty()) out[eq == std::string::npos ? item : item.substr(0, eq)] =
        eq == std::string::npos ? "" : item.substr(eq + 1);
    start = end + 1;
  }
  return out;
}

int descriptor_int(const std::string& descriptor, const std::string& key) {
  const auto f = fields(descriptor);
  const auto it = f.find(key);
  if (it == f.end()) throw ArchitectureMismatch("parameter file descriptor lacks '" + key + "'");
  return std::stoi(it->second);
}

}  // namespace

void write_param_file(const std::filesystem::path& path, const ParamFile& file) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write parameter file " + path.string());
  os.write(kMagic, sizeof(kMagic));
  put_u32(os, kVersion);
  put_string(os, file.descriptor);
  put_string(os, file.fingerprint);
  put_u32(os, static_cast<std::uint32_t>(file.blocks.size()));
  for (const auto& b : file.blocks) {
    put_u64(os, static_cast<std::uint64_t>(b.size()));
    for (Eigen::Index i = 0; i < b.size(); ++i) put_u64(os, std::bit_cast<std::uint64_t>(b[i]));
  }
  if (!os) throw std::runtime_error("write failed: " + path.string());
}

ParamFile read_param_file(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ParseError("cannot open parameter file " + path.string());
  char magic[8];
  is.read(magic, sizeof(magic));
  if (!is || !std::equal(magic, magic + 8, kMagic)) throw ParseError("not a parameter file: bad magic");
  const auto version = get_le(is, 4);
  if (version != kVersion) throw ParseError("unsupported parameter file version " + std::to_string(version));
  ParamFile f;
  f.descriptor = get_string(is);
  f.fingerprint = get_string(is);
  const auto nblocks = get_le(is, 4);
  if (nblocks > 64) throw ParseError("parameter file corrupt: block count");
  for (std::uint64_t k = 0; k < nblocks; ++k) {
    const auto n = get_le(is, 8);
    if (n > (1ull << 28)) throw ParseError("parameter file corrupt: block size");
    Vector v(static_cast<Eigen::Index>(n));
    for (std::uint64_t i = 0; i < n; ++i) v[static_cast<Eigen::Index>(i)] = std::bit_cast<double>(get_le(is, 8));
    f.blocks.push_back(std::move(v));
  }
  if (is.peek() != std::char_traits<char>::eof()) throw ParseError("parameter file corrupt: trailing bytes");
  return f;
}

void save_params(const PolicyNet& net, const std::filesystem::path& path, const std::string& fingerprint) {
  write_param_file(path, {net.descriptor(), fingerprint, {net.params()}});
}

namespace {

LoadedPolicy finish_load(ParamFile f, PolicyNet net, const std::string* expected_fingerprint) {
  if (f.blocks.size() != 1 || static_cast<std::size_t>(f.blocks[0].size()) != net.size()) {
    throw ArchitectureMismatch("parameter count does not match architecture");
  }
  net.params() = std::move(f.blocks[0]);
  LoadedPolicy out{std::move(net), f.fingerprint, {}};
  if (expected_fingerprint && *expected_fingerprint != f.fingerprint) {
    out.warnings.push_back("config fingerprint mismatch: " + fingerprint_diff(f.fingerprint, *expected_fingerprint));
  }
  return out;
}

}  // namespace

LoadedPolicy load_params(const std::filesystem::path& path, const PolicyNet& expected,
                         const std::string& expected_fingerprint) {
  ParamFile f = read_param_file(path);
  if (f.descriptor != expected.descriptor()) {
    throw ArchitectureMismatch("architecture mismatch: file has '" + f.descriptor + "', expected '" +
                               expected.descriptor() + "'");
  }
  return finish_load(std::move(f), PolicyNet(expected.hidden(), expected.hidden_layers()),
                     &expected_fingerprint);
}

LoadedPolicy load_params(const std::filesystem::path& path) {
  ParamFile f = read_param_file(path);
  if (f.descriptor.rfind("policy;", 0) != 0) throw ArchitectureMismatch("not a policy parameter file");
  PolicyNet net(descriptor_int(f.descriptor, "hidden"), descriptor_int(f.descriptor, "layers"));
  if (net.descriptor() != f.descriptor) throw ArchitectureMismatch("unrecognised policy descriptor");
  return finish_load(std::move(f), std::move(net), nullptr);
}

std::string fingerprint_diff(const std::string& a, const std::string& b) {
  const auto fa = fields(a);
  const auto fb = fields(b);
  std::string out;
  const auto note = [&](const std::string& k, const std::string& va, const std::string& vb) {
    if (!out.empty()) out += ", ";
    out += k + " (" + va + " vs " + vb + ")";
  };
  for (const auto& [k, v] : fa) {
    const auto it = fb.find(k);
    if (it == fb.end()) note(k, v, "<absent>");
    else if (it->second != v) note(k, v, it->second);
  }
  for (const auto& [k, v] : fb) {
    if (!fa.count(k)) note(k, "<absent>", v);
  }
  return out.empty() ? "(identical fields)" : out;
}

}  // namespace racelab::nn
