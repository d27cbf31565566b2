// Dense multilayer perceptron with ReLU hidden layers and a linear output,
// reverse-mode gradients, a categorical policy head, Adam and global-norm
// clipping. Parameters live in one flat vector so optimizers and clipping
// are plain vector expressions; per-layer views are row-major maps into it.
#pragma once

#include <Eigen/Core>
#include <Eigen/QR>

#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace explore_go::nn {

struct ShapeError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct NonFiniteError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
class Mlp;

// Activations recorded by Mlp::forward for the matching backward pass.
template <typename Scalar>
struct MlpCache {
  const Mlp<Scalar>* owner = nullptr;
  std::uint64_t generation = 0;
  // inputs[l] feeds layer l; pre[l] is its affine output before activation.
  std::vector<Matrix<Scalar>> inputs;
  std::vector<Matrix<Scalar>> pre;
};

template <typename Scalar>
class Mlp {
 public:
  using RowMajor = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using WeightMap = Eigen::Map<RowMajor>;
  using ConstWeightMap = Eigen::Map<const RowMajor>;
  using BiasMap = Eigen::Map<Vector<Scalar>>;
  using ConstBiasMap = Eigen::Map<const Vector<Scalar>>;

  Mlp() = default;

  // sizes = {input, hidden..., output}; all parameters start at zero.
  explicit Mlp(std::vector<int> sizes) : sizes_(std::move(sizes)) {
    if (sizes_.size() < 2) throw ShapeError("Mlp needs at least input and output sizes");
    Eigen::Index total = 0;
    for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
      if (sizes_[l] <= 0 || sizes_[l + 1] <= 0) throw ShapeError("Mlp layer sizes must be positive");
      weight_offset_.push_back(total);
      total += Eigen::Index{sizes_[l]} * sizes_[l + 1];
      bias_offset_.push_back(total);
      total += sizes_[l + 1];
    }
    params_ = Vector<Scalar>::Zero(total);
  }

  const std::vector<int>& sizes() const { return sizes_; }
  int num_layers() const { return static_cast<int>(sizes_.size()) - 1; }
  int input_size() const { return sizes_.front(); }
  int output_size() const { return sizes_.back(); }
  Eigen::Index num_params() const { return params_.size(); }

  const Vector<Scalar>& params() const { return params_; }
  Vector<Scalar>& mutable_params() {
    ++generation_;
    return params_;
  }

  // Rows are output units, columns input units.
  WeightMap weight(int l) {
    ++generation_;
    return WeightMap(params_.data() + weight_offset_[l], sizes_[l + 1], sizes_[l]);
  }
  ConstWeightMap weight(int l) const {
    return ConstWeightMap(params_.data() + weight_offset_[l], sizes_[l + 1], sizes_[l]);
  }
  BiasMap bias(int l) {
    ++generation_;
    return BiasMap(params_.data() + bias_offset_[l], sizes_[l + 1]);
  }
  ConstBiasMap bias(int l) const {
    return ConstBiasMap(params_.data() + bias_offset_[l], sizes_[l + 1]);
  }

  std::uint64_t generation() const { return generation_; }

  // x: input_size() x batch, one sample per column.
  Matrix<Scalar> forward(const Eigen::Ref<const Matrix<Scalar>>& x,
                         MlpCache<Scalar>* cache = nullptr) const {
    if (x.rows() != input_size()) {
      throw ShapeError("Mlp::forward: expected " + std::to_string(input_size()) +
                       " input rows, got " + std::to_string(x.rows()));
    }
    if (cache) {
      cache->owner = this;
      cache->generation = generation_;
      cache->inputs.resize(num_layers());
      cache->pre.resize(num_layers());
    }
    Matrix<Scalar> h = x;
    for (int l = 0; l < num_layers(); ++l) {
      Matrix<Scalar> z = weight(l) * h;
      z.colwise() += bias(l);
      if (cache) {
        cache->inputs[l] = std::move(h);
        cache->pre[l] = z;
      }
      h = (l + 1 < num_layers()) ? Matrix<Scalar>(z.cwiseMax(Scalar(0))) : std::move(z);
    }
    return h;
  }

  Vector<Scalar> forward_one(const Eigen::Ref<const Vector<Scalar>>& x) const {
    return forward(x);
  }

  // Gradient of sum(d_out .* output) w.r.t. the flat parameters. ReLU uses
  // subgradient 0 at exactly 0.
  Vector<Scalar> backward(const MlpCache<Scalar>& cache,
                          const Eigen::Ref<const Matrix<Scalar>>& d_out,
                          Matrix<Scalar>* d_input = nullptr) const {
    if (cache.owner != this || cache.generation != generation_ ||
        static_cast<int>(cache.pre.size()) != num_layers()) {
      throw std::logic_error("Mlp::backward: stale or foreign cache");
    }
    const Eigen::Index batch = cache.inputs.front().cols();
    if (d_out.rows() != output_size() || d_out.cols() != batch) {
      throw ShapeError("Mlp::backward: output gradient shape mismatch");
    }
    Vector<Scalar> grad = Vector<Scalar>::Zero(params_.size());
    Matrix<Scalar> delta = d_out;
    for (int l = num_layers() - 1; l >= 0; --l) {
      if (l + 1 < num_layers()) {
        delta = delta.cwiseProduct(
            (cache.pre[l].array() > Scalar(0)).template cast<Scalar>().matrix());
      }
      WeightMap(grad.data() + weight_offset_[l], sizes_[l + 1], sizes_[l]).noalias() =
          delta * cache.inputs[l].transpose();
      BiasMap(grad.data() + bias_offset_[l], sizes_[l + 1]) = delta.rowwise().sum();
      if (l > 0 || d_input) {
        Matrix<Scalar> prev = weight(l).transpose() * delta;
        delta = std::move(prev);
      }
    }
    if (d_input) *d_input = std::move(delta);
    return grad;
  }

 private:
  std::vector<int> sizes_;
  std::vector<Eigen::Index> weight_offset_;
  std::vector<Eigen::Index> bias_offset_;
  Vector<Scalar> params_;
  std::uint64_t generation_ = 0;
};

using Mlpd = Mlp<double>;

// Orthogonal init scaled by `hidden_gain` for hidden layers and
// `output_gain` for the last layer; biases zero.
template <typename Scalar, typename Urbg>
void init_orthogonal(Mlp<Scalar>& net, Urbg& rng, Scalar hidden_gain, Scalar output_gain) {
  std::normal_distribution<double> normal(0.0, 1.0);
  net.mutable_params().setZero();
  for (int l = 0; l < net.num_layers(); ++l) {
    const int rows = net.sizes()[l + 1];
    const int cols = net.sizes()[l];
    const int tall = std::max(rows, cols);
    const int wide = std::min(rows, cols);
    Eigen::MatrixXd g(tall, wide);
    for (Eigen::Index j = 0; j < g.cols(); ++j) {
      for (Eigen::Index i = 0; i < g.rows(); ++i) g(i, j) = normal(rng);
    }
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
    Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(tall, wide);
    // Sign fix so the distribution is uniform over orthogonal matrices.
    const Eigen::VectorXd d = qr.matrixQR().diagonal();
    for (int j = 0; j < wide; ++j) {
      if (d[j] < 0) q.col(j) *= -1.0;
    }
    const Scalar gain = (l + 1 == net.num_layers()) ? output_gain : hidden_gain;
    Eigen::MatrixXd w = rows >= cols ? q : Eigen::MatrixXd(q.transpose());
    net.weight(l) = (w * static_cast<double>(gain)).template cast<Scalar>();
  }
}

// Categorical distribution over logits, stored as stable log-probabilities.
template <typename Scalar>
class Categorical {
 public:
  explicit Categorical(const Eigen::Ref<const Vector<Scalar>>& logits) {
    const Scalar m = logits.maxCoeff();
    const Scalar lse = m + std::log((logits.array() - m).exp().sum());
    log_probs_ = logits.array() - lse;
  }

  int size() const { return static_cast<int>(log_probs_.size()); }
  const Vector<Scalar>& log_probs() const { return log_probs_; }
  Vector<Scalar> probs() const { return log_probs_.array().exp(); }
  Scalar log_prob(int action) const { return log_probs_[action]; }

  Scalar entropy() const {
    Scalar h = 0;
    for (Eigen::Index i = 0; i < log_probs_.size(); ++i) {
      const Scalar p = std::exp(log_probs_[i]);
      if (p > 0) h -= p * log_probs_[i];
    }
    return h;
  }

  int mode() const {
    Eigen::Index best = 0;
    log_probs_.maxCoeff(&best);
    return static_cast<int>(best);
  }

  // Inverse CDF.
  template <typename Urbg>
  int sample(Urbg& rng) const {
    std::uniform_real_distribution<double> uniform(0.0, 1.0);
    const double u = uniform(rng);
    double cdf = 0.0;
    for (Eigen::Index i = 0; i < log_probs_.size(); ++i) {
      cdf += std::exp(static_cast<double>(log_probs_[i]));
      if (u < cdf) return static_cast<int>(i);
    }
    return size() - 1;
  }

 private:
  Vector<Scalar> log_probs_;
};

struct AdamOptions {
  double learning_rate = 1e-4;
  double epsilon = 1e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
};

template <typename Scalar>
struct AdamState {
  AdamOptions options;
  Vector<Scalar> m;
  Vector<Scalar> v;
  long step = 0;

  AdamState() = default;
  AdamState(Eigen::Index n, AdamOptions opts)
      : options(opts), m(Vector<Scalar>::Zero(n)), v(Vector<Scalar>::Zero(n)) {}
};

// Bias-corrected Adam. Throws NonFiniteError (leaving everything untouched)
// when any gradient entry is NaN or infinite.
template <typename Scalar>
void adam_step(Vector<Scalar>& params, const Vector<Scalar>& grads, AdamState<Scalar>& state) {
  if (params.size() != grads.size() || state.m.size() != params.size()) {
    throw ShapeError("adam_step: parameter, gradient and moment sizes differ");
  }
  if (!grads.allFinite()) throw NonFiniteError("adam_step: non-finite gradient");
  const auto& o = state.options;
  ++state.step;
  state.m = Scalar(o.beta1) * state.m + Scalar(1 - o.beta1) * grads;
  state.v = Scalar(o.beta2) * state.v + Scalar(1 - o.beta2) * grads.cwiseAbs2();
  const Scalar c1 = Scalar(1) - Scalar(std::pow(o.beta1, static_cast<double>(state.step)));
  const Scalar c2 = Scalar(1) - Scalar(std::pow(o.beta2, static_cast<double>(state.step)));
  params.array() -= Scalar(o.learning_rate) * (state.m.array() / c1) /
                    ((state.v.array() / c2).sqrt() + Scalar(o.epsilon));
}

template <typename Scalar>
void adam_step(Mlp<Scalar>& net, const Vector<Scalar>& grads, AdamState<Scalar>& state) {
  adam_step(net.mutable_params(), grads, state);
}

// Rescales every gradient by max_norm / norm when their joint L2 norm
// exceeds max_norm. Returns the norm before clipping.
template <typename Scalar, typename... Rest>
Scalar clip_global_norm(Scalar max_norm, Vector<Scalar>& first, Rest&... rest) {
  const Scalar norm = std::sqrt(first.squaredNorm() + (Scalar(0) + ... + rest.squaredNorm()));
  if (norm > max_norm) {
    const Scalar scale = max_norm / norm;
    first *= scale;
    ((rest *= scale), ...);
  }
  return norm;
}

// Binary checkpoint: 8-byte magic, uint32 layer-size count, uint32 sizes,
// then every parameter as a little-endian float64, weights row-major.
inline constexpr std::array<char, 8> kMlpMagic{'E', 'G', 'M', 'L', 'P', '0', '0', '1'};

template <typename Scalar>
void save(const Mlp<Scalar>& net, std::ostream& out) {
  out.write(kMlpMagic.data(), kMlpMagic.size());
  const auto count = static_cast<std::uint32_t>(net.sizes().size());
  out.write(reinterpret_cast<const char*>(&count), sizeof count);
  for (int s : net.sizes()) {
    const auto u = static_cast<std::uint32_t>(s);
    out.write(reinterpret_cast<const char*>(&u), sizeof u);
  }
  for (Eigen::Index i = 0; i < net.num_params(); ++i) {
    const double d = static_cast<double>(net.params()[i]);
    out.write(reinterpret_cast<const char*>(&d), sizeof d);
  }
  if (!out) throw std::runtime_error("save: write failed");
}

template <typename Scalar>
Mlp<Scalar> load(std::istream& in) {
  std::array<char, 8> magic{};
  in.read(magic.data(), magic.size());
  if (!in || magic != kMlpMagic) throw std::runtime_error("load: not an MLP checkpoint");
  std::uint32_t count = 0;
  in.read(reinterpret_cast<char*>(&count), sizeof count);
  if (!in || count < 2 || count > 64) throw std::runtime_error("load: bad layer count");
  std::vector<int> sizes(count);
  for (auto& s : sizes) {
    std::uint32_t u = 0;
    in.read(reinterpret_cast<char*>(&u), sizeof u);
    s = static_cast<int>(u);
  }
  if (!in) throw std::runtime_error("load: truncated header");
  Mlp<Scalar> net(sizes);
  auto& p = net.mutable_params();
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    double d = 0;
    in.read(reinterpret_cast<char*>(&d), sizeof d);
    p[i] = static_cast<Scalar>(d);
  }
  if (!in) throw std::runtime_error("load: truncated parameters");
  return net;
}

template <typename Scalar>
void save(const Mlp<Scalar>& net, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save: cannot open " + path.string());
  save(net, out);
}

template <typename Scalar = double>
Mlp<Scalar> load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load: cannot open " + path.string());
  return load<Scalar>(in);
}

}  // namespace explore_go::nn
