#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace dmsm::nn {

template <class T>
using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using Vector = Eigen::Matrix<T, Eigen::Dynamic, 1>;

/// Real feature tensor [channels x (height * width)].
template <class T>
struct FeatureMap {
  int height = 0;
  int width = 0;
  Matrix<T> data;

  FeatureMap() = default;
  FeatureMap(int channels, int h, int w)
      : height(h), width(w), data(Matrix<T>::Zero(channels, static_cast<Eigen::Index>(h) * w)) {}

  int channels() const { return static_cast<int>(data.rows()); }
  Eigen::Index pixels() const { return data.cols(); }
};

template <class T>
struct Conv2d {
  int in = 0;
  int out = 0;
  int kernel = 1;
  Matrix<T> weight;  // out x (in * kernel * kernel)
  Vector<T> bias;    // out
};

template <class T>
struct Dense {
  Matrix<T> weight;  // out x in
  Vector<T> bias;
};

template <class T>
struct PabWeights {
  Conv2d<T> first;
  Conv2d<T> second;
};

template <class T>
struct CatbWeights {
  Matrix<T> query;       // attn x channels
  Matrix<T> key;         // attn x time_dim
  Matrix<T> value;       // attn x time_dim
  Vector<T> key_offset;  // time_dim, learned offset added to the single time token
  Dense<T> scale;        // channels x attn; zero-initialised so the block starts as identity
};

struct LhanConfig {
  int in_channels = 4;
  int out_channels = 2;
  int channels = 32;
  int n_pab = 5;
  int kernel = 3;
  std::vector<int> concat_blocks{1, 3, 5};
  int time_dim = 32;
  int mlp_layers = 12;
  int attn_dim = 32;

  /// Blocks whose outputs feed the fuse convolution (block 0 is the lifted input).
  std::vector<int> active_concat_blocks() const;
  void validate() const;
  bool operator==(const LhanConfig&) const = default;
};

template <class T>
struct LhanParams {
  LhanConfig config;
  Conv2d<T> input;
  std::vector<PabWeights<T>> pabs;
  Conv2d<T> fuse;
  std::vector<Dense<T>> time_mlp;
  CatbWeights<T> catb;
  Conv2d<T> head;

  static LhanParams zeros(const LhanConfig& config);

  /// Calls f(name, span, shape) for every parameter array in a fixed order.
  template <class F>
  void visit(F&& f);
  template <class F>
  void visit(F&& f) const;

  std::size_t parameter_count() const;
  void set_zero();
  bool all_finite() const;
};

/// He-style initialisation with the CATB scale projection zeroed.
template <class T>
void initialize(LhanParams<T>& params, std::uint64_t seed);

/// Random values in every array (including the zero-initialised ones); used for
/// gradient checks.
template <class T>
void randomize(LhanParams<T>& params, std::uint64_t seed, T amplitude);

// --- elementary operations ---------------------------------------------------

/// Sigmoid(x) - 0.5
template <class T>
T symmetric_activation(T x);

template <class T>
void symmetric_activation(std::span<const T> in, std::span<T> out);

template <class T>
struct ConvCache {
  Matrix<T> cols;
};

template <class T>
FeatureMap<T> conv_forward(const Conv2d<T>& conv, const FeatureMap<T>& x, ConvCache<T>* cache);

/// Accumulates weight/bias gradients into `grad`; returns dL/dx when wanted.
template <class T>
FeatureMap<T> conv_backward(const Conv2d<T>& conv, const ConvCache<T>& cache,
                            const FeatureMap<T>& grad_out, Conv2d<T>& grad, bool want_input_grad,
                            int height, int width);

template <class T>
struct PabCache {
  FeatureMap<T> input;
  ConvCache<T> conv1;
  ConvCache<T> conv2;
  Matrix<T> a1;  // sigmoid(W1 * O)
  Matrix<T> h;   // H
  Matrix<T> v;   // V = sigma_a(H)
};

template <class T>
FeatureMap<T> pab_forward(const PabWeights<T>& w, const FeatureMap<T>& input, PabCache<T>* cache);

template <class T>
FeatureMap<T> pab_backward(const PabWeights<T>& w, const PabCache<T>& cache,
                           const FeatureMap<T>& grad_out, PabWeights<T>& grad);

template <class T>
struct TimeCache {
  std::vector<Vector<T>> inputs;  // input of each layer
  std::vector<Vector<T>> pre;     // pre-activation of each layer
};

/// Time-index MLP on t/T. Output length == config.time_dim.
template <class T>
Vector<T> time_embed(int t, int steps, const std::vector<Dense<T>>& mlp, TimeCache<T>* cache);

template <class T>
void time_embed_backward(const std::vector<Dense<T>>& mlp, const TimeCache<T>& cache,
                         const Vector<T>& grad_out, std::vector<Dense<T>>& grad);

template <class T>
struct CatbCache {
  FeatureMap<T> input;  // O_n
  Matrix<T> tokens;     // O_n + P.E.
  Matrix<T> query;      // attn x P
  Vector<T> key_in;     // w + key_offset
  Matrix<T> key;        // attn x keys (one time token)
  Matrix<T> value;      // attn x keys
  Matrix<T> weights;    // P x keys, softmax over the key axis
  Matrix<T> att;        // attn x P
  Matrix<T> scale;      // channels x P
  Matrix<T> normed;     // channels x P
  Vector<T> mean;
  Vector<T> stddev;
  std::vector<bool> guarded;
  Vector<T> time;       // w
};

/// Sinusoidal positional code [channels x pixels], cached per shape.
template <class T>
const Matrix<T>& positional_encoding(int channels, Eigen::Index pixels);

template <class T>
FeatureMap<T> catb_forward(const CatbWeights<T>& w, const FeatureMap<T>& features,
                           const Vector<T>& time, CatbCache<T>* cache);

/// Returns dL/dO_n; accumulates dL/dw into grad_time.
template <class T>
FeatureMap<T> catb_backward(const CatbWeights<T>& w, const CatbCache<T>& cache,
                            const FeatureMap<T>& grad_out, CatbWeights<T>& grad,
                            Vector<T>& grad_time);

// --- full network ------------------------------------------------------------

template <class T>
struct LhanCache {
  ConvCache<T> input_conv;
  std::vector<FeatureMap<T>> block_out;  // index 0 is the lifted input
  std::vector<PabCache<T>> pabs;
  ConvCache<T> fuse;
  FeatureMap<T> fused;
  TimeCache<T> time;
  CatbCache<T> catb;
  ConvCache<T> head;
  int height = 0;
  int width = 0;
};

/// Noise estimate for a [in_channels x H x W] input at diffusion step t of `steps`.
template <class T>
FeatureMap<T> lhan_forward(const LhanParams<T>& params, const FeatureMap<T>& input, int t,
                           int steps, LhanCache<T>* cache = nullptr);

/// Accumulates parameter gradients for dL/d(output) into `grad`.
template <class T>
void lhan_backward(const LhanParams<T>& params, const LhanCache<T>& cache,
                   const FeatureMap<T>& grad_out, LhanParams<T>& grad);

// --- visitor -----------------------------------------------------------------

namespace detail {

template <class M>
auto flat(M& m) {
  using Scalar = std::remove_reference_t<decltype(*m.data())>;
  return std::span<Scalar>(m.data(), static_cast<std::size_t>(m.size()));
}

template <class M>
std::vector<int> shape_of(const M& m) {
  if constexpr (M::ColsAtCompileTime == 1) {
    return {static_cast<int>(m.rows())};
  } else {
    return {static_cast<int>(m.rows()), static_cast<int>(m.cols())};
  }
}

template <class P, class F>
void visit_params(P& p, F&& f) {
  auto conv = [&](const std::string& name, auto& c) {
    f(name + ".weight", flat(c.weight), shape_of(c.weight));
    f(name + ".bias", flat(c.bias), shape_of(c.bias));
  };
  conv("input", p.input);
  for (std::size_t i = 0; i < p.pabs.size(); ++i) {
    conv("pab" + std::to_string(i + 1) + ".conv1", p.pabs[i].first);
    conv("pab" + std::to_string(i + 1) + ".conv2", p.pabs[i].second);
  }
  conv("fuse", p.fuse);
  for (std::size_t i = 0; i < p.time_mlp.size(); ++i)
    conv("time_mlp" + std::to_string(i), p.time_mlp[i]);
  f(std::string("catb.query"), flat(p.catb.query), shape_of(p.catb.query));
  f(std::string("catb.key"), flat(p.catb.key), shape_of(p.catb.key));
  f(std::string("catb.value"), flat(p.catb.value), shape_of(p.catb.value));
  f(std::string("catb.key_offset"), flat(p.catb.key_offset), shape_of(p.catb.key_offset));
  conv("catb.scale", p.catb.scale);
  conv("head", p.head);
}

}  // namespace detail

template <class T>
template <class F>
void LhanParams<T>::visit(F&& f) {
  detail::visit_params(*this, f);
}

template <class T>
template <class F>
void LhanParams<T>::visit(F&& f) const {
  detail::visit_params(*this, f);
}

}  // namespace dmsm::nn
