#include "dmsm/lhan.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <random>
#include <stdexcept>
#include <utility>

namespace dmsm::nn {

std::vector<int> LhanConfig::active_concat_blocks() const {
  std::vector<int> blocks;
  for (int b : concat_blocks)
    if (b >= 1 && b <= n_pab && std::find(blocks.begin(), blocks.end(), b) == blocks.end())
      blocks.push_back(b);
  if (blocks.empty()) blocks.push_back(n_pab);
  return blocks;
}

void LhanConfig::validate() const {
  if (in_channels < 1 || out_channels < 1 || channels < 1)
    throw std::invalid_argument("LhanConfig: channel counts must be positive");
  if (n_pab < 0) throw std::invalid_argument("LhanConfig: n_pab must be >= 0");
  if (kernel < 1 || kernel % 2 == 0) throw std::invalid_argument("LhanConfig: kernel must be odd");
  if (time_dim < 1 || attn_dim < 1) throw std::invalid_argument("LhanConfig: bad attention sizes");
  if (mlp_layers < 1) throw std::invalid_argument("LhanConfig: mlp_layers must be >= 1");
  for (int b : concat_blocks)
    if (b < 1) throw std::invalid_argument("LhanConfig: concat block out of range");
}

namespace {

template <class T>
Conv2d<T> make_conv(int in, int out, int kernel) {
  Conv2d<T> c;
  c.in = in;
  c.out = out;
  c.kernel = kernel;
  c.weight = Matrix<T>::Zero(out, in * kernel * kernel);
  c.bias = Vector<T>::Zero(out);
  return c;
}

template <class T>
Dense<T> make_dense(int in, int out) {
  return {Matrix<T>::Zero(out, in), Vector<T>::Zero(out)};
}

template <class T>
T sigmoid(T x) {
  return T(1) / (T(1) + std::exp(-x));
}

template <class T>
T silu(T x) {
  return x * sigmoid(x);
}

template <class T>
T silu_grad(T x) {
  const T s = sigmoid(x);
  return s * (T(1) + x * (T(1) - s));
}

}  // namespace

template <class T>
LhanParams<T> LhanParams<T>::zeros(const LhanConfig& config) {
  config.validate();
  LhanParams<T> p;
  p.config = config;
  const int c = config.channels;
  p.input = make_conv<T>(config.in_channels, c, config.kernel);
  p.pabs.resize(static_cast<std::size_t>(config.n_pab));
  for (auto& b : p.pabs) {
    b.first = make_conv<T>(c, c, config.kernel);
    b.second = make_conv<T>(c, c, config.kernel);
  }
  const int concat = static_cast<int>(config.active_concat_blocks().size()) * c;
  p.fuse = make_conv<T>(concat, c, 1);
  p.time_mlp.reserve(static_cast<std::size_t>(config.mlp_layers));
  for (int l = 0; l < config.mlp_layers; ++l)
    p.time_mlp.push_back(make_dense<T>(l == 0 ? 1 : config.time_dim, config.time_dim));
  p.catb.query = Matrix<T>::Zero(config.attn_dim, c);
  p.catb.key = Matrix<T>::Zero(config.attn_dim, config.time_dim);
  p.catb.value = Matrix<T>::Zero(config.attn_dim, config.time_dim);
  p.catb.key_offset = Vector<T>::Zero(config.time_dim);
  p.catb.scale = make_dense<T>(config.attn_dim, c);
  p.head = make_conv<T>(c, config.out_channels, config.kernel);
  return p;
}

template <class T>
std::size_t LhanParams<T>::parameter_count() const {
  std::size_t n = 0;
  visit([&](const std::string&, auto s, const std::vector<int>&) { n += s.size(); });
  return n;
}

template <class T>
void LhanParams<T>::set_zero() {
  visit([](const std::string&, std::span<T> s, const std::vector<int>&) {
    std::fill(s.begin(), s.end(), T(0));
  });
}

template <class T>
bool LhanParams<T>::all_finite() const {
  bool ok = true;
  visit([&](const std::string&, std::span<const T> s, const std::vector<int>&) {
    for (T v : s)
      if (!std::isfinite(v)) ok = false;
  });
  return ok;
}

template <class T>
void initialize(LhanParams<T>& p, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto fill = [&](auto& m, double fan_in, double gain) {
    std::normal_distribution<double> nd(0.0, gain / std::sqrt(fan_in));
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<T>(nd(rng));
  };
  const double k2 = static_cast<double>(p.config.kernel) * p.config.kernel;
  fill(p.input.weight, p.input.in * k2, 1.0);
  for (auto& b : p.pabs) {
    fill(b.first.weight, b.first.in * k2, 1.0);
    fill(b.second.weight, b.second.in * k2, 1.0);
  }
  fill(p.fuse.weight, p.fuse.in, 1.0);
  for (auto& d : p.time_mlp) fill(d.weight, static_cast<double>(d.weight.cols()), 1.4);
  fill(p.catb.query, p.catb.query.cols(), 1.0);
  fill(p.catb.key, p.catb.key.cols(), 1.0);
  fill(p.catb.value, p.catb.value.cols(), 1.0);
  // catb.scale and head stay at zero: the block starts as identity and the
  // initial noise estimate is zero.
  p.catb.scale.weight.setZero();
  p.head.weight.setZero();
}

template <class T>
void randomize(LhanParams<T>& p, std::uint64_t seed, T amplitude) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> ud(-1.0, 1.0);
  p.visit([&](const std::string&, std::span<T> s, const std::vector<int>& shape) {
    const double fan = shape.size() > 1 ? std::max(1, shape[1]) : 1;
    const double a = static_cast<double>(amplitude) * std::sqrt(3.0 / fan);
    for (T& v : s) v = static_cast<T>(a * ud(rng));
  });
}

template <class T>
T symmetric_activation(T x) {
  return sigmoid(x) - T(0.5);
}

template <class T>
void symmetric_activation(std::span<const T> in, std::span<T> out) {
  if (in.size() != out.size()) throw std::invalid_argument("symmetric_activation: size mismatch");
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = symmetric_activation(in[i]);
}

// ---------------------------------------------------------------------------
// Convolution (same padding) via im2col

namespace {

template <class T>
void im2col(const Matrix<T>& x, int h, int w, int k, Matrix<T>& cols) {
  const int ch = static_cast<int>(x.rows());
  const int r = k / 2;
  const Eigen::Index px = static_cast<Eigen::Index>(h) * w;
  cols.resize(static_cast<Eigen::Index>(ch) * k * k, px);
  for (int c = 0; c < ch; ++c) {
    const T* src = x.row(c).data();
    for (int ky = 0; ky < k; ++ky)
      for (int kx = 0; kx < k; ++kx) {
        T* dst = cols.row((static_cast<Eigen::Index>(c) * k + ky) * k + kx).data();
        const int dy = ky - r;
        const int dx = kx - r;
        const int x0 = std::max(0, -dx);
        const int x1 = std::min(w, w - dx);
        for (int y = 0; y < h; ++y) {
          T* row = dst + static_cast<std::ptrdiff_t>(y) * w;
          const int sy = y + dy;
          if (sy < 0 || sy >= h) {
            std::fill(row, row + w, T(0));
            continue;
          }
          std::fill(row, row + x0, T(0));
          const T* s = src + static_cast<std::ptrdiff_t>(sy) * w + dx;
          std::copy(s + x0, s + x1, row + x0);
          std::fill(row + x1, row + w, T(0));
        }
      }
  }
}

template <class T>
void col2im(const Matrix<T>& cols, int ch, int h, int w, int k, Matrix<T>& x) {
  const int r = k / 2;
  x.setZero(ch, static_cast<Eigen::Index>(h) * w);
  for (int c = 0; c < ch; ++c) {
    T* dst = x.row(c).data();
    for (int ky = 0; ky < k; ++ky)
      for (int kx = 0; kx < k; ++kx) {
        const T* src = cols.row((static_cast<Eigen::Index>(c) * k + ky) * k + kx).data();
        const int dy = ky - r;
        const int dx = kx - r;
        const int x0 = std::max(0, -dx);
        const int x1 = std::min(w, w - dx);
        for (int y = 0; y < h; ++y) {
          const int sy = y + dy;
          if (sy < 0 || sy >= h) continue;
          const T* s = src + static_cast<std::ptrdiff_t>(y) * w;
          T* d = dst + static_cast<std::ptrdiff_t>(sy) * w + dx;
          for (int xx = x0; xx < x1; ++xx) d[xx] += s[xx];
        }
      }
  }
}

}  // namespace

template <class T>
FeatureMap<T> conv_forward(const Conv2d<T>& conv, const FeatureMap<T>& x, ConvCache<T>* cache) {
  if (x.channels() != conv.in)
    throw std::invalid_argument("conv_forward: expected " + std::to_string(conv.in) +
                                " input channels, got " + std::to_string(x.channels()));
  FeatureMap<T> y;
  y.height = x.height;
  y.width = x.width;
  if (conv.kernel == 1) {
    y.data.noalias() = conv.weight * x.data;
    if (cache) cache->cols = x.data;
  } else {
    Matrix<T> local;
    Matrix<T>& cols = cache ? cache->cols : local;
    im2col(x.data, x.height, x.width, conv.kernel, cols);
    y.data.noalias() = conv.weight * cols;
  }
  y.data.colwise() += conv.bias;
  return y;
}

template <class T>
FeatureMap<T> conv_backward(const Conv2d<T>& conv, const ConvCache<T>& cache,
                            const FeatureMap<T>& grad_out, Conv2d<T>& grad, bool want_input_grad,
                            int height, int width) {
  grad.weight.noalias() += grad_out.data * cache.cols.transpose();
  grad.bias += grad_out.data.rowwise().sum();
  FeatureMap<T> gx;
  if (!want_input_grad) return gx;
  gx.height = height;
  gx.width = width;
  if (conv.kernel == 1) {
    gx.data.noalias() = conv.weight.transpose() * grad_out.data;
  } else {
    Matrix<T> dcols;
    dcols.noalias() = conv.weight.transpose() * grad_out.data;
    col2im(dcols, conv.in, height, width, conv.kernel, gx.data);
  }
  return gx;
}

// ---------------------------------------------------------------------------
// Parameter-free attention block

template <class T>
FeatureMap<T> pab_forward(const PabWeights<T>& w, const FeatureMap<T>& input, PabCache<T>* cache) {
  ConvCache<T> c1;
  ConvCache<T> c2;
  FeatureMap<T> z1 = conv_forward(w.first, input, cache ? &cache->conv1 : &c1);
  z1.data = z1.data.unaryExpr([](T v) { return sigmoid(v); });
  FeatureMap<T> z2 = conv_forward(w.second, z1, cache ? &cache->conv2 : &c2);
  if (z2.channels() != input.channels())
    throw std::invalid_argument("pab_forward: block must preserve the channel count");
  Matrix<T> h = z2.data.unaryExpr([](T v) { return sigmoid(v); });
  Matrix<T> v = h.unaryExpr([](T x) { return symmetric_activation(x); });
  FeatureMap<T> out;
  out.height = input.height;
  out.width = input.width;
  out.data = (input.data + h).cwiseProduct(v);
  if (cache) {
    cache->input = input;
    cache->a1 = std::move(z1.data);
    cache->h = std::move(h);
    cache->v = std::move(v);
  }
  return out;
}

template <class T>
FeatureMap<T> pab_backward(const PabWeights<T>& w, const PabCache<T>& cache,
                           const FeatureMap<T>& grad_out, PabWeights<T>& grad) {
  const int hgt = cache.input.height;
  const int wid = cache.input.width;
  const Matrix<T>& h = cache.h;
  const Matrix<T>& v = cache.v;
  // O = U * V, U = O_prev + H, V = sigmoid(H) - 0.5
  Matrix<T> du = grad_out.data.cwiseProduct(v);
  Matrix<T> dv = grad_out.data.cwiseProduct(cache.input.data + h);
  // d sigmoid(H) = s (1 - s) with s = V + 0.5
  Matrix<T> dh = du + dv.cwiseProduct(v.unaryExpr([](T x) { return (x + T(0.5)) * (T(0.5) - x); }));
  FeatureMap<T> dz2;
  dz2.height = hgt;
  dz2.width = wid;
  dz2.data = dh.cwiseProduct(h.unaryExpr([](T x) { return x * (T(1) - x); }));
  FeatureMap<T> da1 = conv_backward(w.second, cache.conv2, dz2, grad.second, true, hgt, wid);
  da1.data = da1.data.cwiseProduct(cache.a1.unaryExpr([](T x) { return x * (T(1) - x); }));
  FeatureMap<T> dx = conv_backward(w.first, cache.conv1, da1, grad.first, true, hgt, wid);
  dx.data += du;
  return dx;
}

// ---------------------------------------------------------------------------
// Time-index MLP

template <class T>
Vector<T> time_embed(int t, int steps, const std::vector<Dense<T>>& mlp, TimeCache<T>* cache) {
  if (steps < 1 || t < 1 || t > steps)
    throw std::out_of_range("time_embed: t=" + std::to_string(t) + " outside [1, " +
                            std::to_string(steps) + "]");
  if (mlp.empty()) throw std::invalid_argument("time_embed: empty MLP");
  Vector<T> h(1);
  h(0) = static_cast<T>(static_cast<double>(t) / steps);
  if (cache) {
    cache->inputs.clear();
    cache->pre.clear();
  }
  for (std::size_t l = 0; l < mlp.size(); ++l) {
    if (mlp[l].weight.cols() != h.size())
      throw std::invalid_argument("time_embed: layer width mismatch");
    Vector<T> z = mlp[l].weight * h + mlp[l].bias;
    if (cache) {
      cache->inputs.push_back(h);
      cache->pre.push_back(z);
    }
    h = (l + 1 < mlp.size()) ? Vector<T>(z.unaryExpr([](T v) { return silu(v); })) : z;
  }
  return h;
}

template <class T>
void time_embed_backward(const std::vector<Dense<T>>& mlp, const TimeCache<T>& cache,
                         const Vector<T>& grad_out, std::vector<Dense<T>>& grad) {
  Vector<T> g = grad_out;
  for (std::size_t l = mlp.size(); l-- > 0;) {
    if (l + 1 < mlp.size())
      g = g.cwiseProduct(cache.pre[l].unaryExpr([](T v) { return silu_grad(v); }));
    grad[l].weight.noalias() += g * cache.inputs[l].transpose();
    grad[l].bias += g;
    if (l > 0) g = mlp[l].weight.transpose() * g;
  }
}

// ---------------------------------------------------------------------------
// Cross-attention transformer block

template <class T>
const Matrix<T>& positional_encoding(int channels, Eigen::Index pixels) {
  static std::mutex mutex;
  static std::map<std::pair<int, Eigen::Index>, std::unique_ptr<Matrix<T>>> table;
  std::lock_guard lock(mutex);
  auto& slot = table[{channels, pixels}];
  if (!slot) {
    auto pe = std::make_unique<Matrix<T>>(channels, pixels);
    for (int c = 0; c < channels; ++c) {
      const double freq = std::pow(10000.0, -static_cast<double>(2 * (c / 2)) / channels);
      for (Eigen::Index p = 0; p < pixels; ++p) {
        const double a = static_cast<double>(p) * freq;
        (*pe)(c, p) = static_cast<T>(c % 2 == 0 ? std::sin(a) : std::cos(a));
      }
    }
    slot = std::move(pe);
  }
  return *slot;
}

namespace {
constexpr double kStdGuard = 1e-8;
}

template <class T>
FeatureMap<T> catb_forward(const CatbWeights<T>& w, const FeatureMap<T>& features,
                           const Vector<T>& time, CatbCache<T>* cache) {
  const int ch = features.channels();
  const Eigen::Index px = features.pixels();
  if (w.query.cols() != ch || w.scale.weight.rows() != ch)
    throw std::invalid_argument("catb_forward: channel mismatch");
  if (w.key.cols() != time.size() || w.value.cols() != time.size())
    throw std::invalid_argument("catb_forward: time embedding width mismatch");
  const int n = static_cast<int>(w.query.rows());

  CatbCache<T> local;
  CatbCache<T>& c = cache ? *cache : local;
  c.input = features;
  c.time = time;
  c.tokens = features.data + positional_encoding<T>(ch, px);
  c.query.noalias() = w.query * c.tokens;
  c.key_in = time + w.key_offset;
  c.key = w.key * c.key_in;  // attn x 1
  c.value = w.value * time;
  // Scores [P x keys] with a single time token as the key sequence; softmax
  // runs along the key axis.
  const T inv_sqrt_n = T(1) / std::sqrt(static_cast<T>(n));
  Matrix<T> logits = (c.query.transpose() * c.key) * inv_sqrt_n;
  c.weights.resize(logits.rows(), logits.cols());
  for (Eigen::Index p = 0; p < px; ++p) {
    const T m = logits.row(p).maxCoeff();
    auto e = (logits.row(p).array() - m).exp();
    c.weights.row(p) = e / e.sum();
  }
  c.att.noalias() = c.value * c.weights.transpose();  // attn x P
  c.scale.noalias() = w.scale.weight * c.att;
  c.scale.colwise() += w.scale.bias;

  c.mean.resize(ch);
  c.stddev.resize(ch);
  c.guarded.assign(static_cast<std::size_t>(ch), false);
  c.normed.resize(ch, px);
  for (int k = 0; k < ch; ++k) {
    const auto row = features.data.row(k);
    const T mu = row.mean();
    const T var = (row.array() - mu).square().mean();
    const T sd = std::sqrt(var);
    c.mean(k) = mu;
    c.stddev(k) = sd;
    if (static_cast<double>(sd) < kStdGuard) {
      c.guarded[k] = true;
      c.normed.row(k) = row.array() - mu;
    } else {
      c.normed.row(k) = (row.array() - mu) / sd;
    }
  }
  FeatureMap<T> out;
  out.height = features.height;
  out.width = features.width;
  out.data = c.scale.cwiseProduct(c.normed) + features.data;
  return out;
}

template <class T>
FeatureMap<T> catb_backward(const CatbWeights<T>& w, const CatbCache<T>& c,
                            const FeatureMap<T>& grad_out, CatbWeights<T>& grad,
                            Vector<T>& grad_time) {
  const int ch = c.input.channels();
  const Eigen::Index px = c.input.pixels();
  const int n = static_cast<int>(w.query.rows());
  const T inv_sqrt_n = T(1) / std::sqrt(static_cast<T>(n));

  FeatureMap<T> dx;
  dx.height = c.input.height;
  dx.width = c.input.width;
  dx.data = grad_out.data;  // residual path

  Matrix<T> dscale = grad_out.data.cwiseProduct(c.normed);
  Matrix<T> dnormed = grad_out.data.cwiseProduct(c.scale);
  grad.scale.weight.noalias() += dscale * c.att.transpose();
  grad.scale.bias += dscale.rowwise().sum();
  Matrix<T> datt = w.scale.weight.transpose() * dscale;  // attn x P

  // att = value * weights^T
  Matrix<T> dvalue = datt * c.weights;                   // attn x keys
  Matrix<T> dweights = datt.transpose() * c.value;       // P x keys
  Matrix<T> dlogits(dweights.rows(), dweights.cols());   // softmax backward per query
  for (Eigen::Index p = 0; p < px; ++p) {
    const T dot = c.weights.row(p).dot(dweights.row(p));
    dlogits.row(p) = c.weights.row(p).array() * (dweights.row(p).array() - dot);
  }
  Matrix<T> dquery = (c.key * dlogits.transpose()) * inv_sqrt_n;  // attn x P
  Matrix<T> dkey = (c.query * dlogits) * inv_sqrt_n;              // attn x keys

  grad.value.noalias() += dvalue * c.time.transpose();
  grad_time += w.value.transpose() * dvalue;
  grad.query.noalias() += dquery * c.tokens.transpose();
  dx.data.noalias() += w.query.transpose() * dquery;
  grad.key.noalias() += dkey * c.key_in.transpose();
  Vector<T> dkey_in = w.key.transpose() * dkey;
  grad.key_offset += dkey_in;
  grad_time += dkey_in;

  const T inv_px = T(1) / static_cast<T>(px);
  for (int k = 0; k < ch; ++k) {
    const auto dn = dnormed.row(k).array();
    const T mean_dn = dn.sum() * inv_px;
    if (c.guarded[k]) {
      dx.data.row(k).array() += dn - mean_dn;
    } else {
      const auto nk = c.normed.row(k).array();
      const T mean_dn_n = (dn * nk).sum() * inv_px;
      dx.data.row(k).array() += (dn - mean_dn - nk * mean_dn_n) / c.stddev(k);
    }
  }
  return dx;
}

// ---------------------------------------------------------------------------
// Full network

template <class T>
FeatureMap<T> lhan_forward(const LhanParams<T>& params, const FeatureMap<T>& input, int t,
                           int steps, LhanCache<T>* cache) {
  const auto& cfg = params.config;
  if (input.channels() != cfg.in_channels)
    throw std::invalid_argument("lhan_forward: expected " + std::to_string(cfg.in_channels) +
                                " input channels, got " + std::to_string(input.channels()));
  if (input.data.cols() != static_cast<Eigen::Index>(input.height) * input.width)
    throw std::invalid_argument("lhan_forward: feature map shape mismatch");
  LhanCache<T> local;
  LhanCache<T>& c = cache ? *cache : local;
  c.height = input.height;
  c.width = input.width;
  c.block_out.clear();
  c.pabs.assign(params.pabs.size(), PabCache<T>{});

  c.block_out.push_back(conv_forward(params.input, input, &c.input_conv));
  for (std::size_t i = 0; i < params.pabs.size(); ++i)
    c.block_out.push_back(pab_forward(params.pabs[i], c.block_out.back(), &c.pabs[i]));

  const auto blocks = cfg.active_concat_blocks();
  FeatureMap<T> concat(static_cast<int>(blocks.size()) * cfg.channels, input.height, input.width);
  for (std::size_t j = 0; j < blocks.size(); ++j)
    concat.data.middleRows(static_cast<Eigen::Index>(j) * cfg.channels, cfg.channels) =
        c.block_out[static_cast<std::size_t>(blocks[j])].data;
  c.fused = conv_forward(params.fuse, concat, &c.fuse);

  const Vector<T> w = time_embed(t, steps, params.time_mlp, &c.time);
  FeatureMap<T> mixed = catb_forward(params.catb, c.fused, w, &c.catb);
  FeatureMap<T> out = conv_forward(params.head, mixed, &c.head);
  if (!cache) {
    // drop the large buffers early when the caller does not need gradients
    local = LhanCache<T>{};
  }
  return out;
}

template <class T>
void lhan_backward(const LhanParams<T>& params, const LhanCache<T>& c,
                   const FeatureMap<T>& grad_out, LhanParams<T>& grad) {
  const auto& cfg = params.config;
  const int h = c.height;
  const int w = c.width;
  FeatureMap<T> dmixed = conv_backward(params.head, c.head, grad_out, grad.head, true, h, w);
  Vector<T> dtime = Vector<T>::Zero(cfg.time_dim);
  FeatureMap<T> dfused = catb_backward(params.catb, c.catb, dmixed, grad.catb, dtime);
  time_embed_backward(params.time_mlp, c.time, dtime, grad.time_mlp);
  FeatureMap<T> dconcat = conv_backward(params.fuse, c.fuse, dfused, grad.fuse, true, h, w);

  const auto blocks = cfg.active_concat_blocks();
  std::vector<Matrix<T>> dblock(c.block_out.size());
  for (auto& m : dblock) m = Matrix<T>::Zero(cfg.channels, static_cast<Eigen::Index>(h) * w);
  for (std::size_t j = 0; j < blocks.size(); ++j)
    dblock[static_cast<std::size_t>(blocks[j])] +=
        dconcat.data.middleRows(static_cast<Eigen::Index>(j) * cfg.channels, cfg.channels);

  for (std::size_t i = params.pabs.size(); i-- > 0;) {
    FeatureMap<T> g;
    g.height = h;
    g.width = w;
    g.data = std::move(dblock[i + 1]);
    FeatureMap<T> dprev = pab_backward(params.pabs[i], c.pabs[i], g, grad.pabs[i]);
    dblock[i] += dprev.data;
  }
  FeatureMap<T> g0;
  g0.height = h;
  g0.width = w;
  g0.data = std::move(dblock[0]);
  conv_backward(params.input, c.input_conv, g0, grad.input, false, h, w);
}

#define DMSM_INSTANTIATE(T)                                                                     \
  template struct LhanParams<T>;                                                                \
  template void initialize<T>(LhanParams<T>&, std::uint64_t);                                   \
  template void randomize<T>(LhanParams<T>&, std::uint64_t, T);                                 \
  template T symmetric_activation<T>(T);                                                        \
  template void symmetric_activation<T>(std::span<const T>, std::span<T>);                      \
  template FeatureMap<T> conv_forward<T>(const Conv2d<T>&, const FeatureMap<T>&, ConvCache<T>*); \
  template FeatureMap<T> conv_backward<T>(const Conv2d<T>&, const ConvCache<T>&,                \
                                          const FeatureMap<T>&, Conv2d<T>&, bool, int, int);    \
  template FeatureMap<T> pab_forward<T>(const PabWeights<T>&, const FeatureMap<T>&,             \
                                        PabCache<T>*);                                          \
  template FeatureMap<T> pab_backward<T>(const PabWeights<T>&, const PabCache<T>&,              \
                                         const FeatureMap<T>&, PabWeights<T>&);                 \
  template Vector<T> time_embed<T>(int, int, const std::vector<Dense<T>>&, TimeCache<T>*);      \
  template void time_embed_backward<T>(const std::vector<Dense<T>>&, const TimeCache<T>&,       \
                                       const Vector<T>&, std::vector<Dense<T>>&);               \
  template const Matrix<T>& positional_encoding<T>(int, Eigen::Index);                          \
  template FeatureMap<T> catb_forward<T>(const CatbWeights<T>&, const FeatureMap<T>&,           \
                                         const Vector<T>&, CatbCache<T>*);                      \
  template FeatureMap<T> catb_backward<T>(const CatbWeights<T>&, const CatbCache<T>&,           \
                                          const FeatureMap<T>&, CatbWeights<T>&, Vector<T>&);   \
  template FeatureMap<T> lhan_forward<T>(const LhanParams<T>&, const FeatureMap<T>&, int, int,  \
                                         LhanCache<T>*);                                        \
  template void lhan_backward<T>(const LhanParams<T>&, const LhanCache<T>&,                     \
                                 const FeatureMap<T>&, LhanParams<T>&);

DMSM_INSTANTIATE(float)
DMSM_INSTANTIATE(double)

#undef DMSM_INSTANTIATE

}  // namespace dmsm::nn
