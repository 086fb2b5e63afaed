#pragma once

// Small convolutional network with explicit backpropagation.
//
// The trunk is three conv blocks (16,16 / 32,32 / 64,64 channels of 3x3
// stride-1 pad-1 convs with ReLU, each block closed by a 2x2 max-pool),
// followed by flatten, a 256-unit ReLU dense layer, dropout 0.2, a single
// output unit and a sigmoid. Everything is templated on float/double and
// deterministic given the seed: shuffles and dropout masks come from the
// project RNG, and parallel loops write disjoint regions in fixed order, so
// the worker count never changes results.

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "gazelens/core.hpp"
#include "gazelens/csv.hpp"
#include "gazelens/parallel.hpp"
#include "gazelens/rng.hpp"

namespace gazelens::nn {

struct ShapeMismatch : Error {
  explicit ShapeMismatch(const std::string& what) : Error("shape mismatch: " + what) {}
};
struct NonFiniteActivation : Error {
  explicit NonFiniteActivation(const std::string& where)
      : Error("non-finite activation after " + where) {}
};
struct MissingCache : Error {
  MissingCache() : Error("backward called without a cached forward") {}
};
struct NanLoss : Error {
  explicit NanLoss(const std::string& what) : Error("non-finite loss: " + what) {}
};
struct EmptyDataset : Error {
  EmptyDataset() : Error("dataset is empty") {}
};
struct HeaderMismatch : Error {
  explicit HeaderMismatch(const std::string& what)
      : Error("checkpoint header mismatch: " + what) {}
};

enum class Precision { f32, f64 };

inline std::string to_string(Precision p) { return p == Precision::f32 ? "f32" : "f64"; }

template <class T>
struct Tensor {
  int n = 0, c = 0, h = 0, w = 0;
  std::vector<T> data;

  Tensor() = default;
  Tensor(int n_, int c_, int h_, int w_)
      : n(n_), c(c_), h(h_), w(w_),
        data(static_cast<std::size_t>(n_) * c_ * h_ * w_, T{0}) {}

  std::size_t size() const { return data.size(); }

  T* plane(int in, int ic) {
    return data.data() + (static_cast<std::size_t>(in) * c + ic) * h * w;
  }
  const T* plane(int in, int ic) const {
    return data.data() + (static_cast<std::size_t>(in) * c + ic) * h * w;
  }

  bool same_shape(const Tensor& o) const {
    return n == o.n && c == o.c && h == o.h && w == o.w;
  }

  void check_finite(const std::string& where) const {
    for (const T v : data)
      if (!std::isfinite(static_cast<double>(v))) throw NonFiniteActivation(where);
  }
};

namespace detail {

template <class T>
void fill_normal(Tensor<T>& t, Rng& rng, double sigma) {
  for (auto& v : t.data) v = static_cast<T>(rng.normal(0.0, sigma));
}

}  // namespace detail

// 3x3 convolution, stride 1, pad 1; preserves H and W.
template <class T>
class Conv2d {
 public:
  Conv2d(int in_ch, int out_ch) : weight(out_ch, in_ch, 3, 3), bias(out_ch, 1, 1, 1),
                                  grad_weight(out_ch, in_ch, 3, 3), grad_bias(out_ch, 1, 1, 1),
                                  in_ch_(in_ch), out_ch_(out_ch) {}

  void init(Rng& rng) {
    detail::fill_normal(weight, rng, std::sqrt(2.0 / (static_cast<double>(in_ch_) * 9.0)));
    std::fill(bias.data.begin(), bias.data.end(), T{0});
  }

  Tensor<T> forward(const Tensor<T>& x, unsigned jobs = 0) {
    if (x.c != in_ch_) throw ShapeMismatch("conv input channels");
    cache_in_ = x;
    has_cache_ = true;
    const int H = x.h, W = x.w;
    Tensor<T> out(x.n, out_ch_, H, W);
    parallel_for(static_cast<std::size_t>(x.n) * out_ch_, [&](std::size_t job) {
      const int in = static_cast<int>(job) / out_ch_;
      const int oc = static_cast<int>(job) % out_ch_;
      T* op = out.plane(in, oc);
      const T b = bias.data[static_cast<std::size_t>(oc)];
      for (int i = 0; i < H * W; ++i) op[i] = b;
      for (int ic = 0; ic < in_ch_; ++ic) {
        const T* ip = x.plane(in, ic);
        const T* wp = weight.plane(oc, ic);
        for (int ky = 0; ky < 3; ++ky) {
          const int y0 = std::max(0, 1 - ky), y1 = std::min(H, H + 1 - ky);
          for (int kx = 0; kx < 3; ++kx) {
            const T wv = wp[ky * 3 + kx];
            const int x0 = std::max(0, 1 - kx), x1 = std::min(W, W + 1 - kx);
            for (int y = y0; y < y1; ++y) {
              T* orow = op + y * W;
              const T* irow = ip + (y + ky - 1) * W + (kx - 1);
              for (int xx = x0; xx < x1; ++xx) orow[xx] += wv * irow[xx];
            }
          }
        }
      }
    }, jobs);
    out.check_finite("conv");
    return out;
  }

  Tensor<T> backward(const Tensor<T>& g, unsigned jobs = 0) {
    if (!has_cache_) throw MissingCache();
    const Tensor<T>& x = cache_in_;
    if (g.n != x.n || g.c != out_ch_ || g.h != x.h || g.w != x.w)
      throw ShapeMismatch("conv upstream gradient");
    const int H = x.h, W = x.w;

    // weight/bias gradients: parallel over output channel, batch accumulated
    // in index order inside each job, so the result is worker-independent.
    parallel_for(static_cast<std::size_t>(out_ch_), [&](std::size_t j) {
      const int oc = static_cast<int>(j);
      T* gw = grad_weight.plane(oc, 0);
      std::fill(gw, gw + static_cast<std::size_t>(in_ch_) * 9, T{0});
      T gb{0};
      for (int in = 0; in < x.n; ++in) {
        const T* gp = g.plane(in, oc);
        for (int i = 0; i < H * W; ++i) gb += gp[i];
        for (int ic = 0; ic < in_ch_; ++ic) {
          const T* ip = x.plane(in, ic);
          T* gwc = grad_weight.plane(oc, ic);
          for (int ky = 0; ky < 3; ++ky) {
            const int y0 = std::max(0, 1 - ky), y1 = std::min(H, H + 1 - ky);
            for (int kx = 0; kx < 3; ++kx) {
              const int x0 = std::max(0, 1 - kx), x1 = std::min(W, W + 1 - kx);
              T acc{0};
              for (int y = y0; y < y1; ++y) {
                const T* grow = gp + y * W;
                const T* irow = ip + (y + ky - 1) * W + (kx - 1);
                for (int xx = x0; xx < x1; ++xx) acc += grow[xx] * irow[xx];
              }
              gwc[ky * 3 + kx] += acc;
            }
          }
        }
      }
      grad_bias.data[static_cast<std::size_t>(oc)] = gb;
    }, jobs);

    Tensor<T> gin(x.n, in_ch_, H, W);
    parallel_for(static_cast<std::size_t>(x.n) * in_ch_, [&](std::size_t job) {
      const int in = static_cast<int>(job) / in_ch_;
      const int ic = static_cast<int>(job) % in_ch_;
      T* dst = gin.plane(in, ic);
      for (int oc = 0; oc < out_ch_; ++oc) {
        const T* gp = g.plane(in, oc);
        const T* wp = weight.plane(oc, ic);
        for (int ky = 0; ky < 3; ++ky) {
          const int y0 = std::max(0, 1 - ky), y1 = std::min(H, H + 1 - ky);
          for (int kx = 0; kx < 3; ++kx) {
            const T wv = wp[ky * 3 + kx];
            const int x0 = std::max(0, 1 - kx), x1 = std::min(W, W + 1 - kx);
            for (int y = y0; y < y1; ++y) {
              const T* grow = gp + y * W;
              T* drow = dst + (y + ky - 1) * W + (kx - 1);
              for (int xx = x0; xx < x1; ++xx) drow[xx] += wv * grow[xx];
            }
          }
        }
      }
    }, jobs);
    return gin;
  }

  const Tensor<T>& cached_input() const {
    if (!has_cache_) throw MissingCache();
    return cache_in_;
  }

  int in_channels() const { return in_ch_; }
  int out_channels() const { return out_ch_; }

  Tensor<T> weight, bias, grad_weight, grad_bias;

 private:
  int in_ch_, out_ch_;
  Tensor<T> cache_in_;
  bool has_cache_ = false;
};

template <class T>
class Relu {
 public:
  Tensor<T> forward(const Tensor<T>& x) {
    cache_in_ = x;
    has_cache_ = true;
    Tensor<T> out = x;
    for (auto& v : out.data) v = v > T{0} ? v : T{0};
    return out;
  }

  Tensor<T> backward(const Tensor<T>& g) {
    if (!has_cache_) throw MissingCache();
    if (!g.same_shape(cache_in_)) throw ShapeMismatch("relu upstream gradient");
    Tensor<T> gin = g;
    for (std::size_t i = 0; i < gin.data.size(); ++i)
      if (!(cache_in_.data[i] > T{0})) gin.data[i] = T{0};
    return gin;
  }

 private:
  Tensor<T> cache_in_;
  bool has_cache_ = false;
};

// 2x2 max-pool, stride 2. Ties pick the first element in scan order.
template <class T>
class MaxPool2 {
 public:
  Tensor<T> forward(const Tensor<T>& x) {
    if (x.h % 2 != 0 || x.w % 2 != 0) throw ShapeMismatch("pool input must be even");
    in_n_ = x.n; in_c_ = x.c; in_h_ = x.h; in_w_ = x.w;
    Tensor<T> out(x.n, x.c, x.h / 2, x.w / 2);
    argmax_.assign(out.size(), 0);
    std::size_t o = 0;
    for (int in = 0; in < x.n; ++in)
      for (int ic = 0; ic < x.c; ++ic) {
        const T* ip = x.plane(in, ic);
        for (int y = 0; y < x.h; y += 2)
          for (int xx = 0; xx < x.w; xx += 2) {
            std::size_t best = static_cast<std::size_t>(y) * x.w + xx;
            T bv = ip[best];
            const std::size_t cand[3] = {best + 1, best + static_cast<std::size_t>(x.w),
                                         best + static_cast<std::size_t>(x.w) + 1};
            for (const auto ci : cand)
              if (ip[ci] > bv) { bv = ip[ci]; best = ci; }
            out.data[o] = bv;
            argmax_[o] = best;
            ++o;
          }
      }
    has_cache_ = true;
    return out;
  }

  Tensor<T> backward(const Tensor<T>& g) {
    if (!has_cache_) throw MissingCache();
    if (g.n != in_n_ || g.c != in_c_ || g.h != in_h_ / 2 || g.w != in_w_ / 2)
      throw ShapeMismatch("pool upstream gradient");
    Tensor<T> gin(in_n_, in_c_, in_h_, in_w_);
    std::size_t o = 0;
    for (int in = 0; in < in_n_; ++in)
      for (int ic = 0; ic < in_c_; ++ic) {
        T* dst = gin.plane(in, ic);
        const std::size_t cells = static_cast<std::size_t>(g.h) * g.w;
        for (std::size_t cell = 0; cell < cells; ++cell, ++o)
          dst[argmax_[o]] += g.data[o];
      }
    return gin;
  }

 private:
  std::vector<std::size_t> argmax_;
  int in_n_ = 0, in_c_ = 0, in_h_ = 0, in_w_ = 0;
  bool has_cache_ = false;
};

template <class T>
class Flatten {
 public:
  Tensor<T> forward(const Tensor<T>& x) {
    in_c_ = x.c; in_h_ = x.h; in_w_ = x.w;
    has_cache_ = true;
    Tensor<T> out;
    out.n = x.n;
    out.c = x.c * x.h * x.w;
    out.h = 1;
    out.w = 1;
    out.data = x.data;
    return out;
  }

  Tensor<T> backward(const Tensor<T>& g) {
    if (!has_cache_) throw MissingCache();
    Tensor<T> gin;
    gin.n = g.n;
    gin.c = in_c_;
    gin.h = in_h_;
    gin.w = in_w_;
    gin.data = g.data;
    return gin;
  }

 private:
  int in_c_ = 0, in_h_ = 0, in_w_ = 0;
  bool has_cache_ = false;
};

template <class T>
class Dense {
 public:
  Dense(int in_dim, int out_dim)
      : weight(out_dim, in_dim, 1, 1), bias(out_dim, 1, 1, 1),
        grad_weight(out_dim, in_dim, 1, 1), grad_bias(out_dim, 1, 1, 1),
        in_dim_(in_dim), out_dim_(out_dim) {}

  void init(Rng& rng) {
    detail::fill_normal(weight, rng, std::sqrt(2.0 / static_cast<double>(in_dim_)));
    std::fill(bias.data.begin(), bias.data.end(), T{0});
  }

  Tensor<T> forward(const Tensor<T>& x, unsigned jobs = 0) {
    if (x.c != in_dim_ || x.h != 1 || x.w != 1) throw ShapeMismatch("dense input");
    cache_in_ = x;
    has_cache_ = true;
    Tensor<T> out(x.n, out_dim_, 1, 1);
    parallel_for(static_cast<std::size_t>(x.n), [&](std::size_t in) {
      const T* xp = x.data.data() + in * static_cast<std::size_t>(in_dim_);
      T* op = out.data.data() + in * static_cast<std::size_t>(out_dim_);
      for (int o = 0; o < out_dim_; ++o) {
        const T* wp = weight.data.data() + static_cast<std::size_t>(o) * in_dim_;
        T acc = bias.data[static_cast<std::size_t>(o)];
        for (int i = 0; i < in_dim_; ++i) acc += wp[i] * xp[i];
        op[o] = acc;
      }
    }, jobs);
    out.check_finite("dense");
    return out;
  }

  Tensor<T> backward(const Tensor<T>& g, unsigned jobs = 0) {
    if (!has_cache_) throw MissingCache();
    const Tensor<T>& x = cache_in_;
    if (g.n != x.n || g.c != out_dim_ || g.h != 1 || g.w != 1)
      throw ShapeMismatch("dense upstream gradient");

    parallel_for(static_cast<std::size_t>(out_dim_), [&](std::size_t o) {
      T* gw = grad_weight.data.data() + o * static_cast<std::size_t>(in_dim_);
      std::fill(gw, gw + in_dim_, T{0});
      T gb{0};
      for (int in = 0; in < x.n; ++in) {
        const T gv = g.data[static_cast<std::size_t>(in) * out_dim_ + o];
        gb += gv;
        const T* xp = x.data.data() + static_cast<std::size_t>(in) * in_dim_;
        for (int i = 0; i < in_dim_; ++i) gw[i] += gv * xp[i];
      }
      grad_bias.data[o] = gb;
    }, jobs);

    Tensor<T> gin(x.n, in_dim_, 1, 1);
    parallel_for(static_cast<std::size_t>(x.n), [&](std::size_t in) {
      T* dst = gin.data.data() + in * static_cast<std::size_t>(in_dim_);
      for (int o = 0; o < out_dim_; ++o) {
        const T gv = g.data[in * static_cast<std::size_t>(out_dim_) + o];
        const T* wp = weight.data.data() + static_cast<std::size_t>(o) * in_dim_;
        for (int i = 0; i < in_dim_; ++i) dst[i] += gv * wp[i];
      }
    }, jobs);
    return gin;
  }

  int in_dim() const { return in_dim_; }
  int out_dim() const { return out_dim_; }

  Tensor<T> weight, bias, grad_weight, grad_bias;

 private:
  int in_dim_, out_dim_;
  Tensor<T> cache_in_;
  bool has_cache_ = false;
};

// Inverted dropout: surviving activations are scaled by 1/(1-p) at train
// time so eval-mode forward is the identity.
template <class T>
class Dropout {
 public:
  explicit Dropout(double p) : p_(p) {}

  Tensor<T> forward(const Tensor<T>& x, bool train_mode, Rng& rng) {
    if (!train_mode) {
      has_cache_ = false;
      return x;
    }
    mask_.assign(x.size(), T{0});
    const T scale = static_cast<T>(1.0 / (1.0 - p_));
    for (auto& m : mask_)
      if (rng.uniform() >= p_) m = scale;
    Tensor<T> out = x;
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] *= mask_[i];
    has_cache_ = true;
    return out;
  }

  Tensor<T> backward(const Tensor<T>& g) {
    if (!has_cache_) return g;  // eval-mode forward was the identity
    Tensor<T> gin = g;
    for (std::size_t i = 0; i < gin.data.size(); ++i) gin.data[i] *= mask_[i];
    return gin;
  }

  double p() const { return p_; }

 private:
  double p_;
  std::vector<T> mask_;
  bool has_cache_ = false;
};

template <class T>
class Sigmoid {
 public:
  Tensor<T> forward(const Tensor<T>& x) {
    Tensor<T> out = x;
    for (auto& v : out.data)
      v = static_cast<T>(1.0 / (1.0 + std::exp(-static_cast<double>(v))));
    cache_out_ = out;
    has_cache_ = true;
    return out;
  }

  Tensor<T> backward(const Tensor<T>& g) {
    if (!has_cache_) throw MissingCache();
    Tensor<T> gin = g;
    for (std::size_t i = 0; i < gin.data.size(); ++i) {
      const T p = cache_out_.data[i];
      gin.data[i] *= p * (T{1} - p);
    }
    return gin;
  }

 private:
  Tensor<T> cache_out_;
  bool has_cache_ = false;
};

// Mean binary cross-entropy with probability clipping.
inline constexpr double kProbClip = 1e-7;

template <class T>
struct LossResult {
  double loss = 0;
  Tensor<T> grad;  // d(loss)/d(p), same shape as p
};

template <class T>
LossResult<T> bce_loss(const Tensor<T>& p, const std::vector<int>& y) {
  if (static_cast<std::size_t>(p.n) != y.size() || p.c != 1 || p.h != 1 || p.w != 1)
    throw ShapeMismatch("bce expects (n,1,1,1) probabilities and n labels");
  LossResult<T> res;
  res.grad = Tensor<T>(p.n, 1, 1, 1);
  const double n = static_cast<double>(p.n);
  for (int i = 0; i < p.n; ++i) {
    const double pc = std::clamp(static_cast<double>(p.data[static_cast<std::size_t>(i)]),
                                 kProbClip, 1.0 - kProbClip);
    const double yi = y[static_cast<std::size_t>(i)] == 1 ? 1.0 : 0.0;
    res.loss += -(yi * std::log(pc) + (1.0 - yi) * std::log(1.0 - pc));
    res.grad.data[static_cast<std::size_t>(i)] =
        static_cast<T>((pc - yi) / (pc * (1.0 - pc)) / n);
  }
  res.loss /= n;
  return res;
}

struct MiniVggSpec {
  int in_channels = 3;
  int in_h = 96;
  int in_w = 96;
  static constexpr std::array<std::pair<int, int>, 3> kBlocks = {
      std::pair{16, 16}, std::pair{32, 32}, std::pair{64, 64}};
  static constexpr int kDenseUnits = 256;
  static constexpr double kDropout = 0.2;

  bool operator==(const MiniVggSpec&) const = default;

  int flat_dim() const { return kBlocks[2].second * (in_h / 8) * (in_w / 8); }
};

template <class T>
class MiniVgg {
 public:
  struct Param {
    std::string name;
    Tensor<T>* value;
    Tensor<T>* grad;
  };

  MiniVgg(const MiniVggSpec& spec, std::uint64_t seed)
      : spec_(spec),
        conv1a_(spec.in_channels, MiniVggSpec::kBlocks[0].first),
        conv1b_(MiniVggSpec::kBlocks[0].first, MiniVggSpec::kBlocks[0].second),
        conv2a_(MiniVggSpec::kBlocks[0].second, MiniVggSpec::kBlocks[1].first),
        conv2b_(MiniVggSpec::kBlocks[1].first, MiniVggSpec::kBlocks[1].second),
        conv3a_(MiniVggSpec::kBlocks[1].second, MiniVggSpec::kBlocks[2].first),
        conv3b_(MiniVggSpec::kBlocks[2].first, MiniVggSpec::kBlocks[2].second),
        dense1_(spec.flat_dim(), MiniVggSpec::kDenseUnits),
        dense2_(MiniVggSpec::kDenseUnits, 1),
        dropout_(MiniVggSpec::kDropout),
        dropout_rng_(derive_seed(seed, 0xD0)) {
    if (spec.in_h % 8 != 0 || spec.in_w % 8 != 0)
      throw ShapeMismatch("input height and width must be divisible by 8");
    Rng rng(seed);
    conv1a_.init(rng);
    conv1b_.init(rng);
    conv2a_.init(rng);
    conv2b_.init(rng);
    conv3a_.init(rng);
    conv3b_.init(rng);
    dense1_.init(rng);
    dense2_.init(rng);
  }

  const MiniVggSpec& spec() const { return spec_; }

  // Probabilities in (0,1), shape (n,1,1,1). Caches stay alive for backward.
  Tensor<T> forward(const Tensor<T>& x, bool train_mode, unsigned jobs = 0) {
    if (x.c != spec_.in_channels || x.h != spec_.in_h || x.w != spec_.in_w)
      throw ShapeMismatch("batch does not match model input");
    Tensor<T> t = relu1a_.forward(conv1a_.forward(x, jobs));
    block_out_[0] = pool1_.forward(relu1b_.forward(conv1b_.forward(t, jobs)));
    t = relu2a_.forward(conv2a_.forward(block_out_[0], jobs));
    block_out_[1] = pool2_.forward(relu2b_.forward(conv2b_.forward(t, jobs)));
    t = relu3a_.forward(conv3a_.forward(block_out_[1], jobs));
    block_out_[2] = pool3_.forward(relu3b_.forward(conv3b_.forward(t, jobs)));
    t = relu_d1_.forward(dense1_.forward(flatten_.forward(block_out_[2]), jobs));
    t = dropout_.forward(t, train_mode, dropout_rng_);
    logits_ = dense2_.forward(t, jobs);
    return sigmoid_.forward(logits_);
  }

  // Backpropagates d(loss)/d(probability); fills every parameter's grad and
  // returns the gradient at the input batch.
  Tensor<T> backward(const Tensor<T>& grad_prob, unsigned jobs = 0) {
    Tensor<T> g = sigmoid_.backward(grad_prob);
    g = dense2_.backward(g, jobs);
    g = dropout_.backward(g);
    g = dense1_.backward(relu_d1_.backward(g), jobs);
    g = flatten_.backward(g);
    g = relu3b_.backward(pool3_.backward(g));
    g = conv3b_.backward(g, jobs);
    g = conv3a_.backward(relu3a_.backward(g), jobs);
    g = relu2b_.backward(pool2_.backward(g));
    g = conv2b_.backward(g, jobs);
    g = conv2a_.backward(relu2a_.backward(g), jobs);
    g = relu1b_.backward(pool1_.backward(g));
    g = conv1b_.backward(g, jobs);
    g = conv1a_.backward(relu1a_.backward(g), jobs);
    return g;
  }

  // Pooled output of conv block `block` (0-based) from the latest forward,
  // and the pre-sigmoid logits; both used by the explanation pass.
  static constexpr int kNumBlocks = 3;
  const Tensor<T>& block_activations(int block) const {
    if (block < 0 || block >= kNumBlocks) throw ShapeMismatch("no such conv block");
    return block_out_[static_cast<std::size_t>(block)];
  }
  const Tensor<T>& logits() const { return logits_; }

  // Gradient of d(sum of weighted logits)/d(block activations): feeds a
  // gradient into the head and, for earlier blocks, back through the later
  // conv blocks. Parameter grads touched along the way are scratch.
  Tensor<T> backward_logit_to_block(const Tensor<T>& grad_logit, int block, unsigned jobs = 0) {
    if (block < 0 || block >= kNumBlocks) throw ShapeMismatch("no such conv block");
    Tensor<T> g = dense2_.backward(grad_logit, jobs);
    g = dropout_.backward(g);
    g = dense1_.backward(relu_d1_.backward(g), jobs);
    g = flatten_.backward(g);
    if (block == 2) return g;
    g = relu3b_.backward(pool3_.backward(g));
    g = conv3b_.backward(g, jobs);
    g = conv3a_.backward(relu3a_.backward(g), jobs);
    if (block == 1) return g;
    g = relu2b_.backward(pool2_.backward(g));
    g = conv2b_.backward(g, jobs);
    g = conv2a_.backward(relu2a_.backward(g), jobs);
    return g;
  }

  std::vector<Param> params() {
    return {
        {"conv1a.weight", &conv1a_.weight, &conv1a_.grad_weight},
        {"conv1a.bias", &conv1a_.bias, &conv1a_.grad_bias},
        {"conv1b.weight", &conv1b_.weight, &conv1b_.grad_weight},
        {"conv1b.bias", &conv1b_.bias, &conv1b_.grad_bias},
        {"conv2a.weight", &conv2a_.weight, &conv2a_.grad_weight},
        {"conv2a.bias", &conv2a_.bias, &conv2a_.grad_bias},
        {"conv2b.weight", &conv2b_.weight, &conv2b_.grad_weight},
        {"conv2b.bias", &conv2b_.bias, &conv2b_.grad_bias},
        {"conv3a.weight", &conv3a_.weight, &conv3a_.grad_weight},
        {"conv3a.bias", &conv3a_.bias, &conv3a_.grad_bias},
        {"conv3b.weight", &conv3b_.weight, &conv3b_.grad_weight},
        {"conv3b.bias", &conv3b_.bias, &conv3b_.grad_bias},
        {"dense1.weight", &dense1_.weight, &dense1_.grad_weight},
        {"dense1.bias", &dense1_.bias, &dense1_.grad_bias},
        {"dense2.weight", &dense2_.weight, &dense2_.grad_weight},
        {"dense2.bias", &dense2_.bias, &dense2_.grad_bias},
    };
  }

 private:
  MiniVggSpec spec_;
  Conv2d<T> conv1a_, conv1b_, conv2a_, conv2b_, conv3a_, conv3b_;
  Dense<T> dense1_, dense2_;
  Relu<T> relu1a_, relu1b_, relu2a_, relu2b_, relu3a_, relu3b_, relu_d1_;
  MaxPool2<T> pool1_, pool2_, pool3_;
  Flatten<T> flatten_;
  Dropout<T> dropout_;
  Sigmoid<T> sigmoid_;
  Rng dropout_rng_;
  std::array<Tensor<T>, 3> block_out_;
  Tensor<T> logits_;
};

struct TrainConfig {
  int epochs = 6;
  int batch_size = 16;
  double momentum = 0.9;
  double learning_rate = 0.01;
  std::uint64_t seed = 0;
  Precision precision = Precision::f32;
};

template <class T>
struct Dataset {
  int c = 0, h = 0, w = 0;
  std::vector<std::vector<T>> images;  // each c*h*w, row-major
  std::vector<int> labels;

  std::size_t size() const { return images.size(); }
};

struct EpochStats {
  int epoch = 0;
  double train_loss = 0;
  double train_acc = 0;
  double val_loss = 0;
  double val_acc = 0;
};

namespace detail {

template <class T>
Tensor<T> make_batch(const Dataset<T>& ds, const std::vector<std::size_t>& order,
                     std::size_t begin, std::size_t end) {
  Tensor<T> batch(static_cast<int>(end - begin), ds.c, ds.h, ds.w);
  const std::size_t stride = static_cast<std::size_t>(ds.c) * ds.h * ds.w;
  for (std::size_t i = begin; i < end; ++i)
    std::copy(ds.images[order[i]].begin(), ds.images[order[i]].end(),
              batch.data.begin() + (i - begin) * stride);
  return batch;
}

}  // namespace detail

// Mean loss and accuracy over a dataset in eval mode.
template <class T>
std::pair<double, double> evaluate(MiniVgg<T>& model, const Dataset<T>& ds,
                                   int batch_size, unsigned jobs = 0) {
  if (ds.size() == 0) throw EmptyDataset();
  std::vector<std::size_t> order(ds.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  double loss_sum = 0;
  std::size_t correct = 0;
  for (std::size_t b = 0; b < ds.size(); b += static_cast<std::size_t>(batch_size)) {
    const std::size_t e = std::min(ds.size(), b + static_cast<std::size_t>(batch_size));
    auto batch = detail::make_batch(ds, order, b, e);
    std::vector<int> yb(ds.labels.begin() + static_cast<std::ptrdiff_t>(b),
                        ds.labels.begin() + static_cast<std::ptrdiff_t>(e));
    const auto p = model.forward(batch, false, jobs);
    const auto lr = bce_loss(p, yb);
    loss_sum += lr.loss * static_cast<double>(e - b);
    for (std::size_t i = 0; i < yb.size(); ++i) {
      const int pred = static_cast<double>(p.data[i]) >= 0.5 ? 1 : 0;
      if (pred == yb[i]) ++correct;
    }
  }
  return {loss_sum / static_cast<double>(ds.size()),
          static_cast<double>(correct) / static_cast<double>(ds.size())};
}

// Per-image probabilities in dataset order, eval mode.
template <class T>
std::vector<double> predict_probs(MiniVgg<T>& model, const Dataset<T>& ds,
                                  int batch_size, unsigned jobs = 0) {
  std::vector<double> probs;
  probs.reserve(ds.size());
  std::vector<std::size_t> order(ds.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t b = 0; b < ds.size(); b += static_cast<std::size_t>(batch_size)) {
    const std::size_t e = std::min(ds.size(), b + static_cast<std::size_t>(batch_size));
    auto batch = detail::make_batch(ds, order, b, e);
    const auto p = model.forward(batch, false, jobs);
    for (std::size_t i = 0; i < e - b; ++i) probs.push_back(static_cast<double>(p.data[i]));
  }
  return probs;
}

// SGD with momentum: v <- mu*v - lr*g; theta <- theta + v. Shuffling is
// seeded, so runs are reproducible bit-for-bit in a fixed precision.
template <class T>
std::vector<EpochStats> train(MiniVgg<T>& model, const Dataset<T>& train_set,
                              const Dataset<T>& val_set, const TrainConfig& cfg,
                              unsigned jobs = 0) {
  if (train_set.size() == 0) throw EmptyDataset();
  if (cfg.batch_size < 1) throw Error("batch_size must be >= 1");
  if (cfg.momentum < 0 || cfg.momentum >= 1) throw Error("momentum must be in [0,1)");

  auto params = model.params();
  std::vector<Tensor<T>> velocity;
  velocity.reserve(params.size());
  for (const auto& p : params)
    velocity.emplace_back(p.value->n, p.value->c, p.value->h, p.value->w);

  Rng shuffle_rng(derive_seed(cfg.seed, 0x5E));
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  std::vector<EpochStats> log;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (std::size_t i = order.size() - 1; i > 0; --i) {
      const auto j = static_cast<std::size_t>(
          shuffle_rng.uniform_int(0, static_cast<int>(i)));
      std::swap(order[i], order[j]);
    }

    double loss_sum = 0;
    std::size_t correct = 0;
    for (std::size_t b = 0; b < train_set.size();
         b += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t e =
          std::min(train_set.size(), b + static_cast<std::size_t>(cfg.batch_size));
      auto batch = detail::make_batch(train_set, order, b, e);
      std::vector<int> yb(e - b);
      for (std::size_t i = b; i < e; ++i) yb[i - b] = train_set.labels[order[i]];

      const auto p = model.forward(batch, true, jobs);
      const auto lr = bce_loss(p, yb);
      if (!std::isfinite(lr.loss))
        throw NanLoss("epoch " + std::to_string(epoch) + ", batch at " + std::to_string(b));
      loss_sum += lr.loss * static_cast<double>(e - b);
      for (std::size_t i = 0; i < yb.size(); ++i) {
        const int pred = static_cast<double>(p.data[i]) >= 0.5 ? 1 : 0;
        if (pred == yb[i]) ++correct;
      }

      model.backward(lr.grad, jobs);
      for (std::size_t k = 0; k < params.size(); ++k) {
        T* v = velocity[k].data.data();
        T* th = params[k].value->data.data();
        const T* g = params[k].grad->data.data();
        const T mu = static_cast<T>(cfg.momentum);
        const T eta = static_cast<T>(cfg.learning_rate);
        const std::size_t nel = params[k].value->size();
        for (std::size_t i = 0; i < nel; ++i) {
          v[i] = mu * v[i] - eta * g[i];
          th[i] += v[i];
        }
      }
    }

    EpochStats st;
    st.epoch = epoch + 1;
    st.train_loss = loss_sum / static_cast<double>(train_set.size());
    st.train_acc = static_cast<double>(correct) / static_cast<double>(train_set.size());
    if (val_set.size() > 0) {
      const auto [vl, va] = evaluate(model, val_set, cfg.batch_size, jobs);
      st.val_loss = vl;
      st.val_acc = va;
    }
    log.push_back(st);
  }
  return log;
}

inline std::string train_log_csv(const std::vector<EpochStats>& log) {
  std::string out = "epoch,train_loss,train_acc,val_loss,val_acc\n";
  for (const auto& r : log) {
    out += std::to_string(r.epoch);
    out += ',';
    out += csv::format_double(r.train_loss);
    out += ',';
    out += csv::format_double(r.train_acc);
    out += ',';
    out += csv::format_double(r.val_loss);
    out += ',';
    out += csv::format_double(r.val_acc);
    out += '\n';
  }
  return out;
}

// ---------------------------------------------------------------------------
// Checkpoints: magic, little-endian u32 header length, JSON header, then raw
// little-endian parameter blobs in header order.

inline constexpr char kCheckpointMagic[8] = {'g', 'z', 'l', 'c', 'k', 'p', 't', '1'};

namespace detail {

template <class T>
void append_le(std::string& out, T v) {
  using U = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;
  const U u = std::bit_cast<U>(v);
  for (std::size_t b = 0; b < sizeof(U); ++b)
    out.push_back(static_cast<char>((u >> (8 * b)) & 0xffu));
}

template <class T>
T read_le(const char* p) {
  using U = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;
  U u = 0;
  for (std::size_t b = 0; b < sizeof(U); ++b)
    u |= static_cast<U>(static_cast<unsigned char>(p[b])) << (8 * b);
  return std::bit_cast<T>(u);
}

}  // namespace detail

template <class T>
void save_checkpoint(MiniVgg<T>& model, const std::string& path) {
  auto params = model.params();
  nlohmann::json tensors = nlohmann::json::array();
  for (const auto& p : params)
    tensors.push_back({p.name, {p.value->n, p.value->c, p.value->h, p.value->w}});
  const nlohmann::json header{
      {"version", 1},
      {"precision", sizeof(T) == 4 ? "f32" : "f64"},
      {"input", {model.spec().in_channels, model.spec().in_h, model.spec().in_w}},
      {"tensors", std::move(tensors)}};
  const std::string hj = header.dump();

  std::string out(kCheckpointMagic, sizeof(kCheckpointMagic));
  for (int b = 0; b < 4; ++b)
    out.push_back(static_cast<char>((hj.size() >> (8 * b)) & 0xffu));
  out += hj;
  for (const auto& p : params)
    for (const T v : p.value->data) detail::append_le(out, v);

  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open for writing: " + path);
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw IoError("write failed: " + path);
}

inline nlohmann::json read_checkpoint_header(const std::string& bytes) {
  if (bytes.size() < sizeof(kCheckpointMagic) + 4 ||
      std::memcmp(bytes.data(), kCheckpointMagic, sizeof(kCheckpointMagic)) != 0)
    throw HeaderMismatch("bad magic");
  std::uint32_t hlen = 0;
  for (int b = 0; b < 4; ++b)
    hlen |= static_cast<std::uint32_t>(
                static_cast<unsigned char>(bytes[sizeof(kCheckpointMagic) + b]))
            << (8 * b);
  const std::size_t hoff = sizeof(kCheckpointMagic) + 4;
  if (bytes.size() < hoff + hlen) throw IoError("checkpoint truncated");
  try {
    return nlohmann::json::parse(bytes.substr(hoff, hlen));
  } catch (const nlohmann::json::exception& e) {
    throw HeaderMismatch(e.what());
  }
}

template <class T>
void load_checkpoint(MiniVgg<T>& model, const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open: " + path);
  std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());

  const auto header = read_checkpoint_header(bytes);
  try {
    if (header.at("version").get<int>() != 1) throw HeaderMismatch("unsupported version");
    const std::string prec = header.at("precision").get<std::string>();
    if (prec != (sizeof(T) == 4 ? "f32" : "f64"))
      throw HeaderMismatch("precision is " + prec);
    const auto input = header.at("input");
    if (input.at(0).get<int>() != model.spec().in_channels ||
        input.at(1).get<int>() != model.spec().in_h ||
        input.at(2).get<int>() != model.spec().in_w)
      throw HeaderMismatch("input shape differs from model");

    auto params = model.params();
    const auto& tensors = header.at("tensors");
    if (tensors.size() != params.size()) throw HeaderMismatch("tensor count differs");

    std::size_t hlen_off = sizeof(kCheckpointMagic);
    std::uint32_t hlen = 0;
    for (int b = 0; b < 4; ++b)
      hlen |= static_cast<std::uint32_t>(
                  static_cast<unsigned char>(bytes[hlen_off + b]))
              << (8 * b);
    std::size_t off = sizeof(kCheckpointMagic) + 4 + hlen;
    for (std::size_t k = 0; k < params.size(); ++k) {
      const auto& tj = tensors.at(k);
      if (tj.at(0).get<std::string>() != params[k].name)
        throw HeaderMismatch("tensor order differs at " + params[k].name);
      const auto& sh = tj.at(1);
      Tensor<T>* t = params[k].value;
      if (sh.at(0).get<int>() != t->n || sh.at(1).get<int>() != t->c ||
          sh.at(2).get<int>() != t->h || sh.at(3).get<int>() != t->w)
        throw HeaderMismatch("tensor shape differs at " + params[k].name);
      const std::size_t need = t->size() * sizeof(T);
      if (bytes.size() < off + need) throw IoError("checkpoint truncated in blobs");
      for (auto& v : t->data) {
        v = detail::read_le<T>(bytes.data() + off);
        off += sizeof(T);
      }
    }
    if (off != bytes.size()) throw HeaderMismatch("trailing bytes after blobs");
  } catch (const nlohmann::json::exception& e) {
    throw HeaderMismatch(e.what());
  }
}

}  // namespace gazelens::nn
