#ifndef SQ_LAYERS_HPP_
#define SQ_LAYERS_HPP_

#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "sq/errors.hpp"
#include "sq/gemm.hpp"
#include "sq/partition.hpp"
#include "sq/quantizer.hpp"
#include "sq/rng.hpp"
#include "sq/tensor.hpp"

namespace sq {

struct ParamRef {
  Tensor* value;
  Tensor* grad;
  Tensor* momentum;
  bool decay;  // weight decay applies (off for BatchNorm scale/shift)
};

/// One network layer. forward caches whatever backward needs; backward
/// consumes the cache and throws StateError if no forward preceded it.
class Layer {
 public:
  virtual ~Layer() = default;
  virtual const char* kind() const = 0;
  virtual Tensor forward(const Tensor& x, bool training) = 0;
  virtual Tensor backward(const Tensor& gy) = 0;
  virtual std::vector<ParamRef> params() { return {}; }
  /// Non-parameter persistent state (e.g. BatchNorm running stats).
  virtual std::vector<std::pair<std::string, Tensor*>> buffers() { return {}; }
  virtual void init_params(Rng&) {}
  virtual bool quantizable() const { return false; }

 protected:
  void require_cache(bool have, const char* who) const {
    if (!have)
      throw StateError(std::string(who) + ": backward called before forward");
  }
};

/// Base of layers whose weight matrix can be quantized. Holds the
/// full-precision weights W plus a hybrid buffer; while the hybrid is
/// active, forward and backward run on it, and the weight gradient is the
/// gradient with respect to the hybrid matrix. The trainer applies that
/// gradient straight through to W.
class WeightedLayer : public Layer {
 public:
  bool quantizable() const override { return true; }

  Tensor& weights() { return w_; }
  const Tensor& weights() const { return w_; }
  Tensor& bias() { return b_; }
  Tensor& weight_grad() { return gw_; }
  Tensor& bias_grad() { return gb_; }

  Tensor& hybrid_weights() { return hybrid_; }
  void set_hybrid_active(bool active) { hybrid_active_ = active; }
  bool hybrid_active() const { return hybrid_active_; }
  const Tensor& forward_weights() const {
    return hybrid_active_ ? hybrid_ : w_;
  }

  std::vector<ParamRef> params() override {
    return {{&w_, &gw_, &mw_, true}, {&b_, &gb_, &mb_, true}};
  }

 protected:
  void alloc(Shape w_shape, Shape b_shape) {
    w_ = Tensor(w_shape);
    gw_ = Tensor(w_shape);
    mw_ = Tensor(w_shape);
    hybrid_ = Tensor(w_shape);
    b_ = Tensor(b_shape);
    gb_ = Tensor(b_shape);
    mb_ = Tensor(b_shape);
  }

  Tensor w_, b_, gw_, gb_, mw_, mb_, hybrid_;
  bool hybrid_active_ = false;
};

// ---- fully connected -------------------------------------------------------

class Dense : public WeightedLayer {
 public:
  Dense(std::size_t in, std::size_t out) : in_(in), out_(out) {
    alloc({out, in}, {out});
  }

  const char* kind() const override { return "dense"; }
  std::size_t in_features() const { return in_; }
  std::size_t out_features() const { return out_; }

  void init_params(Rng& rng) override {
    const double limit = std::sqrt(6.0 / static_cast<double>(in_));
    for (auto& v : w_.flat()) v = rng.uniform(-limit, limit);
  }

  Tensor forward(const Tensor& x, bool) override {
    if (x.rank() != 2 || x.extent(1) != in_)
      throw ShapeError("dense: expected (N," + std::to_string(in_) +
                       "), got " + shape_str(x.shape()));
    x_ = x;
    has_cache_ = true;
    const std::size_t n = x.extent(0);
    Tensor y({n, out_});
    // y = x * W^T
    detail::gemm_bt(x.data(), forward_weights().data(), y.data(), n, in_,
                    out_);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < out_; ++j) y.at2(i, j) += b_[j];
    return y;
  }

  Tensor backward(const Tensor& gy) override {
    require_cache(has_cache_, "dense");
    has_cache_ = false;
    const std::size_t n = x_.extent(0);
    if (gy.rank() != 2 || gy.extent(0) != n || gy.extent(1) != out_)
      throw ShapeError("dense backward: upstream gradient shape " +
                       shape_str(gy.shape()));
    // dW = gy^T * x
    detail::gemm_at(gy.data(), x_.data(), gw_.data(), out_, n, in_);
    for (std::size_t j = 0; j < out_; ++j) {
      double s = 0.0;
      for (std::size_t i = 0; i < n; ++i) s += gy.at2(i, j);
      gb_[j] = s;
    }
    // dx = gy * W
    Tensor gx({n, in_});
    detail::gemm(gy.data(), forward_weights().data(), gx.data(), n, out_, in_);
    return gx;
  }

 private:
  std::size_t in_, out_;
  Tensor x_;
  bool has_cache_ = false;
};

// ---- 2-D convolution -------------------------------------------------------

class Conv2d : public WeightedLayer {
 public:
  Conv2d(std::size_t in_ch, std::size_t out_ch, std::size_t kernel,
         std::size_t stride = 1, std::size_t pad = 0)
      : in_ch_(in_ch), out_ch_(out_ch), k_(kernel), stride_(stride),
        pad_(pad) {
    alloc({out_ch, in_ch, kernel, kernel}, {out_ch});
  }

  const char* kind() const override { return "conv2d"; }
  std::size_t kernel() const { return k_; }
  std::size_t stride() const { return stride_; }
  std::size_t padding() const { return pad_; }
  std::size_t in_channels() const { return in_ch_; }
  std::size_t out_channels() const { return out_ch_; }

  void init_params(Rng& rng) override {
    const double fan_in = static_cast<double>(in_ch_ * k_ * k_);
    const double limit = std::sqrt(6.0 / fan_in);
    for (auto& v : w_.flat()) v = rng.uniform(-limit, limit);
  }

  Tensor forward(const Tensor& x, bool) override {
    if (x.rank() != 4 || x.extent(1) != in_ch_)
      throw ShapeError("conv2d: expected (N," + std::to_string(in_ch_) +
                       ",H,W), got " + shape_str(x.shape()));
    const std::size_t n = x.extent(0), h = x.extent(2), w = x.extent(3);
    if (h + 2 * pad_ < k_ || w + 2 * pad_ < k_)
      throw ShapeError("conv2d: input smaller than kernel");
    ho_ = (h + 2 * pad_ - k_) / stride_ + 1;
    wo_ = (w + 2 * pad_ - k_) / stride_ + 1;
    in_shape_ = x.shape();
    im2col(x);
    has_cache_ = true;

    const std::size_t patch = in_ch_ * k_ * k_;
    const std::size_t npix = n * ho_ * wo_;
    Tensor prod({out_ch_, npix});
    detail::gemm(forward_weights().data(), cols_.data(), prod.data(), out_ch_,
                 patch, npix);

    Tensor y({n, out_ch_, ho_, wo_});
    const std::size_t area = ho_ * wo_;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t oc = 0; oc < out_ch_; ++oc) {
        const double bias = b_[oc];
        const double* src = prod.data() + oc * npix + i * area;
        double* dst = y.data() + (i * out_ch_ + oc) * area;
        for (std::size_t p = 0; p < area; ++p) dst[p] = src[p] + bias;
      }
    return y;
  }

  Tensor backward(const Tensor& gy) override {
    require_cache(has_cache_, "conv2d");
    has_cache_ = false;
    const std::size_t n = in_shape_[0];
    if (gy.rank() != 4 || gy.extent(0) != n || gy.extent(1) != out_ch_ ||
        gy.extent(2) != ho_ || gy.extent(3) != wo_)
      throw ShapeError("conv2d backward: upstream gradient shape " +
                       shape_str(gy.shape()));

    const std::size_t patch = in_ch_ * k_ * k_;
    const std::size_t npix = n * ho_ * wo_;
    const std::size_t area = ho_ * wo_;

    // Regroup gy from (N,OC,Ho,Wo) to (OC, N*Ho*Wo) to match cols layout.
    Tensor gym({out_ch_, npix});
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t oc = 0; oc < out_ch_; ++oc) {
        const double* src = gy.data() + (i * out_ch_ + oc) * area;
        double* dst = gym.data() + oc * npix + i * area;
        for (std::size_t p = 0; p < area; ++p) dst[p] = src[p];
      }

    detail::gemm_bt(gym.data(), cols_.data(), gw_.data(), out_ch_, npix,
                    patch);
    for (std::size_t oc = 0; oc < out_ch_; ++oc) {
      double s = 0.0;
      const double* src = gym.data() + oc * npix;
      for (std::size_t p = 0; p < npix; ++p) s += src[p];
      gb_[oc] = s;
    }

    Tensor gcols({patch, npix});
    detail::gemm_at(forward_weights().data(), gym.data(), gcols.data(), patch,
                    out_ch_, npix);
    return col2im(gcols);
  }

 private:
  void im2col(const Tensor& x) {
    const std::size_t n = x.extent(0), h = x.extent(2), w = x.extent(3);
    const std::size_t patch = in_ch_ * k_ * k_;
    const std::size_t npix = n * ho_ * wo_;
    cols_ = Tensor({patch, npix});
    double* out = cols_.data();
    for (std::size_t c = 0; c < in_ch_; ++c)
      for (std::size_t ki = 0; ki < k_; ++ki)
        for (std::size_t kj = 0; kj < k_; ++kj) {
          double* dst = out;
          out += npix;
          for (std::size_t i = 0; i < n; ++i) {
            const double* plane = x.data() + (i * in_ch_ + c) * h * w;
            for (std::size_t oh = 0; oh < ho_; ++oh) {
              const std::ptrdiff_t ih =
                  static_cast<std::ptrdiff_t>(oh * stride_ + ki) -
                  static_cast<std::ptrdiff_t>(pad_);
              for (std::size_t ow = 0; ow < wo_; ++ow, ++dst) {
                const std::ptrdiff_t iw =
                    static_cast<std::ptrdiff_t>(ow * stride_ + kj) -
                    static_cast<std::ptrdiff_t>(pad_);
                *dst = (ih >= 0 && ih < static_cast<std::ptrdiff_t>(h) &&
                        iw >= 0 && iw < static_cast<std::ptrdiff_t>(w))
                           ? plane[ih * static_cast<std::ptrdiff_t>(w) + iw]
                           : 0.0;
              }
            }
          }
        }
  }

  Tensor col2im(const Tensor& gcols) const {
    const std::size_t n = in_shape_[0], h = in_shape_[2], w = in_shape_[3];
    const std::size_t npix = n * ho_ * wo_;
    Tensor gx(in_shape_);
    const double* src = gcols.data();
    for (std::size_t c = 0; c < in_ch_; ++c)
      for (std::size_t ki = 0; ki < k_; ++ki)
        for (std::size_t kj = 0; kj < k_; ++kj) {
          const double* row = src;
          src += npix;
          for (std::size_t i = 0; i < n; ++i) {
            double* plane = gx.data() + (i * in_ch_ + c) * h * w;
            for (std::size_t oh = 0; oh < ho_; ++oh) {
              const std::ptrdiff_t ih =
                  static_cast<std::ptrdiff_t>(oh * stride_ + ki) -
                  static_cast<std::ptrdiff_t>(pad_);
              for (std::size_t ow = 0; ow < wo_; ++ow, ++row) {
                const std::ptrdiff_t iw =
                    static_cast<std::ptrdiff_t>(ow * stride_ + kj) -
                    static_cast<std::ptrdiff_t>(pad_);
                if (ih >= 0 && ih < static_cast<std::ptrdiff_t>(h) &&
                    iw >= 0 && iw < static_cast<std::ptrdiff_t>(w))
                  plane[ih * static_cast<std::ptrdiff_t>(w) + iw] += *row;
              }
            }
          }
        }
    return gx;
  }

  std::size_t in_ch_, out_ch_, k_, stride_, pad_;
  std::size_t ho_ = 0, wo_ = 0;
  Shape in_shape_;
  Tensor cols_;
  bool has_cache_ = false;
};

// ---- activations / pooling -------------------------------------------------

class ReLU : public Layer {
 public:
  const char* kind() const override { return "relu"; }

  Tensor forward(const Tensor& x, bool) override {
    mask_.assign(x.size(), 0);
    Tensor y(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) {
      if (x[i] > 0.0) {
        y[i] = x[i];
        mask_[i] = 1;
      }
    }
    has_cache_ = true;
    return y;
  }

  Tensor backward(const Tensor& gy) override {
    require_cache(has_cache_, "relu");
    has_cache_ = false;
    if (gy.size() != mask_.size())
      throw ShapeError("relu backward: gradient size mismatch");
    Tensor gx(gy.shape());
    for (std::size_t i = 0; i < gy.size(); ++i)
      gx[i] = mask_[i] ? gy[i] : 0.0;
    return gx;
  }

 private:
  std::vector<std::uint8_t> mask_;
  bool has_cache_ = false;
};

class MaxPool2d : public Layer {
 public:
  explicit MaxPool2d(std::size_t kernel = 2, std::size_t stride = 0)
      : k_(kernel), stride_(stride ? stride : kernel) {}

  const char* kind() const override { return "maxpool2d"; }

  Tensor forward(const Tensor& x, bool) override {
    if (x.rank() != 4) throw ShapeError("maxpool2d: expected rank-4 input");
    const std::size_t n = x.extent(0), c = x.extent(1), h = x.extent(2),
                      w = x.extent(3);
    if (h < k_ || w < k_) throw ShapeError("maxpool2d: input smaller than window");
    const std::size_t ho = (h - k_) / stride_ + 1;
    const std::size_t wo = (w - k_) / stride_ + 1;
    in_shape_ = x.shape();
    Tensor y({n, c, ho, wo});
    argmax_.assign(y.size(), 0);
    std::size_t out = 0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t ch = 0; ch < c; ++ch) {
        const double* plane = x.data() + (i * c + ch) * h * w;
        const std::size_t base = (i * c + ch) * h * w;
        for (std::size_t oh = 0; oh < ho; ++oh)
          for (std::size_t ow = 0; ow < wo; ++ow, ++out) {
            double best = -std::numeric_limits<double>::infinity();
            std::size_t best_idx = 0;
            for (std::size_t ki = 0; ki < k_; ++ki)
              for (std::size_t kj = 0; kj < k_; ++kj) {
                const std::size_t ih = oh * stride_ + ki;
                const std::size_t iw = ow * stride_ + kj;
                const double v = plane[ih * w + iw];
                if (v > best) {
                  best = v;
                  best_idx = base + ih * w + iw;
                }
              }
            y[out] = best;
            argmax_[out] = best_idx;
          }
      }
    has_cache_ = true;
    return y;
  }

  Tensor backward(const Tensor& gy) override {
    require_cache(has_cache_, "maxpool2d");
    has_cache_ = false;
    if (gy.size() != argmax_.size())
      throw ShapeError("maxpool2d backward: gradient size mismatch");
    Tensor gx(in_shape_);
    for (std::size_t i = 0; i < gy.size(); ++i) gx[argmax_[i]] += gy[i];
    return gx;
  }

 private:
  std::size_t k_, stride_;
  Shape in_shape_;
  std::vector<std::size_t> argmax_;
  bool has_cache_ = false;
};

class Flatten : public Layer {
 public:
  const char* kind() const override { return "flatten"; }

  Tensor forward(const Tensor& x, bool) override {
    if (x.rank() < 2) throw ShapeError("flatten: expected rank >= 2");
    in_shape_ = x.shape();
    has_cache_ = true;
    return x.reshaped({x.extent(0), x.size() / x.extent(0)});
  }

  Tensor backward(const Tensor& gy) override {
    require_cache(has_cache_, "flatten");
    has_cache_ = false;
    return gy.reshaped(in_shape_);
  }

 private:
  Shape in_shape_;
  bool has_cache_ = false;
};

// ---- batch normalization ---------------------------------------------------

/// Per-channel batch normalization over (N,C) or (N,C,H,W) inputs.
/// Running statistics use momentum 0.9 and biased batch variance; the
/// scale/shift parameters are never quantized and take no weight decay.
class BatchNorm : public Layer {
 public:
  explicit BatchNorm(std::size_t channels, double momentum = 0.9,
                     double eps = 1e-5)
      : c_(channels), momentum_(momentum), eps_(eps) {
    gamma_ = Tensor::full({channels}, 1.0);
    beta_ = Tensor({channels});
    ggamma_ = Tensor({channels});
    gbeta_ = Tensor({channels});
    mgamma_ = Tensor({channels});
    mbeta_ = Tensor({channels});
    running_mean_ = Tensor({channels});
    running_var_ = Tensor::full({channels}, 1.0);
  }

  const char* kind() const override { return "batchnorm"; }

  std::vector<ParamRef> params() override {
    return {{&gamma_, &ggamma_, &mgamma_, false},
            {&beta_, &gbeta_, &mbeta_, false}};
  }

  std::vector<std::pair<std::string, Tensor*>> buffers() override {
    return {{"running_mean", &running_mean_}, {"running_var", &running_var_}};
  }

  Tensor forward(const Tensor& x, bool training) override {
    if ((x.rank() != 2 && x.rank() != 4) || x.extent(1) != c_)
      throw ShapeError("batchnorm: expected (N," + std::to_string(c_) +
                       "[,H,W]), got " + shape_str(x.shape()));
    const std::size_t spatial = x.size() / (x.extent(0) * c_);
    const std::size_t m = x.extent(0) * spatial;

    Tensor y(x.shape());
    if (training) {
      xhat_ = Tensor(x.shape());
      inv_std_.assign(c_, 0.0);
      for (std::size_t ch = 0; ch < c_; ++ch) {
        double mean = 0.0;
        for_channel(x, ch, spatial,
                    [&](double v, std::size_t) { mean += v; });
        mean /= static_cast<double>(m);
        double var = 0.0;
        for_channel(x, ch, spatial, [&](double v, std::size_t) {
          var += (v - mean) * (v - mean);
        });
        var /= static_cast<double>(m);
        const double inv = 1.0 / std::sqrt(var + eps_);
        inv_std_[ch] = inv;
        const double g = gamma_[ch], b = beta_[ch];
        for_channel(x, ch, spatial, [&](double v, std::size_t idx) {
          const double xh = (v - mean) * inv;
          xhat_[idx] = xh;
          y[idx] = g * xh + b;
        });
        running_mean_[ch] = momentum_ * running_mean_[ch] + (1 - momentum_) * mean;
        running_var_[ch] = momentum_ * running_var_[ch] + (1 - momentum_) * var;
      }
      batch_count_ = m;
      has_cache_ = true;
    } else {
      for (std::size_t ch = 0; ch < c_; ++ch) {
        const double inv = 1.0 / std::sqrt(running_var_[ch] + eps_);
        const double g = gamma_[ch], b = beta_[ch], mu = running_mean_[ch];
        for_channel(x, ch, spatial, [&](double v, std::size_t idx) {
          y[idx] = g * (v - mu) * inv + b;
        });
      }
    }
    return y;
  }

  Tensor backward(const Tensor& gy) override {
    require_cache(has_cache_, "batchnorm");
    has_cache_ = false;
    check_same_shape(gy, xhat_, "batchnorm backward");
    const std::size_t spatial = gy.size() / (gy.extent(0) * c_);
    const double m = static_cast<double>(batch_count_);

    Tensor gx(gy.shape());
    for (std::size_t ch = 0; ch < c_; ++ch) {
      double sum_gy = 0.0, sum_gy_xhat = 0.0;
      for_channel(gy, ch, spatial, [&](double v, std::size_t idx) {
        sum_gy += v;
        sum_gy_xhat += v * xhat_[idx];
      });
      ggamma_[ch] = sum_gy_xhat;
      gbeta_[ch] = sum_gy;
      const double g = gamma_[ch], inv = inv_std_[ch];
      for_channel(gy, ch, spatial, [&](double v, std::size_t idx) {
        gx[idx] = g * inv / m * (m * v - sum_gy - xhat_[idx] * sum_gy_xhat);
      });
    }
    return gx;
  }

  Tensor& running_mean() { return running_mean_; }
  Tensor& running_var() { return running_var_; }

 private:
  template <typename F>
  void for_channel(const Tensor& t, std::size_t ch, std::size_t spatial,
                   F&& f) const {
    const std::size_t n = t.extent(0);
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t base = (i * c_ + ch) * spatial;
      for (std::size_t s = 0; s < spatial; ++s) f(t[base + s], base + s);
    }
  }

  std::size_t c_;
  double momentum_, eps_;
  Tensor gamma_, beta_, ggamma_, gbeta_, mgamma_, mbeta_;
  Tensor running_mean_, running_var_;
  Tensor xhat_;
  std::vector<double> inv_std_;
  std::size_t batch_count_ = 0;
  bool has_cache_ = false;
};

// ---- loss ------------------------------------------------------------------

/// Mean softmax cross-entropy over a batch of logits (N,C).
class SoftmaxCrossEntropy {
 public:
  double forward(const Tensor& logits, const std::vector<int>& labels) {
    if (logits.rank() != 2)
      throw ShapeError("cross entropy: expected rank-2 logits");
    const std::size_t n = logits.extent(0), c = logits.extent(1);
    if (labels.size() != n)
      throw ShapeError("cross entropy: batch size mismatch");
    probs_ = Tensor({n, c});
    labels_ = labels;
    double loss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double* row = logits.data() + i * c;
      double mx = row[0];
      for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, row[j]);
      double denom = 0.0;
      for (std::size_t j = 0; j < c; ++j) denom += std::exp(row[j] - mx);
      const double log_denom = std::log(denom);
      for (std::size_t j = 0; j < c; ++j)
        probs_.at2(i, j) = std::exp(row[j] - mx) / denom;
      const int y = labels[i];
      if (y < 0 || static_cast<std::size_t>(y) >= c)
        throw ArgumentError("cross entropy: label out of range");
      loss -= row[y] - mx - log_denom;
    }
    has_cache_ = true;
    return loss / static_cast<double>(n);
  }

  /// d(mean loss)/d(logits) = (softmax - onehot) / N.
  Tensor backward() {
    if (!has_cache_)
      throw StateError("cross entropy: backward called before forward");
    has_cache_ = false;
    const std::size_t n = probs_.extent(0), c = probs_.extent(1);
    Tensor g(probs_.shape());
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < c; ++j)
        g.at2(i, j) = probs_.at2(i, j) / static_cast<double>(n);
      g.at2(i, static_cast<std::size_t>(labels_[i])) -=
          1.0 / static_cast<double>(n);
    }
    return g;
  }

  const Tensor& probabilities() const { return probs_; }

 private:
  Tensor probs_;
  std::vector<int> labels_;
  bool has_cache_ = false;
};

// ---- network container -----------------------------------------------------

class Network {
 public:
  Layer& add(std::string name, std::unique_ptr<Layer> layer) {
    names_.push_back(std::move(name));
    layers_.push_back(std::move(layer));
    return *layers_.back();
  }

  Tensor forward(const Tensor& x, bool training) {
    Tensor h = x;
    for (auto& l : layers_) h = l->forward(h, training);
    return h;
  }

  Tensor backward(const Tensor& gy) {
    Tensor g = gy;
    for (auto it = layers_.rbegin(); it != layers_.rend(); ++it)
      g = (*it)->backward(g);
    return g;
  }

  std::size_t size() const { return layers_.size(); }
  Layer& layer(std::size_t i) { return *layers_[i]; }
  const Layer& layer(std::size_t i) const { return *layers_[i]; }
  const std::string& name(std::size_t i) const { return names_[i]; }

  std::vector<WeightedLayer*> weighted() {
    std::vector<WeightedLayer*> out;
    for (auto& l : layers_)
      if (auto* w = dynamic_cast<WeightedLayer*>(l.get())) out.push_back(w);
    return out;
  }

  void init_params(std::uint64_t seed) {
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      Rng rng = Rng::for_stream(seed, 0x1217, i);
      layers_[i]->init_params(rng);
    }
  }

  void set_hybrid_active(bool active) {
    for (auto* w : weighted()) w->set_hybrid_active(active);
  }

 private:
  std::vector<std::unique_ptr<Layer>> layers_;
  std::vector<std::string> names_;
};

// ---- hybrid weight assembly ------------------------------------------------

/// Write the hybrid matrix: rows in G_q take the quantized reconstruction,
/// rows in G_r copy W bit-exactly.
inline void build_hybrid_into(const WeightMatrixView& w,
                              const std::vector<QuantizedRow>& rows,
                              const PartitionResult& partition,
                              WeightMatrixView out) {
  if (rows.size() != w.rows())
    throw ArgumentError("build_hybrid: quantized row count mismatch");
  for (std::size_t i : partition.quantized)
    if (i >= w.rows())
      throw ArgumentError("build_hybrid: partition index " +
                          std::to_string(i) + " out of range");
  const auto mask = partition.quantized_mask(w.rows());
  for (std::size_t i = 0; i < w.rows(); ++i) {
    auto dst = out.row(i);
    if (mask[i]) {
      const auto& rec = rows[i].reconstruction;
      for (std::size_t j = 0; j < w.cols(); ++j) dst[j] = rec[j];
    } else {
      const auto src = w.row(i);
      for (std::size_t j = 0; j < w.cols(); ++j) dst[j] = src[j];
    }
  }
}

inline Tensor build_hybrid(const Tensor& weights,
                           const PartitionResult& partition,
                           const QuantScheme& scheme, Rng* rng = nullptr) {
  Tensor out(weights.shape());
  auto view = reshape_as_matrix(const_cast<Tensor&>(weights));
  const auto rows = quantize_rows(scheme, view, rng);
  build_hybrid_into(view, rows, partition,
                    reshape_as_matrix(out));
  return out;
}

/// Element-wise mixing: unit u = (row i, col j) takes the per-channel
/// reconstruction value when selected, otherwise the full-precision weight.
inline void build_hybrid_elementwise_into(
    const WeightMatrixView& w, const std::vector<QuantizedRow>& rows,
    const std::vector<std::uint8_t>& unit_mask, WeightMatrixView out) {
  if (unit_mask.size() != w.units())
    throw ArgumentError("build_hybrid: unit mask size mismatch");
  std::size_t u = 0;
  for (std::size_t i = 0; i < w.rows(); ++i) {
    const auto src = w.row(i);
    const auto& rec = rows[i].reconstruction;
    auto dst = out.row(i);
    for (std::size_t j = 0; j < w.cols(); ++j, ++u)
      dst[j] = unit_mask[u] ? rec[j] : src[j];
  }
}

}  // namespace sq

#endif  // SQ_LAYERS_HPP_
