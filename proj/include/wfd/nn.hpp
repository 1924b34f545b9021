#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "wfd/errors.hpp"
#include "wfd/rng.hpp"
#include "wfd/tensor.hpp"

namespace wfd {

// Trainable tensor with a gradient slot of identical shape.
struct Param {
  Tensor value, grad;
  Param() = default;
  explicit Param(std::vector<std::size_t> shape) : value(shape), grad(std::move(shape)) {}
};

using ParamRefs = std::vector<std::pair<std::string, Param*>>;

inline void zero_grads(const ParamRefs& params) {
  for (const auto& [name, p] : params) p->grad.fill(0.0);
}

// One SGD update: theta <- theta - lr * grad, elementwise.
inline void sgd_step(const ParamRefs& params, double lr) {
  for (const auto& [name, p] : params) {
    if (!p->value.same_shape(p->grad))
      throw config_error("sgd_step: value/grad shape mismatch for " + name);
    for (std::size_t i = 0; i < p->value.size(); ++i)
      p->value.data[i] -= lr * p->grad.data[i];
  }
}

inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline Tensor relu(const Tensor& x) {
  Tensor y = x;
  for (double& v : y.data) v = v > 0.0 ? v : 0.0;
  return y;
}

// Gradient through relu using the forward output as the mask.
inline void relu_backward(const Tensor& y, const Tensor& gy, Tensor& gx_accum) {
  for (std::size_t i = 0; i < y.size(); ++i)
    if (y.data[i] > 0.0) gx_accum.data[i] += gy.data[i];
}

inline Tensor sigmoid_map(const Tensor& x) {
  Tensor y = x;
  for (double& v : y.data) v = sigmoid(v);
  return y;
}

// 1D cross-correlation with stride, dilation and zero padding.
// Weight layout [out_ch, in_ch, kernel]; activations are [ch, len] or
// [batch, ch, len].
struct Conv1d {
  int in_ch = 1, out_ch = 1, kernel = 1, stride = 1, dilation = 1, pad = 0;
  Param weight, bias;

  Conv1d() = default;
  // pad < 0 selects length-preserving padding for stride 1 and odd kernels.
  Conv1d(int ic, int oc, int k, int s = 1, int d = 1, int p = -1)
      : in_ch(ic), out_ch(oc), kernel(k), stride(s), dilation(d),
        pad(p < 0 ? d * (k - 1) / 2 : p),
        weight({static_cast<std::size_t>(oc), static_cast<std::size_t>(ic),
                static_cast<std::size_t>(k)}),
        bias({static_cast<std::size_t>(oc)}) {
    if (ic < 1 || oc < 1 || k < 1 || s < 1 || d < 1)
      throw config_error("conv1d: invalid geometry");
  }

  // Scaled-uniform fan-in initialization (relu gain); biases start at zero.
  void init(Rng& rng) {
    const double bound = std::sqrt(6.0 / (static_cast<double>(in_ch) * kernel));
    for (double& w : weight.value.data) w = rng.uniform(-bound, bound);
    bias.value.fill(0.0);
  }

  int out_len(int in_len) const {
    const int span = dilation * (kernel - 1) + 1;
    const int n = in_len + 2 * pad - span;
    return n < 0 ? 0 : n / stride + 1;
  }

  ParamRefs params(const std::string& prefix) {
    return {{prefix + ".w", &weight}, {prefix + ".b", &bias}};
  }

  Tensor forward(const Tensor& x) const {
    if (x.rank() == 3) {
      const std::size_t batch = x.dim(0);
      check_channels(x.dim(1));
      const int L = static_cast<int>(x.dim(2));
      const int Lo = checked_out_len(L);
      Tensor y({batch, static_cast<std::size_t>(out_ch), static_cast<std::size_t>(Lo)});
      for (std::size_t b = 0; b < batch; ++b)
        forward_2d(&x.data[b * x.dim(1) * L], L, &y.data[b * out_ch * Lo], Lo);
      return y;
    }
    if (x.rank() != 2) throw data_error("conv1d: input must be rank 2 or 3");
    check_channels(x.dim(0));
    const int L = static_cast<int>(x.dim(1));
    const int Lo = checked_out_len(L);
    Tensor y({static_cast<std::size_t>(out_ch), static_cast<std::size_t>(Lo)});
    forward_2d(x.data.data(), L, y.data.data(), Lo);
    return y;
  }

  // Accumulates parameter gradients; when gx is non-null, adds the input
  // gradient into it (gx must already have x's shape).
  void backward(const Tensor& x, const Tensor& gy, Tensor* gx) {
    if (x.rank() == 3) {
      const std::size_t batch = x.dim(0);
      const int L = static_cast<int>(x.dim(2));
      const int Lo = static_cast<int>(gy.dim(2));
      for (std::size_t b = 0; b < batch; ++b)
        backward_2d(&x.data[b * x.dim(1) * L], L, &gy.data[b * out_ch * Lo], Lo,
                    gx ? &gx->data[b * x.dim(1) * L] : nullptr);
      return;
    }
    backward_2d(x.data.data(), static_cast<int>(x.dim(1)), gy.data.data(),
                static_cast<int>(gy.dim(1)), gx ? gx->data.data() : nullptr);
  }

 private:
  void check_channels(std::size_t ch) const {
    if (static_cast<int>(ch) != in_ch)
      throw data_error("conv1d: input channel count mismatch");
  }
  int checked_out_len(int L) const {
    const int Lo = out_len(L);
    if (Lo <= 0) throw data_error("conv1d: input too short");
    return Lo;
  }

  // Valid output range for tap offset `off`: 0 <= i*stride + off < L.
  std::pair<int, int> tap_range(int off, int L, int Lo) const {
    int lo = 0;
    if (off < 0) lo = (-off + stride - 1) / stride;
    int hi = (L - 1 - off) / stride;
    if (hi > Lo - 1) hi = Lo - 1;
    return {lo, hi};
  }

  void forward_2d(const double* x, int L, double* y, int Lo) const {
    for (int co = 0; co < out_ch; ++co) {
      double* yrow = y + static_cast<std::size_t>(co) * Lo;
      const double b = bias.value.data[co];
      for (int i = 0; i < Lo; ++i) yrow[i] = b;
      for (int ci = 0; ci < in_ch; ++ci) {
        const double* xrow = x + static_cast<std::size_t>(ci) * L;
        const double* wrow = &weight.value.data[(static_cast<std::size_t>(co) * in_ch + ci) * kernel];
        for (int j = 0; j < kernel; ++j) {
          const double w = wrow[j];
          if (w == 0.0) continue;
          const int off = j * dilation - pad;
          const auto [lo, hi] = tap_range(off, L, Lo);
          for (int i = lo; i <= hi; ++i) yrow[i] += w * xrow[i * stride + off];
        }
      }
    }
  }

  void backward_2d(const double* x, int L, const double* gy, int Lo, double* gx) {
    for (int co = 0; co < out_ch; ++co) {
      const double* grow = gy + static_cast<std::size_t>(co) * Lo;
      double gb = 0.0;
      for (int i = 0; i < Lo; ++i) gb += grow[i];
      bias.grad.data[co] += gb;
      for (int ci = 0; ci < in_ch; ++ci) {
        const double* xrow = x + static_cast<std::size_t>(ci) * L;
        double* gxrow = gx ? gx + static_cast<std::size_t>(ci) * L : nullptr;
        const std::size_t wbase = (static_cast<std::size_t>(co) * in_ch + ci) * kernel;
        for (int j = 0; j < kernel; ++j) {
          const int off = j * dilation - pad;
          const auto [lo, hi] = tap_range(off, L, Lo);
          double gw = 0.0;
          for (int i = lo; i <= hi; ++i) gw += grow[i] * xrow[i * stride + off];
          weight.grad.data[wbase + j] += gw;
          if (gxrow) {
            const double w = weight.value.data[wbase + j];
            if (w != 0.0)
              for (int i = lo; i <= hi; ++i) gxrow[i * stride + off] += w * grow[i];
          }
        }
      }
    }
  }
};

// Learnable per-channel gain, the desk-scale stand-in for normalization
// layers inside residual blocks.
struct ChannelScale {
  Param gamma;

  ChannelScale() = default;
  explicit ChannelScale(int channels)
      : gamma({static_cast<std::size_t>(channels)}) {
    gamma.value.fill(1.0);
  }

  ParamRefs params(const std::string& prefix) { return {{prefix + ".g", &gamma}}; }

  Tensor forward(const Tensor& x) const {
    Tensor y = x;
    const std::size_t C = x.dim(0), L = x.dim(1);
    for (std::size_t c = 0; c < C; ++c) {
      const double g = gamma.value.data[c];
      for (std::size_t i = 0; i < L; ++i) y.data[c * L + i] = g * x.data[c * L + i];
    }
    return y;
  }

  void backward(const Tensor& x, const Tensor& gy, Tensor& gx_accum) {
    const std::size_t C = x.dim(0), L = x.dim(1);
    for (std::size_t c = 0; c < C; ++c) {
      const double g = gamma.value.data[c];
      double gg = 0.0;
      for (std::size_t i = 0; i < L; ++i) {
        gg += gy.data[c * L + i] * x.data[c * L + i];
        gx_accum.data[c * L + i] += g * gy.data[c * L + i];
      }
      gamma.grad.data[c] += gg;
    }
  }
};

// Dense layer on a flat vector; used by the pretraining classifier probe.
struct Linear {
  int in_dim = 1, out_dim = 1;
  Param weight, bias;

  Linear() = default;
  Linear(int in, int out)
      : in_dim(in), out_dim(out),
        weight({static_cast<std::size_t>(out), static_cast<std::size_t>(in)}),
        bias({static_cast<std::size_t>(out)}) {}

  void init(Rng& rng) {
    const double bound = std::sqrt(3.0 / in_dim);
    for (double& w : weight.value.data) w = rng.uniform(-bound, bound);
    bias.value.fill(0.0);
  }

  ParamRefs params(const std::string& prefix) {
    return {{prefix + ".w", &weight}, {prefix + ".b", &bias}};
  }

  Tensor forward(const Tensor& x) const {
    Tensor y({static_cast<std::size_t>(out_dim)});
    for (int o = 0; o < out_dim; ++o) {
      double acc = bias.value.data[o];
      for (int i = 0; i < in_dim; ++i)
        acc += weight.value.data[static_cast<std::size_t>(o) * in_dim + i] * x.data[i];
      y.data[o] = acc;
    }
    return y;
  }

  void backward(const Tensor& x, const Tensor& gy, Tensor* gx_accum) {
    for (int o = 0; o < out_dim; ++o) {
      const double g = gy.data[o];
      bias.grad.data[o] += g;
      for (int i = 0; i < in_dim; ++i) {
        weight.grad.data[static_cast<std::size_t>(o) * in_dim + i] += g * x.data[i];
        if (gx_accum)
          gx_accum->data[i] += weight.value.data[static_cast<std::size_t>(o) * in_dim + i] * g;
      }
    }
  }
};

// Residual unit: conv-relu-conv-scale plus (projected) shortcut, relu after
// the add. The per-channel scale is the block's affine gain.
struct BasicBlock {
  Conv1d conv1, conv2;
  ChannelScale scale;
  bool projected = false;
  Conv1d proj;

  BasicBlock() = default;
  BasicBlock(int in_ch, int out_ch, int stride)
      : conv1(in_ch, out_ch, 3, stride, 1, 1),
        conv2(out_ch, out_ch, 3, 1, 1, 1),
        scale(out_ch),
        projected(in_ch != out_ch || stride != 1) {
    if (projected) proj = Conv1d(in_ch, out_ch, 1, stride, 1, 0);
  }

  // The residual branch starts damped so stacked blocks keep activations at
  // a stable scale without normalization layers.
  static constexpr double kInitialGain = 0.25;

  void init(Rng& rng) {
    conv1.init(rng);
    conv2.init(rng);
    if (projected) proj.init(rng);
    scale.gamma.value.fill(kInitialGain);
  }

  ParamRefs params(const std::string& prefix) {
    ParamRefs out;
    for (auto& p : conv1.params(prefix + ".c1")) out.push_back(p);
    for (auto& p : conv2.params(prefix + ".c2")) out.push_back(p);
    for (auto& p : scale.params(prefix + ".scale")) out.push_back(p);
    if (projected)
      for (auto& p : proj.params(prefix + ".proj")) out.push_back(p);
    return out;
  }

  struct Cache {
    Tensor x, a1, h2, y;
  };

  Tensor forward(const Tensor& x, Cache* cache) const {
    Tensor a1 = relu(conv1.forward(x));
    Tensor h2 = conv2.forward(a1);
    Tensor z = scale.forward(h2);
    if (projected) {
      Tensor sc = proj.forward(x);
      for (std::size_t i = 0; i < z.size(); ++i) z.data[i] += sc.data[i];
    } else {
      for (std::size_t i = 0; i < z.size(); ++i) z.data[i] += x.data[i];
    }
    Tensor y = relu(z);
    if (cache) {
      cache->x = x;
      cache->a1 = std::move(a1);
      cache->h2 = std::move(h2);
      cache->y = y;
    }
    return y;
  }

  Tensor backward(const Cache& cache, const Tensor& gy) {
    Tensor gz(gy.shape);
    relu_backward(cache.y, gy, gz);

    Tensor gx(cache.x.shape);
    if (projected) {
      proj.backward(cache.x, gz, &gx);
    } else {
      for (std::size_t i = 0; i < gx.size(); ++i) gx.data[i] += gz.data[i];
    }

    Tensor gh2(cache.h2.shape);
    scale.backward(cache.h2, gz, gh2);
    Tensor ga1(cache.a1.shape);
    conv2.backward(cache.a1, gh2, &ga1);
    Tensor gpre1(cache.a1.shape);
    relu_backward(cache.a1, ga1, gpre1);
    conv1.backward(cache.x, gpre1, &gx);
    return gx;
  }
};

// Scale-perception unit: 1x1 channel reduction, dilated k3 convolution, 1x1
// channel recovery, added onto the identity shortcut. Output shape equals
// input shape; with zeroed weights and biases the block is the identity.
struct DilatedBlock {
  int rate = 1;
  Conv1d reduce, dilated, recover;

  DilatedBlock() = default;
  DilatedBlock(int channels, int r)
      : rate(r),
        reduce(channels, channels / 2, 1, 1, 1, 0),
        dilated(channels / 2, channels / 2, 3, 1, r, r),
        recover(channels / 2, channels, 1, 1, 1, 0) {
    if (channels < 2) throw config_error("dilated_block: needs >= 2 channels");
    if (r < 1) throw config_error("dilated_block: dilation rate must be >= 1");
  }

  // The recovery conv starts damped so a stack of blocks keeps the residual
  // stream near the input scale.
  void init(Rng& rng) {
    reduce.init(rng);
    dilated.init(rng);
    recover.init(rng);
    for (double& w : recover.weight.value.data) w *= 0.25;
  }

  ParamRefs params(const std::string& prefix) {
    ParamRefs out;
    for (auto& p : reduce.params(prefix + ".red")) out.push_back(p);
    for (auto& p : dilated.params(prefix + ".dil")) out.push_back(p);
    for (auto& p : recover.params(prefix + ".rec")) out.push_back(p);
    return out;
  }

  struct Cache {
    Tensor x, a1, a2;
  };

  Tensor forward(const Tensor& x, Cache* cache) const {
    Tensor a1 = relu(reduce.forward(x));
    Tensor a2 = relu(dilated.forward(a1));
    Tensor y = recover.forward(a2);
    if (!y.same_shape(x)) throw data_error("dilated_block: shortcut shape mismatch");
    for (std::size_t i = 0; i < y.size(); ++i) y.data[i] += x.data[i];
    if (cache) {
      cache->x = x;
      cache->a1 = std::move(a1);
      cache->a2 = std::move(a2);
    }
    return y;
  }

  Tensor backward(const Cache& cache, const Tensor& gy) {
    Tensor gx = gy;  // identity shortcut
    Tensor ga2(cache.a2.shape);
    recover.backward(cache.a2, gy, &ga2);
    Tensor gpre2(cache.a2.shape);
    relu_backward(cache.a2, ga2, gpre2);
    Tensor ga1(cache.a1.shape);
    dilated.backward(cache.a1, gpre2, &ga1);
    Tensor gpre1(cache.a1.shape);
    relu_backward(cache.a1, ga1, gpre1);
    reduce.backward(cache.x, gpre1, &gx);
    return gx;
  }
};

}  // namespace wfd
