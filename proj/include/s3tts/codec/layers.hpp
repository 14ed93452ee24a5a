#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "s3tts/numerics.hpp"

namespace s3tts::nn {

// Input span [lo, hi] reaching output index range [lo', hi'] of one conv:
// lo = lo'*stride - pad_left, hi = hi'*stride - pad_left + dilation*(kernel-1).
struct ConvGeometry {
  std::size_t kernel = 1, stride = 1, dilation = 1, pad_left = 0;
};

template <class T>
void add_param(ParamList<T>& out, const std::string& name, const Var<T>& v, bool decay = true) {
  out.push_back(NamedParam<T>{name, v, decay});
}

// Conv1d with weight normalisation: w = g * v / |v| per output channel.
template <class T>
struct WNConv1d {
  Var<T> v, g, b;
  ops::Conv1dOptions opt;
  std::size_t kernel = 1;

  WNConv1d() = default;
  // `gain` scales the initial effective weight; fan-in scaled otherwise.
  WNConv1d(std::size_t cin, std::size_t cout, std::size_t k, Rng& rng, ops::Conv1dOptions o = {}, double gain = 1.0)
      : opt(o), kernel(k) {
    Tensor<T> vt = randn<T>(Shape{cout, cin, k}, 1.0 / std::sqrt(double(cin * k)), rng);
    Tensor<T> gt(Shape{cout});
    for (std::size_t c = 0; c < cout; ++c) {
      double s = 0;
      for (std::size_t i = 0; i < cin * k; ++i) s += double(vt[c * cin * k + i]) * double(vt[c * cin * k + i]);
      gt[c] = T(gain * std::sqrt(s));
    }
    v = make_param(std::move(vt));
    g = make_param(std::move(gt));
    b = make_param(Tensor<T>(Shape{cout}));
  }

  // Same-length padding for an odd kernel at stride 1.
  static ops::Conv1dOptions same(std::size_t k, std::size_t dilation = 1) {
    const std::size_t p = dilation * (k - 1) / 2;
    return {1, dilation, p, p};
  }

  Var<T> operator()(const Var<T>& x) const { return ops::conv1d(x, ops::weight_norm(v, g), &b, opt); }

  ConvGeometry geometry() const { return {kernel, opt.stride, opt.dilation, opt.pad_left}; }

  void collect(ParamList<T>& out, const std::string& prefix) const {
    add_param(out, prefix + ".v", v);
    add_param(out, prefix + ".g", g, false);
    add_param(out, prefix + ".b", b, false);
  }
};

template <class T>
struct WNConvTranspose1d {
  Var<T> v, g, b;
  ops::ConvTranspose1dOptions opt;

  WNConvTranspose1d() = default;
  // Weight layout [Cin, Cout, K]; normalisation runs over input channels.
  WNConvTranspose1d(std::size_t cin, std::size_t cout, std::size_t k, Rng& rng, ops::ConvTranspose1dOptions o)
      : opt(o) {
    Tensor<T> vt = randn<T>(Shape{cin, cout, k}, 1.0 / std::sqrt(double(cin * k) / double(o.stride)), rng);
    Tensor<T> gt(Shape{cin});
    for (std::size_t c = 0; c < cin; ++c) {
      double s = 0;
      for (std::size_t i = 0; i < cout * k; ++i) s += double(vt[c * cout * k + i]) * double(vt[c * cout * k + i]);
      gt[c] = T(std::sqrt(s));
    }
    v = make_param(std::move(vt));
    g = make_param(std::move(gt));
    b = make_param(Tensor<T>(Shape{cout}));
  }

  Var<T> operator()(const Var<T>& x) const { return ops::conv_transpose1d(x, ops::weight_norm(v, g), &b, opt); }

  void collect(ParamList<T>& out, const std::string& prefix) const {
    add_param(out, prefix + ".v", v);
    add_param(out, prefix + ".g", g, false);
    add_param(out, prefix + ".b", b, false);
  }
};

// Per-channel Snake with alpha initialised to 1.
template <class T>
struct Snake {
  Var<T> alpha;

  Snake() = default;
  explicit Snake(std::size_t channels) : alpha(make_param(Tensor<T>(Shape{channels}, T(1)))) {}

  Var<T> operator()(const Var<T>& x) const { return ops::snake(x, alpha); }

  void collect(ParamList<T>& out, const std::string& prefix) const { add_param(out, prefix + ".alpha", alpha, false); }
};

// x + conv1x1(snake(conv_k,dil(snake(x)))), length preserving.
template <class T>
struct ResidualUnit {
  Snake<T> act1, act2;
  WNConv1d<T> conv, proj;

  ResidualUnit() = default;
  ResidualUnit(std::size_t channels, std::size_t kernel, std::size_t dilation, Rng& rng)
      : act1(channels),
        act2(channels),
        conv(channels, channels, kernel, rng, WNConv1d<T>::same(kernel, dilation)),
        proj(channels, channels, 1, rng, {}, 0.1) {}

  Var<T> operator()(const Var<T>& x) const { return ops::add(x, proj(act2(conv(act1(x))))); }

  // The skip path's span is contained in the branch's, so the unit widens
  // the receptive field exactly like its dilated conv.
  ConvGeometry geometry() const { return conv.geometry(); }

  void collect(ParamList<T>& out, const std::string& prefix) const {
    act1.collect(out, prefix + ".act1");
    conv.collect(out, prefix + ".conv");
    act2.collect(out, prefix + ".act2");
    proj.collect(out, prefix + ".proj");
  }
};

}  // namespace s3tts::nn
