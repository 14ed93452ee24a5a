#pragma once

#include <cmath>
#include <cstddef>
#include <string>

#include "s3tts/numerics/ops.hpp"

namespace s3tts::ops {

struct Conv1dOptions {
  std::size_t stride = 1;
  std::size_t dilation = 1;
  std::size_t pad_left = 0;
  std::size_t pad_right = 0;
};

inline std::size_t conv1d_output_length(std::size_t T, std::size_t kernel, const Conv1dOptions& o) {
  const std::size_t span = o.dilation * (kernel - 1) + 1;
  const std::size_t padded = T + o.pad_left + o.pad_right;
  if (padded < span) return 0;
  return (padded - span) / o.stride + 1;
}

// x[B, Cin, T] * w[Cout, Cin, K] (+ b[Cout]) -> [B, Cout, Lout], zero padding.
template <class T>
Var<T> conv1d(const Var<T>& x, const Var<T>& w, const Var<T>* bias, const Conv1dOptions& opt) {
  const auto& xs = x.shape();
  const auto& ws = w.shape();
  if (xs.size() != 3 || ws.size() != 3 || ws[1] != xs[1])
    throw ShapeError("conv1d: input " + shape_str(xs) + " incompatible with weight " + shape_str(ws));
  if (opt.stride == 0 || opt.dilation == 0) throw ParameterError("conv1d: stride and dilation must be positive");
  const std::size_t B = xs[0], Cin = xs[1], Tin = xs[2], Cout = ws[0], K = ws[2];
  const std::size_t L = conv1d_output_length(Tin, K, opt);
  if (L == 0) throw InputError("conv1d: input length " + std::to_string(Tin) + " shorter than receptive span");
  if (bias && bias->size() != Cout) throw ShapeError("conv1d: bias size mismatch");
  const std::size_t s = opt.stride, dil = opt.dilation, pl = opt.pad_left;

  // For tap k, output t reads input t*s + k*dil - pl; valid t range [lo, hi).
  auto t_range = [=](std::size_t k, std::size_t& lo, std::size_t& hi) {
    const long off = static_cast<long>(k * dil) - static_cast<long>(pl);
    long l = off >= 0 ? 0 : (-off + static_cast<long>(s) - 1) / static_cast<long>(s);
    long h = (static_cast<long>(Tin) - 1 - off);
    h = h < 0 ? 0 : h / static_cast<long>(s) + 1;
    if (h > static_cast<long>(L)) h = static_cast<long>(L);
    if (l > h) l = h;
    lo = static_cast<std::size_t>(l);
    hi = static_cast<std::size_t>(h);
  };

  Tensor<T> out(Shape{B, Cout, L});
  const T* X = x.value().data().data();
  const T* W = w.value().data().data();
  T* Y = out.data().data();
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t co = 0; co < Cout; ++co) {
      T* y = Y + (b * Cout + co) * L;
      if (bias)
        for (std::size_t t = 0; t < L; ++t) y[t] = bias->value()[co];
      for (std::size_t ci = 0; ci < Cin; ++ci) {
        const T* xr = X + (b * Cin + ci) * Tin;
        for (std::size_t k = 0; k < K; ++k) {
          const T wv = W[(co * Cin + ci) * K + k];
          std::size_t lo, hi;
          t_range(k, lo, hi);
          const long off = static_cast<long>(k * dil) - static_cast<long>(pl);
          if (s == 1) {
            const T* src = xr + off;
            for (std::size_t t = lo; t < hi; ++t) y[t] += wv * src[t];
          } else {
            for (std::size_t t = lo; t < hi; ++t) y[t] += wv * xr[static_cast<long>(t * s) + off];
          }
        }
      }
    }
  }
  auto bw = [=](Node<T>& n) {
    const T* X = detail::in_value(n, 0).data().data();
    const T* W = detail::in_value(n, 1).data().data();
    auto gx = detail::in_grad(n, 0);
    auto gw = detail::in_grad(n, 1);
    const T* G = n.grad.data();
    for (std::size_t b = 0; b < B; ++b) {
      for (std::size_t co = 0; co < Cout; ++co) {
        const T* g = G + (b * Cout + co) * L;
        for (std::size_t ci = 0; ci < Cin; ++ci) {
          const T* xr = X + (b * Cin + ci) * Tin;
          for (std::size_t k = 0; k < K; ++k) {
            std::size_t lo, hi;
            t_range(k, lo, hi);
            const long off = static_cast<long>(k * dil) - static_cast<long>(pl);
            if (!gx.empty()) {
              const T wv = W[(co * Cin + ci) * K + k];
              T* gxr = gx.data() + (b * Cin + ci) * Tin;
              for (std::size_t t = lo; t < hi; ++t) gxr[static_cast<long>(t * s) + off] += wv * g[t];
            }
            if (!gw.empty()) {
              T acc = 0;
              for (std::size_t t = lo; t < hi; ++t) acc += g[t] * xr[static_cast<long>(t * s) + off];
              gw[(co * Cin + ci) * K + k] += acc;
            }
          }
        }
      }
    }
    if (n.inputs.size() > 2) {
      if (auto gb = detail::in_grad(n, 2); !gb.empty())
        for (std::size_t b = 0; b < B; ++b)
          for (std::size_t co = 0; co < Cout; ++co)
            for (std::size_t t = 0; t < L; ++t) gb[co] += G[(b * Cout + co) * L + t];
    }
  };
  if (bias) return record<T>("conv1d", std::move(out), {x, w, *bias}, bw);
  return record<T>("conv1d", std::move(out), {x, w}, bw);
}

struct ConvTranspose1dOptions {
  std::size_t stride = 1;
  std::size_t padding = 0;
  std::size_t output_padding = 0;
};

inline std::size_t conv_transpose1d_output_length(std::size_t L, std::size_t kernel,
                                                  const ConvTranspose1dOptions& o) {
  const long v = static_cast<long>((L - 1) * o.stride + kernel + o.output_padding) - 2 * static_cast<long>(o.padding);
  return v > 0 ? static_cast<std::size_t>(v) : 0;
}

// x[B, Cin, L] with w[Cin, Cout, K] (+ b[Cout]) -> [B, Cout, Lout].
template <class T>
Var<T> conv_transpose1d(const Var<T>& x, const Var<T>& w, const Var<T>* bias, const ConvTranspose1dOptions& opt) {
  const auto& xs = x.shape();
  const auto& ws = w.shape();
  if (xs.size() != 3 || ws.size() != 3 || ws[0] != xs[1])
    throw ShapeError("conv_transpose1d: input " + shape_str(xs) + " incompatible with weight " + shape_str(ws));
  if (opt.stride == 0) throw ParameterError("conv_transpose1d: stride must be positive");
  const std::size_t B = xs[0], Cin = xs[1], Lin = xs[2], Cout = ws[1], K = ws[2];
  const std::size_t Lout = conv_transpose1d_output_length(Lin, K, opt);
  if (Lout == 0) throw InputError("conv_transpose1d: empty output");
  if (bias && bias->size() != Cout) throw ShapeError("conv_transpose1d: bias size mismatch");
  const long s = static_cast<long>(opt.stride), p = static_cast<long>(opt.padding);

  Tensor<T> out(Shape{B, Cout, Lout});
  const T* X = x.value().data().data();
  const T* W = w.value().data().data();
  T* Y = out.data().data();
  for (std::size_t b = 0; b < B; ++b) {
    if (bias)
      for (std::size_t co = 0; co < Cout; ++co)
        for (std::size_t t = 0; t < Lout; ++t) Y[(b * Cout + co) * Lout + t] = bias->value()[co];
    for (std::size_t ci = 0; ci < Cin; ++ci) {
      const T* xr = X + (b * Cin + ci) * Lin;
      for (std::size_t co = 0; co < Cout; ++co) {
        T* y = Y + (b * Cout + co) * Lout;
        for (std::size_t k = 0; k < K; ++k) {
          const T wv = W[(ci * Cout + co) * K + k];
          for (std::size_t i = 0; i < Lin; ++i) {
            const long o = static_cast<long>(i) * s + static_cast<long>(k) - p;
            if (o >= 0 && o < static_cast<long>(Lout)) y[o] += wv * xr[i];
          }
        }
      }
    }
  }
  auto bw = [=](Node<T>& n) {
    const T* X = detail::in_value(n, 0).data().data();
    const T* W = detail::in_value(n, 1).data().data();
    auto gx = detail::in_grad(n, 0);
    auto gw = detail::in_grad(n, 1);
    const T* G = n.grad.data();
    for (std::size_t b = 0; b < B; ++b) {
      for (std::size_t ci = 0; ci < Cin; ++ci) {
        const T* xr = X + (b * Cin + ci) * Lin;
        for (std::size_t co = 0; co < Cout; ++co) {
          const T* g = G + (b * Cout + co) * Lout;
          for (std::size_t k = 0; k < K; ++k) {
            const T wv = W[(ci * Cout + co) * K + k];
            T acc = 0;
            for (std::size_t i = 0; i < Lin; ++i) {
              const long o = static_cast<long>(i) * s + static_cast<long>(k) - p;
              if (o < 0 || o >= static_cast<long>(Lout)) continue;
              if (!gx.empty()) gx[(b * Cin + ci) * Lin + i] += wv * g[o];
              acc += xr[i] * g[o];
            }
            if (!gw.empty()) gw[(ci * Cout + co) * K + k] += acc;
          }
        }
      }
    }
    if (n.inputs.size() > 2) {
      if (auto gb = detail::in_grad(n, 2); !gb.empty())
        for (std::size_t b = 0; b < B; ++b)
          for (std::size_t co = 0; co < Cout; ++co)
            for (std::size_t t = 0; t < Lout; ++t) gb[co] += G[(b * Cout + co) * Lout + t];
    }
  };
  if (bias) return record<T>("conv_transpose1d", std::move(out), {x, w, *bias}, bw);
  return record<T>("conv_transpose1d", std::move(out), {x, w}, bw);
}

// w[o, ...] = g[o] * v[o, ...] / |v[o, ...]|
template <class T>
Var<T> weight_norm(const Var<T>& v, const Var<T>& g) {
  const std::size_t O = v.shape().at(0);
  if (g.size() != O) throw ShapeError("weight_norm: gain size mismatch");
  const std::size_t inner = v.size() / O;
  Tensor<T> out(v.shape());
  auto norms = std::make_shared<std::vector<T>>(O);
  for (std::size_t o = 0; o < O; ++o) {
    T s = 0;
    for (std::size_t i = 0; i < inner; ++i) s += v.value()[o * inner + i] * v.value()[o * inner + i];
    const T nrm = std::sqrt(s);
    if (nrm == T(0)) throw NumericError("weight_norm: zero direction vector");
    (*norms)[o] = nrm;
    for (std::size_t i = 0; i < inner; ++i) out[o * inner + i] = g.value()[o] * v.value()[o * inner + i] / nrm;
  }
  return record<T>("weight_norm", std::move(out), {v, g}, [O, inner, norms](Node<T>& n) {
    const auto& vv = detail::in_value(n, 0);
    const auto& gv = detail::in_value(n, 1);
    auto gvv = detail::in_grad(n, 0);
    auto ggg = detail::in_grad(n, 1);
    for (std::size_t o = 0; o < O; ++o) {
      const T nrm = (*norms)[o];
      T dot = 0;  // u . dw
      for (std::size_t i = 0; i < inner; ++i) dot += vv[o * inner + i] / nrm * n.grad[o * inner + i];
      if (!ggg.empty()) ggg[o] += dot;
      if (!gvv.empty()) {
        const T c = gv[o] / nrm;
        for (std::size_t i = 0; i < inner; ++i)
          gvv[o * inner + i] += c * (n.grad[o * inner + i] - vv[o * inner + i] / nrm * dot);
      }
    }
  });
}

// x + sin^2(alpha x) / alpha. `alpha` is either one value applied everywhere
// or one value per channel of a [B, C, T] input.
template <class T>
Var<T> snake(const Var<T>& x, const Var<T>& alpha) {
  const auto& xs = x.shape();
  std::size_t C = 1, inner = x.size(), outer = 1;
  if (alpha.size() != 1) {
    if (xs.size() != 3 || xs[1] != alpha.size())
      throw ShapeError("snake: per-channel alpha needs a [B, C, T] input with C == alpha size");
    C = xs[1];
    inner = xs[2];
    outer = xs[0];
  }
  for (T a : alpha.value().data())
    if (!(a > T(0))) throw ParameterError("snake: alpha must be positive");
  Tensor<T> out(xs);
  for (std::size_t b = 0; b < outer; ++b)
    for (std::size_t c = 0; c < C; ++c) {
      const T a = alpha.value()[c];
      const std::size_t base = (b * C + c) * inner;
      for (std::size_t t = 0; t < inner; ++t) {
        const T v = x.value()[base + t];
        const T sn = std::sin(a * v);
        out[base + t] = v + sn * sn / a;
      }
    }
  return record<T>("snake", std::move(out), {x, alpha}, [outer, C, inner](Node<T>& n) {
    const auto& xv = detail::in_value(n, 0);
    const auto& av = detail::in_value(n, 1);
    auto gx = detail::in_grad(n, 0);
    auto ga = detail::in_grad(n, 1);
    for (std::size_t b = 0; b < outer; ++b)
      for (std::size_t c = 0; c < C; ++c) {
        const T a = av[c];
        const std::size_t base = (b * C + c) * inner;
        T acc = 0;
        for (std::size_t t = 0; t < inner; ++t) {
          const T v = xv[base + t];
          const T g = n.grad[base + t];
          const T s2 = std::sin(T(2) * a * v);
          if (!gx.empty()) gx[base + t] += g * (T(1) + s2);
          if (!ga.empty()) {
            const T sn = std::sin(a * v);
            acc += g * (v * s2 / a - sn * sn / (a * a));
          }
        }
        if (!ga.empty()) ga[c] += acc;
      }
  });
}

template <class T>
Var<T> snake(const Var<T>& x, T alpha) {
  return snake(x, Var<T>::scalar(alpha));
}

// [B, 1, T] -> [B*p, 1, ceil(T/p)]: column c of row b holds x[c + p*j],
// reflect-padded past the end. Used by the multi-period discriminator.
template <class T>
Var<T> period_fold(const Var<T>& x, std::size_t period) {
  const auto& xs = x.shape();
  if (xs.size() != 3 || xs[1] != 1) throw ShapeError("period_fold: expected [B, 1, T]");
  if (period == 0) throw ParameterError("period_fold: period must be positive");
  const std::size_t B = xs[0], T_ = xs[2];
  const std::size_t n = (T_ + period - 1) / period;
  if (n * period - T_ >= T_) throw InputError("period_fold: input too short for reflect padding");
  auto src = std::make_shared<std::vector<std::size_t>>(period * n);
  for (std::size_t c = 0; c < period; ++c)
    for (std::size_t j = 0; j < n; ++j) {
      std::size_t t = c + period * j;
      if (t >= T_) t = 2 * (T_ - 1) - t;
      (*src)[c * n + j] = t;
    }
  Tensor<T> out(Shape{B * period, 1, n});
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t i = 0; i < period * n; ++i) out[b * period * n + i] = x.value()[b * T_ + (*src)[i]];
  return record<T>("period_fold", std::move(out), {x}, [B, T_, period, n, src](Node<T>& nd) {
    auto gx = detail::in_grad(nd, 0);
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t i = 0; i < period * n; ++i) gx[b * T_ + (*src)[i]] += nd.grad[b * period * n + i];
  });
}

}  // namespace s3tts::ops
