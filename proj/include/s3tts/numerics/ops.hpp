#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "s3tts/numerics/autograd.hpp"
#include "s3tts/numerics/kernels.hpp"

// Differentiable primitives. Every function records one node whose backward
// rule accumulates into the gradients of the inputs that need one.
namespace s3tts::ops {

namespace detail {

template <class T>
std::span<T> in_grad(Node<T>& n, std::size_t i) {
  auto& p = n.inputs[i];
  return p->requires_grad ? p->grad_buffer() : std::span<T>{};
}

template <class T>
const Tensor<T>& in_value(const Node<T>& n, std::size_t i) {
  return n.inputs[i]->value;
}

template <class T>
void require_same_shape(const Var<T>& a, const Var<T>& b, const char* op) {
  if (a.shape() != b.shape())
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

// Elementwise map with derivative d(x, y) evaluated at input x and output y.
template <class T, class F, class D>
Var<T> unary(const char* op, const Var<T>& x, F f, D d) {
  Tensor<T> out(x.shape());
  const auto& xv = x.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(xv[i]);
  return record<T>(op, std::move(out), {x}, [d](Node<T>& n) {
    auto gx = in_grad(n, 0);
    const auto& xv = in_value(n, 0);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += n.grad[i] * d(xv[i], n.value[i]);
  });
}

inline std::size_t rows_of(const Shape& s) {
  std::size_t r = 1;
  for (std::size_t i = 0; i + 1 < s.size(); ++i) r *= s[i];
  return r;
}

}  // namespace detail

// ---------------------------------------------------------------- elementwise

template <class T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  detail::require_same_shape(a, b, "add");
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] + b.value()[i];
  return record<T>("add", std::move(out), {a, b}, [](Node<T>& n) {
    for (std::size_t k = 0; k < 2; ++k) {
      auto g = detail::in_grad(n, k);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i];
    }
  });
}

template <class T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  detail::require_same_shape(a, b, "sub");
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] - b.value()[i];
  return record<T>("sub", std::move(out), {a, b}, [](Node<T>& n) {
    auto ga = detail::in_grad(n, 0);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += n.grad[i];
    auto gb = detail::in_grad(n, 1);
    for (std::size_t i = 0; i < gb.size(); ++i) gb[i] -= n.grad[i];
  });
}

template <class T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  detail::require_same_shape(a, b, "mul");
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] * b.value()[i];
  return record<T>("mul", std::move(out), {a, b}, [](Node<T>& n) {
    const auto& av = detail::in_value(n, 0);
    const auto& bv = detail::in_value(n, 1);
    auto ga = detail::in_grad(n, 0);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += n.grad[i] * bv[i];
    auto gb = detail::in_grad(n, 1);
    for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += n.grad[i] * av[i];
  });
}

// a*x + b elementwise with constant a, b.
template <class T>
Var<T> affine(const Var<T>& x, T a, T b) {
  return detail::unary<T>(
      "affine", x, [a, b](T v) { return a * v + b; }, [a](T, T) { return a; });
}

template <class T>
Var<T> scale(const Var<T>& x, T s) {
  return detail::unary<T>(
      "scale", x, [s](T v) { return s * v; }, [s](T, T) { return s; });
}

template <class T>
Var<T> sin(const Var<T>& x) {
  return detail::unary<T>(
      "sin", x, [](T v) { return std::sin(v); }, [](T v, T) { return std::cos(v); });
}

template <class T>
Var<T> square(const Var<T>& x) {
  return detail::unary<T>(
      "square", x, [](T v) { return v * v; }, [](T v, T) { return T(2) * v; });
}

// Natural log of max(x, floor). The clamped region has zero gradient.
template <class T>
Var<T> log(const Var<T>& x, T floor = T(0)) {
  return detail::unary<T>(
      "log", x,
      [floor](T v) {
        if (floor <= T(0) && v <= T(0)) throw NumericError("log of non-positive value");
        return std::log(std::max(v, floor));
      },
      [floor](T v, T) { return v > floor ? T(1) / v : T(0); });
}

template <class T>
Var<T> tanh(const Var<T>& x) {
  return detail::unary<T>(
      "tanh", x, [](T v) { return std::tanh(v); }, [](T, T y) { return T(1) - y * y; });
}

template <class T>
Var<T> relu(const Var<T>& x) {
  return detail::unary<T>(
      "relu", x, [](T v) { return v > T(0) ? v : T(0); }, [](T v, T) { return v > T(0) ? T(1) : T(0); });
}

template <class T>
Var<T> leaky_relu(const Var<T>& x, T slope) {
  return detail::unary<T>(
      "leaky_relu", x, [slope](T v) { return v > T(0) ? v : slope * v; },
      [slope](T v, T) { return v > T(0) ? T(1) : slope; });
}

// Exact (erf) GELU.
template <class T>
Var<T> gelu(const Var<T>& x) {
  constexpr T inv_sqrt2 = T(0.70710678118654752440);
  constexpr T inv_sqrt2pi = T(0.39894228040143267794);
  return detail::unary<T>(
      "gelu", x, [](T v) { return T(0.5) * v * (T(1) + std::erf(v * inv_sqrt2)); },
      [](T v, T) { return T(0.5) * (T(1) + std::erf(v * inv_sqrt2)) + v * inv_sqrt2pi * std::exp(T(-0.5) * v * v); });
}

// max(1 + sign*x, 0), sign = +1 or -1.
template <class T>
Var<T> hinge(const Var<T>& x, int sign) {
  if (sign != 1 && sign != -1) throw ParameterError("hinge sign must be +1 or -1");
  const T s = T(sign);
  return detail::unary<T>(
      "hinge", x, [s](T v) { return std::max(T(1) + s * v, T(0)); },
      [s](T v, T) { return T(1) + s * v > T(0) ? s : T(0); });
}

// Forward value q, identity gradient into x.
template <class T>
Var<T> straight_through(const Var<T>& x, const Tensor<T>& q) {
  if (x.shape() != q.shape()) throw ShapeError("straight_through: shape mismatch");
  return record<T>("straight_through", q, {x}, [](Node<T>& n) {
    auto gx = detail::in_grad(n, 0);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += n.grad[i];
  });
}

// ---------------------------------------------------------------- reductions

template <class T>
Var<T> sum(const Var<T>& x) {
  T s = 0;
  for (T v : x.value().data()) s += v;
  return record<T>("sum", Tensor<T>::scalar(s), {x}, [](Node<T>& n) {
    auto gx = detail::in_grad(n, 0);
    for (auto& g : gx) g += n.grad[0];
  });
}

template <class T>
Var<T> mean(const Var<T>& x) {
  if (x.size() == 0) throw ShapeError("mean of empty tensor");
  T s = 0;
  for (T v : x.value().data()) s += v;
  const T inv = T(1) / T(x.size());
  return record<T>("mean", Tensor<T>::scalar(s * inv), {x}, [inv](Node<T>& n) {
    auto gx = detail::in_grad(n, 0);
    for (auto& g : gx) g += n.grad[0] * inv;
  });
}

// Mean absolute difference.
template <class T>
Var<T> l1_distance(const Var<T>& a, const Var<T>& b) {
  detail::require_same_shape(a, b, "l1_distance");
  if (a.size() == 0) throw ShapeError("l1_distance of empty tensors");
  T s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a.value()[i] - b.value()[i]);
  const T inv = T(1) / T(a.size());
  return record<T>("l1_distance", Tensor<T>::scalar(s * inv), {a, b}, [inv](Node<T>& n) {
    const auto& av = detail::in_value(n, 0);
    const auto& bv = detail::in_value(n, 1);
    auto ga = detail::in_grad(n, 0);
    auto gb = detail::in_grad(n, 1);
    const T g = n.grad[0] * inv;
    for (std::size_t i = 0; i < av.size(); ++i) {
      const T d = av[i] - bv[i];
      const T sg = d > T(0) ? g : (d < T(0) ? -g : T(0));
      if (!ga.empty()) ga[i] += sg;
      if (!gb.empty()) gb[i] -= sg;
    }
  });
}

// Mean over leading rows of the squared L2 norm of the row difference
// (rows are the last axis). For a [1] tensor this is (a-b)^2.
template <class T>
Var<T> sq_l2_distance(const Var<T>& a, const Var<T>& b) {
  detail::require_same_shape(a, b, "sq_l2_distance");
  if (a.size() == 0) throw ShapeError("sq_l2_distance of empty tensors");
  const std::size_t rows = detail::rows_of(a.shape());
  T s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const T d = a.value()[i] - b.value()[i];
    s += d * d;
  }
  const T inv = T(1) / T(rows);
  return record<T>("sq_l2_distance", Tensor<T>::scalar(s * inv), {a, b}, [inv](Node<T>& n) {
    const auto& av = detail::in_value(n, 0);
    const auto& bv = detail::in_value(n, 1);
    auto ga = detail::in_grad(n, 0);
    auto gb = detail::in_grad(n, 1);
    const T g = T(2) * n.grad[0] * inv;
    for (std::size_t i = 0; i < av.size(); ++i) {
      const T d = (av[i] - bv[i]) * g;
      if (!ga.empty()) ga[i] += d;
      if (!gb.empty()) gb[i] -= d;
    }
  });
}

// Mean of squared differences over every element.
template <class T>
Var<T> mse(const Var<T>& a, const Var<T>& b) {
  detail::require_same_shape(a, b, "mse");
  const std::size_t last = a.shape().empty() ? 1 : a.shape().back();
  return scale(sq_l2_distance(a, b), T(1) / T(last));
}

// Row-wise cosine similarity a.b / (|a||b| + eps); rows are the last axis.
template <class T>
Var<T> cosine_similarity(const Var<T>& a, const Var<T>& b, T eps = T(1e-8)) {
  detail::require_same_shape(a, b, "cosine_similarity");
  const std::size_t d = a.shape().back();
  const std::size_t rows = detail::rows_of(a.shape());
  Shape out_shape(a.shape().begin(), a.shape().end() - 1);
  if (out_shape.empty()) out_shape = {1};
  Tensor<T> out(out_shape);
  for (std::size_t r = 0; r < rows; ++r) {
    const T* x = a.value().data().data() + r * d;
    const T* y = b.value().data().data() + r * d;
    T dot = 0, nx = 0, ny = 0;
    for (std::size_t j = 0; j < d; ++j) {
      dot += x[j] * y[j];
      nx += x[j] * x[j];
      ny += y[j] * y[j];
    }
    out[r] = dot / (std::sqrt(nx) * std::sqrt(ny) + eps);
  }
  return record<T>("cosine_similarity", std::move(out), {a, b}, [d, rows, eps](Node<T>& n) {
    const auto& av = detail::in_value(n, 0);
    const auto& bv = detail::in_value(n, 1);
    auto ga = detail::in_grad(n, 0);
    auto gb = detail::in_grad(n, 1);
    for (std::size_t r = 0; r < rows; ++r) {
      const T* x = av.data().data() + r * d;
      const T* y = bv.data().data() + r * d;
      T dot = 0, nx = 0, ny = 0;
      for (std::size_t j = 0; j < d; ++j) {
        dot += x[j] * y[j];
        nx += x[j] * x[j];
        ny += y[j] * y[j];
      }
      const T lx = std::sqrt(nx), ly = std::sqrt(ny);
      const T den = lx * ly + eps;
      const T g = n.grad[r];
      // d/dx [dot / (|x||y| + eps)] = y/den - dot * |y| x / (|x| den^2)
      for (std::size_t j = 0; j < d; ++j) {
        if (!ga.empty()) {
          T term = y[j] / den;
          if (lx > T(0)) term -= dot * ly * x[j] / (lx * den * den);
          ga[r * d + j] += g * term;
        }
        if (!gb.empty()) {
          T term = x[j] / den;
          if (ly > T(0)) term -= dot * lx * y[j] / (ly * den * den);
          gb[r * d + j] += g * term;
        }
      }
    }
  });
}

// ------------------------------------------------------------ linear algebra

// [M,K] x [K,N] -> [M,N]
template <class T>
Var<T> matmul(const Var<T>& a, const Var<T>& b) {
  if (a.shape().size() != 2 || b.shape().size() != 2 || a.shape()[1] != b.shape()[0])
    throw ShapeError("matmul: incompatible shapes " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  const std::size_t M = a.shape()[0], K = a.shape()[1], N = b.shape()[1];
  Tensor<T> out(Shape{M, N});
  kernels::gemm_nn(M, K, N, a.value().data().data(), b.value().data().data(), out.data().data());
  return record<T>("matmul", std::move(out), {a, b}, [M, K, N](Node<T>& n) {
    const auto& av = detail::in_value(n, 0);
    const auto& bv = detail::in_value(n, 1);
    if (auto ga = detail::in_grad(n, 0); !ga.empty())
      kernels::gemm_nt(M, N, K, n.grad.data(), bv.data().data(), ga.data());
    if (auto gb = detail::in_grad(n, 1); !gb.empty())
      kernels::gemm_tn(K, M, N, av.data().data(), n.grad.data(), gb.data());
  });
}

// x[..., in] * W[in, out] (+ b[out]) -> [..., out]
template <class T>
Var<T> linear(const Var<T>& x, const Var<T>& w, const Var<T>* bias = nullptr) {
  const auto& xs = x.shape();
  if (xs.empty() || w.shape().size() != 2 || w.shape()[0] != xs.back())
    throw ShapeError("linear: input " + shape_str(xs) + " vs weight " + shape_str(w.shape()));
  const std::size_t in = w.shape()[0], outd = w.shape()[1];
  const std::size_t rows = x.size() / in;
  if (bias && bias->size() != outd) throw ShapeError("linear: bias size mismatch");
  Shape os = xs;
  os.back() = outd;
  Tensor<T> out(os);
  T* o = out.data().data();
  if (bias)
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t j = 0; j < outd; ++j) o[r * outd + j] = bias->value()[j];
  kernels::gemm_nn(rows, in, outd, x.value().data().data(), w.value().data().data(), o);
  auto bw = [rows, in, outd](Node<T>& n) {
    const auto& xv = detail::in_value(n, 0);
    const auto& wv = detail::in_value(n, 1);
    if (auto gx = detail::in_grad(n, 0); !gx.empty())
      kernels::gemm_nt(rows, outd, in, n.grad.data(), wv.data().data(), gx.data());
    if (auto gw = detail::in_grad(n, 1); !gw.empty())
      kernels::gemm_tn(in, rows, outd, xv.data().data(), n.grad.data(), gw.data());
    if (n.inputs.size() > 2) {
      if (auto gb = detail::in_grad(n, 2); !gb.empty())
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t j = 0; j < outd; ++j) gb[j] += n.grad[r * outd + j];
    }
  };
  if (bias) return record<T>("linear", std::move(out), {x, w, *bias}, bw);
  return record<T>("linear", std::move(out), {x, w}, bw);
}

template <class T>
Var<T> linear(const Var<T>& x, const Var<T>& w, const Var<T>& b) {
  return linear(x, w, &b);
}

// ------------------------------------------------------------ normalisation

// Softmax over the last axis.
template <class T>
Var<T> softmax(const Var<T>& x) {
  const std::size_t d = x.shape().back();
  const std::size_t rows = x.size() / d;
  Tensor<T> out(x.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const T* in = x.value().data().data() + r * d;
    T* o = out.data().data() + r * d;
    T mx = in[0];
    for (std::size_t j = 1; j < d; ++j) mx = std::max(mx, in[j]);
    T s = 0;
    for (std::size_t j = 0; j < d; ++j) s += (o[j] = std::exp(in[j] - mx));
    for (std::size_t j = 0; j < d; ++j) o[j] /= s;
  }
  return record<T>("softmax", std::move(out), {x}, [d, rows](Node<T>& n) {
    auto gx = detail::in_grad(n, 0);
    for (std::size_t r = 0; r < rows; ++r) {
      const T* y = n.value.data().data() + r * d;
      const T* g = n.grad.data() + r * d;
      T dot = 0;
      for (std::size_t j = 0; j < d; ++j) dot += y[j] * g[j];
      for (std::size_t j = 0; j < d; ++j) gx[r * d + j] += y[j] * (g[j] - dot);
    }
  });
}

template <class T>
Var<T> log_softmax(const Var<T>& x) {
  const std::size_t d = x.shape().back();
  const std::size_t rows = x.size() / d;
  Tensor<T> out(x.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const T* in = x.value().data().data() + r * d;
    T* o = out.data().data() + r * d;
    T mx = in[0];
    for (std::size_t j = 1; j < d; ++j) mx = std::max(mx, in[j]);
    T s = 0;
    for (std::size_t j = 0; j < d; ++j) s += std::exp(in[j] - mx);
    const T lse = mx + std::log(s);
    for (std::size_t j = 0; j < d; ++j) o[j] = in[j] - lse;
  }
  return record<T>("log_softmax", std::move(out), {x}, [d, rows](Node<T>& n) {
    auto gx = detail::in_grad(n, 0);
    for (std::size_t r = 0; r < rows; ++r) {
      const T* y = n.value.data().data() + r * d;
      const T* g = n.grad.data() + r * d;
      T gs = 0;
      for (std::size_t j = 0; j < d; ++j) gs += g[j];
      for (std::size_t j = 0; j < d; ++j) gx[r * d + j] += g[j] - std::exp(y[j]) * gs;
    }
  });
}

// Layer normalisation over the last axis with affine gain and bias.
template <class T>
Var<T> layer_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, T eps = T(1e-5)) {
  const std::size_t d = x.shape().back();
  if (gamma.size() != d || beta.size() != d) throw ShapeError("layer_norm: parameter size mismatch");
  const std::size_t rows = x.size() / d;
  Tensor<T> out(x.shape());
  auto xhat = std::make_shared<std::vector<T>>(x.size());
  auto rstd = std::make_shared<std::vector<T>>(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const T* in = x.value().data().data() + r * d;
    T mu = 0;
    for (std::size_t j = 0; j < d; ++j) mu += in[j];
    mu /= T(d);
    T var = 0;
    for (std::size_t j = 0; j < d; ++j) var += (in[j] - mu) * (in[j] - mu);
    var /= T(d);
    const T rs = T(1) / std::sqrt(var + eps);
    (*rstd)[r] = rs;
    for (std::size_t j = 0; j < d; ++j) {
      const T h = (in[j] - mu) * rs;
      (*xhat)[r * d + j] = h;
      out[r * d + j] = h * gamma.value()[j] + beta.value()[j];
    }
  }
  return record<T>("layer_norm", std::move(out), {x, gamma, beta}, [d, rows, xhat, rstd](Node<T>& n) {
    const auto& gv = detail::in_value(n, 1);
    auto gx = detail::in_grad(n, 0);
    auto gg = detail::in_grad(n, 1);
    auto gb = detail::in_grad(n, 2);
    for (std::size_t r = 0; r < rows; ++r) {
      const T* g = n.grad.data() + r * d;
      const T* h = xhat->data() + r * d;
      if (!gg.empty())
        for (std::size_t j = 0; j < d; ++j) gg[j] += g[j] * h[j];
      if (!gb.empty())
        for (std::size_t j = 0; j < d; ++j) gb[j] += g[j];
      if (!gx.empty()) {
        T s1 = 0, s2 = 0;
        for (std::size_t j = 0; j < d; ++j) {
          const T gh = g[j] * gv[j];
          s1 += gh;
          s2 += gh * h[j];
        }
        const T rs = (*rstd)[r];
        for (std::size_t j = 0; j < d; ++j) {
          const T gh = g[j] * gv[j];
          gx[r * d + j] += rs * (gh - s1 / T(d) - h[j] * s2 / T(d));
        }
      }
    }
  });
}

// ------------------------------------------------------------ indexing/shape

// Row lookup: table[N, d], ids -> [ids.size(), d].
template <class T>
Var<T> embedding(const Var<T>& table, const std::vector<int>& ids) {
  if (table.shape().size() != 2) throw ShapeError("embedding: table must be rank 2");
  const std::size_t N = table.shape()[0], d = table.shape()[1];
  Tensor<T> out(Shape{ids.size(), d});
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= N)
      throw CorruptCodeError("embedding index " + std::to_string(ids[i]) + " out of range [0," +
                             std::to_string(N) + ")");
    std::copy_n(table.value().data().data() + ids[i] * d, d, out.data().data() + i * d);
  }
  return record<T>("embedding", std::move(out), {table}, [ids, d](Node<T>& n) {
    auto gt = detail::in_grad(n, 0);
    for (std::size_t i = 0; i < ids.size(); ++i)
      for (std::size_t j = 0; j < d; ++j) gt[ids[i] * d + j] += n.grad[i * d + j];
  });
}

// out[r] = x[r, targets[r]] for x[R, C].
template <class T>
Var<T> pick(const Var<T>& x, const std::vector<int>& targets) {
  const std::size_t C = x.shape().back();
  const std::size_t R = x.size() / C;
  if (targets.size() != R) throw ShapeError("pick: target count mismatch");
  Tensor<T> out(Shape{R});
  for (std::size_t r = 0; r < R; ++r) {
    if (targets[r] < 0 || static_cast<std::size_t>(targets[r]) >= C)
      throw CorruptCodeError("pick: class index out of range");
    out[r] = x.value()[r * C + targets[r]];
  }
  return record<T>("pick", std::move(out), {x}, [targets, C](Node<T>& n) {
    auto gx = detail::in_grad(n, 0);
    for (std::size_t r = 0; r < targets.size(); ++r) gx[r * C + targets[r]] += n.grad[r];
  });
}

template <class T>
Var<T> reshape(const Var<T>& x, Shape shape) {
  Tensor<T> out = x.value().reshaped(std::move(shape));
  return record<T>("reshape", std::move(out), {x}, [](Node<T>& n) {
    auto gx = detail::in_grad(n, 0);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += n.grad[i];
  });
}

// [B, M, N] -> [B, N, M]; rank-2 inputs are treated as B = 1.
template <class T>
Var<T> transpose(const Var<T>& x) {
  const auto& s = x.shape();
  if (s.size() != 2 && s.size() != 3) throw ShapeError("transpose: expected rank 2 or 3");
  const std::size_t B = s.size() == 3 ? s[0] : 1;
  const std::size_t M = s[s.size() - 2], N = s[s.size() - 1];
  Shape os = s;
  os[os.size() - 2] = N;
  os[os.size() - 1] = M;
  Tensor<T> out(os);
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t i = 0; i < M; ++i)
      for (std::size_t j = 0; j < N; ++j) out[(b * N + j) * M + i] = x.value()[(b * M + i) * N + j];
  return record<T>("transpose", std::move(out), {x}, [B, M, N](Node<T>& n) {
    auto gx = detail::in_grad(n, 0);
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t i = 0; i < M; ++i)
        for (std::size_t j = 0; j < N; ++j) gx[(b * M + i) * N + j] += n.grad[(b * N + j) * M + i];
  });
}

namespace detail {
// View of a tensor as [outer, axis, inner] around `axis`.
inline void split_axis(const Shape& s, std::size_t axis, std::size_t& outer, std::size_t& inner) {
  outer = 1;
  inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
}
}  // namespace detail

// Slice [start, start+len) along `axis`.
template <class T>
Var<T> narrow(const Var<T>& x, std::size_t axis, std::size_t start, std::size_t len) {
  const auto& s = x.shape();
  if (axis >= s.size() || start + len > s[axis]) throw ShapeError("narrow: range out of bounds");
  std::size_t outer, inner;
  detail::split_axis(s, axis, outer, inner);
  const std::size_t A = s[axis];
  Shape os = s;
  os[axis] = len;
  Tensor<T> out(os);
  for (std::size_t o = 0; o < outer; ++o)
    std::copy_n(x.value().data().data() + (o * A + start) * inner, len * inner, out.data().data() + o * len * inner);
  return record<T>("narrow", std::move(out), {x}, [outer, inner, A, start, len](Node<T>& n) {
    auto gx = detail::in_grad(n, 0);
    for (std::size_t o = 0; o < outer; ++o)
      for (std::size_t i = 0; i < len * inner; ++i) gx[(o * A + start) * inner + i] += n.grad[o * len * inner + i];
  });
}

template <class T>
Var<T> concat(const std::vector<Var<T>>& xs, std::size_t axis) {
  if (xs.empty()) throw ShapeError("concat: no inputs");
  const Shape& s0 = xs[0].shape();
  if (axis >= s0.size()) throw ShapeError("concat: axis out of range");
  std::size_t total = 0;
  std::vector<std::size_t> lens;
  for (const auto& x : xs) {
    const auto& s = x.shape();
    if (s.size() != s0.size()) throw ShapeError("concat: rank mismatch");
    for (std::size_t i = 0; i < s.size(); ++i)
      if (i != axis && s[i] != s0[i]) throw ShapeError("concat: extent mismatch");
    lens.push_back(s[axis]);
    total += s[axis];
  }
  std::size_t outer, inner;
  detail::split_axis(s0, axis, outer, inner);
  Shape os = s0;
  os[axis] = total;
  Tensor<T> out(os);
  std::size_t off = 0;
  for (std::size_t k = 0; k < xs.size(); ++k) {
    for (std::size_t o = 0; o < outer; ++o)
      std::copy_n(xs[k].value().data().data() + o * lens[k] * inner, lens[k] * inner,
                  out.data().data() + (o * total + off) * inner);
    off += lens[k];
  }
  return record_many<T>("concat", std::move(out), xs, [outer, inner, total, lens](Node<T>& n) {
    std::size_t off = 0;
    for (std::size_t k = 0; k < lens.size(); ++k) {
      auto g = detail::in_grad(n, k);
      if (!g.empty())
        for (std::size_t o = 0; o < outer; ++o)
          for (std::size_t i = 0; i < lens[k] * inner; ++i) g[o * lens[k] * inner + i] += n.grad[(o * total + off) * inner + i];
      off += lens[k];
    }
  });
}

}  // namespace s3tts::ops
