#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "s3tts/numerics/autograd.hpp"

namespace s3tts {

using Rng = std::mt19937_64;

template <class T>
struct NamedParam {
  std::string name;
  Var<T> var;
  bool decay = true;  // subject to AdamW weight decay
};

template <class T>
using ParamList = std::vector<NamedParam<T>>;

template <class T>
Var<T> make_param(Tensor<T> init) {
  return Var<T>(std::move(init), true);
}

template <class T>
Tensor<T> randn(Shape shape, double stddev, Rng& rng) {
  Tensor<T> t(std::move(shape));
  std::normal_distribution<double> nd(0.0, stddev);
  for (auto& v : t.data()) v = T(nd(rng));
  return t;
}

template <class T>
Tensor<T> uniform(Shape shape, double lo, double hi, Rng& rng) {
  Tensor<T> t(std::move(shape));
  std::uniform_real_distribution<double> ud(lo, hi);
  for (auto& v : t.data()) v = T(ud(rng));
  return t;
}

template <class T>
void set_requires_grad(ParamList<T>& params, bool on) {
  for (auto& p : params) p.var.set_requires_grad(on);
}

template <class T>
void zero_grad(ParamList<T>& params) {
  for (auto& p : params) p.var.zero_grad();
}

// Sum of squared gradient entries; zero when nothing was accumulated.
template <class T>
double grad_sq_norm(const ParamList<T>& params) {
  double s = 0;
  for (const auto& p : params)
    for (T g : p.var.grad()) s += double(g) * double(g);
  return s;
}

// Copies parameter values between precisions (e.g. a float model into a
// double twin for gradient checking). Lists must come from identically
// configured models.
template <class Dst, class Src>
void copy_param_values(ParamList<Dst>& dst, const ParamList<Src>& src) {
  if (dst.size() != src.size()) throw ShapeError("copy_param_values: parameter count mismatch");
  for (std::size_t i = 0; i < dst.size(); ++i) {
    if (dst[i].var.shape() != src[i].var.shape()) throw ShapeError("copy_param_values: shape mismatch at " + dst[i].name);
    dst[i].var.mutable_value() = src[i].var.value().template cast<Dst>();
  }
}

}  // namespace s3tts
