#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "s3tts/numerics/ops.hpp"
#include "s3tts/numerics/params.hpp"

namespace s3tts {

struct GradCheckOptions {
  double step = 1e-6;
  // Relative error is |a - n| / max(|a|, |n|, abs_floor); the floor keeps
  // near-zero gradients from amplifying finite-difference round-off.
  double abs_floor = 1e-3;
  // Coordinates probed per input; 0 probes all of them.
  std::size_t max_coords = 0;
  std::uint64_t seed = 0x5eed;
};

struct GradCheckReport {
  double max_rel_error = 0;
  std::size_t worst_input = 0;
  std::size_t worst_index = 0;
  double analytic = 0;
  double numeric = 0;
  std::size_t coords_checked = 0;
};

template <class T>
using DifferentiableFn = std::function<Var<T>(const std::vector<Var<T>>&)>;

namespace detail {

// Non-scalar outputs are reduced by a fixed random projection so that every
// output coordinate contributes to the checked scalar.
template <class T>
Var<T> reduce_to_scalar(const Var<T>& y, std::uint64_t seed) {
  if (y.size() == 1) return y;
  Rng rng(seed ^ 0x9e3779b97f4a7c15ULL);
  Tensor<T> w(Shape{y.size(), 1});
  std::uniform_real_distribution<double> ud(-1.0, 1.0);
  for (auto& v : w.data()) v = T(ud(rng));
  return ops::matmul(ops::reshape(y, Shape{1, y.size()}), constant(std::move(w)));
}

}  // namespace detail

// Compares reverse-pass gradients of f against central finite differences,
// coordinate by coordinate. Throws NumericError when f is non-finite at a
// probe point.
template <class T>
GradCheckReport grad_check_report(const DifferentiableFn<T>& f, const std::vector<Tensor<T>>& inputs,
                                  const GradCheckOptions& opt = {}) {
  std::vector<Var<T>> vars;
  for (const auto& t : inputs) vars.emplace_back(t, true);
  Var<T> out = detail::reduce_to_scalar(f(vars), opt.seed);
  if (!std::isfinite(double(out.item()))) throw NumericError("grad_check: non-finite function value");
  backward(out);

  GradCheckReport rep;
  Rng pick(opt.seed);
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    std::vector<T> analytic(inputs[i].size(), T(0));
    if (vars[i].has_grad()) std::copy(vars[i].grad().begin(), vars[i].grad().end(), analytic.begin());
    std::vector<std::size_t> coords(inputs[i].size());
    for (std::size_t j = 0; j < coords.size(); ++j) coords[j] = j;
    if (opt.max_coords && coords.size() > opt.max_coords) {
      std::shuffle(coords.begin(), coords.end(), pick);
      coords.resize(opt.max_coords);
    }
    for (std::size_t j : coords) {
      auto eval = [&](T delta) {
        NoGradGuard ng;
        std::vector<Var<T>> probe;
        for (std::size_t k = 0; k < inputs.size(); ++k) {
          Tensor<T> t = inputs[k];
          if (k == i) t[j] += delta;
          probe.emplace_back(std::move(t), false);
        }
        const T v = detail::reduce_to_scalar(f(probe), opt.seed).item();
        if (!std::isfinite(double(v))) throw NumericError("grad_check: non-finite function value at probe point");
        return double(v);
      };
      const T h = T(opt.step);
      const double num = (eval(h) - eval(-h)) / (2.0 * opt.step);
      const double ana = double(analytic[j]);
      const double denom = std::max({std::abs(ana), std::abs(num), opt.abs_floor});
      const double rel = std::abs(ana - num) / denom;
      ++rep.coords_checked;
      if (rel > rep.max_rel_error) {
        rep.max_rel_error = rel;
        rep.worst_input = i;
        rep.worst_index = j;
        rep.analytic = ana;
        rep.numeric = num;
      }
    }
  }
  return rep;
}

template <class T>
double grad_check(const DifferentiableFn<T>& f, const std::vector<Tensor<T>>& inputs, double step = 1e-6) {
  GradCheckOptions opt;
  opt.step = step;
  return grad_check_report(f, inputs, opt).max_rel_error;
}

// Same comparison for a closure over live parameters: each probed
// coordinate is perturbed in place and restored afterwards.
template <class T>
GradCheckReport grad_check_params(const std::function<Var<T>()>& loss_fn, ParamList<T>& params,
                                  const GradCheckOptions& opt = {}) {
  for (auto& p : params) {
    p.var.set_requires_grad(true);
    p.var.zero_grad();
  }
  Var<T> out = detail::reduce_to_scalar(loss_fn(), opt.seed);
  backward(out);
  GradCheckReport rep;
  Rng pick(opt.seed);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& var = params[i].var;
    std::vector<T> analytic(var.size(), T(0));
    if (var.has_grad()) std::copy(var.grad().begin(), var.grad().end(), analytic.begin());
    std::vector<std::size_t> coords(var.size());
    for (std::size_t j = 0; j < coords.size(); ++j) coords[j] = j;
    if (opt.max_coords && coords.size() > opt.max_coords) {
      std::shuffle(coords.begin(), coords.end(), pick);
      coords.resize(opt.max_coords);
    }
    for (std::size_t j : coords) {
      const T orig = var.value()[j];
      auto eval = [&](T delta) {
        NoGradGuard ng;
        var.mutable_value()[j] = orig + delta;
        const T v = detail::reduce_to_scalar(loss_fn(), opt.seed).item();
        var.mutable_value()[j] = orig;
        if (!std::isfinite(double(v))) throw NumericError("grad_check: non-finite function value at probe point");
        return double(v);
      };
      const T h = T(opt.step);
      const double num = (eval(h) - eval(-h)) / (2.0 * opt.step);
      const double ana = double(analytic[j]);
      const double denom = std::max({std::abs(ana), std::abs(num), opt.abs_floor});
      const double rel = std::abs(ana - num) / denom;
      ++rep.coords_checked;
      if (rel > rep.max_rel_error) {
        rep.max_rel_error = rel;
        rep.worst_input = i;
        rep.worst_index = j;
        rep.analytic = ana;
        rep.numeric = num;
      }
    }
  }
  for (auto& p : params) p.var.zero_grad();
  return rep;
}

}  // namespace s3tts
