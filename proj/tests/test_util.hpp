#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "s3tts/numerics.hpp"

namespace s3tts::test {

template <class T = double>
Tensor<T> random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  return uniform<T>(std::move(shape), lo, hi, rng);
}

// Central finite difference of a scalar function, kept separate from the
// library's grad_check.
template <class F>
double central_difference(F f, double x, double h = 1e-6) {
  return (f(x + h) - f(x - h)) / (2.0 * h);
}

}  // namespace s3tts::test
