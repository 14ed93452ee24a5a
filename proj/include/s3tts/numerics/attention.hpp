#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <vector>

#include "s3tts/numerics/ops.hpp"

namespace s3tts::ops {

// Per-(batch, key) drop flags; 1 removes the key from every query's view.
using KeyMask = std::vector<std::uint8_t>;

// Multi-head scaled dot-product attention with a causal constraint.
// q[B, n, d], k/v[B, m, d]. Query i sits at absolute position i + q_offset
// and may attend keys j <= i + q_offset that are not dropped by key_mask
// (size B*m, or empty).
template <class T>
Var<T> causal_attention(const Var<T>& q, const Var<T>& k, const Var<T>& v, std::size_t heads, std::size_t q_offset,
                        const KeyMask& key_mask = {}) {
  const auto& qs = q.shape();
  const auto& ks = k.shape();
  if (qs.size() != 3 || ks.size() != 3 || v.shape() != ks || qs[0] != ks[0] || qs[2] != ks[2])
    throw ShapeError("causal_attention: incompatible q/k/v shapes");
  const std::size_t B = qs[0], n = qs[1], m = ks[1], d = qs[2];
  if (heads == 0 || d % heads != 0) throw ShapeError("causal_attention: dim not divisible by heads");
  if (!key_mask.empty() && key_mask.size() != B * m) throw ShapeError("causal_attention: key mask size mismatch");
  const std::size_t dh = d / heads;
  const T scale = T(1) / std::sqrt(T(dh));

  auto probs = std::make_shared<std::vector<T>>(B * heads * n * m, T(0));
  Tensor<T> out(Shape{B, n, d});
  const T* Q = q.value().data().data();
  const T* Kp = k.value().data().data();
  const T* V = v.value().data().data();
  std::vector<T> sc(m);
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t h = 0; h < heads; ++h)
      for (std::size_t i = 0; i < n; ++i) {
        const std::size_t limit = std::min(m, i + q_offset + 1);
        const T* qi = Q + (b * n + i) * d + h * dh;
        T mx = -std::numeric_limits<T>::infinity();
        for (std::size_t j = 0; j < limit; ++j) {
          if (!key_mask.empty() && key_mask[b * m + j]) continue;
          const T* kj = Kp + (b * m + j) * d + h * dh;
          T s = 0;
          for (std::size_t e = 0; e < dh; ++e) s += qi[e] * kj[e];
          sc[j] = s * scale;
          mx = std::max(mx, sc[j]);
        }
        T* p = probs->data() + ((b * heads + h) * n + i) * m;
        if (mx == -std::numeric_limits<T>::infinity()) continue;
        T tot = 0;
        for (std::size_t j = 0; j < limit; ++j) {
          if (!key_mask.empty() && key_mask[b * m + j]) continue;
          tot += (p[j] = std::exp(sc[j] - mx));
        }
        T* o = out.data().data() + (b * n + i) * d + h * dh;
        for (std::size_t j = 0; j < limit; ++j) {
          if (p[j] == T(0)) continue;
          p[j] /= tot;
          const T* vj = V + (b * m + j) * d + h * dh;
          for (std::size_t e = 0; e < dh; ++e) o[e] += p[j] * vj[e];
        }
      }
  return record<T>("causal_attention", std::move(out), {q, k, v}, [=](Node<T>& nd) {
    const T* Q = detail::in_value(nd, 0).data().data();
    const T* Kp = detail::in_value(nd, 1).data().data();
    const T* V = detail::in_value(nd, 2).data().data();
    auto gq = detail::in_grad(nd, 0);
    auto gk = detail::in_grad(nd, 1);
    auto gv = detail::in_grad(nd, 2);
    std::vector<T> dp(m);
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t h = 0; h < heads; ++h)
        for (std::size_t i = 0; i < n; ++i) {
          const std::size_t limit = std::min(m, i + q_offset + 1);
          const T* p = probs->data() + ((b * heads + h) * n + i) * m;
          const T* go = nd.grad.data() + (b * n + i) * d + h * dh;
          T dot = 0;
          for (std::size_t j = 0; j < limit; ++j) {
            if (p[j] == T(0)) {
              dp[j] = 0;
              continue;
            }
            const T* vj = V + (b * m + j) * d + h * dh;
            T s = 0;
            for (std::size_t e = 0; e < dh; ++e) s += go[e] * vj[e];
            dp[j] = s;
            dot += p[j] * s;
            if (!gv.empty()) {
              T* gvj = gv.data() + (b * m + j) * d + h * dh;
              for (std::size_t e = 0; e < dh; ++e) gvj[e] += p[j] * go[e];
            }
          }
          const T* qi = Q + (b * n + i) * d + h * dh;
          for (std::size_t j = 0; j < limit; ++j) {
            if (p[j] == T(0)) continue;
            const T ds = p[j] * (dp[j] - dot) * scale;
            if (!gq.empty()) {
              const T* kj = Kp + (b * m + j) * d + h * dh;
              T* gqi = gq.data() + (b * n + i) * d + h * dh;
              for (std::size_t e = 0; e < dh; ++e) gqi[e] += ds * kj[e];
            }
            if (!gk.empty()) {
              T* gkj = gk.data() + (b * m + j) * d + h * dh;
              for (std::size_t e = 0; e < dh; ++e) gkj[e] += ds * qi[e];
            }
          }
        }
  });
}

// Rotary position embedding on interleaved pairs within each head of
// x[B, n, d]; row i is at position i + pos_offset.
template <class T>
Var<T> rope(const Var<T>& x, std::size_t heads, std::size_t pos_offset, T base = T(10000)) {
  const auto& xs = x.shape();
  if (xs.size() != 3) throw ShapeError("rope: expected [B, n, d]");
  const std::size_t B = xs[0], n = xs[1], d = xs[2];
  if (heads == 0 || d % heads != 0 || (d / heads) % 2 != 0) throw ShapeError("rope: head dim must be even");
  const std::size_t dh = d / heads, half = dh / 2;
  auto cs = std::make_shared<std::vector<T>>(n * half);
  auto sn = std::make_shared<std::vector<T>>(n * half);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t e = 0; e < half; ++e) {
      const T theta = std::pow(base, -T(2 * e) / T(dh));
      const T ang = T(i + pos_offset) * theta;
      (*cs)[i * half + e] = std::cos(ang);
      (*sn)[i * half + e] = std::sin(ang);
    }
  Tensor<T> out(xs);
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t h = 0; h < heads; ++h)
        for (std::size_t e = 0; e < half; ++e) {
          const std::size_t idx = (b * n + i) * d + h * dh + 2 * e;
          const T c = (*cs)[i * half + e], s = (*sn)[i * half + e];
          const T a = x.value()[idx], bb = x.value()[idx + 1];
          out[idx] = a * c - bb * s;
          out[idx + 1] = a * s + bb * c;
        }
  return record<T>("rope", std::move(out), {x}, [=](Node<T>& nd) {
    auto gx = detail::in_grad(nd, 0);
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t h = 0; h < heads; ++h)
          for (std::size_t e = 0; e < half; ++e) {
            const std::size_t idx = (b * n + i) * d + h * dh + 2 * e;
            const T c = (*cs)[i * half + e], s = (*sn)[i * half + e];
            const T ga = nd.grad[idx], gb = nd.grad[idx + 1];
            gx[idx] += ga * c + gb * s;
            gx[idx + 1] += -ga * s + gb * c;
          }
  });
}

}  // namespace s3tts::ops
