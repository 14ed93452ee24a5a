#pragma once

#include <cmath>
#include <cstddef>
#include <memory>
#include <numbers>
#include <string>
#include <vector>

#include "s3tts/numerics/ops.hpp"

namespace s3tts {

struct StftLayout {
  std::size_t window_len = 0;
  std::size_t hop = 0;
  bool center = false;
  std::size_t frames = 0;
  std::size_t pad_left = 0;
  std::size_t bins() const { return window_len / 2 + 1; }
};

// Frame count and padding. With `center`, the signal is reflect-padded by
// window/2 on the left and enough on the right to give ceil(T/hop) frames.
inline StftLayout stft_layout(std::size_t T, std::size_t window_len, std::size_t hop, bool center) {
  if (window_len < 2 || window_len % 2 != 0) throw ParameterError("stft: window length must be even and >= 2");
  if (hop == 0) throw ParameterError("stft: hop must be positive");
  StftLayout l{window_len, hop, center, 0, 0};
  if (center) {
    if (T <= window_len / 2)
      throw InputError("stft: input length " + std::to_string(T) + " too short for reflect padding");
    l.frames = (T + hop - 1) / hop;
    l.pad_left = window_len / 2;
    const std::size_t padded = window_len + (l.frames - 1) * hop;
    if (padded > T + l.pad_left && padded - T - l.pad_left >= T)
      throw InputError("stft: input too short for reflect padding");
  } else {
    if (T < window_len)
      throw InputError("stft: input length " + std::to_string(T) + " shorter than window " + std::to_string(window_len));
    l.frames = (T - window_len) / hop + 1;
  }
  return l;
}

template <class T>
std::vector<T> hann_window(std::size_t n) {
  std::vector<T> w(n);
  for (std::size_t i = 0; i < n; ++i)
    w[i] = T(0.5) - T(0.5) * std::cos(T(2) * std::numbers::pi_v<T> * T(i) / T(n));
  return w;
}

namespace ops {

// Windowed DFT of x[B, T] -> [B, frames, 2*bins] laid out as the real parts
// of all bins followed by the imaginary parts. Periodic Hann window, scaled
// by 1/sqrt(sum w^2).
template <class T>
Var<T> stft(const Var<T>& x, std::size_t window_len, std::size_t hop, bool center) {
  const auto& xs = x.shape();
  if (xs.size() != 2) throw ShapeError("stft: expected [B, T]");
  const std::size_t B = xs[0], Tn = xs[1];
  const StftLayout lay = stft_layout(Tn, window_len, hop, center);
  const std::size_t W = window_len, F = lay.frames, K = lay.bins();

  auto win = std::make_shared<std::vector<T>>(hann_window<T>(W));
  T energy = 0;
  for (T v : *win) energy += v * v;
  const T norm = T(1) / std::sqrt(energy);
  for (T& v : *win) v *= norm;
  auto cs = std::make_shared<std::vector<T>>(W);
  auto sn = std::make_shared<std::vector<T>>(W);
  for (std::size_t m = 0; m < W; ++m) {
    (*cs)[m] = std::cos(T(2) * std::numbers::pi_v<T> * T(m) / T(W));
    (*sn)[m] = std::sin(T(2) * std::numbers::pi_v<T> * T(m) / T(W));
  }
  // Source sample for each padded position of each frame.
  auto src = std::make_shared<std::vector<std::size_t>>(F * W);
  for (std::size_t f = 0; f < F; ++f)
    for (std::size_t j = 0; j < W; ++j) {
      long t = static_cast<long>(f * hop + j) - static_cast<long>(lay.pad_left);
      if (t < 0) t = -t;
      if (t >= static_cast<long>(Tn)) t = 2 * (static_cast<long>(Tn) - 1) - t;
      (*src)[f * W + j] = static_cast<std::size_t>(t);
    }

  Tensor<T> out(Shape{B, F, 2 * K});
  std::vector<T> frame(W);
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t f = 0; f < F; ++f) {
      for (std::size_t j = 0; j < W; ++j) frame[j] = x.value()[b * Tn + (*src)[f * W + j]] * (*win)[j];
      T* o = out.data().data() + (b * F + f) * 2 * K;
      for (std::size_t k = 0; k < K; ++k) {
        T re = 0, im = 0;
        std::size_t m = 0;
        for (std::size_t j = 0; j < W; ++j) {
          re += frame[j] * (*cs)[m];
          im -= frame[j] * (*sn)[m];
          m += k;
          if (m >= W) m -= W;
        }
        o[k] = re;
        o[K + k] = im;
      }
    }
  return record<T>("stft", std::move(out), {x}, [B, Tn, F, W, K, win, cs, sn, src](Node<T>& n) {
    auto gx = detail::in_grad(n, 0);
    std::vector<T> gf(W);
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t f = 0; f < F; ++f) {
        const T* g = n.grad.data() + (b * F + f) * 2 * K;
        std::fill(gf.begin(), gf.end(), T(0));
        for (std::size_t k = 0; k < K; ++k) {
          const T gr = g[k], gi = g[K + k];
          if (gr == T(0) && gi == T(0)) continue;
          std::size_t m = 0;
          for (std::size_t j = 0; j < W; ++j) {
            gf[j] += gr * (*cs)[m] - gi * (*sn)[m];
            m += k;
            if (m >= W) m -= W;
          }
        }
        for (std::size_t j = 0; j < W; ++j) gx[b * Tn + (*src)[f * W + j]] += gf[j] * (*win)[j];
      }
  });
}

// [..., 2*K] (re block, im block) -> [..., K] magnitudes. The gradient at a
// zero-magnitude bin is taken as zero.
template <class T>
Var<T> complex_magnitude(const Var<T>& x) {
  const std::size_t twoK = x.shape().back();
  if (twoK % 2 != 0) throw ShapeError("complex_magnitude: last axis must be even");
  const std::size_t K = twoK / 2, rows = x.size() / twoK;
  Shape os = x.shape();
  os.back() = K;
  Tensor<T> out(os);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t k = 0; k < K; ++k) {
      const T re = x.value()[r * twoK + k], im = x.value()[r * twoK + K + k];
      out[r * K + k] = std::sqrt(re * re + im * im);
    }
  return record<T>("complex_magnitude", std::move(out), {x}, [rows, K, twoK](Node<T>& n) {
    const auto& xv = detail::in_value(n, 0);
    auto gx = detail::in_grad(n, 0);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t k = 0; k < K; ++k) {
        const T mag = n.value[r * K + k];
        if (mag == T(0)) continue;
        const T g = n.grad[r * K + k] / mag;
        gx[r * twoK + k] += g * xv[r * twoK + k];
        gx[r * twoK + K + k] += g * xv[r * twoK + K + k];
      }
  });
}

}  // namespace ops

inline double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
inline double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

// Centre frequency (Hz) of each triangular band.
inline std::vector<double> mel_band_centers(std::size_t n_mels, double sample_rate) {
  const double top = hz_to_mel(sample_rate / 2.0);
  std::vector<double> c(n_mels);
  for (std::size_t m = 0; m < n_mels; ++m) c[m] = mel_to_hz(top * double(m + 1) / double(n_mels + 1));
  return c;
}

// HTK-scale triangular filters from 0 Hz to Nyquist, shape [bins, n_mels],
// unnormalised peaks of 1.
template <class T>
Tensor<T> mel_filterbank(std::size_t n_fft, std::size_t n_mels, double sample_rate) {
  if (n_mels == 0) throw ParameterError("mel_filterbank: n_mels must be positive");
  const std::size_t bins = n_fft / 2 + 1;
  const double top = hz_to_mel(sample_rate / 2.0);
  std::vector<double> edges(n_mels + 2);
  for (std::size_t i = 0; i < edges.size(); ++i) edges[i] = mel_to_hz(top * double(i) / double(n_mels + 1));
  Tensor<T> fb(Shape{bins, n_mels});
  for (std::size_t k = 0; k < bins; ++k) {
    const double f = double(k) * sample_rate / double(n_fft);
    for (std::size_t m = 0; m < n_mels; ++m) {
      const double lo = edges[m], c = edges[m + 1], hi = edges[m + 2];
      double w = 0;
      if (f > lo && f <= c) w = (f - lo) / (c - lo);
      else if (f > c && f < hi) w = (hi - f) / (hi - c);
      fb(k, m) = T(w);
    }
  }
  return fb;
}

struct MelOptions {
  std::size_t window_len = 64;
  std::size_t hop = 0;  // 0 -> window_len / 4
  std::size_t n_mels = 16;
  double sample_rate = 8000;
  bool center = false;
};

// Magnitude STFT followed by mel projection: x[B, T] -> [B, frames, n_mels].
template <class T>
Var<T> mel_spectrogram(const Var<T>& wave, const MelOptions& opt) {
  const std::size_t W = opt.window_len;
  if (W == 0 || (W & (W - 1)) != 0) throw ParameterError("mel_spectrogram: window length must be a power of two");
  const std::size_t hop = opt.hop ? opt.hop : W / 4;
  Var<T> x = wave.shape().size() == 1 ? ops::reshape(wave, Shape{1, wave.size()}) : wave;
  Var<T> mag = ops::complex_magnitude(ops::stft(x, W, hop, opt.center));
  Var<T> fb = constant(mel_filterbank<T>(W, opt.n_mels, opt.sample_rate));
  return ops::linear(mag, fb);
}

}  // namespace s3tts
