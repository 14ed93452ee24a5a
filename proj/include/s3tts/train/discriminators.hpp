#pragma once

#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include "s3tts/codec/layers.hpp"

namespace s3tts {

template <class T>
struct DiscOutput {
  std::vector<Var<T>> features;  // post-activation maps, one per hidden layer
  Var<T> logits;
};

template <class T>
class Discriminator {
 public:
  virtual ~Discriminator() = default;
  // x: [B, T] waveform batch.
  virtual DiscOutput<T> operator()(const Var<T>& x) const = 0;
  virtual void collect(ParamList<T>& out, const std::string& prefix) const = 0;
  virtual std::string name() const = 0;
};

namespace detail {

// Hidden conv layers followed by a one-channel logit conv.
template <class T>
struct ConvStack {
  std::vector<nn::WNConv1d<T>> hidden;
  nn::WNConv1d<T> out;
  T slope = T(0.1);

  ConvStack() = default;
  ConvStack(std::size_t cin, std::size_t channels, std::size_t layers, std::size_t kernel, std::size_t stride,
            Rng& rng) {
    const std::size_t pad = kernel / 2;
    for (std::size_t l = 0; l < layers; ++l) {
      const std::size_t s = l + 1 < layers ? stride : 1;
      hidden.emplace_back(l == 0 ? cin : channels, channels, kernel, rng, ops::Conv1dOptions{s, 1, pad, pad});
    }
    out = nn::WNConv1d<T>(channels, 1, 3, rng, nn::WNConv1d<T>::same(3));
  }

  Var<T> run(Var<T> h, std::vector<Var<T>>& feats) const {
    for (const auto& c : hidden) {
      h = ops::leaky_relu(c(h), slope);
      feats.push_back(h);
    }
    return out(h);
  }

  void collect(ParamList<T>& o, const std::string& prefix) const {
    for (std::size_t l = 0; l < hidden.size(); ++l) hidden[l].collect(o, prefix + ".conv" + std::to_string(l));
    out.collect(o, prefix + ".logits");
  }
};

}  // namespace detail

// Folds the waveform into `period` interleaved rows and runs a 1-D conv
// stack along each row.
template <class T>
class PeriodDiscriminator : public Discriminator<T> {
 public:
  PeriodDiscriminator(std::size_t period, std::size_t channels, std::size_t layers, Rng& rng)
      : period_(period), stack_(1, channels, layers, 5, 3, rng) {}

  DiscOutput<T> operator()(const Var<T>& x) const override {
    const std::size_t B = x.shape()[0], Tn = x.shape()[1];
    DiscOutput<T> o;
    Var<T> h = ops::period_fold(ops::reshape(x, Shape{B, 1, Tn}), period_);
    o.logits = stack_.run(h, o.features);
    return o;
  }
  void collect(ParamList<T>& out, const std::string& prefix) const override { stack_.collect(out, prefix); }
  std::string name() const override { return "mpd" + std::to_string(period_); }

 private:
  std::size_t period_;
  detail::ConvStack<T> stack_;
};

// Complex STFT discriminator: real and imaginary parts of each frequency
// band are stacked as input channels; every band has its own conv stack
// over time and the band logits are concatenated.
template <class T>
class StftDiscriminator : public Discriminator<T> {
 public:
  StftDiscriminator(std::size_t window, const std::vector<double>& band_edges, std::size_t channels,
                    std::size_t layers, Rng& rng)
      : window_(window) {
    const std::size_t K = window / 2 + 1;
    if (band_edges.size() < 2) throw ConfigError("stft discriminator: need at least two band edges");
    for (std::size_t b = 0; b + 1 < band_edges.size(); ++b) {
      const std::size_t lo = static_cast<std::size_t>(std::floor(band_edges[b] * double(K)));
      const std::size_t hi = b + 2 == band_edges.size() ? K : static_cast<std::size_t>(std::floor(band_edges[b + 1] * double(K)));
      if (hi <= lo) throw ConfigError("stft discriminator: empty frequency band");
      bands_.push_back({lo, hi});
      stacks_.emplace_back(2 * (hi - lo), channels, layers, 3, 2, rng);
    }
  }

  DiscOutput<T> operator()(const Var<T>& x) const override {
    const std::size_t K = window_ / 2 + 1;
    Var<T> spec = ops::transpose(ops::stft(x, window_, window_ / 4, true));  // [B, 2K, F]
    DiscOutput<T> o;
    std::vector<Var<T>> logits;
    for (std::size_t b = 0; b < bands_.size(); ++b) {
      const auto [lo, hi] = bands_[b];
      Var<T> in = ops::concat<T>({ops::narrow(spec, 1, lo, hi - lo), ops::narrow(spec, 1, K + lo, hi - lo)}, 1);
      logits.push_back(stacks_[b].run(in, o.features));
    }
    o.logits = ops::concat<T>(logits, 2);
    return o;
  }
  void collect(ParamList<T>& out, const std::string& prefix) const override {
    for (std::size_t b = 0; b < stacks_.size(); ++b) stacks_[b].collect(out, prefix + ".band" + std::to_string(b));
  }
  std::string name() const override { return "stft" + std::to_string(window_); }

 private:
  std::size_t window_;
  std::vector<std::pair<std::size_t, std::size_t>> bands_;
  std::vector<detail::ConvStack<T>> stacks_;
};

struct DiscriminatorConfig {
  std::vector<std::size_t> periods{2, 3};
  std::vector<std::size_t> stft_windows{256};
  std::vector<double> band_edges{0.0, 0.1, 0.25, 0.5, 0.75, 1.0};
  std::size_t channels = 8;
  std::size_t layers = 3;

  bool operator==(const DiscriminatorConfig&) const = default;

  static DiscriminatorConfig tiny() { return {}; }
  static DiscriminatorConfig paper() { return {{2, 3, 5, 7, 11}, {2048, 1024, 512}, {0.0, 0.1, 0.25, 0.5, 0.75, 1.0}, 32, 4}; }
};

template <class T>
class DiscriminatorSet {
 public:
  DiscriminatorSet() = default;
  DiscriminatorSet(const DiscriminatorConfig& cfg, Rng& rng) {
    for (std::size_t p : cfg.periods)
      discs_.push_back(std::make_unique<PeriodDiscriminator<T>>(p, cfg.channels, cfg.layers, rng));
    for (std::size_t w : cfg.stft_windows)
      discs_.push_back(std::make_unique<StftDiscriminator<T>>(w, cfg.band_edges, cfg.channels, cfg.layers, rng));
    if (discs_.empty()) throw ConfigError("discriminator set is empty");
  }

  std::size_t size() const { return discs_.size(); }
  const Discriminator<T>& operator[](std::size_t i) const { return *discs_[i]; }

  std::vector<DiscOutput<T>> operator()(const Var<T>& x) const {
    std::vector<DiscOutput<T>> out;
    for (const auto& d : discs_) out.push_back((*d)(x));
    return out;
  }

  void collect(ParamList<T>& out, const std::string& prefix) const {
    for (const auto& d : discs_) d->collect(out, prefix + "." + d->name());
  }

 private:
  std::vector<std::unique_ptr<Discriminator<T>>> discs_;
};

template <class T>
std::vector<Var<T>> logits_of(const std::vector<DiscOutput<T>>& outs) {
  std::vector<Var<T>> l;
  for (const auto& o : outs) l.push_back(o.logits);
  return l;
}

template <class T>
std::vector<std::vector<Var<T>>> features_of(const std::vector<DiscOutput<T>>& outs) {
  std::vector<std::vector<Var<T>>> f;
  for (const auto& o : outs) f.push_back(o.features);
  return f;
}

}  // namespace s3tts
