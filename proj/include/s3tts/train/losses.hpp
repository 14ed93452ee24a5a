#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "s3tts/numerics.hpp"

namespace s3tts {

// Mean absolute sample difference between two equal-length waveforms.
template <class T>
Var<T> time_loss(const Var<T>& x, const Var<T>& x_hat) {
  if (x.shape() != x_hat.shape())
    throw ShapeError("time_loss: lengths differ (" + shape_str(x.shape()) + " vs " + shape_str(x_hat.shape()) + ")");
  return ops::l1_distance(x, x_hat);
}

struct MelLossConfig {
  std::vector<std::size_t> windows{32, 64, 128, 256};
  std::vector<std::size_t> n_mels{5, 10, 20, 40};
  double sample_rate = 8000;
  double log_floor = 1e-5;

  bool operator==(const MelLossConfig&) const = default;

  void validate() const {
    if (windows.empty() || windows.size() != n_mels.size())
      throw ConfigError("mel loss: window and band lists must be non-empty and of equal length");
    for (std::size_t i = 1; i < windows.size(); ++i)
      if (windows[i] <= windows[i - 1]) throw ConfigError("mel loss: windows must be strictly increasing");
  }

  static MelLossConfig paper() {
    return {{32, 64, 128, 256, 512, 1024, 2048}, {5, 10, 20, 40, 80, 160, 320}, 24000, 1e-5};
  }

  MelOptions resolution(std::size_t i) const {
    MelOptions o;
    o.window_len = windows[i];
    o.hop = windows[i] / 4;
    o.n_mels = n_mels[i];
    o.sample_rate = sample_rate;
    return o;
  }
};

template <class T>
Var<T> log_mel(const Var<T>& wave, const MelOptions& o, double floor) {
  return ops::log(mel_spectrogram(wave, o), T(floor));
}

// Sum over resolutions of the mean L1 distance between log-mel spectrograms.
// x, x_hat: [B, T]. The reference side carries no gradient.
template <class T>
Var<T> mel_loss(const Var<T>& x, const Var<T>& x_hat, const MelLossConfig& cfg) {
  cfg.validate();
  if (x.shape() != x_hat.shape()) throw ShapeError("mel_loss: lengths differ");
  if (x.shape().back() < cfg.windows.back())
    throw InputError("mel_loss: input length " + std::to_string(x.shape().back()) + " shorter than largest window " +
                     std::to_string(cfg.windows.back()));
  Var<T> total;
  for (std::size_t i = 0; i < cfg.windows.size(); ++i) {
    const auto o = cfg.resolution(i);
    Var<T> ref;
    {
      NoGradGuard ng;
      ref = log_mel(x, o, cfg.log_floor);
    }
    Var<T> term = ops::l1_distance(constant(ref.value()), log_mel(x_hat, o, cfg.log_floor));
    total = i == 0 ? term : ops::add(total, term);
  }
  return total;
}

// (1/K) sum_k [mean max(1 + D_k(x_hat), 0) + mean max(1 - D_k(x), 0)],
// averaged over logit positions within each discriminator.
template <class T>
Var<T> disc_loss(const std::vector<Var<T>>& real_logits, const std::vector<Var<T>>& fake_logits) {
  if (real_logits.empty() || real_logits.size() != fake_logits.size())
    throw ShapeError("disc_loss: need matching, non-empty logit lists");
  Var<T> total;
  for (std::size_t k = 0; k < real_logits.size(); ++k) {
    Var<T> term = ops::add(ops::mean(ops::hinge(fake_logits[k], +1)), ops::mean(ops::hinge(real_logits[k], -1)));
    total = k == 0 ? term : ops::add(total, term);
  }
  return ops::scale(total, T(1) / T(real_logits.size()));
}

// (1/K) sum_k mean max(1 - D_k(x_hat), 0).
template <class T>
Var<T> gen_adv_loss(const std::vector<Var<T>>& fake_logits) {
  if (fake_logits.empty()) throw ShapeError("gen_adv_loss: no logits");
  Var<T> total;
  for (std::size_t k = 0; k < fake_logits.size(); ++k) {
    Var<T> term = ops::mean(ops::hinge(fake_logits[k], -1));
    total = k == 0 ? term : ops::add(total, term);
  }
  return ops::scale(total, T(1) / T(fake_logits.size()));
}

// Per layer: mean |real - fake| / (mean |real| + eps), averaged over the
// layers of each discriminator and then over discriminators. Real features
// are treated as constants.
template <class T>
Var<T> feat_match_loss(const std::vector<std::vector<Var<T>>>& real_feats,
                       const std::vector<std::vector<Var<T>>>& fake_feats, T eps = T(1e-8)) {
  if (real_feats.empty() || real_feats.size() != fake_feats.size())
    throw ShapeError("feat_match_loss: need matching, non-empty feature lists");
  Var<T> total;
  for (std::size_t k = 0; k < real_feats.size(); ++k) {
    const auto& rf = real_feats[k];
    const auto& ff = fake_feats[k];
    if (rf.empty() || rf.size() != ff.size()) throw ShapeError("feat_match_loss: layer count mismatch");
    Var<T> disc_total;
    for (std::size_t l = 0; l < rf.size(); ++l) {
      T mag = 0;
      for (T v : rf[l].value().data()) mag += std::abs(v);
      mag /= T(rf[l].size());
      Var<T> term = ops::scale(ops::l1_distance(constant(rf[l].value()), ff[l]), T(1) / (mag + eps));
      disc_total = l == 0 ? term : ops::add(disc_total, term);
    }
    disc_total = ops::scale(disc_total, T(1) / T(rf.size()));
    total = k == 0 ? disc_total : ops::add(total, disc_total);
  }
  return ops::scale(total, T(1) / T(real_feats.size()));
}

struct LossWeights {
  double time = 0;      // lambda_t
  double mel = 15;      // lambda_f
  double adv = 1;       // lambda_g
  double feat = 2;      // lambda_feat
  double commit = 1;    // lambda_w
  double distill = 0.1;  // lambda_distill

  bool operator==(const LossWeights&) const = default;

  void validate() const {
    for (double w : {time, mel, adv, feat, commit, distill})
      if (!(w >= 0) || !std::isfinite(w)) throw ConfigError("loss weights must be finite and non-negative");
  }
};

template <class T>
struct GeneratorLosses {
  Var<T> time, mel, adv, feat, commit, distill;
};

// lambda_t L_t + lambda_f L_f + lambda_g L_g + lambda_feat L_feat
// + lambda_w L_w + lambda_distill L_distill.
template <class T>
Var<T> generator_total(const GeneratorLosses<T>& l, const LossWeights& w) {
  w.validate();
  const std::pair<const Var<T>*, double> terms[] = {{&l.time, w.time}, {&l.mel, w.mel},       {&l.adv, w.adv},
                                                    {&l.feat, w.feat}, {&l.commit, w.commit}, {&l.distill, w.distill}};
  Var<T> total = Var<T>::scalar(T(0));
  for (const auto& [v, lambda] : terms) {
    if (v->size() != 1) throw ShapeError("generator_total: missing loss component");
    if (!std::isfinite(double(v->item()))) throw NumericError("generator_total: non-finite loss component");
    total = ops::add(total, ops::scale(*v, T(lambda)));
  }
  return total;
}

}  // namespace s3tts
