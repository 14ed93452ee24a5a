#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "s3tts/codec/s3codec.hpp"
#include "s3tts/train/losses.hpp"

namespace s3tts {

// K * log2(codebook_size) * frame_rate bits per second.
inline double bitrate(std::size_t n_codebooks, std::size_t codebook_size, double frame_rate) {
  if (codebook_size < 2) throw ParameterError("bitrate: codebook_size must be >= 2");
  if (!(frame_rate > 0)) throw ParameterError("bitrate: frame rate must be positive");
  return double(n_codebooks) * std::log2(double(codebook_size)) * frame_rate;
}

struct EvalConfig {
  std::size_t window = 64;
  std::size_t n_mels = 10;
  double sample_rate = 8000;
  double log_floor = 1e-5;

  MelOptions mel() const {
    MelOptions o;
    o.window_len = window;
    o.hop = window / 4;
    o.n_mels = n_mels;
    o.sample_rate = sample_rate;
    return o;
  }
};

struct ReconMetrics {
  double stft_distance = 0;  // mean |STFT| L1
  double mel_distance = 0;   // mean log-mel L1
  std::size_t utterances = 0;
};

// Per-utterance distances between reference and reconstruction, averaged
// over the corpus. Reconstructions are trimmed or zero-padded to the
// reference length.
inline ReconMetrics eval_reconstruction(const std::function<std::vector<float>(const std::vector<float>&)>& reconstruct,
                                        const std::vector<std::vector<float>>& waves, const EvalConfig& cfg = {}) {
  NoGradGuard ng;
  ReconMetrics m;
  for (const auto& w : waves) {
    if (w.size() < cfg.window)
      throw InputError("eval_reconstruction: utterance of " + std::to_string(w.size()) + " samples is shorter than the " +
                       std::to_string(cfg.window) + "-sample window");
    std::vector<float> r = reconstruct(w);
    r.resize(w.size(), 0.0f);
    const Var<double> x(Tensor<double>(Shape{1, w.size()}, std::vector<double>(w.begin(), w.end())));
    const Var<double> y(Tensor<double>(Shape{1, r.size()}, std::vector<double>(r.begin(), r.end())));
    const auto mag = [&](const Var<double>& v) { return ops::complex_magnitude(ops::stft(v, cfg.window, cfg.window / 4, false)); };
    m.stft_distance += ops::l1_distance(mag(x), mag(y)).item();
    m.mel_distance += ops::l1_distance(log_mel(x, cfg.mel(), cfg.log_floor), log_mel(y, cfg.mel(), cfg.log_floor)).item();
    ++m.utterances;
  }
  if (m.utterances) {
    m.stft_distance /= double(m.utterances);
    m.mel_distance /= double(m.utterances);
  }
  return m;
}

inline ReconMetrics eval_reconstruction(const S3Codec<float>& codec, const std::vector<std::vector<float>>& waves,
                                        EvalConfig cfg = {}) {
  cfg.sample_rate = codec.config().sample_rate;
  return eval_reconstruction(
      [&](const std::vector<float>& w) { return codec.decode(codec.encode(w), w.size()); }, waves, cfg);
}

}  // namespace s3tts
