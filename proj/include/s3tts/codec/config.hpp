#pragma once

#include <cstddef>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "s3tts/errors.hpp"

namespace s3tts {

struct CodecConfig {
  double sample_rate = 8000;
  std::vector<std::size_t> encoder_strides{2, 2, 2};
  std::vector<std::size_t> decoder_strides{2, 2, 2};
  std::size_t latent_dim = 32;
  std::size_t encoder_channels = 8;  // width after the input conv; doubles per block
  std::size_t decoder_channels = 32;  // width before the first upsampling block; halves per block
  std::size_t n_codebooks = 4;
  std::size_t codebook_size = 64;
  std::vector<std::size_t> dilations{1, 3, 9};
  std::size_t residual_kernel = 7;
  bool pad_to_stride = true;
  // Acoustic RVQ runs on the semantic residual instead of the full latent.
  bool acoustic_on_residual = false;

  bool operator==(const CodecConfig&) const = default;

  std::size_t hop() const {
    return std::accumulate(encoder_strides.begin(), encoder_strides.end(), std::size_t{1}, std::multiplies<>());
  }

  void validate() const {
    if (!(sample_rate > 0)) throw ConfigError("codec: sample_rate must be positive");
    if (encoder_strides.empty()) throw ConfigError("codec: encoder_strides must be non-empty");
    for (auto s : encoder_strides)
      if (s == 0) throw ConfigError("codec: strides must be positive");
    for (auto s : decoder_strides)
      if (s == 0) throw ConfigError("codec: strides must be positive");
    const std::size_t dec = std::accumulate(decoder_strides.begin(), decoder_strides.end(), std::size_t{1},
                                            std::multiplies<>());
    if (dec != hop()) throw ConfigError("codec: encoder and decoder stride products differ");
    if (n_codebooks < 2) throw ConfigError("codec: need at least one semantic and one acoustic codebook");
    if (codebook_size < 2) throw ConfigError("codec: codebook_size must be >= 2");
    if (latent_dim == 0 || encoder_channels == 0) throw ConfigError("codec: dimensions must be positive");
    if (decoder_channels >> decoder_strides.size() == 0)
      throw ConfigError("codec: decoder_channels too small to halve once per upsampling block");
    if (residual_kernel % 2 == 0) throw ConfigError("codec: residual kernel must be odd");
  }

  // Every test runs on this preset.
  static CodecConfig tiny() { return CodecConfig{}; }

  static CodecConfig paper_24k() {
    CodecConfig c;
    c.sample_rate = 24000;
    c.encoder_strides = {2, 4, 5, 6, 8};
    c.decoder_strides = {8, 6, 5, 4, 2};
    c.latent_dim = 1024;
    c.encoder_channels = 64;
    c.decoder_channels = 2048;
    c.n_codebooks = 8;
    c.codebook_size = 4096;
    return c;
  }

  static CodecConfig preset(const std::string& name) {
    if (name == "tiny") return tiny();
    if (name == "paper-24k") return paper_24k();
    throw ConfigError("unknown codec preset '" + name + "'");
  }
};

inline double frame_rate(double sample_rate, const std::vector<std::size_t>& strides) {
  const std::size_t p = std::accumulate(strides.begin(), strides.end(), std::size_t{1}, std::multiplies<>());
  return sample_rate / double(p);
}

inline double frame_rate(const CodecConfig& cfg) { return frame_rate(cfg.sample_rate, cfg.encoder_strides); }

}  // namespace s3tts
