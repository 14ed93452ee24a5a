#pragma once

#include <string>
#include <utility>
#include <vector>

#include "s3tts/codec/config.hpp"
#include "s3tts/codec/layers.hpp"

namespace s3tts {

// Strided conv that divides length by exactly s: kernel 2s, padding ceil(s/2).
inline ops::Conv1dOptions downsample_options(std::size_t s) {
  const std::size_t p = (s + 1) / 2;
  return {s, 1, p, p};
}

// Transposed conv that multiplies length by exactly s.
inline ops::ConvTranspose1dOptions upsample_options(std::size_t s) { return {s, (s + 1) / 2, s % 2}; }

template <class T>
class Encoder {
 public:
  struct Block {
    std::vector<nn::ResidualUnit<T>> units;
    nn::Snake<T> act;
    nn::WNConv1d<T> down;
  };

  Encoder() = default;
  Encoder(const CodecConfig& cfg, Rng& rng) : cfg_(cfg) {
    cfg.validate();
    std::size_t c = cfg.encoder_channels;
    conv_in_ = nn::WNConv1d<T>(1, c, 7, rng, nn::WNConv1d<T>::same(7));
    for (std::size_t s : cfg.encoder_strides) {
      Block b;
      for (std::size_t d : cfg.dilations) b.units.emplace_back(c, cfg.residual_kernel, d, rng);
      b.act = nn::Snake<T>(c);
      b.down = nn::WNConv1d<T>(c, 2 * c, 2 * s, rng, downsample_options(s));
      blocks_.push_back(std::move(b));
      c *= 2;
    }
    act_out_ = nn::Snake<T>(c);
    conv_out_ = nn::WNConv1d<T>(c, cfg.latent_dim, 3, rng, nn::WNConv1d<T>::same(3));
  }

  // x[B, 1, T] with T a multiple of the hop -> [B, D, T / hop].
  Var<T> operator()(const Var<T>& x) const {
    Var<T> h = conv_in_(x);
    for (const auto& b : blocks_) {
      for (const auto& u : b.units) h = u(h);
      h = b.down(b.act(h));
    }
    return conv_out_(act_out_(h));
  }

  // Input-layer geometry in forward order, for receptive-field arithmetic.
  std::vector<nn::ConvGeometry> geometry() const {
    std::vector<nn::ConvGeometry> g{conv_in_.geometry()};
    for (const auto& b : blocks_) {
      for (const auto& u : b.units) g.push_back(u.geometry());
      g.push_back(b.down.geometry());
    }
    g.push_back(conv_out_.geometry());
    return g;
  }

  // Inclusive span of (zero-padded) input sample indices that can influence
  // latent frames [first, last].
  std::pair<long, long> receptive_field(std::size_t first, std::size_t last) const {
    long lo = static_cast<long>(first), hi = static_cast<long>(last);
    const auto g = geometry();
    for (auto it = g.rbegin(); it != g.rend(); ++it) {
      const long s = static_cast<long>(it->stride), p = static_cast<long>(it->pad_left);
      lo = lo * s - p;
      hi = hi * s - p + static_cast<long>(it->dilation * (it->kernel - 1));
    }
    return {lo, hi};
  }

  void collect(ParamList<T>& out, const std::string& prefix) const {
    conv_in_.collect(out, prefix + ".conv_in");
    for (std::size_t i = 0; i < blocks_.size(); ++i) {
      const std::string p = prefix + ".block" + std::to_string(i);
      for (std::size_t j = 0; j < blocks_[i].units.size(); ++j)
        blocks_[i].units[j].collect(out, p + ".res" + std::to_string(j));
      blocks_[i].act.collect(out, p + ".act");
      blocks_[i].down.collect(out, p + ".down");
    }
    act_out_.collect(out, prefix + ".act_out");
    conv_out_.collect(out, prefix + ".conv_out");
  }

 private:
  CodecConfig cfg_;
  nn::WNConv1d<T> conv_in_;
  std::vector<Block> blocks_;
  nn::Snake<T> act_out_;
  nn::WNConv1d<T> conv_out_;
};

template <class T>
class Decoder {
 public:
  struct Block {
    nn::Snake<T> act;
    nn::WNConvTranspose1d<T> up;
    std::vector<nn::ResidualUnit<T>> units;
  };

  Decoder() = default;
  Decoder(const CodecConfig& cfg, Rng& rng) : cfg_(cfg) {
    cfg.validate();
    std::size_t c = cfg.decoder_channels;
    conv_in_ = nn::WNConv1d<T>(cfg.latent_dim, c, 7, rng, nn::WNConv1d<T>::same(7));
    for (std::size_t s : cfg.decoder_strides) {
      Block b;
      b.act = nn::Snake<T>(c);
      b.up = nn::WNConvTranspose1d<T>(c, c / 2, 2 * s, rng, upsample_options(s));
      c /= 2;
      for (std::size_t d : cfg.dilations) b.units.emplace_back(c, cfg.residual_kernel, d, rng);
      blocks_.push_back(std::move(b));
    }
    act_out_ = nn::Snake<T>(c);
    conv_out_ = nn::WNConv1d<T>(c, 1, 7, rng, nn::WNConv1d<T>::same(7), 0.1);
  }

  // z[B, D, L] -> [B, 1, L * hop], bounded to (-1, 1) by tanh.
  Var<T> operator()(const Var<T>& z) const {
    if (z.shape().size() != 3 || z.shape()[1] != cfg_.latent_dim)
      throw ConfigError("decode: latent dimension " + (z.shape().size() == 3 ? std::to_string(z.shape()[1]) : "?") +
                        " does not match configured " + std::to_string(cfg_.latent_dim));
    Var<T> h = conv_in_(z);
    for (const auto& b : blocks_) {
      h = b.up(b.act(h));
      for (const auto& u : b.units) h = u(h);
    }
    return ops::tanh(conv_out_(act_out_(h)));
  }

  void collect(ParamList<T>& out, const std::string& prefix) const {
    conv_in_.collect(out, prefix + ".conv_in");
    for (std::size_t i = 0; i < blocks_.size(); ++i) {
      const std::string p = prefix + ".block" + std::to_string(i);
      blocks_[i].act.collect(out, p + ".act");
      blocks_[i].up.collect(out, p + ".up");
      for (std::size_t j = 0; j < blocks_[i].units.size(); ++j)
        blocks_[i].units[j].collect(out, p + ".res" + std::to_string(j));
    }
    act_out_.collect(out, prefix + ".act_out");
    conv_out_.collect(out, prefix + ".conv_out");
  }

 private:
  CodecConfig cfg_;
  nn::WNConv1d<T> conv_in_;
  std::vector<Block> blocks_;
  nn::Snake<T> act_out_;
  nn::WNConv1d<T> conv_out_;
};

// Pads (or checks) a [B, T] batch to a stride multiple and adds the channel
// axis. Returns the padded [B, 1, T'] input.
template <class T>
Var<T> prepare_encoder_input(const Var<T>& wave, const CodecConfig& cfg) {
  Var<T> x = wave.shape().size() == 1 ? ops::reshape(wave, Shape{1, wave.size()}) : wave;
  if (x.shape().size() != 2) throw ShapeError("encode: expected [T] or [B, T] waveform");
  const std::size_t B = x.shape()[0], Tn = x.shape()[1], hop = cfg.hop();
  if (Tn == 0 || B == 0) throw InputError("encode: empty waveform");
  const std::size_t rem = Tn % hop;
  if (rem != 0) {
    if (!cfg.pad_to_stride)
      throw AlignmentError("encode: length " + std::to_string(Tn) + " is not a multiple of the hop " +
                           std::to_string(hop));
    x = ops::concat<T>({x, constant(Tensor<T>(Shape{B, hop - rem}))}, 1);
  }
  return ops::reshape(x, Shape{B, 1, x.shape()[1]});
}

// [B, D, L] <-> [B*L, D] frame-major rows used by the quantizer.
template <class T>
Var<T> latents_to_rows(const Var<T>& z) {
  const auto& s = z.shape();
  return ops::reshape(ops::transpose(z), Shape{s[0] * s[2], s[1]});
}

template <class T>
Var<T> rows_to_latents(const Var<T>& rows, std::size_t batch) {
  const std::size_t N = rows.shape()[0], D = rows.shape()[1];
  if (N % batch != 0) throw ShapeError("rows_to_latents: row count not divisible by batch");
  return ops::transpose(ops::reshape(rows, Shape{batch, N / batch, D}));
}

}  // namespace s3tts
