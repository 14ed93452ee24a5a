#pragma once

#include <string>
#include <vector>

#include "s3tts/codec/model.hpp"
#include "s3tts/distill/distill.hpp"
#include "s3tts/quant/split_rvq.hpp"

namespace s3tts {

// Encoder, split-RVQ bottleneck, decoder, and the distillation projection
// head, wired together.
template <class T>
class S3Codec {
 public:
  struct Forward {
    Var<T> latents;  // [B*L, D] frame rows, batch-major
    QuantizationResult<T> quant;
    Var<T> recon;    // [B, T], trimmed to the input length
    std::size_t batch = 0;
    std::size_t frames = 0;
  };

  S3Codec() = default;
  S3Codec(const CodecConfig& cfg, std::size_t teacher_dim, Rng& rng)
      : cfg_(cfg),
        encoder_(cfg, rng),
        quant_(cfg, rng),
        decoder_(cfg, rng),
        head_(teacher_dim, cfg.latent_dim, rng),
        teacher_dim_(teacher_dim) {}

  const CodecConfig& config() const { return cfg_; }
  std::size_t teacher_dim() const { return teacher_dim_; }
  QuantizerStack<T>& quantizer() { return quant_; }
  const QuantizerStack<T>& quantizer() const { return quant_; }
  const ProjectionHead<T>& head() const { return head_; }
  const Encoder<T>& encoder() const { return encoder_; }
  const Decoder<T>& decoder() const { return decoder_; }

  // Latent rows [B*L, D] for a [B, T] batch.
  Var<T> encode_latents(const Var<T>& wave, std::size_t* frames = nullptr) const {
    Var<T> z = encoder_(prepare_encoder_input(wave, cfg_));
    if (frames) *frames = z.shape()[2];
    return latents_to_rows(z);
  }

  Forward forward(const Var<T>& wave) const {
    Forward f;
    const Var<T> w = wave.shape().size() == 1 ? ops::reshape(wave, Shape{1, wave.size()}) : wave;
    f.batch = w.shape()[0];
    f.latents = encode_latents(w, &f.frames);
    f.quant = split_quantize(quant_, f.latents);
    Var<T> y = decoder_(rows_to_latents(f.quant.quantized, f.batch));
    y = ops::reshape(y, Shape{f.batch, y.shape()[2]});
    const std::size_t Tn = w.shape()[1];
    f.recon = y.shape()[1] == Tn ? y : ops::narrow(y, 1, 0, Tn);
    return f;
  }

  // Teacher frames per utterance, resampled to the codec frame count and
  // stacked batch-major to line up with the latent rows.
  Tensor<T> stack_teachers(const std::vector<Tensor<T>>& teachers, std::size_t frames) const {
    Tensor<T> out(Shape{teachers.size() * frames, teacher_dim_});
    for (std::size_t b = 0; b < teachers.size(); ++b) {
      if (teachers[b].dim(1) != teacher_dim_) throw ConfigError("teacher dimension does not match projection head");
      const auto r = resample_teacher(teachers[b], frames);
      std::copy(r.data().begin(), r.data().end(), out.data().begin() + static_cast<long>(b * frames * teacher_dim_));
    }
    return out;
  }

  Var<T> distill(const Forward& f, const std::vector<Tensor<T>>& teachers) const {
    if (teachers.size() != f.batch) throw ShapeError("distill: one teacher per utterance required");
    return distill_loss_rows(f.quant.c0, head_(stack_teachers(teachers, f.frames)));
  }

  CodeGrid encode(const std::vector<float>& samples) const {
    NoGradGuard ng;
    Tensor<T> w(Shape{1, samples.size()});
    std::copy(samples.begin(), samples.end(), w.data().begin());
    return split_quantize(quant_, encode_latents(Var<T>(w))).codes;
  }

  // Length is L * hop unless `length` trims it.
  std::vector<float> decode(const CodeGrid& codes, std::size_t length = 0) const {
    NoGradGuard ng;
    if (codes.K != cfg_.n_codebooks) throw ConfigError("decode: code grid has the wrong number of codebooks");
    Tensor<T> rows = decode_codes(quant_, codes);
    Var<T> y = decoder_(rows_to_latents(Var<T>(rows), 1));
    const auto& v = y.value();
    const std::size_t n = length ? std::min(length, v.size()) : v.size();
    return std::vector<float>(v.data().begin(), v.data().begin() + static_cast<long>(n));
  }

  // Every parameter updated by the generator optimizer.
  ParamList<T> params() const {
    ParamList<T> p;
    encoder_.collect(p, "encoder");
    quant_.collect(p, "quantizer");
    decoder_.collect(p, "decoder");
    head_.collect(p, "distill_head");
    return p;
  }

 private:
  CodecConfig cfg_;
  Encoder<T> encoder_;
  QuantizerStack<T> quant_;
  Decoder<T> decoder_;
  ProjectionHead<T> head_;
  std::size_t teacher_dim_ = 0;
};

}  // namespace s3tts
