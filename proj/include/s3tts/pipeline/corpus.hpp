#pragma once

#include <vector>

#include "s3tts/codec/s3codec.hpp"
#include "s3tts/lm/dual_lm.hpp"
#include "s3tts/pipeline/synthetic.hpp"
#include "s3tts/quant/split_rvq.hpp"
#include "s3tts/train/codec_trainer.hpp"

namespace s3tts {

// Fits every codebook to the corpus latents by k-means; a stand-in for a
// trained codec when only stable, data-dependent codes are needed.
inline void fit_codebooks(S3Codec<float>& codec, const std::vector<SynthUtterance>& data, Rng& rng,
                          std::size_t iters = 20) {
  NoGradGuard ng;
  std::vector<Var<float>> rows;
  for (const auto& u : data) {
    Tensor<float> w(Shape{1, u.samples.size()}, u.samples);
    rows.push_back(codec.encode_latents(Var<float>(w)));
  }
  kmeans_init(codec.quantizer(), ops::concat<float>(rows, 0).value(), rng, iters);
}

// Clips stacked into one codec batch with their teacher frames. All clips
// must share a length; synth_dataset gives that with min_words == max_words.
inline CodecBatch synth_codec_batch(const std::vector<SynthUtterance>& data) {
  if (data.empty()) throw InputError("synth_codec_batch: no clips");
  const std::size_t T = data[0].samples.size();
  CodecBatch b;
  b.wave = Tensor<float>(Shape{data.size(), T});
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (data[i].samples.size() != T) throw LengthError("synth_codec_batch: clips differ in length");
    std::copy(data[i].samples.begin(), data[i].samples.end(), b.wave.data().begin() + static_cast<long>(i * T));
    b.teachers.push_back(data[i].teacher.frames);
  }
  return b;
}

// Tokenized transcripts paired with the codec's code grids.
inline std::vector<LmExample> encode_corpus(const S3Codec<float>& codec, const std::vector<SynthUtterance>& data,
                                            const Tokenizer& tok) {
  std::vector<LmExample> out;
  for (const auto& u : data) {
    LmExample ex;
    ex.text = tok.encode(u.transcript);
    ex.codes = codec.encode(u.samples);
    out.push_back(std::move(ex));
  }
  return out;
}

}  // namespace s3tts
