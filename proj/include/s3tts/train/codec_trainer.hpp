#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "s3tts/codec/s3codec.hpp"
#include "s3tts/train/checkpoint.hpp"
#include "s3tts/train/discriminators.hpp"
#include "s3tts/train/losses.hpp"

namespace s3tts {

struct CodecTrainConfig {
  LossWeights weights;
  MelLossConfig mel;
  DiscriminatorConfig disc;
  AdamWOptions gen_opt{1e-3, 0.8, 0.99, 1e-8, 0.0};
  AdamWOptions disc_opt{1e-3, 0.8, 0.99, 1e-8, 0.0};
  double lr_decay = 1.0;  // per-step exponential factor on both learning rates
  bool kmeans_init = true;
  std::size_t kmeans_iters = 20;
  std::uint64_t seed = 0;

  bool operator==(const CodecTrainConfig&) const = default;

  // Desk preset. Mel and adversarial terms are phase-blind, so a heavy
  // time-domain term is what lets 2000 steps reach a usable waveform SNR.
  static CodecTrainConfig tiny() {
    CodecTrainConfig c;
    c.weights.time = 500;
    c.gen_opt.lr = 3e-3;
    return c;
  }
};

struct CodecStepMetrics {
  long step = 0;
  double disc = 0, time = 0, mel = 0, adv = 0, feat = 0, commit = 0, distill = 0, total = 0;
  std::size_t reseeded = 0;
};

struct CodecBatch {
  Tensor<float> wave;                  // [B, T]
  std::vector<Tensor<float>> teachers;  // one [L_S, D_S] per utterance
};

// One discriminator update followed by one generator update per step.
class CodecTrainer {
 public:
  CodecTrainer(S3Codec<float>& model, const CodecTrainConfig& cfg)
      : model_(model), cfg_(cfg), rng_(cfg.seed ^ 0xc0dec), discs_(cfg.disc, rng_) {
    cfg.weights.validate();
    cfg.mel.validate();
    gen_params_ = model.params();
    discs_.collect(disc_params_, "disc");
    gen_opt_ = AdamW<float>(gen_params_, cfg.gen_opt);
    disc_opt_ = AdamW<float>(disc_params_, cfg.disc_opt);
  }

  const ParamList<float>& generator_params() const { return gen_params_; }
  const ParamList<float>& discriminator_params() const { return disc_params_; }
  const DiscriminatorSet<float>& discriminators() const { return discs_; }
  AdamW<float>& generator_optimizer() { return gen_opt_; }
  AdamW<float>& discriminator_optimizer() { return disc_opt_; }
  long steps_done() const { return step_; }

  // Fits every codebook level to the batch latents by k-means.
  void init_codebooks(const CodecBatch& batch) {
    NoGradGuard ng;
    kmeans_init(model_.quantizer(), model_.encode_latents(Var<float>(batch.wave)).value(), rng_, cfg_.kmeans_iters);
    codebooks_ready_ = true;
  }

  // Generator loss components without any parameter update.
  GeneratorLosses<float> generator_losses(const CodecBatch& batch, typename S3Codec<float>::Forward& f) const {
    const Var<float> x = constant(batch.wave);
    f = model_.forward(x);
    std::vector<DiscOutput<float>> real;
    {
      NoGradGuard ng;
      real = discs_(x);
    }
    auto fake = discs_(f.recon);
    GeneratorLosses<float> l;
    l.time = time_loss(x, f.recon);
    l.mel = mel_loss(x, f.recon, cfg_.mel);
    l.adv = gen_adv_loss(logits_of(fake));
    l.feat = feat_match_loss(features_of(real), features_of(fake));
    l.commit = ops::add(f.quant.commitment, f.quant.codebook_loss);
    l.distill = model_.distill(f, batch.teachers);
    return l;
  }

  // Multi-scale mel loss of the current model on a batch, no update.
  double evaluate_mel(const CodecBatch& batch) const {
    NoGradGuard ng;
    auto f = model_.forward(Var<float>(batch.wave));
    return mel_loss(Var<float>(batch.wave), f.recon, cfg_.mel).item();
  }

  CodecStepMetrics step(const CodecBatch& batch) {
    if (cfg_.kmeans_init && !codebooks_ready_) init_codebooks(batch);
    CodecStepMetrics m;
    m.step = step_;
    try {
      m.disc = discriminator_update(batch);
      generator_update(batch, m);
    } catch (const NumericError& e) {
      throw NumericError("codec step " + std::to_string(step_) + " aborted: " + e.what());
    }
    ++step_;
    return m;
  }

  // Fills discriminator gradients from L_D on a detached reconstruction.
  // Generator parameters receive nothing.
  double discriminator_backward(const CodecBatch& batch) {
    Var<float> fake;
    {
      NoGradGuard ng;
      fake = constant(model_.forward(Var<float>(batch.wave)).recon.value());
    }
    set_requires_grad(disc_params_, true);
    disc_opt_.zero_grad();
    const Var<float> x = constant(batch.wave);
    Var<float> loss = disc_loss(logits_of(discs_(x)), logits_of(discs_(fake)));
    backward(loss);
    return loss.item();
  }

  // Fills generator gradients from L_G with the discriminators frozen.
  GeneratorLosses<float> generator_backward(const CodecBatch& batch, typename S3Codec<float>::Forward& f,
                                            Var<float>& total) {
    set_requires_grad(disc_params_, false);
    gen_opt_.zero_grad();
    auto l = generator_losses(batch, f);
    total = generator_total(l, cfg_.weights);
    backward(total);
    set_requires_grad(disc_params_, true);
    return l;
  }

  double discriminator_update(const CodecBatch& batch) {
    const double loss = discriminator_backward(batch);
    disc_opt_.step(cfg_.disc_opt.lr * decay());
    disc_opt_.zero_grad();
    return loss;
  }

  void generator_update(const CodecBatch& batch, CodecStepMetrics& m) {
    typename S3Codec<float>::Forward f;
    Var<float> total;
    auto l = generator_backward(batch, f, total);
    gen_opt_.step(cfg_.gen_opt.lr * decay());
    gen_opt_.zero_grad();
    record_usage(model_.quantizer(), f.quant.codes);
    m.reseeded = reseed_dead_entries(model_.quantizer(), f.quant, rng_);
    m.time = l.time.item();
    m.mel = l.mel.item();
    m.adv = l.adv.item();
    m.feat = l.feat.item();
    m.commit = l.commit.item();
    m.distill = l.distill.item();
    m.total = total.item();
  }

  void save(const std::string& path) const {
    TensorMap t;
    store_params(t, gen_params_);
    store_params(t, disc_params_);
    store_optimizer(t, gen_opt_, "gen");
    store_optimizer(t, disc_opt_, "disc");
    t[kOptimPrefix + "trainer/step"] = Tensor<float>::scalar(float(step_));
    write_checkpoint(path, t);
  }

  void load(const std::string& path) {
    const TensorMap t = read_checkpoint(path);
    load_params(gen_params_, t);
    load_params(disc_params_, t);
    load_optimizer(gen_opt_, t, "gen");
    load_optimizer(disc_opt_, t, "disc");
    step_ = static_cast<long>(t.at(kOptimPrefix + "trainer/step")[0]);
    codebooks_ready_ = true;
  }

 private:
  double decay() const { return std::pow(cfg_.lr_decay, double(step_)); }

  S3Codec<float>& model_;
  CodecTrainConfig cfg_;
  Rng rng_;
  DiscriminatorSet<float> discs_;
  ParamList<float> gen_params_, disc_params_;
  AdamW<float> gen_opt_, disc_opt_;
  long step_ = 0;
  bool codebooks_ready_ = false;
};

// Reconstruction SNR in dB over a batch.
inline double snr_db(const Tensor<float>& ref, const Tensor<float>& est) {
  double s = 0, n = 0;
  for (std::size_t i = 0; i < ref.size(); ++i) {
    s += double(ref[i]) * double(ref[i]);
    n += (double(ref[i]) - double(est[i])) * (double(ref[i]) - double(est[i]));
  }
  return 10.0 * std::log10(s / std::max(n, 1e-30));
}

}  // namespace s3tts
