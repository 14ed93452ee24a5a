#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "s3tts/codec/model.hpp"
#include "s3tts/distill/distill.hpp"
#include "s3tts/lm/mapi.hpp"
#include "s3tts/numerics.hpp"
#include "s3tts/quant/split_rvq.hpp"
#include "s3tts/train/discriminators.hpp"
#include "s3tts/train/losses.hpp"

namespace s3tts {

struct GradSuiteResult {
  std::string name;
  double max_rel_error = 0;
  double tolerance = 0;
  bool passed = false;
};

// Thresholds for 64-bit checks: scalar losses are held tighter than
// tensor-valued ops.
inline constexpr double kGradTolOp = 1e-4;
inline constexpr double kGradTolLoss = 1e-5;

namespace gradsuite_detail {

using D = double;
using V = Var<D>;

inline Tensor<D> rand(Shape s, Rng& rng, double lo = -1.0, double hi = 1.0) { return uniform<D>(std::move(s), lo, hi, rng); }

inline CodecConfig conv_config() {
  CodecConfig c;
  c.encoder_strides = {2, 2};
  c.decoder_strides = {2, 2};
  c.latent_dim = 8;
  c.encoder_channels = 8;
  c.decoder_channels = 8;
  c.dilations = {1, 3};
  c.residual_kernel = 3;
  return c;
}

inline DiscriminatorConfig disc_config() {
  DiscriminatorConfig c;
  c.periods = {2};
  c.stft_windows = {32};
  c.band_edges = {0.0, 0.5, 1.0};
  c.channels = 8;
  c.layers = 2;
  return c;
}

inline MelLossConfig mel_config() {
  MelLossConfig c;
  c.windows = {16, 32};
  c.n_mels = {4, 8};
  return c;
}

// Analytic gradient through tanh -> split quantizer -> linear read-out,
// against central differences of the same chain with the quantizer taken
// out (its straight-through Jacobian is the identity by definition).
inline double vq_surroundings(Rng& rng) {
  QuantizerStack<D> stack(3, 8, 5, rng);
  const auto z0 = rand(Shape{12, 5}, rng);
  const V w = constant(rand(Shape{12, 5}, rng));
  V x(z0, true);
  backward(ops::sum(ops::mul(split_quantize(stack, ops::tanh(x)).quantized, w)));
  const double h = 1e-6;
  double worst = 0;
  for (std::size_t i = 0; i < z0.size(); ++i) {
    auto f = [&](double v) {
      Tensor<D> p = z0;
      p[i] = v;
      return ops::sum(ops::mul(ops::tanh(V(p)), w)).item();
    };
    const double fd = (f(z0[i] + h) - f(z0[i] - h)) / (2 * h);
    const double a = x.grad()[i];
    worst = std::max(worst, std::abs(a - fd) / std::max({std::abs(a), std::abs(fd), 1e-3}));
  }
  return worst;
}

inline LmConfig micro_lm() {
  LmConfig c;
  c.text_vocab = 16;
  c.n_codebooks = 3;
  c.codebook_size = 8;
  c.sem_layers = 1;
  c.sem_dim = 8;
  c.sem_heads = 2;
  c.ac_layers = 1;
  c.ac_dim = 8;
  c.ac_heads = 2;
  c.max_seq = 32;
  return c;
}

}  // namespace gradsuite_detail

struct GradSuite {
  std::string name;
  double tolerance;
  std::function<double(Rng&)> run;  // returns the max relative error
};

// Every differentiable piece of the stack, checked in double precision.
inline std::vector<GradSuite> gradient_suites() {
  using namespace gradsuite_detail;
  std::vector<GradSuite> s;
  s.push_back({"snake", kGradTolOp, [](Rng& rng) {
                 const auto alpha = rand(Shape{3}, rng, 0.3, 2.0);
                 return grad_check<D>([](const std::vector<V>& in) { return ops::snake(in[0], in[1]); },
                                      {rand(Shape{2, 3, 9}, rng, -2.0, 2.0), alpha});
               }});
  s.push_back({"conv_stack", kGradTolOp, [](Rng& rng) {
                 const auto cfg = conv_config();
                 Encoder<D> enc(cfg, rng);
                 Decoder<D> dec(cfg, rng);
                 ParamList<D> ps;
                 enc.collect(ps, "enc");
                 dec.collect(ps, "dec");
                 const V x = constant(rand(Shape{1, 1, 16}, rng));
                 GradCheckOptions o;
                 o.max_coords = 6;
                 const double wrt_params = grad_check_params<D>([&] { return dec(enc(x)); }, ps, o).max_rel_error;
                 const double wrt_input =
                     grad_check<D>([&](const std::vector<V>& in) { return dec(enc(in[0])); }, {x.value()});
                 return std::max(wrt_params, wrt_input);
               }});
  s.push_back({"vq_straight_through_surroundings", kGradTolOp, [](Rng& rng) { return vq_surroundings(rng); }});
  s.push_back({"loss_time", kGradTolLoss, [](Rng& rng) {
                 const auto x = rand(Shape{2, 64}, rng);
                 return grad_check<D>([&](const std::vector<V>& in) { return time_loss(V(x), in[0]); },
                                      {rand(Shape{2, 64}, rng)});
               }});
  s.push_back({"loss_mel", kGradTolLoss, [](Rng& rng) {
                 const auto x = rand(Shape{1, 64}, rng, -0.8, 0.8);
                 return grad_check<D>([&](const std::vector<V>& in) { return mel_loss(V(x), in[0], mel_config()); },
                                      {rand(Shape{1, 64}, rng, -0.8, 0.8)});
               }});
  s.push_back({"loss_disc_hinge", kGradTolLoss, [](Rng& rng) {
                 DiscriminatorSet<D> discs(disc_config(), rng);
                 ParamList<D> dp;
                 discs.collect(dp, "d");
                 const V x = constant(rand(Shape{1, 64}, rng, -0.8, 0.8));
                 const V y = constant(rand(Shape{1, 64}, rng, -0.8, 0.8));
                 GradCheckOptions o;
                 o.max_coords = 40;
                 return grad_check_params<D>([&] { return disc_loss(logits_of(discs(x)), logits_of(discs(y))); }, dp, o)
                     .max_rel_error;
               }});
  s.push_back({"loss_gen_adv", kGradTolLoss, [](Rng& rng) {
                 DiscriminatorSet<D> discs(disc_config(), rng);
                 return grad_check<D>([&](const std::vector<V>& in) { return gen_adv_loss(logits_of(discs(in[0]))); },
                                      {rand(Shape{1, 64}, rng, -0.8, 0.8)});
               }});
  s.push_back({"loss_feat_match", kGradTolLoss, [](Rng& rng) {
                 DiscriminatorSet<D> discs(disc_config(), rng);
                 const auto x = rand(Shape{1, 64}, rng, -0.8, 0.8);
                 return grad_check<D>(
                     [&](const std::vector<V>& in) {
                       return feat_match_loss(features_of(discs(V(x))), features_of(discs(in[0])));
                     },
                     {rand(Shape{1, 64}, rng, -0.8, 0.8)});
               }});
  s.push_back({"loss_commitment", kGradTolLoss, [](Rng& rng) {
                 const std::vector<Tensor<D>> cw{rand(Shape{6, 4}, rng), rand(Shape{6, 4}, rng)};
                 return grad_check<D>([&](const std::vector<V>& in) { return commitment_loss<D>({in[0], in[1]}, cw); },
                                      {rand(Shape{6, 4}, rng), rand(Shape{6, 4}, rng)});
               }});
  s.push_back({"loss_distill", kGradTolLoss, [](Rng& rng) {
                 ProjectionHead<D> head(6, 4, rng);
                 const auto teacher = rand(Shape{12, 6}, rng);
                 return grad_check<D>(
                     [&](const std::vector<V>& in) {
                       ProjectionHead<D> h;
                       h.weight = in[1];
                       h.bias = in[2];
                       return distill_loss(in[0], teacher, h);
                     },
                     {rand(Shape{3, 4}, rng), head.weight.value(), head.bias.value()});
               }});
  s.push_back({"loss_ctx", kGradTolLoss, [](Rng& rng) {
                 const auto target = rand(Shape{5, 6}, rng);
                 return grad_check<D>([&](const std::vector<V>& in) { return ctx_loss(in[0], V(target)); },
                                      {rand(Shape{5, 6}, rng)});
               }});
  s.push_back({"loss_acoustic_ce", kGradTolLoss, [](Rng& rng) {
                 return grad_check<D>(
                     [](const std::vector<V>& in) { return acoustic_loss<D>({in[0], in[1]}, {{0, 4, 2}, {3, 1}}); },
                     {rand(Shape{3, 6}, rng, -2.0, 2.0), rand(Shape{2, 5}, rng, -2.0, 2.0)});
               }});
  s.push_back({"dual_lm_total", kGradTolLoss, [](Rng& rng) {
                 const auto cfg = micro_lm();
                 DualLm<D> m(cfg, rng);
                 LmExample ex;
                 ex.text = {1, 5, 2};
                 ex.codes = CodeGrid(cfg.n_codebooks, 3, cfg.codebook_size);
                 for (auto& c : ex.codes.codes) c = std::uniform_int_distribution<int>(0, 7)(rng);
                 // The code tables also produce the stop-gradient ctx target, so
                 // finite differences over them see a different function.
                 ParamList<D> ps;
                 for (const auto& p : m.params())
                   if (p.name.rfind("lm.code_emb", 0) != 0) ps.push_back(p);
                 GradCheckOptions o;
                 o.max_coords = 4;
                 return grad_check_params<D>([&] { return lm_losses(m.forward({ex})).total; }, ps, o).max_rel_error;
               }});
  s.push_back({"aggregation_head", kGradTolOp, [](Rng& rng) {
                 AggregationHead<D> head(5, 3, rng);
                 const auto x = rand(Shape{2, 3, 5}, rng);
                 auto ps = head.params();
                 const V xv(x);
                 const double wrt_input =
                     grad_check<D>([&](const std::vector<V>& in) { return head(in[0]).y; }, {x});
                 const double wrt_params = grad_check_params<D>([&] { return head(xv).y; }, ps).max_rel_error;
                 return std::max(wrt_input, wrt_params);
               }});
  return s;
}

inline std::vector<GradSuiteResult> run_gradient_suites(std::uint64_t seed = 0,
                                                        const std::function<void(const GradSuiteResult&)>& on_result = {}) {
  std::vector<GradSuiteResult> out;
  for (const auto& suite : gradient_suites()) {
    Rng rng(seed);
    GradSuiteResult r;
    r.name = suite.name;
    r.tolerance = suite.tolerance;
    r.max_rel_error = suite.run(rng);
    r.passed = r.max_rel_error < r.tolerance;
    if (on_result) on_result(r);
    out.push_back(r);
  }
  return out;
}

}  // namespace s3tts
