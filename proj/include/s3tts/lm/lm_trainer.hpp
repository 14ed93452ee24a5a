#pragma once

#include <string>
#include <vector>

#include "s3tts/lm/dual_lm.hpp"
#include "s3tts/lm/mapi.hpp"
#include "s3tts/train/checkpoint.hpp"

namespace s3tts {

struct LmTrainConfig {
  AdamWOptions opt{2e-3, 0.9, 0.98, 1e-8, 0.0};
  long warmup = 100;

  bool operator==(const LmTrainConfig&) const = default;

  static LmTrainConfig tiny() { return {}; }
  static LmTrainConfig paper() { return {{1e-5, 0.9, 0.98, 1e-8, 0.0}, 20000}; }
};

struct LmStepMetrics {
  long step = 0;
  double total = 0, ctx = 0, acoustic = 0, lr = 0;
  std::vector<double> accuracy;  // teacher-forced, per codebook
};

class LmTrainer {
 public:
  LmTrainer(DualLm<float>& model, const LmTrainConfig& cfg)
      : model_(model), cfg_(cfg), params_(model.params()), opt_(params_, cfg.opt) {}

  long steps_done() const { return step_; }
  AdamW<float>& optimizer() { return opt_; }
  const ParamList<float>& params() const { return params_; }

  LmStepMetrics step(const std::vector<LmExample>& batch) {
    LmStepMetrics m;
    m.step = step_;
    m.lr = warmup_lr(cfg_.opt.lr, step_, cfg_.warmup);
    opt_.zero_grad();
    const auto f = model_.forward(batch);
    const auto l = lm_losses(f);
    if (!std::isfinite(double(l.total.item())))
      throw NumericError("lm step " + std::to_string(step_) + " aborted: non-finite loss");
    backward(l.total);
    opt_.step(m.lr);
    opt_.zero_grad();
    fill(m, f, l);
    ++step_;
    return m;
  }

  LmStepMetrics evaluate(const std::vector<LmExample>& batch) const {
    NoGradGuard ng;
    LmStepMetrics m;
    m.step = step_;
    const auto f = model_.forward(batch);
    fill(m, f, lm_losses(f));
    return m;
  }

  // `extra` carries tensors trained alongside the model, e.g. an aggregation head.
  void save(const std::string& path, const ParamList<float>& extra = {}) const {
    TensorMap t;
    store_params(t, params_);
    store_params(t, extra);
    store_optimizer(t, opt_, "lm");
    t[kOptimPrefix + "trainer/step"] = Tensor<float>::scalar(float(step_));
    write_checkpoint(path, t);
  }

  void load(const std::string& path) {
    const TensorMap t = read_checkpoint(path);
    load_params(params_, t);
    load_optimizer(opt_, t, "lm");
    auto it = t.find(kOptimPrefix + "trainer/step");
    if (it == t.end()) throw FormatError(path + ": missing trainer step");
    step_ = static_cast<long>(it->second[0]);
  }

 private:
  static void fill(LmStepMetrics& m, const LmForward<float>& f, const LmLosses<float>& l) {
    m.total = l.total.item();
    m.ctx = l.ctx.item();
    m.acoustic = l.acoustic.item();
    m.accuracy = codebook_accuracy(f);
  }

  DualLm<float>& model_;
  LmTrainConfig cfg_;
  ParamList<float> params_;
  AdamW<float> opt_;
  long step_ = 0;
};

// Fits the aggregation head with ctx_loss on aggregated predictions while
// the base model stays frozen.
class MapiHeadTrainer {
 public:
  MapiHeadTrainer(const DualLm<float>& model, AggregationHead<float>& head, const StreamMaskPlan& plan,
                  AdamWOptions opt = {1e-3, 0.9, 0.98, 1e-8, 0.0})
      : model_(model), head_(head), plan_(plan), base_(model.params()), params_(head.params()), opt_(params_, opt) {}

  double step(const std::vector<LmExample>& batch) {
    set_requires_grad(base_, false);
    opt_.zero_grad();
    Var<float> total = Var<float>::scalar(0.0f);
    for (const auto& ex : batch) {
      Var<float> target;
      auto a = mapi_teacher_forced(model_, head_, plan_, ex, &target);
      total = ops::add(total, ctx_loss(a.y, target));
    }
    total = ops::scale(total, 1.0f / float(batch.size()));
    backward(total);
    opt_.step();
    opt_.zero_grad();
    set_requires_grad(base_, true);
    return total.item();
  }

 private:
  const DualLm<float>& model_;
  AggregationHead<float>& head_;
  StreamMaskPlan plan_;
  ParamList<float> base_, params_;
  AdamW<float> opt_;
};

}  // namespace s3tts
