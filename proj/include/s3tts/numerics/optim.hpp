#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "s3tts/numerics/params.hpp"

namespace s3tts {

struct AdamWOptions {
  double lr = 1e-3;
  double beta1 = 0.8;
  double beta2 = 0.99;
  double eps = 1e-8;
  double weight_decay = 0.0;

  bool operator==(const AdamWOptions&) const = default;
};

// Decoupled weight decay Adam. Moment buffers are kept in the parameter
// precision so checkpoints can store them directly.
template <class T>
class AdamW {
 public:
  struct Slot {
    NamedParam<T> param;
    std::vector<T> m;
    std::vector<T> v;
  };

  AdamW() = default;
  AdamW(ParamList<T> params, AdamWOptions opt) : opt_(opt) {
    for (auto& p : params) add(std::move(p));
  }

  void add(NamedParam<T> p) {
    const std::size_t n = p.var.size();
    slots_.push_back(Slot{std::move(p), std::vector<T>(n, T(0)), std::vector<T>(n, T(0))});
  }

  // Applies one update using the currently accumulated gradients and the
  // given learning rate (defaults to the configured one).
  void step(double lr) {
    ++t_;
    const double b1 = opt_.beta1, b2 = opt_.beta2;
    const double c1 = 1.0 - std::pow(b1, double(t_));
    const double c2 = 1.0 - std::pow(b2, double(t_));
    for (auto& s : slots_) {
      auto& var = s.param.var;
      if (!var.has_grad()) continue;
      auto g = var.grad();
      auto& w = var.mutable_value();
      const double decay = s.param.decay ? opt_.weight_decay : 0.0;
      for (std::size_t i = 0; i < w.size(); ++i) {
        const double gi = double(g[i]);
        const double m = b1 * double(s.m[i]) + (1.0 - b1) * gi;
        const double v = b2 * double(s.v[i]) + (1.0 - b2) * gi * gi;
        s.m[i] = T(m);
        s.v[i] = T(v);
        const double upd = (m / c1) / (std::sqrt(v / c2) + opt_.eps);
        double p = double(w[i]);
        p -= lr * (upd + decay * p);
        w[i] = T(p);
      }
    }
  }
  void step() { step(opt_.lr); }

  void zero_grad() {
    for (auto& s : slots_) s.param.var.zero_grad();
  }

  const AdamWOptions& options() const { return opt_; }
  AdamWOptions& options() { return opt_; }
  long step_count() const { return t_; }
  void set_step_count(long t) { t_ = t; }
  std::vector<Slot>& slots() { return slots_; }
  const std::vector<Slot>& slots() const { return slots_; }

 private:
  AdamWOptions opt_;
  std::vector<Slot> slots_;
  long t_ = 0;
};

// Linear warm-up to the peak rate, constant afterwards.
inline double warmup_lr(double peak, long step, long warmup_steps) {
  if (warmup_steps <= 0 || step >= warmup_steps) return peak;
  return peak * double(step + 1) / double(warmup_steps);
}

}  // namespace s3tts
