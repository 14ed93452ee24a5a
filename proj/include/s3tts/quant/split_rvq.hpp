#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "s3tts/codec/config.hpp"
#include "s3tts/numerics.hpp"
#include "s3tts/quant/codegrid.hpp"

namespace s3tts {

template <class T>
struct Codebook {
  Var<T> entries;  // [size, D]
  std::vector<std::uint64_t> usage_counts;
  std::vector<std::uint64_t> steps_since_used;

  Codebook() = default;
  explicit Codebook(Tensor<T> init)
      : entries(make_param(std::move(init))),
        usage_counts(entries.shape().at(0), 0),
        steps_since_used(entries.shape().at(0), 0) {
    if (entries.shape().size() != 2) throw ConfigError("Codebook: entries must be [size, D]");
  }

  std::size_t size() const { return entries.shape().empty() ? 0 : entries.shape()[0]; }
  std::size_t dim() const { return entries.shape().size() == 2 ? entries.shape()[1] : 0; }
};

template <class T>
struct NearestResult {
  std::vector<int> indices;
  Tensor<T> codewords;  // [L, D]
};

// Arg-min squared Euclidean distance per row of x[L, D]; ties resolve to the
// lowest index.
template <class T>
NearestResult<T> vq_nearest(const Tensor<T>& entries, const Tensor<T>& x) {
  if (entries.rank() != 2 || entries.dim(0) == 0) throw ConfigError("vq_nearest: empty codebook");
  if (x.rank() != 2 || x.dim(1) != entries.dim(1))
    throw ConfigError("vq_nearest: input dim " + shape_str(x.shape()) + " vs codebook " + shape_str(entries.shape()));
  const std::size_t L = x.dim(0), D = x.dim(1), N = entries.dim(0);
  NearestResult<T> r{std::vector<int>(L), Tensor<T>(Shape{L, D})};
  for (std::size_t t = 0; t < L; ++t) {
    const T* xt = x.data().data() + t * D;
    std::size_t best = 0;
    T best_d = std::numeric_limits<T>::infinity();
    for (std::size_t n = 0; n < N; ++n) {
      const T* e = entries.data().data() + n * D;
      T d = 0;
      for (std::size_t j = 0; j < D; ++j) {
        const T diff = xt[j] - e[j];
        d += diff * diff;
      }
      if (d < best_d) {
        best_d = d;
        best = n;
      }
    }
    r.indices[t] = static_cast<int>(best);
    std::copy_n(entries.data().data() + best * D, D, r.codewords.data().data() + t * D);
  }
  return r;
}

template <class T>
NearestResult<T> vq_nearest(const Codebook<T>& cb, const Tensor<T>& x) {
  return vq_nearest(cb.entries.value(), x);
}

template <class T>
struct RvqResult {
  std::vector<std::vector<int>> indices;  // [levels][L]
  std::vector<Tensor<T>> codewords;       // per level, [L, D]
  Tensor<T> quantized_sum;                // [L, D]
  // residuals[0] is the input; residuals[i + 1] is what is left after level i.
  std::vector<Tensor<T>> residuals;
};

template <class T>
RvqResult<T> rvq_encode(const std::vector<const Codebook<T>*>& levels, const Tensor<T>& x) {
  if (levels.empty()) throw ConfigError("rvq_encode: need at least one level");
  RvqResult<T> r;
  r.residuals.push_back(x);
  r.quantized_sum = Tensor<T>(x.shape());
  for (const auto* cb : levels) {
    auto nr = vq_nearest(*cb, r.residuals.back());
    Tensor<T> next = r.residuals.back();
    for (std::size_t i = 0; i < next.size(); ++i) {
      next[i] -= nr.codewords[i];
      r.quantized_sum[i] += nr.codewords[i];
    }
    r.indices.push_back(std::move(nr.indices));
    r.codewords.push_back(std::move(nr.codewords));
    r.residuals.push_back(std::move(next));
  }
  return r;
}

template <class T>
RvqResult<T> rvq_encode(const std::vector<Codebook<T>>& levels, const Tensor<T>& x) {
  std::vector<const Codebook<T>*> p;
  for (const auto& c : levels) p.push_back(&c);
  return rvq_encode(p, x);
}

template <class T>
struct QuantizationResult {
  CodeGrid codes;             // K x N over the flattened frame rows
  Var<T> quantized;           // [N, D], straight-through to the latents
  Var<T> c0;                  // [N, D], semantic branch output for distillation
  std::vector<Var<T>> level_inputs;      // per level, differentiable w.r.t. latents
  std::vector<Tensor<T>> level_codewords;
  Var<T> commitment;          // scalar
  Var<T> codebook_loss;       // scalar
};

// Semantic VQ in parallel with a (K-1)-level acoustic RVQ; the two branch
// outputs are summed. `acoustic_on_residual` switches to the cascaded
// variant where the acoustic branch sees z - q_semantic.
template <class T>
class QuantizerStack {
 public:
  Codebook<T> semantic;
  std::vector<Codebook<T>> acoustic;
  bool acoustic_on_residual = false;
  // Distillation reads the pre-quantisation latent instead of the semantic
  // codeword.
  bool distill_on_prequant = false;
  std::size_t dead_after = 200;

  QuantizerStack() = default;
  QuantizerStack(std::size_t K, std::size_t codebook_size, std::size_t D, Rng& rng) {
    if (K < 2) throw ConfigError("QuantizerStack: K must be >= 2");
    if (codebook_size < 2) throw ConfigError("QuantizerStack: codebook_size must be >= 2");
    semantic = Codebook<T>(randn<T>(Shape{codebook_size, D}, 1.0, rng));
    for (std::size_t k = 1; k < K; ++k) acoustic.emplace_back(randn<T>(Shape{codebook_size, D}, 1.0, rng));
  }
  QuantizerStack(const CodecConfig& cfg, Rng& rng) : QuantizerStack(cfg.n_codebooks, cfg.codebook_size, cfg.latent_dim, rng) {
    acoustic_on_residual = cfg.acoustic_on_residual;
  }

  std::size_t levels() const { return 1 + acoustic.size(); }
  std::size_t dim() const { return semantic.dim(); }
  std::size_t codebook_size() const { return semantic.size(); }

  const Codebook<T>& level(std::size_t k) const { return k == 0 ? semantic : acoustic.at(k - 1); }
  Codebook<T>& level(std::size_t k) { return k == 0 ? semantic : acoustic.at(k - 1); }

  std::vector<const Codebook<T>*> acoustic_levels() const {
    std::vector<const Codebook<T>*> p;
    for (const auto& c : acoustic) p.push_back(&c);
    return p;
  }

  void collect(ParamList<T>& out, const std::string& prefix) const {
    out.push_back({prefix + ".semantic", semantic.entries, false});
    for (std::size_t i = 0; i < acoustic.size(); ++i)
      out.push_back({prefix + ".acoustic" + std::to_string(i + 1), acoustic[i].entries, false});
  }
};

namespace detail {

template <class T>
void check_stack_dim(const QuantizerStack<T>& s, std::size_t D) {
  if (s.dim() != D)
    throw ConfigError("quantizer dimension " + std::to_string(s.dim()) + " does not match latent dimension " +
                      std::to_string(D));
}

// Shared by split_quantize and decode_codes so both sum in the same order.
template <class T>
Tensor<T> branch_sum(const Tensor<T>& semantic, const std::vector<Tensor<T>>& acoustic) {
  Tensor<T> a(semantic.shape());
  for (const auto& c : acoustic)
    for (std::size_t i = 0; i < a.size(); ++i) a[i] += c[i];
  Tensor<T> q(semantic.shape());
  for (std::size_t i = 0; i < q.size(); ++i) q[i] = semantic[i] + a[i];
  return q;
}

}  // namespace detail

// Sum over levels of mean squared-L2 between each level input and its
// (constant) codeword.
template <class T>
Var<T> commitment_loss(const std::vector<Var<T>>& level_inputs, const std::vector<Tensor<T>>& codewords) {
  if (level_inputs.size() != codewords.size() || level_inputs.empty())
    throw ShapeError("commitment_loss: level count mismatch");
  Var<T> total = ops::sq_l2_distance(level_inputs[0], constant(codewords[0]));
  for (std::size_t i = 1; i < level_inputs.size(); ++i)
    total = ops::add(total, ops::sq_l2_distance(level_inputs[i], constant(codewords[i])));
  return total;
}

template <class T>
Var<T> commitment_loss(const QuantizationResult<T>& r) {
  return commitment_loss(r.level_inputs, r.level_codewords);
}

// z: [N, D] latent rows.
template <class T>
QuantizationResult<T> split_quantize(const QuantizerStack<T>& stack, const Var<T>& z) {
  if (z.shape().size() != 2) throw ShapeError("split_quantize: expected [N, D] latent rows");
  detail::check_stack_dim(stack, z.shape()[1]);
  const std::size_t N = z.shape()[0];
  QuantizationResult<T> r;
  r.codes = CodeGrid(stack.levels(), N, stack.codebook_size());

  auto sem = vq_nearest(stack.semantic, z.value());
  for (std::size_t t = 0; t < N; ++t) r.codes.at(0, t) = sem.indices[t];
  r.level_inputs.push_back(z);
  r.level_codewords.push_back(sem.codewords);

  Var<T> a_in = z;
  if (stack.acoustic_on_residual) a_in = ops::sub(z, constant(sem.codewords));
  auto rvq = rvq_encode(stack.acoustic_levels(), a_in.value());
  Var<T> level_in = a_in;
  for (std::size_t i = 0; i < stack.acoustic.size(); ++i) {
    for (std::size_t t = 0; t < N; ++t) r.codes.at(i + 1, t) = rvq.indices[i][t];
    if (i > 0) level_in = ops::sub(level_in, constant(rvq.codewords[i - 1]));
    r.level_inputs.push_back(level_in);
    r.level_codewords.push_back(rvq.codewords[i]);
  }

  r.quantized = ops::straight_through(z, detail::branch_sum(sem.codewords, rvq.codewords));
  r.c0 = stack.distill_on_prequant ? z : ops::straight_through(z, sem.codewords);
  r.commitment = commitment_loss(r.level_inputs, r.level_codewords);

  // Codebook side: stop-gradient inputs, gradient only into table rows.
  Var<T> cb_loss;
  for (std::size_t k = 0; k < stack.levels(); ++k) {
    Var<T> rows = ops::embedding(stack.level(k).entries, r.codes.row(k));
    Var<T> term = ops::sq_l2_distance(constant(r.level_inputs[k].value()), rows);
    cb_loss = k == 0 ? term : ops::add(cb_loss, term);
  }
  r.codebook_loss = cb_loss;
  return r;
}

// Semantic codeword for row 0 plus acoustic codewords for rows 1..K-1.
template <class T>
Tensor<T> decode_codes(const QuantizerStack<T>& stack, const CodeGrid& codes) {
  if (codes.K != stack.levels()) throw ConfigError("decode_codes: grid has " + std::to_string(codes.K) + " rows");
  const std::size_t L = codes.L, D = stack.dim();
  auto lookup = [&](std::size_t k) {
    const auto& e = stack.level(k).entries.value();
    Tensor<T> out(Shape{L, D});
    for (std::size_t t = 0; t < L; ++t) {
      const int c = codes.at(k, t);
      if (c < 0 || static_cast<std::size_t>(c) >= e.dim(0))
        throw CorruptCodeError("decode_codes: index " + std::to_string(c) + " out of range at level " +
                               std::to_string(k));
      std::copy_n(e.data().data() + static_cast<std::size_t>(c) * D, D, out.data().data() + t * D);
    }
    return out;
  };
  std::vector<Tensor<T>> acoustic;
  for (std::size_t k = 1; k < stack.levels(); ++k) acoustic.push_back(lookup(k));
  return detail::branch_sum(lookup(0), acoustic);
}

// Adds the grid's indices to the usage counters and ages unused entries.
template <class T>
void record_usage(QuantizerStack<T>& stack, const CodeGrid& codes) {
  for (std::size_t k = 0; k < stack.levels(); ++k) {
    auto& cb = stack.level(k);
    std::vector<bool> used(cb.size(), false);
    for (std::size_t t = 0; t < codes.L; ++t) {
      const auto c = static_cast<std::size_t>(codes.at(k, t));
      ++cb.usage_counts[c];
      used[c] = true;
    }
    for (std::size_t n = 0; n < cb.size(); ++n) cb.steps_since_used[n] = used[n] ? 0 : cb.steps_since_used[n] + 1;
  }
}

// Re-seeds entries unused for `dead_after` consecutive steps from random
// rows of the level's most recent input. Returns the number re-seeded.
template <class T>
std::size_t reseed_dead_entries(QuantizerStack<T>& stack, const QuantizationResult<T>& r, Rng& rng) {
  std::size_t count = 0;
  for (std::size_t k = 0; k < stack.levels(); ++k) {
    auto& cb = stack.level(k);
    const auto& src = r.level_inputs[k].value();
    const std::size_t N = src.dim(0), D = src.dim(1);
    std::uniform_int_distribution<std::size_t> pick(0, N - 1);
    for (std::size_t n = 0; n < cb.size(); ++n) {
      if (cb.steps_since_used[n] < stack.dead_after) continue;
      const std::size_t row = pick(rng);
      std::copy_n(src.data().data() + row * D, D, cb.entries.mutable_value().data().data() + n * D);
      cb.steps_since_used[n] = 0;
      ++count;
    }
  }
  return count;
}

// Training-time bookkeeping for one step: usage, dead-entry revival, and the
// codebook loss whose gradient moves only the table rows.
template <class T>
Var<T> codebook_update(QuantizerStack<T>& stack, const QuantizationResult<T>& r, Rng& rng) {
  record_usage(stack, r.codes);
  reseed_dead_entries(stack, r, rng);
  return r.codebook_loss;
}

struct Utilization {
  std::vector<double> histogram;  // normalised usage
  double perplexity = 0;          // exp(entropy)
};

inline Utilization utilization_from_counts(const std::vector<std::uint64_t>& counts) {
  Utilization u;
  double total = 0;
  for (auto c : counts) total += double(c);
  u.histogram.assign(counts.size(), 0.0);
  double h = 0;
  if (total > 0)
    for (std::size_t i = 0; i < counts.size(); ++i) {
      const double p = double(counts[i]) / total;
      u.histogram[i] = p;
      if (p > 0) h -= p * std::log(p);
    }
  u.perplexity = std::exp(h);
  return u;
}

template <class T>
std::vector<Utilization> code_utilization(const QuantizerStack<T>& stack) {
  std::vector<Utilization> out;
  for (std::size_t k = 0; k < stack.levels(); ++k) out.push_back(utilization_from_counts(stack.level(k).usage_counts));
  return out;
}

// k-means++ seeding followed by Lloyd iterations on data[N, D]. Empty
// clusters keep their previous centroid.
template <class T>
Tensor<T> kmeans(const Tensor<T>& data, std::size_t k, std::size_t iters, Rng& rng) {
  const std::size_t N = data.dim(0), D = data.dim(1);
  if (N == 0 || k == 0) throw ConfigError("kmeans: need data and k > 0");
  Tensor<T> c(Shape{k, D});
  std::vector<double> d2(N, std::numeric_limits<double>::infinity());
  auto row = [&](std::size_t i) { return data.data().data() + i * D; };
  auto dist = [D](const T* a, const T* b) {
    double s = 0;
    for (std::size_t j = 0; j < D; ++j) s += (double(a[j]) - double(b[j])) * (double(a[j]) - double(b[j]));
    return s;
  };
  std::size_t first = std::uniform_int_distribution<std::size_t>(0, N - 1)(rng);
  std::copy_n(row(first), D, c.data().data());
  for (std::size_t m = 1; m < k; ++m) {
    double total = 0;
    for (std::size_t i = 0; i < N; ++i) {
      d2[i] = std::min(d2[i], dist(row(i), c.data().data() + (m - 1) * D));
      total += d2[i];
    }
    std::size_t chosen = 0;
    if (total > 0) {
      double u = std::uniform_real_distribution<double>(0, total)(rng);
      for (chosen = 0; chosen + 1 < N; ++chosen) {
        u -= d2[chosen];
        if (u <= 0) break;
      }
    } else {
      chosen = std::uniform_int_distribution<std::size_t>(0, N - 1)(rng);
    }
    std::copy_n(row(chosen), D, c.data().data() + m * D);
  }
  std::vector<double> acc(k * D);
  std::vector<std::size_t> cnt(k);
  for (std::size_t it = 0; it < iters; ++it) {
    const auto nr = vq_nearest(c, data);
    std::fill(acc.begin(), acc.end(), 0.0);
    std::fill(cnt.begin(), cnt.end(), 0);
    for (std::size_t i = 0; i < N; ++i) {
      const auto a = static_cast<std::size_t>(nr.indices[i]);
      ++cnt[a];
      for (std::size_t j = 0; j < D; ++j) acc[a * D + j] += double(row(i)[j]);
    }
    for (std::size_t m = 0; m < k; ++m)
      if (cnt[m])
        for (std::size_t j = 0; j < D; ++j) c[m * D + j] = T(acc[m * D + j] / double(cnt[m]));
  }
  return c;
}

// Initialises every level by k-means on the latents it will see: the
// semantic level and the first acoustic level on z (or the semantic
// residual), deeper levels on the residual after the freshly fitted levels.
template <class T>
void kmeans_init(QuantizerStack<T>& stack, const Tensor<T>& z, Rng& rng, std::size_t iters = 20) {
  detail::check_stack_dim(stack, z.dim(1));
  stack.semantic.entries.mutable_value() = kmeans(z, stack.codebook_size(), iters, rng);
  Tensor<T> res = z;
  if (stack.acoustic_on_residual) {
    const auto q = vq_nearest(stack.semantic, z).codewords;
    for (std::size_t i = 0; i < res.size(); ++i) res[i] -= q[i];
  }
  for (auto& cb : stack.acoustic) {
    cb.entries.mutable_value() = kmeans(res, stack.codebook_size(), iters, rng);
    const auto q = vq_nearest(cb, res).codewords;
    for (std::size_t i = 0; i < res.size(); ++i) res[i] -= q[i];
  }
}

}  // namespace s3tts
