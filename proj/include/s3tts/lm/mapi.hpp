#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "s3tts/lm/dual_lm.hpp"

namespace s3tts {

enum class MaskSite {
  Attention,  // drop audio-prefix keys, re-sampled per layer
  Embedding,  // zero audio-prefix input embeddings, once per position
};

// P masked copies of the semantic input. Stream 0 is never masked.
struct StreamMaskPlan {
  std::size_t streams = 4;
  double p_mask = 0.1;
  std::vector<std::uint64_t> seeds;  // one per stream; seeds[0] unused
  MaskSite site = MaskSite::Attention;

  static StreamMaskPlan make(std::size_t streams, double p_mask, std::uint64_t seed, MaskSite site = MaskSite::Attention) {
    StreamMaskPlan p;
    p.streams = streams;
    p.p_mask = p_mask;
    p.site = site;
    for (std::size_t i = 0; i < streams; ++i) p.seeds.push_back(seed * 0x9e3779b97f4a7c15ull + i);
    p.validate();
    return p;
  }

  void validate() const {
    if (streams == 0) throw ConfigError("mapi: stream count must be at least 1");
    if (seeds.size() != streams) throw ConfigError("mapi: one seed per stream required");
    if (!(p_mask >= 0.0 && p_mask <= 1.0)) throw ConfigError("mapi: mask probability must lie in [0, 1]");
  }

  // Whether `stream` drops audio position `pos` in `layer`.
  bool dropped(std::size_t stream, std::size_t layer, std::size_t pos) const {
    if (stream == 0 || p_mask == 0.0) return false;
    std::uint64_t z = seeds[stream] ^ (0x632be59bd9b4e019ull * (layer + 1)) ^ (0x85ebca77c2b2ae63ull * (pos + 1));
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    z ^= z >> 31;
    return double(z >> 11) * 0x1.0p-53 < p_mask;
  }
};

// Stream batch ready for the semantic transformer. Keys at positions
// >= audio_start belong to the audio prefix.
template <class T>
struct StreamBatch {
  Var<T> inputs;  // [P, n, d]
  lm::LayerMaskFn masks;
};

namespace detail {

template <class T>
Var<T> replicate_streams(const Var<T>& x, std::size_t P) {
  if (P == 1) return x;
  return ops::concat<T>(std::vector<Var<T>>(P, x), 0);
}

// Zeroes masked audio rows of x[P, n, d] whose first row is at `offset`.
template <class T>
Var<T> mask_embeddings(const Var<T>& x, const StreamMaskPlan& plan, std::size_t audio_start, std::size_t offset) {
  const std::size_t P = x.dim(0), n = x.dim(1), d = x.dim(2);
  Tensor<T> keep(x.shape(), T(1));
  bool any = false;
  for (std::size_t s = 0; s < P; ++s)
    for (std::size_t i = 0; i < n; ++i)
      if (offset + i >= audio_start && plan.dropped(s, 0, offset + i)) {
        any = true;
        for (std::size_t e = 0; e < d; ++e) keep[(s * n + i) * d + e] = T(0);
      }
  return any ? ops::mul(x, constant(std::move(keep))) : x;
}

}  // namespace detail

// x[1, n, d] (or [n, d]) -> P copies with the plan's masks attached.
template <class T>
StreamBatch<T> make_streams(const Var<T>& x, const StreamMaskPlan& plan, std::size_t audio_start, std::size_t offset = 0) {
  plan.validate();
  const Var<T> one = x.shape().size() == 2 ? ops::reshape(x, Shape{1, x.dim(0), x.dim(1)}) : x;
  if (one.dim(0) != 1) throw ShapeError("make_streams: expected a single sequence");
  StreamBatch<T> b;
  b.inputs = detail::replicate_streams(one, plan.streams);
  if (plan.site == MaskSite::Embedding) {
    b.inputs = detail::mask_embeddings(b.inputs, plan, audio_start, offset);
  } else if (plan.streams > 1 && plan.p_mask > 0) {
    b.masks = [plan, audio_start](std::size_t layer, std::size_t batch, std::size_t m) {
      ops::KeyMask mask(batch * m, 0);
      for (std::size_t s = 0; s < batch; ++s)
        for (std::size_t j = audio_start; j < m; ++j) mask[s * m + j] = plan.dropped(s, layer, j) ? 1 : 0;
      return mask;
    };
  }
  return b;
}

// y[r] = sum_i w[r, i] * x[r, i, :] for w[N, P], x[N, P, d].
template <class T>
Var<T> weighted_streams(const Var<T>& w, const Var<T>& x) {
  if (w.shape().size() != 2 || x.shape().size() != 3 || w.dim(0) != x.dim(0) || w.dim(1) != x.dim(1))
    throw ShapeError("weighted_streams: expected w[N, P] and x[N, P, d]");
  const std::size_t N = x.dim(0), P = x.dim(1), d = x.dim(2);
  Tensor<T> out(Shape{N, d});
  for (std::size_t r = 0; r < N; ++r)
    for (std::size_t e = 0; e < d; ++e) {
      T acc = w.value()[r * P] * x.value()[(r * P) * d + e];
      for (std::size_t i = 1; i < P; ++i) acc += w.value()[r * P + i] * x.value()[(r * P + i) * d + e];
      out[r * d + e] = acc;
    }
  return record<T>("weighted_streams", std::move(out), {w, x}, [N, P, d](Node<T>& n) {
    const auto& wv = ops::detail::in_value(n, 0);
    const auto& xv = ops::detail::in_value(n, 1);
    auto gw = ops::detail::in_grad(n, 0);
    auto gx = ops::detail::in_grad(n, 1);
    for (std::size_t r = 0; r < N; ++r)
      for (std::size_t i = 0; i < P; ++i)
        for (std::size_t e = 0; e < d; ++e) {
          const T g = n.grad[r * d + e];
          if (!gw.empty()) gw[r * P + i] += g * xv[(r * P + i) * d + e];
          if (!gx.empty()) gx[(r * P + i) * d + e] += g * wv[r * P + i];
        }
  });
}

template <class T>
struct Aggregated {
  Var<T> y;        // [N, d]
  Var<T> weights;  // [N, P]
};

// Softmax over stream logits[N, P], then the weighted sum of outputs[N, P, d].
template <class T>
Aggregated<T> aggregate(const Var<T>& logits, const Var<T>& outputs) {
  Aggregated<T> a;
  a.weights = ops::softmax(logits);
  a.y = weighted_streams(a.weights, outputs);
  return a;
}

// w = softmax(Linear(dP -> d) -> GELU -> Linear(d -> P)); y = sum_i w_i out_i.
template <class T>
class AggregationHead {
 public:
  AggregationHead() = default;
  AggregationHead(std::size_t dim, std::size_t streams, Rng& rng)
      : dim_(dim), streams_(streams), l1_(dim * streams, dim, rng), l2_(dim, streams, rng, 0.1) {
    if (streams == 0) throw ConfigError("aggregation head: stream count must be at least 1");
  }

  std::size_t streams() const { return streams_; }

  // outputs[N, P, d] -> aggregated rows and their weights.
  Aggregated<T> operator()(const Var<T>& outputs) const {
    if (outputs.shape().size() != 3 || outputs.dim(1) != streams_ || outputs.dim(2) != dim_)
      throw ShapeError("aggregation head: expected [N, " + std::to_string(streams_) + ", " + std::to_string(dim_) + "]");
    const std::size_t N = outputs.dim(0);
    return aggregate(logits(ops::reshape(outputs, Shape{N, streams_ * dim_})), outputs);
  }

  Var<T> logits(const Var<T>& flat) const { return l2_(ops::gelu(l1_(flat))); }

  // Same head with streams relabelled: new stream i plays old stream perm[i].
  AggregationHead permuted(const std::vector<std::size_t>& perm) const {
    if (perm.size() != streams_) throw ShapeError("aggregation head: permutation size mismatch");
    AggregationHead h = *this;
    Tensor<T> w1(l1_.w.shape()), w2(l2_.w.shape()), b2(l2_.b.shape());
    for (std::size_t i = 0; i < streams_; ++i) {
      for (std::size_t r = 0; r < dim_; ++r)
        for (std::size_t c = 0; c < dim_; ++c) w1((i * dim_ + r), c) = l1_.w.value()((perm[i] * dim_ + r), c);
      for (std::size_t r = 0; r < dim_; ++r) w2(r, i) = l2_.w.value()(r, perm[i]);
      b2[i] = l2_.b.value()[perm[i]];
    }
    h.l1_ = lm::Dense<T>();
    h.l1_.w = make_param(w1);
    h.l1_.b = make_param(l1_.b.value());
    h.l2_ = lm::Dense<T>();
    h.l2_.w = make_param(w2);
    h.l2_.b = make_param(b2);
    return h;
  }

  void collect(ParamList<T>& out, const std::string& prefix) const {
    l1_.collect(out, prefix + ".l1");
    l2_.collect(out, prefix + ".l2");
  }

  ParamList<T> params() const {
    ParamList<T> p;
    collect(p, "mapi_head");
    return p;
  }

 private:
  std::size_t dim_ = 0, streams_ = 1;
  lm::Dense<T> l1_, l2_;
};

// Semantic stepping over P masked streams evaluated as one batch; each step
// aggregates the last-position predictions.
template <class T>
class MapiStepper final : public SemanticStepper<T> {
 public:
  MapiStepper(const DualLm<T>& m, const AggregationHead<T>& head, const StreamMaskPlan& plan, std::size_t audio_start)
      : m_(m), head_(head), plan_(plan), audio_start_(audio_start) {
    plan.validate();
    if (head.streams() != plan.streams) throw ConfigError("mapi: head and plan disagree on the stream count");
  }

  Var<T> start(const Var<T>& inputs) override { return run(inputs); }
  Var<T> advance(const Var<T>& frame) override { return run(ops::reshape(frame, Shape{1, 1, frame.size()})); }
  std::size_t length() const override { return cache_.length; }
  const std::vector<double>* last_weights() const override { return &weights_; }

 private:
  Var<T> run(const Var<T>& x) {
    auto b = make_streams(x, plan_, audio_start_, cache_.length);
    const Var<T> h = m_.semantic_forward(b.inputs, &cache_, b.masks ? &b.masks : nullptr);
    const std::size_t P = h.dim(0), n = h.dim(1), d = h.dim(2);
    const Var<T> last = ops::reshape(ops::narrow(h, 1, n - 1, 1), Shape{1, P, d});
    auto a = head_(last);
    weights_.assign(a.weights.value().data().begin(), a.weights.value().data().end());
    return ops::reshape(a.y, Shape{d});
  }

  const DualLm<T>& m_;
  const AggregationHead<T>& head_;
  StreamMaskPlan plan_;
  std::size_t audio_start_;
  lm::KvCache<T> cache_;
  std::vector<double> weights_;
};

// Parallel-stream decode. EOS is read from the acoustic transformer run on
// the aggregated embedding.
template <class T>
GenerationResult mapi_generate(const DualLm<T>& model, const AggregationHead<T>& head, const StreamMaskPlan& plan,
                               const TextTokens& prompt_text, const TextTokens& text, const CodeGrid& prompt_codes,
                               const SamplingConfig& sampling) {
  MapiStepper<T> s(model, head, plan, prompt_text.size() + text.size() + 1);
  return generate_with(model, s, prompt_text, text, prompt_codes, sampling);
}

// Aggregated next-embedding predictions for every speech row of one
// utterance under teacher forcing; used to fit the head on a frozen model.
template <class T>
Aggregated<T> mapi_teacher_forced(const DualLm<T>& model, const AggregationHead<T>& head, const StreamMaskPlan& plan,
                                  const LmExample& ex, Var<T>* target = nullptr) {
  const std::size_t L = ex.codes.L, d = model.config().sem_dim;
  const Var<T> S = model.frame_embeddings(ex.codes);
  const std::size_t first = ex.prompt_text.size() + ex.text.size();
  auto b = make_streams(model.semantic_inputs(ex.prompt_text, ex.text, S), plan, first + 1);
  const Var<T> h = model.semantic_forward(b.inputs, nullptr, b.masks ? &b.masks : nullptr);  // [P, n, d]
  const std::size_t P = h.dim(0);
  // [P, L, d] -> [L, P, d]
  const Var<T> rows = ops::narrow(h, 1, first, L);
  std::vector<Var<T>> per;
  for (std::size_t t = 0; t < L; ++t) per.push_back(ops::reshape(ops::narrow(rows, 1, t, 1), Shape{1, P, d}));
  if (target) *target = constant(S.value());
  return head(L == 1 ? per[0] : ops::concat<T>(per, 0));
}

}  // namespace s3tts
