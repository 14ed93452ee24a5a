#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iostream>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "s3tts/lm/transformer.hpp"
#include "s3tts/quant/codegrid.hpp"

namespace s3tts {

using TextTokens = std::vector<int>;

struct LmConfig {
  std::size_t text_vocab = 256;
  std::size_t n_codebooks = 4;
  std::size_t codebook_size = 64;  // codebook 0 gets one extra logit for EOS
  std::size_t sem_layers = 2, sem_dim = 64, sem_heads = 4;
  std::size_t ac_layers = 2, ac_dim = 64, ac_heads = 4;
  std::size_t max_seq = 512;

  bool operator==(const LmConfig&) const = default;

  std::size_t eos() const { return codebook_size; }

  // Output classes of codebook k.
  std::size_t classes(std::size_t k) const { return k == 0 ? codebook_size + 1 : codebook_size; }

  void validate() const {
    if (text_vocab == 0 || text_vocab > 50260) throw ConfigError("lm: text vocabulary must be in [1, 50260]");
    if (n_codebooks == 0 || codebook_size < 2) throw ConfigError("lm: need at least one codebook of two codes");
    if (sem_layers == 0 || ac_layers == 0) throw ConfigError("lm: transformers need at least one layer");
    for (auto [d, h] : {std::pair{sem_dim, sem_heads}, std::pair{ac_dim, ac_heads}})
      if (h == 0 || d % h != 0 || (d / h) % 2 != 0) throw ConfigError("lm: dims must split into heads of even size");
    if (max_seq < 2) throw ConfigError("lm: max sequence length too small");
  }

  static LmConfig tiny() { return {}; }

  static LmConfig paper() { return {50260, 8, 4096, 12, 1536, 16, 8, 1024, 16, 4096}; }
};

// Text tokenizer seam. The bundled fallback maps UTF-8 bytes to ids.
class Tokenizer {
 public:
  virtual ~Tokenizer() = default;
  virtual TextTokens encode(const std::string& text) const = 0;
  virtual std::size_t vocab_size() const = 0;
};

class ByteTokenizer final : public Tokenizer {
 public:
  TextTokens encode(const std::string& text) const override {
    TextTokens ids;
    ids.reserve(text.size());
    for (unsigned char c : text) ids.push_back(c);
    return ids;
  }
  std::size_t vocab_size() const override { return 256; }
};

// Per-frame sum of the K selected rows, one table per codebook.
template <class T>
Var<T> sum_code_embeddings(const CodeGrid& codes, const std::vector<Var<T>>& tables) {
  codes.validate();
  if (tables.size() != codes.K) throw ShapeError("sum_code_embeddings: one table per codebook required");
  Var<T> s;
  for (std::size_t k = 0; k < codes.K; ++k) {
    if (tables[k].dim(0) < codes.codebook_size) throw ShapeError("sum_code_embeddings: table smaller than codebook");
    Var<T> e = ops::embedding(tables[k], codes.row(k));
    s = k == 0 ? e : ops::add(s, e);
  }
  return s;
}

// One training utterance. Prompt text precedes the target text; all frames
// of `codes` are prediction targets and an EOS closes the sequence.
struct LmExample {
  TextTokens prompt_text;
  TextTokens text;
  CodeGrid codes;
};

// Teacher-forced outputs of a batch, pooled across utterances.
template <class T>
struct LmForward {
  Var<T> pred;                          // [N_speech, d] next-embedding predictions
  Var<T> target;                        // [N_speech, d] ground-truth S (constant)
  std::vector<Var<T>> logits;           // per codebook [N_k, classes(k)]
  std::vector<std::vector<int>> labels;  // per codebook, N_0 = frames + one EOS per utterance
  std::size_t frames = 0;
};

template <class T>
struct LmLosses {
  Var<T> total, ctx, acoustic;
};

// Mean over positions and dimensions of the squared error. Text positions
// never enter `pred`; an empty set contributes zero.
template <class T>
Var<T> ctx_loss(const Var<T>& pred, const Var<T>& target) {
  if (pred.shape() != target.shape()) throw ShapeError("ctx_loss: prediction and target shapes differ");
  if (pred.size() == 0) {
    std::clog << "warning: ctx_loss has no speech positions\n";
    return Var<T>::scalar(T(0));
  }
  return ops::mse(pred, target);
}

// Mean cross-entropy over every predicted code of every codebook.
template <class T>
Var<T> acoustic_loss(const std::vector<Var<T>>& logits, const std::vector<std::vector<int>>& labels) {
  if (logits.size() != labels.size() || logits.empty()) throw ShapeError("acoustic_loss: logits/labels mismatch");
  Var<T> sum = Var<T>::scalar(T(0));
  std::size_t n = 0;
  for (std::size_t k = 0; k < logits.size(); ++k) {
    if (labels[k].empty()) continue;
    sum = ops::add(sum, ops::sum(ops::pick(ops::log_softmax(logits[k]), labels[k])));
    n += labels[k].size();
  }
  if (n == 0) return Var<T>::scalar(T(0));
  return ops::scale(sum, T(-1) / T(n));
}

template <class T>
LmLosses<T> lm_losses(const LmForward<T>& f) {
  LmLosses<T> l;
  l.ctx = ctx_loss(f.pred, f.target);
  l.acoustic = acoustic_loss(f.logits, f.labels);
  l.total = ops::add(l.ctx, l.acoustic);
  return l;
}

// The same objective accumulated frame by frame: each frame contributes its
// squared prediction error and the negative log of its factorized joint code
// probability (product of per-codebook softmax probabilities), under the
// reductions of ctx_loss and acoustic_loss. Value only.
template <class T>
double frame_factorized_total(const LmForward<T>& f) {
  const std::size_t K = f.logits.size();
  const std::size_t N = f.labels[0].size();
  const std::size_t d = f.pred.size() ? f.pred.dim(1) : 1;
  std::size_t tokens = 0;
  for (const auto& l : f.labels) tokens += l.size();
  auto prob = [&](std::size_t k, std::size_t r) {
    const auto& v = f.logits[k].value();
    const std::size_t C = v.dim(1);
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < C; ++c) mx = std::max(mx, double(v(r, c)));
    double z = 0;
    for (std::size_t c = 0; c < C; ++c) z += std::exp(double(v(r, c)) - mx);
    return std::exp(double(v(r, static_cast<std::size_t>(f.labels[k][r]))) - mx) / z;
  };
  double total = 0;
  std::size_t frame_row = 0;  // row among frames that carry every codebook
  for (std::size_t r = 0; r < N; ++r) {
    const bool eos = f.labels[0][r] == static_cast<int>(f.logits[0].dim(1) - 1);
    double joint = prob(0, r);
    if (!eos) {
      for (std::size_t k = 1; k < K; ++k) joint *= prob(k, frame_row);
      double se = 0;
      for (std::size_t j = 0; j < d; ++j) {
        const double e = double(f.pred.value()(frame_row, j)) - double(f.target.value()(frame_row, j));
        se += e * e;
      }
      total += se / double(f.pred.dim(0) * d);
      ++frame_row;
    }
    total += -std::log(joint) / double(tokens);
  }
  return total;
}

// Semantic transformer over text and summed code embeddings plus the
// acoustic transformer over each frame's coarse-to-fine code sequence.
template <class T>
class DualLm {
 public:
  DualLm() = default;
  DualLm(const LmConfig& cfg, Rng& rng) : cfg_(cfg) {
    cfg.validate();
    const std::size_t ds = cfg.sem_dim, da = cfg.ac_dim;
    text_emb_ = make_param(randn<T>(Shape{cfg.text_vocab, ds}, 1.0, rng));
    sep_ = make_param(randn<T>(Shape{1, ds}, 1.0, rng));
    for (std::size_t k = 0; k < cfg.n_codebooks; ++k)
      code_emb_.push_back(make_param(randn<T>(Shape{cfg.codebook_size, ds}, 1.0 / std::sqrt(double(cfg.n_codebooks)), rng)));
    semantic_ = lm::Transformer<T>(ds, cfg.sem_layers, cfg.sem_heads, rng);
    out_proj_ = lm::Dense<T>(ds, ds, rng);
    cond_proj_ = lm::Dense<T>(ds, da, rng);
    for (std::size_t k = 0; k + 1 < cfg.n_codebooks; ++k)
      ac_emb_.push_back(make_param(randn<T>(Shape{cfg.codebook_size, da}, 1.0, rng)));
    acoustic_ = lm::Transformer<T>(da, cfg.ac_layers, cfg.ac_heads, rng);
    for (std::size_t k = 0; k < cfg.n_codebooks; ++k) heads_.emplace_back(da, cfg.classes(k), rng);
  }

  const LmConfig& config() const { return cfg_; }
  const std::vector<Var<T>>& code_tables() const { return code_emb_; }
  const lm::Transformer<T>& semantic() const { return semantic_; }

  Var<T> frame_embeddings(const CodeGrid& codes) const {
    if (codes.K != cfg_.n_codebooks || codes.codebook_size != cfg_.codebook_size)
      throw ConfigError("lm: code grid does not match the model's codebooks");
    return sum_code_embeddings(codes, code_emb_);
  }

  // [1, n, d] input: prompt text, target text, separator, frame sums S.
  Var<T> semantic_inputs(const TextTokens& prompt_text, const TextTokens& text, const Var<T>& frames) const {
    TextTokens ids = prompt_text;
    ids.insert(ids.end(), text.begin(), text.end());
    for (int id : ids)
      if (id < 0 || static_cast<std::size_t>(id) >= cfg_.text_vocab)
        throw InputError("lm: text token " + std::to_string(id) + " outside the vocabulary");
    std::vector<Var<T>> parts;
    if (!ids.empty()) parts.push_back(ops::embedding(text_emb_, ids));
    parts.push_back(sep_);
    if (frames.size() > 0) parts.push_back(frames);
    Var<T> x = ops::concat<T>(parts, 0);
    if (x.dim(0) > cfg_.max_seq)
      throw SequenceError("lm: sequence of " + std::to_string(x.dim(0)) + " positions exceeds maximum " +
                          std::to_string(cfg_.max_seq));
    return ops::reshape(x, Shape{1, x.dim(0), cfg_.sem_dim});
  }

  // Next-embedding predictions at every input position, [B, n, d].
  Var<T> semantic_forward(const Var<T>& inputs, lm::KvCache<T>* cache = nullptr,
                          const lm::LayerMaskFn* masks = nullptr) const {
    return out_proj_(semantic_(inputs, cache, masks));
  }

  // Within-frame input sequence [N, K, d_a]: the projected conditioning row
  // followed by the embeddings of levels 0 .. K-2 from `prefix_codes`.
  Var<T> acoustic_inputs(const Var<T>& cond, const std::vector<std::vector<int>>& prefix_codes) const {
    const std::size_t N = cond.dim(0), K = cfg_.n_codebooks, da = cfg_.ac_dim;
    std::vector<Var<T>> seq{ops::reshape(cond_proj_(cond), Shape{N, 1, da})};
    for (std::size_t k = 0; k + 1 < K; ++k)
      seq.push_back(ops::reshape(ops::embedding(ac_emb_[k], prefix_codes.at(k)), Shape{N, 1, da}));
    return K == 1 ? seq[0] : ops::concat<T>(seq, 1);
  }

  // Position k of seq[N, K, d_a] yields the logits of codebook k.
  std::vector<Var<T>> acoustic_from_inputs(const Var<T>& seq) const {
    const std::size_t N = seq.dim(0), da = cfg_.ac_dim;
    const Var<T> h = acoustic_(seq);
    std::vector<Var<T>> out;
    for (std::size_t k = 0; k < seq.dim(1); ++k)
      out.push_back(heads_[k](ops::reshape(ops::narrow(h, 1, k, 1), Shape{N, da})));
    return out;
  }

  // Level logits for frames conditioned on cond[N, d_s], teacher-forced on
  // prefix_codes (levels 0 .. K-2 used).
  std::vector<Var<T>> acoustic_logits(const Var<T>& cond, const std::vector<std::vector<int>>& prefix_codes) const {
    return acoustic_from_inputs(acoustic_inputs(cond, prefix_codes));
  }

  // Logits over codebook k = prefix.size() for one frame.
  Var<T> acoustic_forward(const Var<T>& h, const std::vector<int>& prefix) const {
    const std::size_t k = prefix.size(), da = cfg_.ac_dim;
    if (k >= cfg_.n_codebooks) throw SequenceError("acoustic_forward: prefix covers every codebook already");
    std::vector<Var<T>> seq{ops::reshape(cond_proj_(ops::reshape(h, Shape{1, cfg_.sem_dim})), Shape{1, 1, da})};
    for (std::size_t j = 0; j < k; ++j) seq.push_back(ops::reshape(ops::embedding(ac_emb_[j], {prefix[j]}), Shape{1, 1, da}));
    const Var<T> out = acoustic_(k == 0 ? seq[0] : ops::concat<T>(seq, 1));
    return heads_[k](ops::reshape(ops::narrow(out, 1, k, 1), Shape{1, da}));
  }

  // Incremental acoustic step. The first step consumes the conditioning row,
  // later steps the previous level's code; returns the next level's logits.
  Var<T> acoustic_step(const Var<T>* cond, int prev_code, lm::KvCache<T>& cache) const {
    const std::size_t level = cache.length, da = cfg_.ac_dim;
    Var<T> x = level == 0 ? cond_proj_(ops::reshape(*cond, Shape{1, cfg_.sem_dim}))
                          : ops::embedding(ac_emb_[level - 1], {prev_code});
    const Var<T> out = acoustic_(ops::reshape(x, Shape{1, 1, da}), &cache);
    return heads_[level](ops::reshape(out, Shape{1, da}));
  }

  // Teacher-forced forward over a batch of utterances.
  LmForward<T> forward(const std::vector<LmExample>& batch) const {
    const std::size_t K = cfg_.n_codebooks;
    std::vector<Var<T>> preds, targets, conds;
    std::vector<std::vector<int>> prefix(K > 1 ? K - 1 : 0);
    LmForward<T> f;
    f.labels.assign(K, {});
    for (const auto& ex : batch) {
      const std::size_t L = ex.codes.L;
      const Var<T> S = L > 0 ? frame_embeddings(ex.codes) : Var<T>(Tensor<T>(Shape{0, cfg_.sem_dim}));
      const Var<T> x = semantic_inputs(ex.prompt_text, ex.text, S);
      const std::size_t first = ex.prompt_text.size() + ex.text.size();  // separator position
      const Var<T> h = ops::reshape(semantic_forward(x), Shape{x.dim(1), cfg_.sem_dim});
      // Rows first .. first+L-1 predict frames; row first+L conditions EOS.
      const Var<T> cond = ops::narrow(h, 0, first, L + 1);
      if (L > 0) {
        preds.push_back(ops::narrow(cond, 0, 0, L));
        targets.push_back(constant(S.value()));
      }
      conds.push_back(cond);
      for (std::size_t t = 0; t <= L; ++t) {
        for (std::size_t k = 0; k + 1 < K; ++k) prefix[k].push_back(t < L ? ex.codes.at(k, t) : 0);
        f.labels[0].push_back(t < L ? ex.codes.at(0, t) : static_cast<int>(cfg_.eos()));
      }
      for (std::size_t k = 1; k < K; ++k)
        for (std::size_t t = 0; t < L; ++t) f.labels[k].push_back(ex.codes.at(k, t));
      f.frames += L;
    }
    if (preds.empty()) {
      f.pred = Var<T>(Tensor<T>(Shape{0, cfg_.sem_dim}));
      f.target = f.pred;
    } else {
      f.pred = preds.size() == 1 ? preds[0] : ops::concat<T>(preds, 0);
      f.target = targets.size() == 1 ? targets[0] : ops::concat<T>(targets, 0);
    }
    const Var<T> cond = conds.size() == 1 ? conds[0] : ops::concat<T>(conds, 0);
    auto all = acoustic_logits(cond, prefix);
    // The EOS rows only carry a codebook-0 target; drop them above level 0.
    f.logits.push_back(all[0]);
    if (K > 1) {
      std::vector<std::size_t> keep;
      std::size_t row = 0;
      for (const auto& ex : batch) {
        for (std::size_t t = 0; t < ex.codes.L; ++t) keep.push_back(row + t);
        row += ex.codes.L + 1;
      }
      for (std::size_t k = 1; k < K; ++k) f.logits.push_back(select_rows(all[k], keep));
    }
    return f;
  }

  ParamList<T> params() const {
    ParamList<T> p;
    p.push_back({"lm.text_emb", text_emb_, true});
    p.push_back({"lm.sep", sep_, false});
    for (std::size_t k = 0; k < code_emb_.size(); ++k) p.push_back({"lm.code_emb" + std::to_string(k), code_emb_[k], true});
    semantic_.collect(p, "lm.semantic");
    out_proj_.collect(p, "lm.out_proj");
    cond_proj_.collect(p, "lm.cond_proj");
    for (std::size_t k = 0; k < ac_emb_.size(); ++k) p.push_back({"lm.ac_emb" + std::to_string(k), ac_emb_[k], true});
    acoustic_.collect(p, "lm.acoustic");
    for (std::size_t k = 0; k < heads_.size(); ++k) heads_[k].collect(p, "lm.head" + std::to_string(k));
    return p;
  }

 private:
  // Contiguous runs of kept rows, concatenated.
  static Var<T> select_rows(const Var<T>& x, const std::vector<std::size_t>& keep) {
    std::vector<Var<T>> runs;
    std::size_t i = 0;
    while (i < keep.size()) {
      std::size_t j = i + 1;
      while (j < keep.size() && keep[j] == keep[j - 1] + 1) ++j;
      runs.push_back(ops::narrow(x, 0, keep[i], j - i));
      i = j;
    }
    if (runs.empty()) return Var<T>(Tensor<T>(Shape{0, x.dim(1)}));
    return runs.size() == 1 ? runs[0] : ops::concat<T>(runs, 0);
  }

  LmConfig cfg_;
  Var<T> text_emb_, sep_;
  std::vector<Var<T>> code_emb_, ac_emb_;
  lm::Transformer<T> semantic_, acoustic_;
  lm::Dense<T> out_proj_, cond_proj_;
  std::vector<lm::Dense<T>> heads_;
};

// Teacher-forced arg-max accuracy per codebook (EOS targets included in
// codebook 0).
template <class T>
std::vector<double> codebook_accuracy(const LmForward<T>& f) {
  std::vector<double> acc;
  for (std::size_t k = 0; k < f.logits.size(); ++k) {
    const auto& v = f.logits[k].value();
    const std::size_t C = v.dim(1), N = f.labels[k].size();
    std::size_t hit = 0;
    for (std::size_t r = 0; r < N; ++r) {
      const auto* row = v.data().data() + r * C;
      if (static_cast<int>(std::max_element(row, row + C) - row) == f.labels[k][r]) ++hit;
    }
    acc.push_back(N ? double(hit) / double(N) : 1.0);
  }
  return acc;
}

// ------------------------------------------------------------------ decoding

struct SamplingConfig {
  bool greedy = false;
  double temperature = 0.8;
  std::size_t top_k = 50;
  std::uint64_t seed = 0;
  std::size_t max_frames = 256;

  void validate() const {
    if (!greedy && !(temperature > 0)) throw ConfigError("sampling: temperature must be positive unless greedy");
    if (max_frames == 0) throw ConfigError("sampling: max_frames must be positive");
  }
};

// Picks a class from one logit row.
template <class T>
int sample_logits(const Tensor<T>& logits, const SamplingConfig& cfg, Rng& rng) {
  const std::size_t C = logits.size();
  const T* z = logits.data().data();
  if (cfg.greedy) return static_cast<int>(std::max_element(z, z + C) - z);
  std::vector<std::size_t> order(C);
  for (std::size_t i = 0; i < C; ++i) order[i] = i;
  const std::size_t keep = cfg.top_k == 0 ? C : std::min(cfg.top_k, C);
  std::partial_sort(order.begin(), order.begin() + static_cast<long>(keep), order.end(),
                    [&](std::size_t a, std::size_t b) { return z[a] > z[b] || (z[a] == z[b] && a < b); });
  std::vector<double> p(keep);
  const double mx = double(z[order[0]]);
  double tot = 0;
  for (std::size_t i = 0; i < keep; ++i) tot += (p[i] = std::exp((double(z[order[i]]) - mx) / cfg.temperature));
  double u = std::uniform_real_distribution<double>(0.0, tot)(rng);
  for (std::size_t i = 0; i < keep; ++i) {
    if (u < p[i]) return static_cast<int>(order[i]);
    u -= p[i];
  }
  return static_cast<int>(order[0]);
}

struct GenerationResult {
  CodeGrid codes;          // generated continuation only
  bool truncated = false;  // stopped by max_frames or max_seq rather than EOS
  std::size_t acoustic_steps = 0;
  std::size_t acoustic_sequences = 0;
  std::vector<std::vector<double>> stream_weights;  // per decode step, parallel decoding only
};

// Source of the per-frame conditioning embedding. `start` consumes the
// prefix and `advance` the embedding of the frame just emitted; both return
// the next-frame prediction [d].
template <class T>
class SemanticStepper {
 public:
  virtual ~SemanticStepper() = default;
  virtual Var<T> start(const Var<T>& inputs) = 0;
  virtual Var<T> advance(const Var<T>& frame) = 0;
  virtual std::size_t length() const = 0;
  virtual const std::vector<double>* last_weights() const { return nullptr; }
};

template <class T>
class PlainStepper final : public SemanticStepper<T> {
 public:
  explicit PlainStepper(const DualLm<T>& m) : m_(m) {}
  Var<T> start(const Var<T>& inputs) override { return last(m_.semantic_forward(inputs, &cache_)); }
  Var<T> advance(const Var<T>& frame) override {
    return last(m_.semantic_forward(ops::reshape(frame, Shape{1, 1, frame.size()}), &cache_));
  }
  std::size_t length() const override { return cache_.length; }

 private:
  static Var<T> last(const Var<T>& h) { return ops::reshape(ops::narrow(h, 1, h.dim(1) - 1, 1), Shape{h.dim(2)}); }
  const DualLm<T>& m_;
  lm::KvCache<T> cache_;
};

// Interleaved decode: conditioning -> K codes coarse-to-fine -> re-embedded
// frame -> next conditioning, until codebook 0 emits EOS.
template <class T>
GenerationResult generate_with(const DualLm<T>& model, SemanticStepper<T>& stepper, const TextTokens& prompt_text,
                               const TextTokens& text, const CodeGrid& prompt_codes, const SamplingConfig& sampling) {
  sampling.validate();
  NoGradGuard ng;
  const auto& cfg = model.config();
  Rng rng(sampling.seed);
  const Var<T> prompt_frames =
      prompt_codes.L > 0 ? model.frame_embeddings(prompt_codes) : Var<T>(Tensor<T>(Shape{0, cfg.sem_dim}));
  Var<T> h = stepper.start(model.semantic_inputs(prompt_text, text, prompt_frames));
  GenerationResult out;
  std::vector<std::vector<int>> frames;
  auto record_weights = [&] {
    if (const auto* w = stepper.last_weights()) out.stream_weights.push_back(*w);
  };
  record_weights();
  while (true) {
    if (frames.size() >= sampling.max_frames) {
      out.truncated = true;
      break;
    }
    lm::KvCache<T> ac;
    std::vector<int> codes;
    ++out.acoustic_sequences;
    bool eos = false;
    for (std::size_t k = 0; k < cfg.n_codebooks; ++k) {
      const Var<T> logits = model.acoustic_step(&h, k == 0 ? 0 : codes.back(), ac);
      ++out.acoustic_steps;
      const int c = sample_logits(logits.value(), sampling, rng);
      if (k == 0 && c == static_cast<int>(cfg.eos())) {
        eos = true;
        break;
      }
      codes.push_back(c);
    }
    if (eos) break;
    frames.push_back(codes);
    if (frames.size() >= sampling.max_frames || stepper.length() + 1 > cfg.max_seq) {
      out.truncated = true;
      break;
    }
    CodeGrid one(cfg.n_codebooks, 1, cfg.codebook_size);
    for (std::size_t k = 0; k < cfg.n_codebooks; ++k) one.at(k, 0) = codes[k];
    h = stepper.advance(ops::reshape(model.frame_embeddings(one), Shape{cfg.sem_dim}));
    record_weights();
  }
  out.codes = CodeGrid(cfg.n_codebooks, frames.size(), cfg.codebook_size);
  for (std::size_t t = 0; t < frames.size(); ++t)
    for (std::size_t k = 0; k < cfg.n_codebooks; ++k) out.codes.at(k, t) = frames[t][k];
  return out;
}

template <class T>
GenerationResult generate(const DualLm<T>& model, const TextTokens& prompt_text, const TextTokens& text,
                          const CodeGrid& prompt_codes, const SamplingConfig& sampling) {
  PlainStepper<T> s(model);
  return generate_with(model, s, prompt_text, text, prompt_codes, sampling);
}

}  // namespace s3tts
