#pragma once

#include <functional>
#include <string>
#include <vector>

#include "s3tts/numerics.hpp"

namespace s3tts::lm {

template <class T>
struct Dense {
  Var<T> w, b;  // w[in, out]

  Dense() = default;
  Dense(std::size_t in, std::size_t out, Rng& rng, double gain = 1.0)
      : w(make_param(randn<T>(Shape{in, out}, gain / std::sqrt(double(in)), rng))), b(make_param(Tensor<T>(Shape{out}))) {}

  Var<T> operator()(const Var<T>& x) const { return ops::linear(x, w, b); }

  void collect(ParamList<T>& out, const std::string& prefix) const {
    out.push_back({prefix + ".w", w, true});
    out.push_back({prefix + ".b", b, false});
  }
};

template <class T>
struct LayerNorm {
  Var<T> gamma, beta;

  LayerNorm() = default;
  explicit LayerNorm(std::size_t d) : gamma(make_param(Tensor<T>(Shape{d}, T(1)))), beta(make_param(Tensor<T>(Shape{d}))) {}

  Var<T> operator()(const Var<T>& x) const { return ops::layer_norm(x, gamma, beta); }

  void collect(ParamList<T>& out, const std::string& prefix) const {
    out.push_back({prefix + ".gamma", gamma, false});
    out.push_back({prefix + ".beta", beta, false});
  }
};

// Rotated keys and values of every position seen so far, per layer.
template <class T>
struct KvCache {
  std::vector<Var<T>> k, v;  // [B, m, d] per layer
  std::size_t length = 0;
};

// Key-drop flags for one layer over `total_keys` positions of a batch.
// An empty result drops nothing.
using LayerMaskFn = std::function<ops::KeyMask(std::size_t layer, std::size_t batch, std::size_t total_keys)>;

template <class T>
struct Block {
  LayerNorm<T> ln1, ln2;
  Dense<T> wq, wk, wv, wo, ff1, ff2;

  Block() = default;
  Block(std::size_t d, std::size_t ffn, std::size_t layers, Rng& rng)
      : ln1(d),
        ln2(d),
        wq(d, d, rng),
        wk(d, d, rng),
        wv(d, d, rng),
        wo(d, d, rng, 1.0 / std::sqrt(2.0 * double(layers))),
        ff1(d, ffn, rng),
        ff2(ffn, d, rng, 1.0 / std::sqrt(2.0 * double(layers))) {}

  void collect(ParamList<T>& out, const std::string& prefix) const {
    ln1.collect(out, prefix + ".ln1");
    wq.collect(out, prefix + ".wq");
    wk.collect(out, prefix + ".wk");
    wv.collect(out, prefix + ".wv");
    wo.collect(out, prefix + ".wo");
    ln2.collect(out, prefix + ".ln2");
    ff1.collect(out, prefix + ".ff1");
    ff2.collect(out, prefix + ".ff2");
  }
};

// Pre-LN decoder-only transformer with rotary positions and strict causal
// attention. Returns the final-normed hidden states.
template <class T>
class Transformer {
 public:
  Transformer() = default;
  Transformer(std::size_t dim, std::size_t layers, std::size_t heads, Rng& rng) : dim_(dim), heads_(heads), ln_f_(dim) {
    if (heads == 0 || dim % heads != 0 || (dim / heads) % 2 != 0)
      throw ConfigError("transformer: dim must split into heads of even size");
    for (std::size_t l = 0; l < layers; ++l) blocks_.emplace_back(dim, 4 * dim, layers, rng);
  }

  std::size_t dim() const { return dim_; }
  std::size_t layers() const { return blocks_.size(); }
  std::size_t heads() const { return heads_; }

  // x[B, n, d] occupies positions cache.length .. cache.length + n - 1.
  // With a cache the new keys are appended; without one the call is a
  // full-sequence forward starting at position 0.
  Var<T> operator()(const Var<T>& x, KvCache<T>* cache = nullptr, const LayerMaskFn* masks = nullptr) const {
    if (x.shape().size() != 3 || x.shape()[2] != dim_) throw ShapeError("transformer: expected [B, n, " + std::to_string(dim_) + "]");
    const std::size_t B = x.shape()[0];
    const std::size_t offset = cache ? cache->length : 0;
    if (cache && cache->k.empty()) {
      cache->k.resize(blocks_.size());
      cache->v.resize(blocks_.size());
    }
    Var<T> h = x;
    for (std::size_t l = 0; l < blocks_.size(); ++l) {
      const Block<T>& b = blocks_[l];
      const Var<T> a = b.ln1(h);
      const Var<T> q = ops::rope(b.wq(a), heads_, offset);
      Var<T> k = ops::rope(b.wk(a), heads_, offset);
      Var<T> v = b.wv(a);
      if (cache) {
        if (cache->length > 0) {
          k = ops::concat<T>({cache->k[l], k}, 1);
          v = ops::concat<T>({cache->v[l], v}, 1);
        }
        cache->k[l] = k;
        cache->v[l] = v;
      }
      const ops::KeyMask mask = masks && *masks ? (*masks)(l, B, k.shape()[1]) : ops::KeyMask{};
      h = ops::add(h, b.wo(ops::causal_attention(q, k, v, heads_, offset, mask)));
      h = ops::add(h, b.ff2(ops::gelu(b.ff1(b.ln2(h)))));
    }
    if (cache) cache->length += x.shape()[1];
    return ln_f_(h);
  }

  void collect(ParamList<T>& out, const std::string& prefix) const {
    for (std::size_t l = 0; l < blocks_.size(); ++l) blocks_[l].collect(out, prefix + ".layer" + std::to_string(l));
    ln_f_.collect(out, prefix + ".ln_f");
  }

 private:
  std::size_t dim_ = 0, heads_ = 1;
  std::vector<Block<T>> blocks_;
  LayerNorm<T> ln_f_;
};

}  // namespace s3tts::lm
