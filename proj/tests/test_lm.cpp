#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>

#include "s3tts/lm/lm_trainer.hpp"
#include "test_util.hpp"

using namespace s3tts;
using V = Var<double>;

namespace {

LmConfig micro() {
  LmConfig c;
  c.text_vocab = 16;
  c.n_codebooks = 3;
  c.codebook_size = 8;
  c.sem_layers = 2;
  c.sem_dim = 8;
  c.sem_heads = 2;
  c.ac_layers = 2;
  c.ac_dim = 8;
  c.ac_heads = 2;
  c.max_seq = 64;
  return c;
}

CodeGrid random_grid(std::size_t K, std::size_t L, std::size_t cb, Rng& rng) {
  CodeGrid g(K, L, cb);
  for (auto& c : g.codes) c = std::uniform_int_distribution<int>(0, static_cast<int>(cb) - 1)(rng);
  return g;
}

LmExample random_example(const LmConfig& c, std::size_t text, std::size_t frames, Rng& rng) {
  LmExample ex;
  for (std::size_t i = 0; i < text; ++i) ex.text.push_back(std::uniform_int_distribution<int>(0, int(c.text_vocab) - 1)(rng));
  ex.codes = random_grid(c.n_codebooks, frames, c.codebook_size, rng);
  return ex;
}

double max_abs_diff(const Tensor<double>& a, const Tensor<double>& b) {
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace

TEST_CASE("lm configuration", "[lm]") {
  CHECK_NOTHROW(LmConfig::tiny().validate());
  const auto p = LmConfig::paper();
  CHECK(p.sem_layers == 12);
  CHECK(p.sem_dim == 1536);
  CHECK(p.ac_layers == 8);
  CHECK(p.ac_dim == 1024);
  CHECK(p.text_vocab == 50260);
  CHECK(p.eos() == p.codebook_size);
  CHECK(p.classes(0) == p.codebook_size + 1);
  CHECK(p.classes(1) == p.codebook_size);
  auto bad = LmConfig::tiny();
  bad.sem_heads = 3;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = LmConfig::tiny();
  bad.text_vocab = 50261;
  CHECK_THROWS_AS(bad.validate(), ConfigError);

  ByteTokenizer tok;
  CHECK(tok.encode("ab") == TextTokens{97, 98});
  CHECK(tok.vocab_size() <= 50260);
}

TEST_CASE("sum_code_embeddings", "[lm]") {
  Rng rng(1);
  const V t0(test::random_tensor(Shape{8, 4}, rng));
  const V t1(test::random_tensor(Shape{8, 4}, rng));
  SECTION("one codebook is a plain lookup") {
    CodeGrid g(1, 3, 8);
    g.codes = {5, 0, 7};
    const auto s = sum_code_embeddings<double>(g, {t0});
    CHECK(s.value() == ops::embedding(t0, {5, 0, 7}).value());
  }
  SECTION("zero rows give a zero frame") {
    Tensor<double> z0 = t0.value(), z1 = t1.value();
    for (std::size_t e = 0; e < 4; ++e) z0(2, e) = z1(6, e) = 0;
    CodeGrid g(2, 1, 8);
    g.codes = {2, 6};
    const auto s = sum_code_embeddings<double>(g, {V(z0), V(z1)}).value();
    for (double v : s.data()) CHECK(v == 0.0);
  }
  SECTION("loop-and-add oracle") {
    const auto g = random_grid(2, 9, 8, rng);
    const auto s = sum_code_embeddings<double>(g, {t0, t1}).value();
    for (std::size_t t = 0; t < 9; ++t)
      for (std::size_t e = 0; e < 4; ++e) {
        double acc = 0;
        acc += t0.value()(std::size_t(g.at(0, t)), e);
        acc += t1.value()(std::size_t(g.at(1, t)), e);
        CHECK(s(t, e) == acc);
      }
  }
  SECTION("out-of-range code") {
    CodeGrid g(1, 2, 8);
    g.codes = {1, 8};
    CHECK_THROWS_AS(sum_code_embeddings<double>(g, {t0}), CorruptCodeError);
  }
}

TEST_CASE("semantic transformer", "[lm]") {
  Rng rng(2);
  const auto cfg = micro();
  DualLm<double> m(cfg, rng);
  const auto ex = random_example(cfg, 3, 5, rng);
  const V S = m.frame_embeddings(ex.codes);
  const auto h = m.semantic_forward(m.semantic_inputs({}, ex.text, S)).value();
  REQUIRE(h.shape() == Shape{1, 9, cfg.sem_dim});

  SECTION("perturbing frame t leaves earlier outputs unchanged") {
    for (std::size_t t = 0; t < 5; ++t) {
      Tensor<double> s2 = S.value();
      for (std::size_t e = 0; e < cfg.sem_dim; ++e) s2(t, e) += 0.5;
      const auto h2 = m.semantic_forward(m.semantic_inputs({}, ex.text, V(s2))).value();
      const std::size_t pos = 4 + t;  // text 3 + separator
      for (std::size_t i = 0; i < 9 * cfg.sem_dim; ++i) {
        if (i / cfg.sem_dim < pos) CHECK(h2[i] == h[i]);
      }
      bool changed = false;
      for (std::size_t e = 0; e < cfg.sem_dim; ++e) changed |= h2[pos * cfg.sem_dim + e] != h[pos * cfg.sem_dim + e];
      CHECK(changed);
    }
  }
  SECTION("single frame yields one prediction vector") {
    CodeGrid one(cfg.n_codebooks, 1, cfg.codebook_size);
    LmExample e1;
    e1.codes = one;
    const auto f = m.forward({e1});
    CHECK(f.pred.shape() == Shape{1, cfg.sem_dim});
  }
  SECTION("overflowing the maximum length") {
    auto long_ex = random_example(cfg, 10, 60, rng);
    CHECK_THROWS_AS(m.forward({long_ex}), SequenceError);
  }
  SECTION("text outside the vocabulary") {
    LmExample e2 = ex;
    e2.text.push_back(int(cfg.text_vocab));
    CHECK_THROWS_AS(m.forward({e2}), InputError);
  }
  SECTION("cached incremental forward matches the full forward") {
    lm::KvCache<double> cache;
    const V x = m.semantic_inputs({}, ex.text, S);
    const auto a = m.semantic_forward(ops::narrow(x, 1, 0, 6), &cache).value();
    const auto b = m.semantic_forward(ops::narrow(x, 1, 6, 1), &cache).value();
    const auto c = m.semantic_forward(ops::narrow(x, 1, 7, 2), &cache).value();
    for (std::size_t e = 0; e < cfg.sem_dim; ++e) {
      CHECK(std::abs(a[5 * cfg.sem_dim + e] - h[5 * cfg.sem_dim + e]) < 1e-12);
      CHECK(std::abs(b[e] - h[6 * cfg.sem_dim + e]) < 1e-12);
      CHECK(std::abs(c[cfg.sem_dim + e] - h[8 * cfg.sem_dim + e]) < 1e-12);
    }
  }
}

TEST_CASE("ctx_loss", "[lm][loss]") {
  Rng rng(3);
  const auto p = test::random_tensor(Shape{4, 6}, rng);
  CHECK(ctx_loss(V(p), V(p)).item() == 0.0);
  CHECK(ctx_loss(V(Tensor<double>(Shape{1, 1}, {0.0})), V(Tensor<double>(Shape{1, 1}, {1.0}))).item() == 1.0);
  CHECK(ctx_loss(V(Tensor<double>(Shape{0, 6})), V(Tensor<double>(Shape{0, 6}))).item() == 0.0);
  const auto q = test::random_tensor(Shape{4, 6}, rng);
  CHECK(grad_check<double>([&](const std::vector<V>& in) { return ctx_loss(in[0], V(q)); }, {p}) < 1e-5);

  SECTION("text-position predictions are excluded") {
    const auto cfg = micro();
    DualLm<double> m(cfg, rng);
    const auto ex = random_example(cfg, 4, 3, rng);
    const V S = m.frame_embeddings(ex.codes);
    auto h = m.semantic_forward(m.semantic_inputs({}, ex.text, S));
    auto H = ops::reshape(h, Shape{8, cfg.sem_dim});
    const double base = ctx_loss(ops::narrow(H, 0, 4, 3), constant(S.value())).item();
    Tensor<double> altered = H.value();
    for (std::size_t i = 0; i < 4 * cfg.sem_dim; ++i) altered[i] += 10.0;
    CHECK(ctx_loss(ops::narrow(V(altered), 0, 4, 3), constant(S.value())).item() == base);
    CHECK(std::abs(ctx_loss(m.forward({ex}).pred, constant(S.value())).item() - base) < 1e-12);
  }
}

TEST_CASE("acoustic transformer", "[lm]") {
  Rng rng(4);
  const auto cfg = micro();
  DualLm<double> m(cfg, rng);
  const V h(test::random_tensor(Shape{cfg.sem_dim}, rng));

  SECTION("a later level never changes earlier logits") {
    // Changing A^1 may only move the level-2 logits.
    std::vector<std::vector<int>> a{{1}, {2}}, b{{1}, {5}};
    const V cond = ops::reshape(h, Shape{1, cfg.sem_dim});
    auto la = m.acoustic_logits(cond, a);
    auto lb = m.acoustic_logits(cond, b);
    CHECK(la[0].value() == lb[0].value());
    CHECK(la[1].value() == lb[1].value());
    CHECK_FALSE(la[2].value() == lb[2].value());
  }
  SECTION("incremental steps match the single-frame forward") {
    lm::KvCache<double> cache;
    const auto s0 = m.acoustic_step(&h, 0, cache).value();
    const auto s1 = m.acoustic_step(&h, 4, cache).value();
    const auto s2 = m.acoustic_step(&h, 6, cache).value();
    CHECK(max_abs_diff(s0, m.acoustic_forward(h, {}).value()) < 1e-12);
    CHECK(max_abs_diff(s1, m.acoustic_forward(h, {4}).value()) < 1e-12);
    CHECK(max_abs_diff(s2, m.acoustic_forward(h, {4, 6}).value()) < 1e-12);
    CHECK(s0.size() == cfg.codebook_size + 1);
    CHECK(s1.size() == cfg.codebook_size);
  }
  SECTION("prefix covering every codebook") { CHECK_THROWS_AS(m.acoustic_forward(h, {1, 2, 3}), SequenceError); }
  SECTION("uniform logits over 4096 codes") {
    const V z(Tensor<double>(Shape{2, 4096}));
    CHECK(std::abs(acoustic_loss<double>({z}, {{17, 4095}}).item() - std::log(4096.0)) < 1e-12);
    CHECK(std::abs(std::log(4096.0) - 8.3178) < 1e-4);
  }
  SECTION("cross-entropy gradient") {
    const auto z0 = test::random_tensor(Shape{3, 5}, rng, -2, 2);
    const auto z1 = test::random_tensor(Shape{2, 4}, rng, -2, 2);
    CHECK(grad_check<double>([&](const std::vector<V>& in) { return acoustic_loss<double>({in[0], in[1]}, {{0, 4, 2}, {3, 1}}); },
                             {z0, z1}) < 1e-5);
  }
}

TEST_CASE("factorized objective", "[lm][loss]") {
  const auto cfg = micro();
  SECTION("two computation paths agree") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      Rng rng(100 + seed);
      DualLm<double> m(cfg, rng);
      std::vector<LmExample> batch{random_example(cfg, 2, 4, rng), random_example(cfg, 3, 6, rng)};
      const auto f = m.forward(batch);
      const auto l = lm_losses(f);
      CHECK(std::abs(l.total.item() - frame_factorized_total(f)) < 1e-6);
      CHECK(std::abs(l.total.item() - (l.ctx.item() + l.acoustic.item())) < 1e-12);
      CHECK(f.labels[0].size() == 12);  // frames plus one EOS per utterance
      CHECK(f.labels[1].size() == 10);
    }
  }
  SECTION("perfect semantic branch leaves only the acoustic term") {
    Rng rng(5);
    LmForward<double> f;
    f.pred = V(test::random_tensor(Shape{3, 4}, rng));
    f.target = f.pred;
    f.logits = {V(test::random_tensor(Shape{3, 5}, rng)), V(test::random_tensor(Shape{3, 4}, rng))};
    f.labels = {{0, 1, 2}, {3, 3, 0}};
    const auto l = lm_losses(f);
    CHECK(l.total.item() == l.acoustic.item());
  }
  SECTION("both branches perfect") {
    LmForward<double> f;
    f.pred = V(Tensor<double>(Shape{2, 3}, 0.5));
    f.target = f.pred;
    Tensor<double> z(Shape{2, 3}, -40.0);
    z(0, 1) = z(1, 2) = 40.0;
    f.logits = {V(z)};
    f.labels = {{1, 2}};
    CHECK(lm_losses(f).total.item() < 1e-12);
  }
}

TEST_CASE("causality Jacobians", "[lm][causality]") {
  Rng rng(6);
  const auto cfg = micro();
  DualLm<double> m(cfg, rng);
  const auto ex = random_example(cfg, 0, 4, rng);
  const V x0 = m.semantic_inputs({}, {}, m.frame_embeddings(ex.codes));
  const std::size_t n = x0.dim(1), d = cfg.sem_dim;
  double worst = 0;
  for (std::size_t t = 0; t < n; ++t)
    for (std::size_t j = 0; j < d; ++j) {
      V x(x0.value(), true);
      const V y = m.semantic_forward(x);
      backward(ops::narrow(ops::reshape(y, Shape{n * d}), 0, t * d + j, 1));
      for (std::size_t tp = t + 1; tp < n; ++tp)
        for (std::size_t e = 0; e < d; ++e) worst = std::max(worst, std::abs(x.grad()[tp * d + e]));
    }
  CHECK(worst < 1e-9);

  const V cond(test::random_tensor(Shape{2, cfg.sem_dim}, rng));
  const V seq0 = m.acoustic_inputs(cond, {{1, 2}, {3, 4}});
  const std::size_t K = cfg.n_codebooks;
  double worst_ac = 0;
  for (std::size_t k = 0; k < K; ++k)
    for (std::size_t c = 0; c < cfg.classes(k); ++c) {
      V seq(seq0.value(), true);
      const auto logits = m.acoustic_from_inputs(seq);
      backward(ops::narrow(ops::reshape(logits[k], Shape{logits[k].size()}), 0, c, 1));
      // Code k' enters at position k' + 1; levels k' >= k must not reach logits k.
      for (std::size_t pos = k + 1; pos < K; ++pos)
        for (std::size_t e = 0; e < cfg.ac_dim; ++e) worst_ac = std::max(worst_ac, std::abs(seq.grad()[pos * cfg.ac_dim + e]));
      // Frames are independent.
      for (std::size_t e = 0; e < K * cfg.ac_dim; ++e) worst_ac = std::max(worst_ac, std::abs(seq.grad()[K * cfg.ac_dim + e]));
    }
  CHECK(worst_ac < 1e-9);
}

TEST_CASE("generation", "[lm][generate]") {
  Rng rng(7);
  const auto cfg = micro();
  DualLm<double> m(cfg, rng);
  const auto ex = random_example(cfg, 3, 4, rng);
  SamplingConfig greedy;
  greedy.greedy = true;
  greedy.max_frames = 12;

  SECTION("greedy is deterministic") {
    const auto a = generate(m, {}, ex.text, ex.codes, greedy);
    const auto b = generate(m, {}, ex.text, ex.codes, greedy);
    CHECK(a.codes == b.codes);
    CHECK(a.truncated == b.truncated);
  }
  SECTION("one acoustic sequence of K steps per emitted frame") {
    const auto a = generate(m, {}, ex.text, ex.codes, greedy);
    const std::size_t eos = a.truncated ? 0 : 1;
    CHECK(a.acoustic_sequences == a.codes.L + eos);
    CHECK(a.acoustic_steps == a.codes.L * cfg.n_codebooks + eos);
  }
  SECTION("hitting max_frames sets the truncation flag") {
    SamplingConfig s = greedy;
    s.max_frames = 1;
    const auto a = generate(m, {}, ex.text, ex.codes, s);
    CHECK(a.codes.L <= 1);
    if (a.codes.L == 1) CHECK(a.truncated);
  }
  SECTION("temperature towards zero approaches arg-max") {
    SamplingConfig cold;
    cold.temperature = 1e-9;
    cold.top_k = 0;
    cold.max_frames = 12;
    CHECK(generate(m, {}, ex.text, ex.codes, cold).codes == generate(m, {}, ex.text, ex.codes, greedy).codes);
  }
  SECTION("sampling respects top-k and the seed") {
    Tensor<double> z(Shape{6}, {0.0, 5.0, 4.0, -1.0, 3.0, 0.5});
    SamplingConfig s;
    s.top_k = 2;
    s.temperature = 1.0;
    Rng r(1);
    for (int i = 0; i < 200; ++i) {
      const int c = sample_logits(z, s, r);
      CHECK((c == 1 || c == 2));
    }
    SamplingConfig a = s;
    a.seed = 9;
    a.max_frames = 6;
    CHECK(generate(m, {}, ex.text, ex.codes, a).codes == generate(m, {}, ex.text, ex.codes, a).codes);
  }
  SECTION("invalid sampling configuration") {
    SamplingConfig s;
    s.temperature = 0;
    CHECK_THROWS_AS(generate(m, {}, ex.text, ex.codes, s), ConfigError);
  }
}

TEST_CASE("tiny lm overfits", "[lm][train][slow]") {
  Rng rng(8);
  LmConfig cfg = LmConfig::tiny();
  cfg.codebook_size = 16;
  DualLm<float> m(cfg, rng);
  Rng data_rng(9);
  std::vector<LmExample> batch;
  for (int i = 0; i < 2; ++i) {
    LmExample ex;
    ex.text = ByteTokenizer().encode(i == 0 ? "abc" : "cab");
    ex.codes = random_grid(cfg.n_codebooks, 12, cfg.codebook_size, data_rng);
    batch.push_back(ex);
  }
  LmTrainer tr(m, LmTrainConfig::tiny());
  for (int s = 0; s < 250; ++s) tr.step(batch);
  const auto f = m.forward(batch);
  const auto acc = codebook_accuracy(f);
  for (double a : acc) CHECK(a >= 0.99);
  CHECK(ctx_loss(f.pred, f.target).item() < 1e-1);

  SECTION("prompt continuation reproduces codebook 0") {
    std::size_t hit = 0, total = 0;
    for (const auto& ex : batch) {
      CodeGrid prompt(cfg.n_codebooks, 3, cfg.codebook_size);
      for (std::size_t k = 0; k < cfg.n_codebooks; ++k)
        for (std::size_t t = 0; t < 3; ++t) prompt.at(k, t) = ex.codes.at(k, t);
      SamplingConfig s;
      s.greedy = true;
      s.max_frames = 20;
      const auto g = generate(m, {}, ex.text, prompt, s);
      for (std::size_t t = 3; t < ex.codes.L; ++t, ++total)
        if (t - 3 < g.codes.L && g.codes.at(0, t - 3) == ex.codes.at(0, t)) ++hit;
    }
    CHECK(double(hit) / double(total) >= 0.95);
  }
  SECTION("checkpoint round trip") {
    const auto path = (std::filesystem::temp_directory_path() / "s3tts_lm_ck.s3ck").string();
    const double before = tr.evaluate(batch).total;
    tr.save(path);
    Rng other(77);
    DualLm<float> fresh(cfg, other);
    LmTrainer t2(fresh, LmTrainConfig::tiny());
    t2.load(path);
    CHECK(std::abs(t2.evaluate(batch).total - before) < 1e-6);
    CHECK(t2.steps_done() == 250);
    std::filesystem::remove(path);
  }
}

TEST_CASE("one-sequence embedding overfit", "[lm][train][slow]") {
  Rng rng(10);
  LmConfig cfg = LmConfig::tiny();
  cfg.codebook_size = 16;
  DualLm<float> m(cfg, rng);
  Rng data_rng(11);
  LmExample ex;
  ex.text = ByteTokenizer().encode("ab");
  ex.codes = random_grid(cfg.n_codebooks, 8, cfg.codebook_size, data_rng);
  LmTrainer tr(m, LmTrainConfig::tiny());
  for (int s = 0; s < 400; ++s) tr.step({ex});
  const auto f = m.forward({ex});
  CHECK(ctx_loss(f.pred, f.target).item() < 1e-3);
}
