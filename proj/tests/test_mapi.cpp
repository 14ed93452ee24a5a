#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>

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

LmExample random_example(const LmConfig& c, std::size_t text, std::size_t frames, Rng& rng) {
  LmExample ex;
  for (std::size_t i = 0; i < text; ++i) ex.text.push_back(std::uniform_int_distribution<int>(0, int(c.text_vocab) - 1)(rng));
  ex.codes = CodeGrid(c.n_codebooks, frames, c.codebook_size);
  for (auto& v : ex.codes.codes) v = std::uniform_int_distribution<int>(0, int(c.codebook_size) - 1)(rng);
  return ex;
}

// Rows [n, d] of stream s of a [P, n, d] tensor.
std::vector<double> stream_row(const Tensor<double>& t, std::size_t s, std::size_t i) {
  const std::size_t n = t.dim(1), d = t.dim(2);
  const auto* p = t.data().data() + (s * n + i) * d;
  return {p, p + d};
}

std::vector<double> flat(const Tensor<double>& t) { return {t.data().begin(), t.data().end()}; }

SamplingConfig greedy(std::size_t max_frames = 10) {
  SamplingConfig s;
  s.greedy = true;
  s.max_frames = max_frames;
  return s;
}

}  // namespace

TEST_CASE("stream mask plan", "[mapi]") {
  CHECK_THROWS_AS(StreamMaskPlan::make(0, 0.1, 1), ConfigError);
  CHECK_THROWS_AS(StreamMaskPlan::make(2, 1.5, 1), ConfigError);
  CHECK_THROWS_AS(StreamMaskPlan::make(2, -0.1, 1), ConfigError);

  const auto plan = StreamMaskPlan::make(4, 0.3, 42);
  const auto again = StreamMaskPlan::make(4, 0.3, 42);
  std::size_t hits = 0, total = 0;
  for (std::size_t layer = 0; layer < 4; ++layer)
    for (std::size_t pos = 0; pos < 5000; ++pos) {
      CHECK_FALSE(plan.dropped(0, layer, pos));
      for (std::size_t s = 1; s < 4; ++s) {
        const bool d = plan.dropped(s, layer, pos);
        REQUIRE(d == again.dropped(s, layer, pos));
        hits += d;
        ++total;
      }
    }
  CHECK(std::abs(double(hits) / double(total) - 0.3) < 0.01);

  const auto none = StreamMaskPlan::make(3, 0.0, 5);
  const auto all = StreamMaskPlan::make(3, 1.0, 5);
  for (std::size_t pos = 0; pos < 100; ++pos) {
    CHECK_FALSE(none.dropped(2, 0, pos));
    CHECK(all.dropped(2, 1, pos));
    CHECK_FALSE(all.dropped(0, 1, pos));
  }
  // Different streams and layers draw different patterns.
  std::size_t differ = 0;
  for (std::size_t pos = 0; pos < 200; ++pos) {
    differ += plan.dropped(1, 0, pos) != plan.dropped(2, 0, pos);
    differ += plan.dropped(1, 0, pos) != plan.dropped(1, 1, pos);
  }
  CHECK(differ > 0);
}

TEST_CASE("make_streams", "[mapi]") {
  Rng rng(1);
  const V x(test::random_tensor(Shape{1, 7, 4}, rng));

  SECTION("one stream is the plain input") {
    const auto b = make_streams(x, StreamMaskPlan::make(1, 0.5, 3), 3);
    CHECK(b.inputs.value() == x.value());
    CHECK_FALSE(b.masks);
  }
  SECTION("zero mask probability replicates the input") {
    const auto b = make_streams(x, StreamMaskPlan::make(3, 0.0, 3), 3);
    REQUIRE(b.inputs.shape() == Shape{3, 7, 4});
    CHECK_FALSE(b.masks);
    for (std::size_t s = 0; s < 3; ++s)
      for (std::size_t i = 0; i < 7; ++i) CHECK(stream_row(b.inputs.value(), s, i) == stream_row(x.value(), 0, i));
  }
  SECTION("attention masks cover only audio keys and spare stream 0") {
    const auto plan = StreamMaskPlan::make(4, 0.5, 9);
    const auto b = make_streams(x, plan, 3);
    REQUIRE(b.masks);
    for (std::size_t layer = 0; layer < 3; ++layer) {
      const auto m = b.masks(layer, 4, 7);
      REQUIRE(m.size() == 28);
      for (std::size_t s = 0; s < 4; ++s)
        for (std::size_t j = 0; j < 7; ++j) {
          const bool expect = j >= 3 && plan.dropped(s, layer, j);
          CHECK(bool(m[s * 7 + j]) == expect);
        }
    }
    const auto m = b.masks(0, 4, 7);
    CHECK(std::all_of(m.begin(), m.begin() + 7, [](auto v) { return v == 0; }));
  }
  SECTION("embedding site zeroes masked audio rows") {
    const auto plan = StreamMaskPlan::make(4, 0.5, 9, MaskSite::Embedding);
    const auto b = make_streams(x, plan, 3);
    CHECK_FALSE(b.masks);
    std::size_t zeroed = 0;
    for (std::size_t s = 0; s < 4; ++s)
      for (std::size_t i = 0; i < 7; ++i) {
        const auto row = stream_row(b.inputs.value(), s, i);
        if (i >= 3 && plan.dropped(s, 0, i)) {
          CHECK(std::all_of(row.begin(), row.end(), [](double v) { return v == 0.0; }));
          ++zeroed;
        } else {
          CHECK(row == stream_row(x.value(), 0, i));
        }
      }
    CHECK(zeroed > 0);
  }
  SECTION("offset shifts the audio boundary for cached steps") {
    const auto plan = StreamMaskPlan::make(3, 1.0, 2, MaskSite::Embedding);
    const V one(test::random_tensor(Shape{1, 1, 4}, rng));
    CHECK(make_streams(one, plan, 5, 2).inputs.value() == make_streams(one, StreamMaskPlan::make(3, 0.0, 2), 5, 2).inputs.value());
    const auto late = make_streams(one, plan, 5, 6).inputs.value();
    CHECK(stream_row(late, 0, 0) == stream_row(one.value(), 0, 0));
    for (double v : stream_row(late, 1, 0)) CHECK(v == 0.0);
  }
  SECTION("batched input is rejected") {
    const V two(test::random_tensor(Shape{2, 3, 4}, rng));
    CHECK_THROWS_AS(make_streams(two, StreamMaskPlan::make(2, 0.1, 1), 1), ShapeError);
  }
}

TEST_CASE("aggregation examples", "[mapi]") {
  SECTION("equal streams aggregate to the shared vector") {
    Rng rng(2);
    const auto v = test::random_tensor(Shape{5}, rng);
    Tensor<double> x(Shape{1, 3, 5});
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t e = 0; e < 5; ++e) x[i * 5 + e] = v[e];
    const auto a = aggregate(V(Tensor<double>(Shape{1, 3}, {0.3, -2.0, 1.1})), V(x));
    for (std::size_t e = 0; e < 5; ++e) CHECK(std::abs(a.y.value()[e] - v[e]) < 1e-12);
  }
  SECTION("zero logits weight two streams equally") {
    const V x(Tensor<double>(Shape{1, 2, 2}, {1.0, 2.0, 3.0, 6.0}));
    const auto a = aggregate(V(Tensor<double>(Shape{1, 2}, {0.0, 0.0})), x);
    CHECK(a.weights.value()[0] == 0.5);
    CHECK(a.weights.value()[1] == 0.5);
    CHECK(a.y.value()[0] == 2.0);
    CHECK(a.y.value()[1] == 4.0);
  }
  SECTION("logits (ln 2, 0, 0)") {
    const V x(Tensor<double>(Shape{1, 3, 1}, {4.0, 8.0, -4.0}));
    const auto a = aggregate(V(Tensor<double>(Shape{1, 3}, {std::log(2.0), 0.0, 0.0})), x);
    CHECK(std::abs(a.weights.value()[0] - 0.5) < 1e-12);
    CHECK(std::abs(a.weights.value()[1] - 0.25) < 1e-12);
    CHECK(std::abs(a.weights.value()[2] - 0.25) < 1e-12);
    CHECK(std::abs(a.y.value()[0] - 3.0) < 1e-12);
  }
  SECTION("a single stream passes through exactly") {
    Rng rng(3);
    const V x(test::random_tensor(Shape{4, 1, 6}, rng));
    AggregationHead<double> head(6, 1, rng);
    const auto a = head(x);
    CHECK(flat(a.y.value()) == flat(x.value()));
    for (double w : a.weights.value().data()) CHECK(w == 1.0);
  }
  SECTION("shape errors") {
    Rng rng(4);
    AggregationHead<double> head(6, 2, rng);
    CHECK_THROWS_AS(head(V(Tensor<double>(Shape{1, 3, 6}))), ShapeError);
    CHECK_THROWS_AS(weighted_streams(V(Tensor<double>(Shape{2, 2})), V(Tensor<double>(Shape{2, 3, 1}))), ShapeError);
    CHECK_THROWS_AS(AggregationHead<double>(6, 0, rng), ConfigError);
  }
}

TEST_CASE("aggregation properties", "[mapi][property]") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(100 + seed);
    const std::size_t P = 1 + seed % 5, d = 3 + seed % 4, N = 1 + seed % 3;
    AggregationHead<double> head(d, P, rng);
    const V x(test::random_tensor(Shape{N, P, d}, rng, -3.0, 3.0));
    const auto a = head(x);
    for (std::size_t r = 0; r < N; ++r) {
      double sum = 0;
      for (std::size_t i = 0; i < P; ++i) {
        const double w = a.weights.value()[r * P + i];
        CHECK(w >= 0.0);
        sum += w;
      }
      CHECK(std::abs(sum - 1.0) < 1e-6);
      // Convex combination: each coordinate lies within the stream range.
      for (std::size_t e = 0; e < d; ++e) {
        double lo = 1e300, hi = -1e300;
        for (std::size_t i = 0; i < P; ++i) {
          lo = std::min(lo, x.value()[(r * P + i) * d + e]);
          hi = std::max(hi, x.value()[(r * P + i) * d + e]);
        }
        const double y = a.y.value()[r * d + e];
        CHECK(y >= lo - 1e-6);
        CHECK(y <= hi + 1e-6);
      }
    }

    // Relabelling the streams and the head together leaves y unchanged.
    std::vector<std::size_t> perm(P);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    Tensor<double> xp(x.shape());
    for (std::size_t r = 0; r < N; ++r)
      for (std::size_t i = 0; i < P; ++i)
        for (std::size_t e = 0; e < d; ++e) xp[(r * P + i) * d + e] = x.value()[(r * P + perm[i]) * d + e];
    const auto b = head.permuted(perm)(V(xp));
    for (std::size_t k = 0; k < N * d; ++k) CHECK(std::abs(b.y.value()[k] - a.y.value()[k]) < 1e-12);
    for (std::size_t r = 0; r < N; ++r)
      for (std::size_t i = 0; i < P; ++i)
        CHECK(std::abs(b.weights.value()[r * P + i] - a.weights.value()[r * P + perm[i]]) < 1e-12);
  }
}

TEST_CASE("aggregation gradients", "[mapi][grad]") {
  Rng rng(5);
  const auto w = ops::softmax(V(test::random_tensor(Shape{3, 4}, rng))).value();
  const auto x = test::random_tensor(Shape{3, 4, 5}, rng);
  CHECK(grad_check<double>([](const std::vector<V>& in) { return weighted_streams(in[0], in[1]); }, {w, x}) < 1e-5);

  AggregationHead<double> head(5, 4, rng);
  auto params = head.params();
  const V xv(x);
  const V target(test::random_tensor(Shape{3, 5}, rng));
  const auto rep = grad_check_params<double>([&] { return ctx_loss(head(xv).y, target); }, params);
  CHECK(rep.max_rel_error < 1e-5);
  CHECK(grad_check<double>([&](const std::vector<V>& in) { return head(in[0]).y; }, {x}) < 1e-5);
}

TEST_CASE("parallel decoding", "[mapi][generate]") {
  Rng rng(6);
  const auto cfg = micro();
  DualLm<double> m(cfg, rng);
  const auto ex = random_example(cfg, 3, 4, rng);

  SECTION("one stream reproduces plain decoding bit for bit") {
    AggregationHead<double> head(cfg.sem_dim, 1, rng);
    const auto plan = StreamMaskPlan::make(1, 0.3, 1);
    SamplingConfig sampled;
    sampled.seed = 4;
    sampled.max_frames = 10;
    for (const auto& s : {greedy(), sampled}) {
      const auto a = generate(m, {}, ex.text, ex.codes, s);
      const auto b = mapi_generate(m, head, plan, {}, ex.text, ex.codes, s);
      CHECK(a.codes == b.codes);
      CHECK(a.truncated == b.truncated);
      CHECK(a.acoustic_steps == b.acoustic_steps);
    }
  }
  SECTION("weights form a distribution at every step") {
    AggregationHead<double> head(cfg.sem_dim, 4, rng);
    const auto r = mapi_generate(m, head, StreamMaskPlan::make(4, 0.1, 7), {}, ex.text, ex.codes, greedy());
    REQUIRE(r.stream_weights.size() == r.acoustic_sequences);
    for (const auto& w : r.stream_weights) {
      REQUIRE(w.size() == 4);
      CHECK(std::abs(std::accumulate(w.begin(), w.end(), 0.0) - 1.0) < 1e-6);
    }
  }
  SECTION("greedy parallel decoding is stable across runs") {
    AggregationHead<double> head(cfg.sem_dim, 4, rng);
    const auto plan = StreamMaskPlan::make(4, 0.1, 7);
    const auto first = mapi_generate(m, head, plan, {}, ex.text, ex.codes, greedy());
    for (int i = 0; i < 10; ++i) {
      const auto again = mapi_generate(m, head, plan, {}, ex.text, ex.codes, greedy());
      CHECK(again.codes == first.codes);
      CHECK(again.stream_weights == first.stream_weights);
    }
  }
  SECTION("embedding-site masking decodes too") {
    AggregationHead<double> head(cfg.sem_dim, 3, rng);
    const auto r =
        mapi_generate(m, head, StreamMaskPlan::make(3, 0.2, 7, MaskSite::Embedding), {}, ex.text, ex.codes, greedy());
    CHECK(r.stream_weights.size() == r.acoustic_sequences);
  }
  SECTION("head and plan must agree") {
    AggregationHead<double> head(cfg.sem_dim, 3, rng);
    CHECK_THROWS_AS(mapi_generate(m, head, StreamMaskPlan::make(2, 0.1, 1), {}, ex.text, ex.codes, greedy()), ConfigError);
  }
}

TEST_CASE("teacher-forced streams", "[mapi]") {
  Rng rng(7);
  const auto cfg = micro();
  DualLm<double> m(cfg, rng);
  const auto ex = random_example(cfg, 4, 6, rng);
  const std::size_t audio_start = ex.text.size() + 1;
  const V S = m.frame_embeddings(ex.codes);
  const V x = m.semantic_inputs({}, ex.text, S);

  SECTION("text positions are identical across streams; audio positions are not") {
    const auto b = make_streams(x, StreamMaskPlan::make(4, 0.5, 3), audio_start);
    const auto h = m.semantic_forward(b.inputs, nullptr, &b.masks).value();
    for (std::size_t s = 1; s < 4; ++s)
      for (std::size_t i = 0; i < audio_start; ++i) CHECK(stream_row(h, s, i) == stream_row(h, 0, i));
    bool any = false;
    for (std::size_t s = 1; s < 4; ++s)
      for (std::size_t i = audio_start; i < h.dim(1); ++i) any |= stream_row(h, s, i) != stream_row(h, 0, i);
    CHECK(any);
    const auto plain = m.semantic_forward(x).value();
    for (std::size_t i = 0; i < h.dim(1); ++i) CHECK(stream_row(h, 0, i) == stream_row(plain, 0, i));
  }
  SECTION("permuting masked streams together with the head") {
    const auto plan = StreamMaskPlan::make(4, 0.3, 11);
    AggregationHead<double> head(cfg.sem_dim, 4, rng);
    const std::vector<std::size_t> perm{0, 3, 1, 2};
    StreamMaskPlan swapped = plan;
    for (std::size_t i = 0; i < 4; ++i) swapped.seeds[i] = plan.seeds[perm[i]];
    const auto a = mapi_teacher_forced(m, head, plan, ex);
    const auto b = mapi_teacher_forced(m, head.permuted(perm), swapped, ex);
    for (std::size_t k = 0; k < a.y.size(); ++k) CHECK(std::abs(a.y.value()[k] - b.y.value()[k]) < 1e-12);
  }
  SECTION("one stream matches the plain predictions") {
    AggregationHead<double> head(cfg.sem_dim, 1, rng);
    Var<double> target;
    const auto a = mapi_teacher_forced(m, head, StreamMaskPlan::make(1, 0.3, 1), ex, &target);
    const auto f = m.forward({ex});
    CHECK(flat(a.y.value()) == flat(f.pred.value()));
    CHECK(target.value() == f.target.value());
  }
}

TEST_CASE("head training leaves the base frozen", "[mapi][train]") {
  Rng rng(8);
  const auto cfg = micro();
  DualLm<float> m(cfg, rng);
  AggregationHead<float> head(cfg.sem_dim, 3, rng);
  const auto plan = StreamMaskPlan::make(3, 0.3, 5);
  Rng data_rng(9);
  const std::vector<LmExample> batch{random_example(cfg, 3, 6, data_rng), random_example(cfg, 2, 5, data_rng)};

  std::vector<Tensor<float>> base_before, head_before;
  for (const auto& p : m.params()) base_before.push_back(p.var.value());
  for (const auto& p : head.params()) head_before.push_back(p.var.value());

  MapiHeadTrainer tr(m, head, plan, {1e-2, 0.9, 0.98, 1e-8, 0.0});
  const double first = tr.step(batch);
  double last = first;
  for (int i = 0; i < 60; ++i) last = tr.step(batch);
  CHECK(last < first);

  const auto base = m.params();
  for (std::size_t i = 0; i < base.size(); ++i) CHECK(base[i].var.value() == base_before[i]);
  bool moved = false;
  const auto hp = head.params();
  for (std::size_t i = 0; i < hp.size(); ++i) moved |= !(hp[i].var.value() == head_before[i]);
  CHECK(moved);
}
