#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>

#include "s3tts/pipeline/dataset.hpp"
#include "s3tts/pipeline/gradsuites.hpp"
#include "s3tts/pipeline/journal.hpp"
#include "s3tts/pipeline/metrics.hpp"
#include "s3tts/pipeline/run_config.hpp"
#include "s3tts/pipeline/synthetic.hpp"
#include "test_util.hpp"

using namespace s3tts;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string operator/(const std::string& leaf) const { return (path / leaf).string(); }
};

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Naive windowed DFT magnitudes, frames x bins, for one waveform.
std::vector<std::vector<double>> oracle_stft(const std::vector<float>& x, std::size_t W) {
  std::vector<double> win(W);
  double energy = 0;
  for (std::size_t i = 0; i < W; ++i) {
    win[i] = 0.5 - 0.5 * std::cos(2 * std::numbers::pi * double(i) / double(W));
    energy += win[i] * win[i];
  }
  const std::size_t hop = W / 4;
  std::vector<std::vector<double>> out;
  for (std::size_t start = 0; start + W <= x.size(); start += hop) {
    std::vector<double> mag(W / 2 + 1);
    for (std::size_t k = 0; k <= W / 2; ++k) {
      double re = 0, im = 0;
      for (std::size_t m = 0; m < W; ++m) {
        const double v = x[start + m] * win[m] / std::sqrt(energy);
        re += v * std::cos(2 * std::numbers::pi * double(k * m) / double(W));
        im -= v * std::sin(2 * std::numbers::pi * double(k * m) / double(W));
      }
      mag[k] = std::hypot(re, im);
    }
    out.push_back(mag);
  }
  return out;
}

}  // namespace

TEST_CASE("bitrate arithmetic", "[pipeline]") {
  CHECK(bitrate(8, 4096, 12.5) == 1200.0);
  CHECK(bitrate(8, 1024, 75) == 6000.0);
  CHECK(bitrate(1, 8192, 80) == 1040.0);
  CHECK(frame_rate(24000, {2, 4, 5, 6, 8}) == 12.5);
  CHECK(bitrate(4, 64, frame_rate(CodecConfig::tiny())) == 24000.0);
  CHECK_THROWS_AS(bitrate(8, 1, 12.5), ParameterError);
}

TEST_CASE("run config text form", "[pipeline][config]") {
  SECTION("round trip of both presets") {
    for (const char* p : {"tiny", "paper-24k"}) {
      const auto c = RunConfig::make_preset(p);
      CHECK(parse_run_config(serialize(c)) == c);
    }
  }
  SECTION("round trip of edited values") {
    RunConfig c;
    c.seed = 123456789012345ull;
    c.codec.encoder_strides = {4, 2};
    c.codec.decoder_strides = {2, 4};
    c.codec_train.weights.time = 1.0 / 3.0;
    c.codec_train.gen_opt.lr = 2.5e-7;
    c.codec_train.disc.band_edges = {0.0, 0.33, 1.0};
    c.codec.acoustic_on_residual = true;
    c.train_data = "dir with \"quotes\"";
    c.mapi.parallel_streams = 3;
    c.mapi.mask_prob = 0.25;
    c.lm_train.warmup = 7;
    CHECK(parse_run_config(serialize(c)) == c);
    CHECK(serialize(parse_run_config(serialize(c))) == serialize(c));
  }
  SECTION("omitted keys take the preset default") {
    const auto c = parse_run_config("schema_version = 1\npreset = \"paper-24k\"\nseed = 5\n");
    auto expect = RunConfig::make_preset("paper-24k");
    expect.seed = 5;
    CHECK(c == expect);
    CHECK(c.codec.codebook_size == 4096);
  }
  SECTION("errors") {
    CHECK_THROWS_AS(parse_run_config("seed = 1\n"), ConfigError);
    CHECK_THROWS_AS(parse_run_config("schema_version = 2\n"), ConfigError);
    CHECK_THROWS_AS(parse_run_config("schema_version = 1\nbogus = 1\n"), ConfigError);
    CHECK_THROWS_AS(parse_run_config("schema_version = 1\ncodec.latent_dim = 3.5\n"), ConfigError);
    CHECK_THROWS_AS(parse_run_config("schema_version = 1\ncodec.pad_to_stride = yes\n"), ConfigError);
    CHECK_THROWS_AS(parse_run_config("schema_version = 1\ntrain_data = unquoted\n"), ConfigError);
    CHECK_THROWS_AS(parse_run_config("schema_version = 1\nseed = 1\nseed = 2\n"), ConfigError);
    CHECK_THROWS_AS(parse_run_config("schema_version = 1\npreset = \"huge\"\n"), ConfigError);
    CHECK_THROWS_AS(parse_run_config("schema_version = 1\njust text\n"), ConfigError);
  }
  SECTION("validation") {
    CHECK_NOTHROW(RunConfig::make_preset("tiny").validate());
    CHECK_NOTHROW(RunConfig::make_preset("paper-24k").validate());
    RunConfig c;
    c.train_data = "/nonexistent/s3tts/data";
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = RunConfig{};
    c.lm.codebook_size = 32;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = RunConfig{};
    c.codec_train.mel.sample_rate = 16000;
    CHECK_THROWS_AS(c.validate(), ConfigError);
  }
  SECTION("file round trip") {
    TempDir d("s3tts_cfg_test");
    RunConfig c;
    c.seed = 9;
    save_run_config(d / "run.cfg", c);
    CHECK(load_run_config(d / "run.cfg") == c);
    CHECK_THROWS_AS(load_run_config(d / "missing.cfg"), InputError);
  }
}

TEST_CASE("synthetic corpus", "[pipeline][data]") {
  SynthSpec spec;
  spec.count = 4;
  spec.seed = 7;
  const auto a = synth_dataset(spec);
  const auto b = synth_dataset(spec);
  const auto hop = CodecConfig::tiny().hop();
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].samples == b[i].samples);
    CHECK(a[i].transcript == b[i].transcript);
    CHECK(a[i].samples.size() % hop == 0);
    const double seconds = double(a[i].samples.size()) / spec.sample_rate;
    CHECK(a[i].teacher.frames.dim(0) == std::size_t(std::lround(seconds * spec.teacher_rate)));
  }

  TempDir d1("s3tts_synth_a"), d2("s3tts_synth_b");
  write_dataset(d1.path.string(), a, spec.sample_rate);
  write_dataset(d2.path.string(), b, spec.sample_rate);
  for (const auto& e : fs::directory_iterator(d1.path)) {
    const auto leaf = e.path().filename().string();
    CHECK(slurp(e.path().string()) == slurp(d2 / leaf));
  }

  SECTION("manifest loads back") {
    const auto utts = load_dataset(d1.path.string(), ByteTokenizer(), spec.sample_rate);
    REQUIRE(utts.size() == 4);
    for (std::size_t i = 0; i < 4; ++i) {
      CHECK(utts[i].record.transcript == a[i].transcript);
      CHECK(utts[i].record.tokens == ByteTokenizer().encode(a[i].transcript));
      REQUIRE(utts[i].teacher);
      CHECK(utts[i].teacher->frames == a[i].teacher.frames);
      REQUIRE(utts[i].samples.size() == a[i].samples.size());
      for (std::size_t t = 0; t < a[i].samples.size(); ++t) CHECK(std::abs(utts[i].samples[t] - a[i].samples[t]) <= 1.0f / 32767.0f);
    }
    const auto batch = make_codec_batch(utts, hop);
    std::size_t shortest = a[0].samples.size();
    for (const auto& u : a) shortest = std::min(shortest, u.samples.size());
    CHECK(batch.wave.shape() == Shape{4, shortest});
    CHECK(batch.teachers.size() == 4);
    CHECK_THROWS_AS(load_dataset(d1.path.string(), ByteTokenizer(), 16000), ConfigError);
  }
  SECTION("misaligned teacher is rejected") {
    auto t = a[0].teacher;
    t.frames = Tensor<float>(Shape{t.frames.dim(0) - 3, t.frames.dim(1)});
    save_teacher(d1 / (a[0].id + ".s3te"), t);
    CHECK_THROWS_AS(load_dataset(d1.path.string(), ByteTokenizer(), spec.sample_rate), AlignmentError);
  }
}

TEST_CASE("eval_reconstruction", "[pipeline][eval]") {
  SynthSpec spec;
  spec.count = 3;
  spec.min_words = 1;
  spec.max_words = 2;
  spec.word_samples = 128;
  const auto data = synth_dataset(spec);
  std::vector<std::vector<float>> waves;
  for (const auto& u : data) waves.push_back(u.samples);

  const auto identity = eval_reconstruction([](const std::vector<float>& w) { return w; }, waves);
  CHECK(identity.stft_distance == 0.0);
  CHECK(identity.mel_distance == 0.0);
  CHECK(identity.utterances == 3);

  Rng rng(3);
  auto noisy = [&](const std::vector<float>& w) {
    std::vector<float> r = w;
    std::normal_distribution<float> n(0.0f, 0.05f);
    for (auto& v : r) v += n(rng);
    return r;
  };
  std::vector<std::vector<float>> recon;
  for (const auto& w : waves) recon.push_back(noisy(w));
  std::size_t next = 0;
  const EvalConfig cfg;
  const auto m = eval_reconstruction([&](const std::vector<float>&) { return recon[next++]; }, waves, cfg);
  CHECK(m.stft_distance > 0);
  CHECK(m.mel_distance > 0);

  // Per-utterance means recomputed from a naive DFT.
  const Tensor<double> fb = mel_filterbank<double>(cfg.window, cfg.n_mels, cfg.sample_rate);
  double stft_sum = 0, mel_sum = 0;
  for (std::size_t u = 0; u < waves.size(); ++u) {
    const auto A = oracle_stft(waves[u], cfg.window), B = oracle_stft(recon[u], cfg.window);
    double s = 0, ml = 0;
    std::size_t ns = 0, nm = 0;
    for (std::size_t f = 0; f < A.size(); ++f) {
      for (std::size_t k = 0; k < A[f].size(); ++k, ++ns) s += std::abs(A[f][k] - B[f][k]);
      for (std::size_t j = 0; j < cfg.n_mels; ++j, ++nm) {
        double ma = 0, mb = 0;
        for (std::size_t k = 0; k < A[f].size(); ++k) {
          ma += A[f][k] * fb(k, j);
          mb += B[f][k] * fb(k, j);
        }
        ml += std::abs(std::log(std::max(ma, cfg.log_floor)) - std::log(std::max(mb, cfg.log_floor)));
      }
    }
    stft_sum += s / double(ns);
    mel_sum += ml / double(nm);
  }
  CHECK(std::abs(m.stft_distance - stft_sum / 3.0) < 1e-6);
  CHECK(std::abs(m.mel_distance - mel_sum / 3.0) < 1e-6);

  CHECK_THROWS_AS(eval_reconstruction([](const std::vector<float>& w) { return w; }, {std::vector<float>(10)}), InputError);

  SECTION("codec path is non-negative") {
    Rng r(4);
    S3Codec<float> codec(CodecConfig::tiny(), 8, r);
    const auto c = eval_reconstruction(codec, waves);
    CHECK(c.stft_distance >= 0);
    CHECK(c.mel_distance >= 0);
  }
}

TEST_CASE("metrics journal", "[pipeline][journal]") {
  TempDir d("s3tts_journal_test");
  auto run = [&](const std::string& name, bool wall) {
    MetricsJournal j(d / name, wall);
    for (int s = 0; s < 3; ++s) j.write("step", {{"step", s}, {"loss", 1.0 / (s + 1)}});
    j.write("done");
  };
  run("a.ndjson", false);
  run("b.ndjson", false);
  CHECK(slurp(d / "a.ndjson") == slurp(d / "b.ndjson"));
  std::ifstream in(d / "a.ndjson");
  std::string line;
  int n = 0;
  while (std::getline(in, line)) {
    const auto j = nlohmann::json::parse(line);
    CHECK(j.at("seq") == n);
    CHECK_FALSE(j.contains("wall_time"));
    ++n;
  }
  CHECK(n == 4);
  run("c.ndjson", true);
  std::ifstream in2(d / "c.ndjson");
  std::getline(in2, line);
  CHECK(nlohmann::json::parse(line).contains("wall_time"));
  CHECK_THROWS_AS(MetricsJournal("/nonexistent/dir/j.ndjson"), InputError);
}

TEST_CASE("gradient suites", "[pipeline][gradcheck]") {
  const auto results = run_gradient_suites(0);
  CHECK(results.size() == gradient_suites().size());
  for (const auto& r : results) {
    INFO(r.name << " max relative error " << r.max_rel_error);
    CHECK(r.passed);
  }
}
