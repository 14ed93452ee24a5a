// Command-line front end: data generation, codec and LM training, encoding,
// decoding, synthesis, evaluation and gradient checks.

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "s3tts/codec/s3codec.hpp"
#include "s3tts/codec/wav.hpp"
#include "s3tts/lm/lm_trainer.hpp"
#include "s3tts/lm/mapi.hpp"
#include "s3tts/pipeline/corpus.hpp"
#include "s3tts/pipeline/dataset.hpp"
#include "s3tts/pipeline/gradsuites.hpp"
#include "s3tts/pipeline/journal.hpp"
#include "s3tts/pipeline/metrics.hpp"
#include "s3tts/pipeline/run_config.hpp"
#include "s3tts/pipeline/synthetic.hpp"
#include "s3tts/train/checkpoint.hpp"
#include "s3tts/train/codec_trainer.hpp"

namespace fs = std::filesystem;
using namespace s3tts;
using json = nlohmann::json;

namespace {

struct Globals {
  std::string config_path;
  std::string preset;
  std::optional<std::uint64_t> seed;
  std::string journal;
  bool wall_time = false;
  std::optional<std::size_t> streams;
  std::optional<double> mask_prob;
  std::optional<std::uint64_t> mapi_seed;
  std::string mask_site = "attention";
};

// Config precedence: --config file, else the checkpoint's sidecar, else the
// preset; command-line overrides always win.
RunConfig resolve_config(const Globals& g, const std::string& sidecar_of = {}) {
  RunConfig c;
  if (!g.config_path.empty()) c = load_run_config(g.config_path);
  else if (!sidecar_of.empty() && fs::exists(sidecar_of + ".cfg")) c = load_run_config(sidecar_of + ".cfg");
  else if (!g.preset.empty()) c = RunConfig::make_preset(g.preset);
  if (g.seed) c.seed = *g.seed;
  if (g.streams) c.mapi.parallel_streams = *g.streams;
  if (g.mask_prob) c.mapi.mask_prob = *g.mask_prob;
  if (g.mapi_seed) c.mapi.seed = *g.mapi_seed;
  c.codec_train.seed = c.seed;
  c.validate();
  return c;
}

MetricsJournal open_journal(const Globals& g, const std::string& command, const std::string& out) {
  std::string path = g.journal;
  if (path.empty()) path = out.empty() ? command + ".ndjson" : out + ".ndjson";
  MetricsJournal j(path, g.wall_time);
  return j;
}

json config_record(const RunConfig& c) { return {{"config", serialize(c)}, {"seed", c.seed}}; }

S3Codec<float> load_codec(const RunConfig& c, const std::string& path) {
  Rng rng(c.seed);
  S3Codec<float> codec(c.codec, c.teacher_dim, rng);
  auto params = codec.params();
  load_params(params, read_checkpoint(path));
  return codec;
}

struct LoadedLm {
  DualLm<float> model;
  std::optional<AggregationHead<float>> head;  // present when the checkpoint carries one
};

LoadedLm load_lm(const RunConfig& c, const std::string& path) {
  Rng rng(c.seed);
  LoadedLm out{DualLm<float>(c.lm, rng), std::nullopt};
  const TensorMap t = read_checkpoint(path);
  auto params = out.model.params();
  load_params(params, t);
  if (auto it = t.find("mapi_head.l2.b"); it != t.end()) {
    Rng hr(0);
    AggregationHead<float> head(c.lm.sem_dim, it->second.size(), hr);
    auto hp = head.params();
    load_params(hp, t);
    out.head = std::move(head);
  }
  return out;
}

StreamMaskPlan make_plan(const RunConfig& c, const std::string& site) {
  MaskSite s = MaskSite::Attention;
  if (site == "embedding") s = MaskSite::Embedding;
  else if (site != "attention") throw ConfigError("--mask-site must be attention or embedding");
  return StreamMaskPlan::make(c.mapi.parallel_streams, c.mapi.mask_prob, c.mapi.seed, s);
}

void write_sidecar(const RunConfig& c, const std::string& ckpt) { save_run_config(ckpt + ".cfg", c); }

int cmd_make_data(const Globals& g, const std::string& out, SynthSpec spec) {
  const RunConfig c = resolve_config(g);
  spec.seed = c.seed;
  spec.sample_rate = c.codec.sample_rate;
  auto j = open_journal(g, "make-data", out);
  j.write("config", config_record(c));
  const auto data = synth_dataset(spec);
  write_dataset(out, data, spec.sample_rate);
  std::size_t samples = 0;
  for (const auto& u : data) samples += u.samples.size();
  j.write("make_data", {{"utterances", data.size()}, {"samples", samples}, {"dir", out}});
  std::cout << "wrote " << data.size() << " utterances to " << out << "\n";
  return 0;
}

int cmd_codec_train(const Globals& g, const std::string& data_dir, const std::string& out, std::optional<std::size_t> steps,
                    const std::string& resume, std::size_t log_every) {
  const RunConfig c = resolve_config(g, resume);
  const auto utts = load_dataset(data_dir, ByteTokenizer(), c.codec.sample_rate);
  const auto batch = make_codec_batch(utts, c.codec.hop());
  if (batch.teachers.size() != utts.size()) throw DataError("codec-train needs a teacher embedding for every utterance");
  Rng rng(c.seed);
  S3Codec<float> codec(c.codec, batch.teachers.front().dim(1), rng);
  CodecTrainer tr(codec, c.codec_train);
  if (!resume.empty()) tr.load(resume);
  else tr.init_codebooks(batch);
  auto j = open_journal(g, "codec-train", out);
  j.write("config", config_record(c));
  const std::size_t n = steps.value_or(c.codec_steps);
  for (std::size_t s = 0; s < n; ++s) {
    const auto m = tr.step(batch);
    j.write("codec_step", {{"step", m.step}, {"disc", m.disc}, {"time", m.time}, {"mel", m.mel}, {"adv", m.adv},
                           {"feat", m.feat}, {"commit", m.commit}, {"distill", m.distill}, {"total", m.total},
                           {"reseeded", m.reseeded}});
    if (log_every && (s % log_every == 0 || s + 1 == n))
      std::cout << "step " << m.step << " mel " << m.mel << " total " << m.total << "\n";
  }
  NoGradGuard ng;
  const auto f = codec.forward(Var<float>(batch.wave));
  const double snr = snr_db(batch.wave, f.recon.value());
  tr.save(out);
  RunConfig saved = c;
  saved.teacher_dim = codec.teacher_dim();
  write_sidecar(saved, out);
  j.write("codec_done", {{"steps", tr.steps_done()}, {"snr_db", snr}, {"checkpoint", out}});
  std::cout << "saved " << out << " (reconstruction SNR " << snr << " dB)\n";
  return 0;
}

int cmd_codec_encode(const Globals& g, const std::string& ckpt, const std::string& in, const std::string& out) {
  const RunConfig c = resolve_config(g, ckpt);
  const auto codec = load_codec(c, ckpt);
  auto j = open_journal(g, "codec-encode", out);
  j.write("config", config_record(c));
  const auto wav = read_wav(in, c.codec.sample_rate);
  const auto grid = codec.encode(wav.samples);
  write_codegrid(out, grid);
  j.write("encode", {{"samples", wav.samples.size()}, {"frames", grid.L}, {"codebooks", grid.K}});
  return 0;
}

int cmd_codec_decode(const Globals& g, const std::string& ckpt, const std::string& in, const std::string& out,
                     std::size_t length) {
  const RunConfig c = resolve_config(g, ckpt);
  const auto codec = load_codec(c, ckpt);
  auto j = open_journal(g, "codec-decode", out);
  j.write("config", config_record(c));
  const auto grid = read_codegrid(in);
  const auto samples = codec.decode(grid, length);
  write_wav(out, Waveform{samples, c.codec.sample_rate});
  j.write("decode", {{"frames", grid.L}, {"samples", samples.size()}});
  return 0;
}

int cmd_lm_train(const Globals& g, const std::string& data_dir, const std::string& codec_ckpt, const std::string& out,
                 std::optional<std::size_t> steps, std::size_t head_steps, const std::string& site, std::size_t log_every) {
  const RunConfig c = resolve_config(g, codec_ckpt);
  const auto codec = load_codec(c, codec_ckpt);
  const ByteTokenizer tok;
  std::vector<LmExample> corpus;
  for (const auto& u : load_dataset(data_dir, tok, c.codec.sample_rate)) {
    LmExample ex;
    ex.text = u.record.tokens;
    ex.codes = codec.encode(u.samples);
    corpus.push_back(std::move(ex));
  }
  Rng rng(c.seed);
  DualLm<float> model(c.lm, rng);
  LmTrainer tr(model, c.lm_train);
  auto j = open_journal(g, "lm-train", out);
  j.write("config", config_record(c));
  const std::size_t n = steps.value_or(c.lm_steps);
  for (std::size_t s = 0; s < n; ++s) {
    const auto m = tr.step(corpus);
    j.write("lm_step", {{"step", m.step}, {"total", m.total}, {"ctx", m.ctx}, {"acoustic", m.acoustic}, {"lr", m.lr},
                        {"accuracy", m.accuracy}});
    if (log_every && (s % log_every == 0 || s + 1 == n))
      std::cout << "step " << m.step << " total " << m.total << " acc0 " << m.accuracy.front() << "\n";
  }
  ParamList<float> extra;
  std::optional<AggregationHead<float>> head;
  if (c.mapi.parallel_streams > 1 && head_steps > 0) {
    Rng hr(c.mapi.seed);
    head.emplace(c.lm.sem_dim, c.mapi.parallel_streams, hr);
    MapiHeadTrainer ht(model, *head, make_plan(c, site));
    for (std::size_t s = 0; s < head_steps; ++s) j.write("head_step", {{"step", s}, {"ctx", ht.step(corpus)}});
    extra = head->params();
  }
  const auto eval = tr.evaluate(corpus);
  tr.save(out, extra);
  write_sidecar(c, out);
  j.write("lm_done", {{"steps", tr.steps_done()}, {"total", eval.total}, {"accuracy", eval.accuracy}, {"checkpoint", out}});
  std::cout << "saved " << out << "\n";
  return 0;
}

int cmd_synth(const Globals& g, const std::string& codec_ckpt, const std::string& lm_ckpt, const std::string& text,
              const std::string& prompt_wav, const std::string& prompt_text, const std::string& out, SamplingConfig sampling,
              const std::string& site) {
  const RunConfig c = resolve_config(g, lm_ckpt);
  const auto codec = load_codec(c, codec_ckpt);
  auto lm = load_lm(c, lm_ckpt);
  auto j = open_journal(g, "synth", out);
  j.write("config", config_record(c));
  const ByteTokenizer tok;
  CodeGrid prompt(c.lm.n_codebooks, 0, c.lm.codebook_size);
  if (!prompt_wav.empty()) prompt = codec.encode(read_wav(prompt_wav, c.codec.sample_rate).samples);
  sampling.seed = c.seed;
  GenerationResult r;
  if (c.mapi.parallel_streams == 1 && !g.streams) {
    r = generate(lm.model, tok.encode(prompt_text), tok.encode(text), prompt, sampling);
  } else {
    const auto plan = make_plan(c, site);
    AggregationHead<float> head;
    if (lm.head && lm.head->streams() == plan.streams) {
      head = *lm.head;
    } else {
      if (plan.streams > 1) std::cerr << "warning: no trained aggregation head for " << plan.streams << " streams\n";
      Rng hr(c.mapi.seed);
      head = AggregationHead<float>(c.lm.sem_dim, plan.streams, hr);
    }
    r = mapi_generate(lm.model, head, plan, tok.encode(prompt_text), tok.encode(text), prompt, sampling);
  }
  const auto samples = r.codes.L ? codec.decode(r.codes) : std::vector<float>{};
  write_wav(out, Waveform{samples, c.codec.sample_rate});
  j.write("synth", {{"frames", r.codes.L}, {"truncated", r.truncated}, {"samples", samples.size()},
                    {"codes", r.codes.codes}, {"stream_weights", r.stream_weights}});
  std::cout << "wrote " << out << " (" << r.codes.L << " frames" << (r.truncated ? ", truncated" : "") << ")\n";
  return 0;
}

int cmd_eval(const Globals& g, const std::string& codec_ckpt, const std::string& data_dir) {
  const RunConfig c = resolve_config(g, codec_ckpt);
  const auto codec = load_codec(c, codec_ckpt);
  std::vector<std::vector<float>> waves;
  for (const auto& u : load_dataset(data_dir, ByteTokenizer(), c.codec.sample_rate)) waves.push_back(u.samples);
  auto j = open_journal(g, "eval", "");
  j.write("config", config_record(c));
  const auto m = eval_reconstruction(codec, waves);
  j.write("eval", {{"stft_distance", m.stft_distance}, {"mel_distance", m.mel_distance}, {"utterances", m.utterances},
                   {"bitrate", bitrate(c.codec.n_codebooks, c.codec.codebook_size, frame_rate(c.codec))}});
  std::cout << "utterances " << m.utterances << "\nstft_distance " << m.stft_distance << "\nmel_distance "
            << m.mel_distance << "\n";
  return 0;
}

int cmd_gradcheck(const Globals& g) {
  const RunConfig c = resolve_config(g);
  auto j = open_journal(g, "gradcheck", "");
  j.write("config", config_record(c));
  bool ok = true;
  run_gradient_suites(c.seed, [&](const GradSuiteResult& r) {
    ok &= r.passed;
    std::cout << (r.passed ? "PASS " : "FAIL ") << r.name << " max_rel_error " << r.max_rel_error << " (tol "
              << r.tolerance << ")\n";
    j.write("gradcheck", {{"suite", r.name}, {"max_rel_error", r.max_rel_error}, {"tolerance", r.tolerance},
                          {"passed", r.passed}});
  });
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Split-RVQ speech codec and dual-transformer TTS toolkit"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--config", g.config_path, "Run config file")->check(CLI::ExistingFile);
  app.add_option("--preset", g.preset, "Preset when no config file is given")->check(CLI::IsMember({"tiny", "paper-24k"}));
  app.add_option("--seed", g.seed, "Seed for every stochastic choice");
  app.add_option("--journal", g.journal, "Metrics journal path (default: <output>.ndjson)");
  app.add_flag("--wall-time", g.wall_time, "Record wall time in the journal (breaks bit-for-bit reproducibility)");
  app.add_option("--parallel-streams", g.streams, "Parallel decoding streams (1 disables masking)")
      ->check(CLI::PositiveNumber);
  app.add_option("--mask-prob", g.mask_prob, "Per-position mask probability for streams 1..P-1")
      ->check(CLI::Range(0.0, 1.0));
  app.add_option("--mapi-seed", g.mapi_seed, "Seed of the stream masks and the aggregation head");
  app.add_option("--mask-site", g.mask_site, "Where streams are masked")->check(CLI::IsMember({"attention", "embedding"}));

  std::function<int()> run;
  std::size_t log_every = 100;

  auto* mk = app.add_subcommand("make-data", "Write a synthetic corpus");
  std::string mk_out;
  SynthSpec spec;
  mk->add_option("--out", mk_out, "Output directory")->required();
  mk->add_option("--count", spec.count, "Utterances")->check(CLI::PositiveNumber);
  mk->add_option("--min-words", spec.min_words)->check(CLI::PositiveNumber);
  mk->add_option("--max-words", spec.max_words)->check(CLI::PositiveNumber);
  mk->add_option("--word-samples", spec.word_samples)->check(CLI::PositiveNumber);
  mk->callback([&] { run = [&] { return cmd_make_data(g, mk_out, spec); }; });

  auto* ct = app.add_subcommand("codec-train", "Train the codec on a corpus");
  std::string ct_data, ct_out, ct_resume;
  std::optional<std::size_t> ct_steps;
  ct->add_option("--data", ct_data, "Corpus directory")->required()->check(CLI::ExistingDirectory);
  ct->add_option("--out", ct_out, "Checkpoint to write")->required();
  ct->add_option("--steps", ct_steps, "Training steps (default from config)");
  ct->add_option("--resume", ct_resume, "Checkpoint to resume from")->check(CLI::ExistingFile);
  ct->add_option("--log-every", log_every, "Console progress interval (0 silences)");
  ct->callback([&] { run = [&] { return cmd_codec_train(g, ct_data, ct_out, ct_steps, ct_resume, log_every); }; });

  auto* ce = app.add_subcommand("codec-encode", "WAV to code grid");
  std::string ce_ckpt, ce_in, ce_out;
  ce->add_option("--codec", ce_ckpt, "Codec checkpoint")->required()->check(CLI::ExistingFile);
  ce->add_option("--in", ce_in, "Input WAV")->required()->check(CLI::ExistingFile);
  ce->add_option("--out", ce_out, "Output code grid")->required();
  ce->callback([&] { run = [&] { return cmd_codec_encode(g, ce_ckpt, ce_in, ce_out); }; });

  auto* cd = app.add_subcommand("codec-decode", "Code grid to WAV");
  std::string cd_ckpt, cd_in, cd_out;
  std::size_t cd_len = 0;
  cd->add_option("--codec", cd_ckpt, "Codec checkpoint")->required()->check(CLI::ExistingFile);
  cd->add_option("--in", cd_in, "Input code grid")->required()->check(CLI::ExistingFile);
  cd->add_option("--out", cd_out, "Output WAV")->required();
  cd->add_option("--length", cd_len, "Trim to this many samples (default: frames x hop)");
  cd->callback([&] { run = [&] { return cmd_codec_decode(g, cd_ckpt, cd_in, cd_out, cd_len); }; });

  auto* lt = app.add_subcommand("lm-train", "Train the dual LM on codec tokens");
  std::string lt_data, lt_codec, lt_out;
  std::optional<std::size_t> lt_steps;
  std::size_t head_steps = 100;
  lt->add_option("--data", lt_data, "Corpus directory")->required()->check(CLI::ExistingDirectory);
  lt->add_option("--codec", lt_codec, "Codec checkpoint")->required()->check(CLI::ExistingFile);
  lt->add_option("--out", lt_out, "Checkpoint to write")->required();
  lt->add_option("--steps", lt_steps, "Training steps (default from config)");
  lt->add_option("--head-steps", head_steps, "Aggregation-head steps when --parallel-streams > 1");
  lt->add_option("--log-every", log_every, "Console progress interval (0 silences)");
  lt->callback([&] {
    run = [&] { return cmd_lm_train(g, lt_data, lt_codec, lt_out, lt_steps, head_steps, g.mask_site, log_every); };
  });

  auto* sy = app.add_subcommand("synth", "Text (plus optional prompt) to WAV");
  std::string sy_codec, sy_lm, sy_text, sy_pwav, sy_ptext, sy_out;
  SamplingConfig sampling;
  sy->add_option("--codec", sy_codec, "Codec checkpoint")->required()->check(CLI::ExistingFile);
  sy->add_option("--lm", sy_lm, "LM checkpoint")->required()->check(CLI::ExistingFile);
  sy->add_option("--text", sy_text, "Text to speak")->required();
  sy->add_option("--prompt-wav", sy_pwav, "Prompt audio")->check(CLI::ExistingFile);
  sy->add_option("--prompt-text", sy_ptext, "Transcript of the prompt audio");
  sy->add_option("--out", sy_out, "Output WAV")->required();
  sy->add_flag("--greedy", sampling.greedy, "Arg-max decoding");
  sy->add_option("--temperature", sampling.temperature)->check(CLI::PositiveNumber);
  sy->add_option("--top-k", sampling.top_k, "0 keeps every class");
  sy->add_option("--max-frames", sampling.max_frames)->check(CLI::PositiveNumber);
  sy->callback([&] {
    run = [&] { return cmd_synth(g, sy_codec, sy_lm, sy_text, sy_pwav, sy_ptext, sy_out, sampling, g.mask_site); };
  });

  auto* ev = app.add_subcommand("eval", "Reconstruction distances of a codec on a corpus");
  std::string ev_codec, ev_data;
  ev->add_option("--codec", ev_codec, "Codec checkpoint")->required()->check(CLI::ExistingFile);
  ev->add_option("--data", ev_data, "Corpus directory")->required()->check(CLI::ExistingDirectory);
  ev->callback([&] { run = [&] { return cmd_eval(g, ev_codec, ev_data); }; });

  auto* gc = app.add_subcommand("gradcheck", "Run every gradient suite in double precision");
  gc->callback([&] { run = [&] { return cmd_gradcheck(g); }; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }
  try {
    return run();
  } catch (const s3tts::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
