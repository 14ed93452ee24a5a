#pragma once

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "s3tts/codec/config.hpp"
#include "s3tts/lm/lm_trainer.hpp"
#include "s3tts/train/codec_trainer.hpp"

namespace s3tts {

struct MapiSettings {
  std::size_t parallel_streams = 1;
  double mask_prob = 0.1;
  std::uint64_t seed = 0;

  bool operator==(const MapiSettings&) const = default;
};

// Everything a CLI run needs. Text form: one `key = value` per line, with
// typed values (integers, reals, "strings", true/false, [lists]).
struct RunConfig {
  static constexpr int kSchemaVersion = 1;

  std::string preset = "tiny";
  std::uint64_t seed = 0;
  CodecConfig codec;
  CodecTrainConfig codec_train = CodecTrainConfig::tiny();
  std::size_t codec_steps = 2000;
  std::size_t teacher_dim = 8;
  LmConfig lm;
  LmTrainConfig lm_train = LmTrainConfig::tiny();
  std::size_t lm_steps = 400;
  MapiSettings mapi;
  std::string train_data;  // directory holding manifest.tsv
  std::string eval_data;

  bool operator==(const RunConfig&) const = default;

  static RunConfig make_preset(const std::string& name) {
    RunConfig c;
    c.preset = name;
    if (name == "tiny") return c;
    if (name != "paper-24k") throw ConfigError("unknown preset '" + name + "' (expected tiny or paper-24k)");
    c.codec = CodecConfig::paper_24k();
    c.codec_train = CodecTrainConfig{};
    c.codec_train.mel = MelLossConfig::paper();
    c.codec_train.disc = DiscriminatorConfig::paper();
    c.lm = LmConfig::paper();
    c.lm_train = LmTrainConfig::paper();
    c.teacher_dim = 1024;
    c.codec_steps = 400000;
    c.lm_steps = 200000;
    return c;
  }

  // Structural checks plus existence of the referenced dataset directories.
  void validate() const {
    codec.validate();
    lm.validate();
    codec_train.weights.validate();
    codec_train.mel.validate();
    if (codec_train.mel.sample_rate != codec.sample_rate)
      throw ConfigError("mel loss sample rate " + std::to_string(codec_train.mel.sample_rate) +
                        " differs from the codec rate " + std::to_string(codec.sample_rate));
    if (lm.n_codebooks != codec.n_codebooks || lm.codebook_size != codec.codebook_size)
      throw ConfigError("lm codebooks (" + std::to_string(lm.n_codebooks) + " x " + std::to_string(lm.codebook_size) +
                        ") must match the codec (" + std::to_string(codec.n_codebooks) + " x " +
                        std::to_string(codec.codebook_size) + ")");
    if (teacher_dim == 0) throw ConfigError("teacher_dim must be positive");
    if (mapi.parallel_streams == 0) throw ConfigError("mapi.parallel_streams must be at least 1");
    if (!(mapi.mask_prob >= 0 && mapi.mask_prob <= 1)) throw ConfigError("mapi.mask_prob must lie in [0, 1]");
    for (const auto* p : {&train_data, &eval_data})
      if (!p->empty() && !std::filesystem::exists(std::filesystem::path(*p) / "manifest.tsv"))
        throw ConfigError("dataset '" + *p + "' has no manifest.tsv");
  }
};

namespace config_detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

inline std::string fmt(double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  std::string s(buf, r.ptr);
  // Keep reals visibly real so the reader can type-check them.
  if (s.find_first_of(".eEn") == std::string::npos) s += ".0";
  return s;
}

inline std::string fmt(bool v) { return v ? "true" : "false"; }

template <class I>
  requires std::is_integral_v<I> && (!std::is_same_v<I, bool>)
std::string fmt(I v) {
  return std::to_string(v);
}

inline std::string fmt(const std::string& v) {
  std::string out = "\"";
  for (char c : v) {
    if (c == '"' || c == '\\') out += '\\';
    out += c;
  }
  return out + "\"";
}

template <class T>
std::string fmt(const std::vector<T>& v) {
  std::string out = "[";
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? ", " : "") + fmt(v[i]);
  return out + "]";
}

[[noreturn]] inline void bad(const std::string& key, const std::string& raw, const char* want) {
  throw ConfigError("config key '" + key + "': expected " + want + ", got '" + raw + "'");
}

inline void parse(const std::string& key, const std::string& raw, double& out) {
  double v = 0;
  const auto r = std::from_chars(raw.data(), raw.data() + raw.size(), v);
  if (r.ec != std::errc() || r.ptr != raw.data() + raw.size()) bad(key, raw, "a real number");
  out = v;
}

template <class I>
  requires std::is_integral_v<I> && (!std::is_same_v<I, bool>)
void parse(const std::string& key, const std::string& raw, I& out) {
  I v{};
  const auto r = std::from_chars(raw.data(), raw.data() + raw.size(), v);
  if (r.ec != std::errc() || r.ptr != raw.data() + raw.size()) bad(key, raw, "an integer");
  out = v;
}

inline void parse(const std::string& key, const std::string& raw, bool& out) {
  if (raw == "true") out = true;
  else if (raw == "false") out = false;
  else bad(key, raw, "true or false");
}

inline void parse(const std::string& key, const std::string& raw, std::string& out) {
  if (raw.size() < 2 || raw.front() != '"' || raw.back() != '"') bad(key, raw, "a quoted string");
  out.clear();
  for (std::size_t i = 1; i + 1 < raw.size(); ++i) {
    if (raw[i] == '\\' && i + 2 < raw.size()) ++i;
    out += raw[i];
  }
}

template <class T>
void parse(const std::string& key, const std::string& raw, std::vector<T>& out) {
  if (raw.size() < 2 || raw.front() != '[' || raw.back() != ']') bad(key, raw, "a [list]");
  out.clear();
  const std::string body = trim(raw.substr(1, raw.size() - 2));
  if (body.empty()) return;
  std::stringstream ss(body);
  std::string item;
  while (std::getline(ss, item, ',')) {
    T v{};
    parse(key, trim(item), v);
    out.push_back(v);
  }
}

struct Field {
  std::string key;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

template <class M>
Field field(std::string key, M RunConfig::*outer) {
  return {key, [outer](const RunConfig& c) { return fmt(c.*outer); },
          [outer, key](RunConfig& c, const std::string& raw) { parse(key, raw, c.*outer); }};
}

template <class O, class M>
Field field(std::string key, O RunConfig::*outer, M O::*inner) {
  return {key, [outer, inner](const RunConfig& c) { return fmt(c.*outer.*inner); },
          [outer, inner, key](RunConfig& c, const std::string& raw) { parse(key, raw, c.*outer.*inner); }};
}

template <class O, class P, class M>
Field field(std::string key, O RunConfig::*outer, P O::*mid, M P::*inner) {
  return {key, [outer, mid, inner](const RunConfig& c) { return fmt(c.*outer.*mid.*inner); },
          [outer, mid, inner, key](RunConfig& c, const std::string& raw) { parse(key, raw, c.*outer.*mid.*inner); }};
}

inline const std::vector<Field>& fields() {
  using C = RunConfig;
  using CT = CodecTrainConfig;
  static const std::vector<Field> f = {
      field("seed", &C::seed),
      field("train_data", &C::train_data),
      field("eval_data", &C::eval_data),
      field("codec.sample_rate", &C::codec, &CodecConfig::sample_rate),
      field("codec.encoder_strides", &C::codec, &CodecConfig::encoder_strides),
      field("codec.decoder_strides", &C::codec, &CodecConfig::decoder_strides),
      field("codec.latent_dim", &C::codec, &CodecConfig::latent_dim),
      field("codec.encoder_channels", &C::codec, &CodecConfig::encoder_channels),
      field("codec.decoder_channels", &C::codec, &CodecConfig::decoder_channels),
      field("codec.n_codebooks", &C::codec, &CodecConfig::n_codebooks),
      field("codec.codebook_size", &C::codec, &CodecConfig::codebook_size),
      field("codec.dilations", &C::codec, &CodecConfig::dilations),
      field("codec.residual_kernel", &C::codec, &CodecConfig::residual_kernel),
      field("codec.pad_to_stride", &C::codec, &CodecConfig::pad_to_stride),
      field("codec.acoustic_on_residual", &C::codec, &CodecConfig::acoustic_on_residual),
      field("codec.teacher_dim", &C::teacher_dim),
      field("codec_train.steps", &C::codec_steps),
      field("codec_train.weights.time", &C::codec_train, &CT::weights, &LossWeights::time),
      field("codec_train.weights.mel", &C::codec_train, &CT::weights, &LossWeights::mel),
      field("codec_train.weights.adv", &C::codec_train, &CT::weights, &LossWeights::adv),
      field("codec_train.weights.feat", &C::codec_train, &CT::weights, &LossWeights::feat),
      field("codec_train.weights.commit", &C::codec_train, &CT::weights, &LossWeights::commit),
      field("codec_train.weights.distill", &C::codec_train, &CT::weights, &LossWeights::distill),
      field("codec_train.mel.windows", &C::codec_train, &CT::mel, &MelLossConfig::windows),
      field("codec_train.mel.n_mels", &C::codec_train, &CT::mel, &MelLossConfig::n_mels),
      field("codec_train.mel.sample_rate", &C::codec_train, &CT::mel, &MelLossConfig::sample_rate),
      field("codec_train.mel.log_floor", &C::codec_train, &CT::mel, &MelLossConfig::log_floor),
      field("codec_train.disc.periods", &C::codec_train, &CT::disc, &DiscriminatorConfig::periods),
      field("codec_train.disc.stft_windows", &C::codec_train, &CT::disc, &DiscriminatorConfig::stft_windows),
      field("codec_train.disc.band_edges", &C::codec_train, &CT::disc, &DiscriminatorConfig::band_edges),
      field("codec_train.disc.channels", &C::codec_train, &CT::disc, &DiscriminatorConfig::channels),
      field("codec_train.disc.layers", &C::codec_train, &CT::disc, &DiscriminatorConfig::layers),
      field("codec_train.gen_opt.lr", &C::codec_train, &CT::gen_opt, &AdamWOptions::lr),
      field("codec_train.gen_opt.beta1", &C::codec_train, &CT::gen_opt, &AdamWOptions::beta1),
      field("codec_train.gen_opt.beta2", &C::codec_train, &CT::gen_opt, &AdamWOptions::beta2),
      field("codec_train.gen_opt.eps", &C::codec_train, &CT::gen_opt, &AdamWOptions::eps),
      field("codec_train.gen_opt.weight_decay", &C::codec_train, &CT::gen_opt, &AdamWOptions::weight_decay),
      field("codec_train.disc_opt.lr", &C::codec_train, &CT::disc_opt, &AdamWOptions::lr),
      field("codec_train.disc_opt.beta1", &C::codec_train, &CT::disc_opt, &AdamWOptions::beta1),
      field("codec_train.disc_opt.beta2", &C::codec_train, &CT::disc_opt, &AdamWOptions::beta2),
      field("codec_train.disc_opt.eps", &C::codec_train, &CT::disc_opt, &AdamWOptions::eps),
      field("codec_train.disc_opt.weight_decay", &C::codec_train, &CT::disc_opt, &AdamWOptions::weight_decay),
      field("codec_train.lr_decay", &C::codec_train, &CT::lr_decay),
      field("codec_train.kmeans_init", &C::codec_train, &CT::kmeans_init),
      field("codec_train.kmeans_iters", &C::codec_train, &CT::kmeans_iters),
      field("lm.text_vocab", &C::lm, &LmConfig::text_vocab),
      field("lm.n_codebooks", &C::lm, &LmConfig::n_codebooks),
      field("lm.codebook_size", &C::lm, &LmConfig::codebook_size),
      field("lm.sem_layers", &C::lm, &LmConfig::sem_layers),
      field("lm.sem_dim", &C::lm, &LmConfig::sem_dim),
      field("lm.sem_heads", &C::lm, &LmConfig::sem_heads),
      field("lm.ac_layers", &C::lm, &LmConfig::ac_layers),
      field("lm.ac_dim", &C::lm, &LmConfig::ac_dim),
      field("lm.ac_heads", &C::lm, &LmConfig::ac_heads),
      field("lm.max_seq", &C::lm, &LmConfig::max_seq),
      field("lm_train.steps", &C::lm_steps),
      field("lm_train.opt.lr", &C::lm_train, &LmTrainConfig::opt, &AdamWOptions::lr),
      field("lm_train.opt.beta1", &C::lm_train, &LmTrainConfig::opt, &AdamWOptions::beta1),
      field("lm_train.opt.beta2", &C::lm_train, &LmTrainConfig::opt, &AdamWOptions::beta2),
      field("lm_train.opt.eps", &C::lm_train, &LmTrainConfig::opt, &AdamWOptions::eps),
      field("lm_train.opt.weight_decay", &C::lm_train, &LmTrainConfig::opt, &AdamWOptions::weight_decay),
      field("lm_train.warmup", &C::lm_train, &LmTrainConfig::warmup),
      field("mapi.parallel_streams", &C::mapi, &MapiSettings::parallel_streams),
      field("mapi.mask_prob", &C::mapi, &MapiSettings::mask_prob),
      field("mapi.seed", &C::mapi, &MapiSettings::seed),
  };
  return f;
}

}  // namespace config_detail

inline std::string serialize(const RunConfig& c) {
  std::string out = "schema_version = " + std::to_string(RunConfig::kSchemaVersion) + "\n";
  out += "preset = " + config_detail::fmt(c.preset) + "\n";
  for (const auto& f : config_detail::fields()) out += f.key + " = " + f.get(c) + "\n";
  return out;
}

// Keys not present keep the preset's defaults. Does not touch the
// filesystem; call validate() for that.
inline RunConfig parse_run_config(const std::string& text) {
  using namespace config_detail;
  std::map<std::string, std::pair<std::string, std::size_t>> kv;
  std::stringstream ss(text);
  std::string line;
  for (std::size_t no = 1; std::getline(ss, line); ++no) {
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(no) + ": expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    if (!kv.emplace(key, std::pair{trim(line.substr(eq + 1)), no}).second)
      throw ConfigError("config line " + std::to_string(no) + ": duplicate key '" + key + "'");
  }
  const auto ver = kv.find("schema_version");
  if (ver == kv.end()) throw ConfigError("config: missing schema_version");
  int v = 0;
  parse("schema_version", ver->second.first, v);
  if (v != RunConfig::kSchemaVersion)
    throw ConfigError("config: schema_version " + std::to_string(v) + " is not supported (expected " +
                      std::to_string(RunConfig::kSchemaVersion) + ")");
  kv.erase(ver);
  std::string preset = "tiny";
  if (auto p = kv.find("preset"); p != kv.end()) {
    parse("preset", p->second.first, preset);
    kv.erase(p);
  }
  RunConfig c = RunConfig::make_preset(preset);
  for (const auto& f : fields())
    if (auto it = kv.find(f.key); it != kv.end()) {
      f.set(c, it->second.first);
      kv.erase(it);
    }
  if (!kv.empty())
    throw ConfigError("config line " + std::to_string(kv.begin()->second.second) + ": unknown key '" + kv.begin()->first + "'");
  return c;
}

inline RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open config " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str());
}

inline void save_run_config(const std::string& path, const RunConfig& c) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw InputError("cannot write config " + path);
  out << serialize(c);
}

}  // namespace s3tts
