#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "s3tts/codec/wav.hpp"
#include "s3tts/distill/distill.hpp"

namespace s3tts {

struct SynthSpec {
  std::size_t count = 4;
  std::size_t min_words = 3;
  std::size_t max_words = 5;
  std::size_t vocab = 8;               // word symbols 'a', 'b', ...
  std::size_t word_samples = 256;      // keep a multiple of the codec hop
  double sample_rate = 8000;
  double teacher_rate = 4000;          // four teacher frames per tiny-codec frame
  std::uint64_t seed = 7;
};

struct SynthUtterance {
  std::string id;
  std::string transcript;
  std::vector<float> samples;
  TeacherEmbeddings teacher;  // [L_S, vocab]
};

namespace detail {

// Fixed partial frequencies for a word symbol.
inline std::vector<double> word_partials(std::size_t word, double sample_rate) {
  const double base = 180.0 * std::pow(1.21, double(word));
  std::vector<double> p{base, base * (2.0 + 0.13 * double(word % 3)), base * 3.4};
  for (auto& f : p) f = std::min(f, 0.45 * sample_rate);
  return p;
}

}  // namespace detail

// Multi-sine "words" with a per-utterance pitch contour. The teacher is a
// one-hot word trajectory smoothed over a short window.
inline std::vector<SynthUtterance> synth_dataset(const SynthSpec& spec) {
  if (spec.count == 0 || spec.min_words == 0 || spec.max_words < spec.min_words || spec.vocab == 0 || spec.word_samples == 0)
    throw ConfigError("synth_dataset: invalid specification");
  const double teacher_step = spec.sample_rate / spec.teacher_rate;
  if (teacher_step < 1 || std::fmod(double(spec.word_samples), teacher_step) != 0)
    throw ConfigError("synth_dataset: word length must be a whole number of teacher frames");
  Rng rng(spec.seed);
  std::vector<SynthUtterance> out;
  for (std::size_t u = 0; u < spec.count; ++u) {
    SynthUtterance utt;
    char idbuf[32];
    std::snprintf(idbuf, sizeof idbuf, "utt%04zu", u);
    utt.id = idbuf;
    const std::size_t n_words = std::uniform_int_distribution<std::size_t>(spec.min_words, spec.max_words)(rng);
    const double pitch0 = std::uniform_real_distribution<double>(0.85, 1.15)(rng);
    const double pitch1 = std::uniform_real_distribution<double>(0.85, 1.15)(rng);
    const double gain = std::uniform_real_distribution<double>(0.35, 0.6)(rng);
    std::vector<std::size_t> words(n_words);
    for (auto& w : words) w = std::uniform_int_distribution<std::size_t>(0, spec.vocab - 1)(rng);
    const std::size_t T = n_words * spec.word_samples;
    utt.samples.assign(T, 0.0f);
    std::vector<double> phase(3, 0.0);
    for (std::size_t i = 0; i < n_words; ++i) {
      utt.transcript.push_back(static_cast<char>('a' + words[i]));
      const auto partials = detail::word_partials(words[i], spec.sample_rate);
      const double amps[3] = {1.0, 0.5, 0.25};
      for (std::size_t n = 0; n < spec.word_samples; ++n) {
        const std::size_t t = i * spec.word_samples + n;
        const double contour = pitch0 + (pitch1 - pitch0) * double(t) / double(T);
        const double env = std::sin(std::numbers::pi * (double(n) + 0.5) / double(spec.word_samples));
        double s = 0;
        for (std::size_t k = 0; k < 3; ++k) {
          phase[k] += 2 * std::numbers::pi * partials[k] * contour / spec.sample_rate;
          s += amps[k] * std::sin(phase[k]);
        }
        utt.samples[t] = static_cast<float>(gain * env * s / 1.75);
      }
    }
    const std::size_t LS = static_cast<std::size_t>(double(T) / teacher_step);
    const std::size_t per_word = LS / n_words;
    utt.teacher.frame_rate = static_cast<float>(spec.teacher_rate);
    utt.teacher.frames = Tensor<float>(Shape{LS, spec.vocab});
    const long radius = static_cast<long>(per_word / 8);
    for (std::size_t f = 0; f < LS; ++f)
      for (long d = -radius; d <= radius; ++d) {
        const long g = std::clamp<long>(static_cast<long>(f) + d, 0, static_cast<long>(LS) - 1);
        utt.teacher.frames(f, words[static_cast<std::size_t>(g) / per_word]) += 1.0f / float(2 * radius + 1);
      }
    out.push_back(std::move(utt));
  }
  return out;
}

// Writes <id>.wav, <id>.s3te and a manifest.tsv (id, wav, transcript, teacher).
inline void write_dataset(const std::string& dir, const std::vector<SynthUtterance>& data, double sample_rate) {
  std::filesystem::create_directories(dir);
  std::ofstream manifest(std::filesystem::path(dir) / "manifest.tsv", std::ios::trunc);
  if (!manifest) throw InputError("cannot write manifest in " + dir);
  manifest << "id\twav\ttranscript\tteacher\n";
  for (const auto& u : data) {
    write_wav((std::filesystem::path(dir) / (u.id + ".wav")).string(), Waveform{u.samples, sample_rate});
    save_teacher((std::filesystem::path(dir) / (u.id + ".s3te")).string(), u.teacher);
    manifest << u.id << '\t' << u.id << ".wav\t" << u.transcript << '\t' << u.id << ".s3te\n";
  }
}

}  // namespace s3tts
