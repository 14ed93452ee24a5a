#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "s3tts/codec/config.hpp"
#include "s3tts/codec/wav.hpp"
#include "s3tts/distill/distill.hpp"
#include "s3tts/lm/dual_lm.hpp"
#include "s3tts/train/codec_trainer.hpp"

namespace s3tts {

struct UtteranceRecord {
  std::string id;
  std::string wav_path;
  std::string transcript;
  TextTokens tokens;
  std::string teacher_path;  // empty when absent
};

struct Utterance {
  UtteranceRecord record;
  std::vector<float> samples;
  std::optional<TeacherEmbeddings> teacher;
};

// Reads <dir>/manifest.tsv (header: id, wav, transcript, teacher). Paths are
// relative to dir.
inline std::vector<UtteranceRecord> read_manifest(const std::string& dir, const Tokenizer& tok) {
  const auto root = std::filesystem::path(dir);
  std::ifstream in(root / "manifest.tsv");
  if (!in) throw InputError("cannot open " + (root / "manifest.tsv").string());
  std::string line;
  if (!std::getline(in, line) || line.rfind("id\twav\ttranscript", 0) != 0)
    throw FormatError((root / "manifest.tsv").string() + ": missing header");
  std::vector<UtteranceRecord> out;
  for (std::size_t no = 2; std::getline(in, line); ++no) {
    if (line.empty()) continue;
    std::vector<std::string> cols;
    std::stringstream ss(line);
    for (std::string c; std::getline(ss, c, '\t');) cols.push_back(c);
    if (cols.size() < 3 || cols.size() > 4)
      throw FormatError("manifest line " + std::to_string(no) + ": expected 3 or 4 tab-separated columns");
    UtteranceRecord r;
    r.id = cols[0];
    r.wav_path = (root / cols[1]).string();
    r.transcript = cols[2];
    r.tokens = tok.encode(r.transcript);
    if (cols.size() == 4 && !cols[3].empty()) r.teacher_path = (root / cols[3]).string();
    out.push_back(std::move(r));
  }
  if (out.empty()) throw DataError(dir + ": manifest lists no utterances");
  return out;
}

// Loads audio (and teacher, when listed) and checks the teacher covers the
// waveform at its declared frame rate to within one frame.
inline Utterance load_utterance(const UtteranceRecord& r, double sample_rate) {
  Utterance u;
  u.record = r;
  u.samples = read_wav(r.wav_path, sample_rate).samples;
  if (!r.teacher_path.empty()) {
    u.teacher = load_teacher(r.teacher_path);
    const double expect = double(u.samples.size()) * double(u.teacher->frame_rate) / sample_rate;
    const double got = double(u.teacher->frames.dim(0));
    if (std::abs(got - expect) >= 1.0)
      throw AlignmentError(r.id + ": teacher has " + std::to_string(std::size_t(got)) + " frames, waveform implies " +
                           std::to_string(expect));
  }
  return u;
}

inline std::vector<Utterance> load_dataset(const std::string& dir, const Tokenizer& tok, double sample_rate) {
  std::vector<Utterance> out;
  for (const auto& r : read_manifest(dir, tok)) out.push_back(load_utterance(r, sample_rate));
  return out;
}

// One codec batch from every utterance, cropped to the shortest clip rounded
// down to a whole number of frames. Teachers are cropped in proportion.
inline CodecBatch make_codec_batch(const std::vector<Utterance>& utts, std::size_t hop) {
  if (utts.empty()) throw DataError("make_codec_batch: no utterances");
  std::size_t T = utts.front().samples.size();
  for (const auto& u : utts) T = std::min(T, u.samples.size());
  T -= T % hop;
  if (T == 0) throw LengthError("make_codec_batch: shortest clip is below one frame");
  CodecBatch b;
  b.wave = Tensor<float>(Shape{utts.size(), T});
  for (std::size_t i = 0; i < utts.size(); ++i) {
    const auto& u = utts[i];
    std::copy_n(u.samples.begin(), T, b.wave.data().begin() + static_cast<long>(i * T));
    if (!u.teacher) continue;
    const auto& f = u.teacher->frames;
    const std::size_t LS = std::max<std::size_t>(1, f.dim(0) * T / u.samples.size());
    Tensor<float> t(Shape{LS, f.dim(1)});
    std::copy_n(f.data().begin(), LS * f.dim(1), t.data().begin());
    b.teachers.push_back(std::move(t));
  }
  if (!b.teachers.empty() && b.teachers.size() != utts.size())
    throw DataError("make_codec_batch: teachers are listed for some utterances only");
  return b;
}

}  // namespace s3tts
