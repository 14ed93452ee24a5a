#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "s3tts/errors.hpp"
#include "s3tts/io/binary.hpp"

namespace s3tts {

struct Waveform {
  std::vector<float> samples;
  double sample_rate = 0;
};

// 16-bit PCM mono RIFF/WAVE.
inline void write_wav(const std::string& path, const Waveform& w) {
  io::ByteWriter out;
  const auto n = static_cast<std::uint32_t>(w.samples.size());
  const auto sr = static_cast<std::uint32_t>(std::lround(w.sample_rate));
  out.bytes("RIFF", 4);
  out.u32(36 + 2 * n);
  out.bytes("WAVE", 4);
  out.bytes("fmt ", 4);
  out.u32(16);
  out.u16(1);
  out.u16(1);
  out.u32(sr);
  out.u32(sr * 2);
  out.u16(2);
  out.u16(16);
  out.bytes("data", 4);
  out.u32(2 * n);
  for (float s : w.samples) {
    const float c = std::clamp(s, -1.0f, 1.0f);
    out.u16(static_cast<std::uint16_t>(static_cast<std::int16_t>(std::lround(c * 32767.0f))));
  }
  out.save(path);
}

// Rejects anything that is not PCM16 mono. A positive expected_rate must
// match the file; there is no resampling.
inline Waveform read_wav(const std::string& path, double expected_rate = 0) {
  io::ByteReader in(io::load_file(path), path);
  if (in.tag() != "RIFF") throw FormatError(path + ": not a RIFF file");
  in.u32();
  if (in.tag() != "WAVE") throw FormatError(path + ": not a WAVE file");
  Waveform w;
  bool have_fmt = false;
  while (!in.at_end()) {
    const std::string id = in.tag();
    const std::uint32_t len = in.u32();
    if (id == "fmt ") {
      const std::uint16_t fmt = in.u16(), ch = in.u16();
      w.sample_rate = in.u32();
      in.u32();
      in.u16();
      const std::uint16_t bits = in.u16();
      if (fmt != 1 || ch != 1 || bits != 16) throw FormatError(path + ": only 16-bit PCM mono is supported");
      in.skip(len - 16);
      have_fmt = true;
    } else if (id == "data") {
      if (!have_fmt) throw FormatError(path + ": data chunk before fmt chunk");
      w.samples.resize(len / 2);
      for (auto& s : w.samples) s = float(static_cast<std::int16_t>(in.u16())) / 32767.0f;
      break;
    } else {
      in.skip(len + (len & 1));
    }
  }
  if (!have_fmt) throw FormatError(path + ": missing fmt chunk");
  if (expected_rate > 0 && std::lround(expected_rate) != std::lround(w.sample_rate))
    throw ConfigError(path + ": sample rate " + std::to_string(std::lround(w.sample_rate)) + " Hz, expected " +
                      std::to_string(std::lround(expected_rate)) + " Hz");
  return w;
}

}  // namespace s3tts
