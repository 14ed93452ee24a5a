#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "s3tts/errors.hpp"
#include "s3tts/io/binary.hpp"

namespace s3tts {

// K x L codebook indices; row 0 semantic, rows 1..K-1 acoustic levels.
struct CodeGrid {
  std::size_t K = 0;
  std::size_t L = 0;
  std::size_t codebook_size = 0;
  std::vector<int> codes;  // row-major [K, L]

  CodeGrid() = default;
  CodeGrid(std::size_t k, std::size_t l, std::size_t cb) : K(k), L(l), codebook_size(cb), codes(k * l, 0) {}

  int& at(std::size_t k, std::size_t t) { return codes[k * L + t]; }
  int at(std::size_t k, std::size_t t) const { return codes[k * L + t]; }

  std::vector<int> row(std::size_t k) const {
    return std::vector<int>(codes.begin() + static_cast<long>(k * L), codes.begin() + static_cast<long>((k + 1) * L));
  }
  std::vector<int> column(std::size_t t) const {
    std::vector<int> c(K);
    for (std::size_t k = 0; k < K; ++k) c[k] = at(k, t);
    return c;
  }

  void validate() const {
    if (codes.size() != K * L) throw ShapeError("CodeGrid: storage does not match K x L");
    for (int c : codes)
      if (c < 0 || static_cast<std::size_t>(c) >= codebook_size)
        throw CorruptCodeError("CodeGrid: index " + std::to_string(c) + " outside [0, " +
                               std::to_string(codebook_size) + ")");
  }

  friend bool operator==(const CodeGrid&, const CodeGrid&) = default;
};

inline constexpr std::uint32_t kCodeGridVersion = 1;

inline void write_codegrid(const std::string& path, const CodeGrid& g) {
  g.validate();
  if (g.codebook_size > 65536) throw ConfigError("CodeGrid: codebook too large for 16-bit indices");
  io::ByteWriter w;
  w.bytes("S3CG", 4);
  w.u32(kCodeGridVersion);
  w.u32(static_cast<std::uint32_t>(g.K));
  w.u32(static_cast<std::uint32_t>(g.L));
  w.u32(static_cast<std::uint32_t>(g.codebook_size));
  for (int c : g.codes) w.u16(static_cast<std::uint16_t>(c));
  w.save(path);
}

inline CodeGrid read_codegrid(const std::string& path) {
  io::ByteReader r(io::load_file(path), path);
  if (r.tag() != "S3CG") throw FormatError(path + ": bad magic, expected S3CG");
  if (r.u32() != kCodeGridVersion) throw FormatError(path + ": unsupported CodeGrid version");
  CodeGrid g;
  g.K = r.u32();
  g.L = r.u32();
  g.codebook_size = r.u32();
  if (r.remaining() != 2 * g.K * g.L) throw FormatError(path + ": payload size does not match header");
  g.codes.resize(g.K * g.L);
  for (auto& c : g.codes) c = r.u16();
  g.validate();
  return g;
}

}  // namespace s3tts
