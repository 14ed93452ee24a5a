#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "s3tts/errors.hpp"

// Little-endian byte streams shared by every on-disk format.
namespace s3tts::io {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

inline std::vector<std::uint8_t> load_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw InputError("cannot open " + path);
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(f), {});
}

class ByteWriter {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    buf_.insert(buf_.end(), b, b + n);
  }
  void u16(std::uint16_t v) { bytes(&v, 2); }
  void u32(std::uint32_t v) { bytes(&v, 4); }
  void f32(float v) { bytes(&v, 4); }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }
  const std::vector<std::uint8_t>& buffer() const { return buf_; }

  void save(const std::string& path) const {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw InputError("cannot write " + path);
    f.write(reinterpret_cast<const char*>(buf_.data()), static_cast<std::streamsize>(buf_.size()));
    if (!f) throw InputError("short write to " + path);
  }

 private:
  std::vector<std::uint8_t> buf_;
};

// Every read past the end is a FormatError naming the source.
class ByteReader {
 public:
  ByteReader(std::vector<std::uint8_t> data, std::string source) : data_(std::move(data)), src_(std::move(source)) {}

  void read(void* p, std::size_t n) {
    if (n > data_.size() - pos_) throw FormatError(src_ + ": truncated");
    std::memcpy(p, data_.data() + pos_, n);
    pos_ += n;
  }
  std::uint16_t u16() {
    std::uint16_t v;
    read(&v, 2);
    return v;
  }
  std::uint32_t u32() {
    std::uint32_t v;
    read(&v, 4);
    return v;
  }
  float f32() {
    float v;
    read(&v, 4);
    return v;
  }
  std::string tag() {
    std::string s(4, '\0');
    read(s.data(), 4);
    return s;
  }
  std::string str() {
    const std::uint32_t n = u32();
    std::string s(n, '\0');
    read(s.data(), n);
    return s;
  }
  void skip(std::size_t n) {
    if (n > data_.size() - pos_) throw FormatError(src_ + ": truncated");
    pos_ += n;
  }
  bool at_end() const { return pos_ >= data_.size(); }
  std::size_t remaining() const { return data_.size() - pos_; }
  const std::string& source() const { return src_; }

 private:
  std::vector<std::uint8_t> data_;
  std::size_t pos_ = 0;
  std::string src_;
};

}  // namespace s3tts::io
