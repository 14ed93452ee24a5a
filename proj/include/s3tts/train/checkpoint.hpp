#pragma once

#include <map>
#include <string>
#include <vector>

#include "s3tts/io/binary.hpp"
#include "s3tts/numerics.hpp"

namespace s3tts {

inline constexpr std::uint32_t kCheckpointVersion = 1;
// Optimizer state lives under this prefix; model parameters may not use it.
inline const std::string kOptimPrefix = "__optim__/";

using TensorMap = std::map<std::string, Tensor<float>>;

inline void write_checkpoint(const std::string& path, const TensorMap& tensors) {
  io::ByteWriter w;
  w.bytes("S3CK", 4);
  w.u32(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, t] : tensors) {
    w.str(name);
    w.u32(static_cast<std::uint32_t>(t.rank()));
    for (auto d : t.shape()) w.u32(static_cast<std::uint32_t>(d));
    for (float v : t.data()) w.f32(v);
  }
  w.save(path);
}

inline TensorMap read_checkpoint(const std::string& path) {
  io::ByteReader r(io::load_file(path), path);
  if (r.tag() != "S3CK") throw FormatError(path + ": bad magic, expected S3CK");
  if (r.u32() != kCheckpointVersion) throw FormatError(path + ": unsupported checkpoint version");
  const std::uint32_t n = r.u32();
  TensorMap out;
  for (std::uint32_t i = 0; i < n; ++i) {
    std::string name = r.str();
    Shape s(r.u32());
    for (auto& d : s) d = r.u32();
    Tensor<float> t(s);
    for (auto& v : t.data()) v = r.f32();
    if (!out.emplace(std::move(name), std::move(t)).second) throw FormatError(path + ": duplicate tensor name");
  }
  if (!r.at_end()) throw FormatError(path + ": trailing bytes");
  return out;
}

inline void store_params(TensorMap& out, const ParamList<float>& params) {
  for (const auto& p : params) {
    if (p.name.rfind(kOptimPrefix, 0) == 0) throw ConfigError("parameter name uses the reserved optimizer prefix");
    out[p.name] = p.var.value();
  }
}

inline void load_params(ParamList<float>& params, const TensorMap& in) {
  for (auto& p : params) {
    auto it = in.find(p.name);
    if (it == in.end()) throw FormatError("checkpoint lacks parameter " + p.name);
    if (it->second.shape() != p.var.shape())
      throw FormatError("checkpoint shape mismatch for " + p.name + ": " + shape_str(it->second.shape()) + " vs " +
                        shape_str(p.var.shape()));
    p.var.mutable_value() = it->second;
  }
}

inline void store_optimizer(TensorMap& out, const AdamW<float>& opt, const std::string& tag) {
  const std::string base = kOptimPrefix + tag + "/";
  out[base + "step"] = Tensor<float>::scalar(float(opt.step_count()));
  for (const auto& s : opt.slots()) {
    out[base + s.param.name + "/m"] = Tensor<float>(s.param.var.shape(), s.m);
    out[base + s.param.name + "/v"] = Tensor<float>(s.param.var.shape(), s.v);
  }
}

inline void load_optimizer(AdamW<float>& opt, const TensorMap& in, const std::string& tag) {
  const std::string base = kOptimPrefix + tag + "/";
  auto get = [&](const std::string& key) -> const Tensor<float>& {
    auto it = in.find(key);
    if (it == in.end()) throw FormatError("checkpoint lacks optimizer state " + key);
    return it->second;
  };
  opt.set_step_count(static_cast<long>(get(base + "step")[0]));
  for (auto& s : opt.slots()) {
    s.m = get(base + s.param.name + "/m").storage();
    s.v = get(base + s.param.name + "/v").storage();
    if (s.m.size() != s.param.var.size() || s.v.size() != s.param.var.size())
      throw FormatError("optimizer state size mismatch for " + s.param.name);
  }
}

}  // namespace s3tts
