#pragma once

#include <cmath>
#include <cstdint>
#include <string>

#include "s3tts/io/binary.hpp"
#include "s3tts/numerics.hpp"

namespace s3tts {

struct TeacherEmbeddings {
  Tensor<float> frames;  // [L_S, D_S]
  float frame_rate = 0;

  std::size_t length() const { return frames.dim(0); }
  std::size_t dim() const { return frames.dim(1); }
};

inline constexpr std::uint32_t kTeacherVersion = 1;

inline void save_teacher(const std::string& path, const TeacherEmbeddings& e) {
  io::ByteWriter w;
  w.bytes("S3TE", 4);
  w.u32(kTeacherVersion);
  w.u32(static_cast<std::uint32_t>(e.length()));
  w.u32(static_cast<std::uint32_t>(e.dim()));
  w.f32(e.frame_rate);
  for (float v : e.frames.data()) w.f32(v);
  w.save(path);
}

inline TeacherEmbeddings load_teacher(const std::string& path) {
  io::ByteReader r(io::load_file(path), path);
  if (r.tag() != "S3TE") throw FormatError(path + ": bad magic, expected S3TE");
  if (r.u32() != kTeacherVersion) throw FormatError(path + ": unsupported teacher file version");
  const std::size_t L = r.u32(), D = r.u32();
  TeacherEmbeddings e;
  e.frame_rate = r.f32();
  if (L == 0 || D == 0) throw FormatError(path + ": empty teacher embedding");
  if (r.remaining() != 4 * L * D)
    throw FormatError(path + ": payload holds " + std::to_string(r.remaining()) + " bytes, header implies " +
                      std::to_string(4 * L * D));
  e.frames = Tensor<float>(Shape{L, D});
  for (auto& v : e.frames.data()) v = r.f32();
  if (!e.frames.all_finite()) throw DataError(path + ": non-finite teacher values");
  if (!(e.frame_rate > 0)) throw DataError(path + ": frame rate must be positive");
  return e;
}

// Non-overlapping mean over windows of r = ceil(L_S / L) frames; a ragged
// tail is filled by repeating the last teacher frame.
template <class T>
Tensor<T> resample_teacher(const Tensor<T>& frames, std::size_t L) {
  const std::size_t LS = frames.dim(0), D = frames.dim(1);
  if (L == 0 || LS < L)
    throw LengthError("resample_teacher: " + std::to_string(LS) + " teacher frames cannot cover " + std::to_string(L) +
                      " codec frames");
  const std::size_t r = (LS + L - 1) / L;
  Tensor<T> out(Shape{L, D});
  for (std::size_t t = 0; t < L; ++t)
    for (std::size_t i = 0; i < r; ++i) {
      const std::size_t src = std::min(t * r + i, LS - 1);
      for (std::size_t j = 0; j < D; ++j) out(t, j) += frames(src, j);
    }
  for (auto& v : out.data()) v /= T(r);
  return out;
}

template <class T>
struct ProjectionHead {
  Var<T> weight;  // [D_S, D]
  Var<T> bias;    // [D]

  ProjectionHead() = default;
  ProjectionHead(std::size_t teacher_dim, std::size_t latent_dim, Rng& rng)
      : weight(make_param(randn<T>(Shape{teacher_dim, latent_dim}, 1.0 / std::sqrt(double(teacher_dim)), rng))),
        bias(make_param(Tensor<T>(Shape{latent_dim}))) {}

  // teacher[N, D_S] (already resampled) -> [N, D]; the teacher is constant.
  Var<T> operator()(const Tensor<T>& teacher) const { return ops::linear(constant(teacher), weight, bias); }

  void collect(ParamList<T>& out, const std::string& prefix) const {
    out.push_back({prefix + ".weight", weight, true});
    out.push_back({prefix + ".bias", bias, false});
  }
};

// 1 - mean_t cos(c0_t, target_t) over rows of [N, D].
template <class T>
Var<T> distill_loss_rows(const Var<T>& c0, const Var<T>& target, T eps = T(1e-8)) {
  return ops::affine(ops::mean(ops::cosine_similarity(c0, target, eps)), T(-1), T(1));
}

// c0[L, D] against one utterance's teacher frames [L_S, D_S].
template <class T>
Var<T> distill_loss(const Var<T>& c0, const Tensor<T>& teacher, const ProjectionHead<T>& head) {
  return distill_loss_rows(c0, head(resample_teacher(teacher, c0.shape().at(0))));
}

}  // namespace s3tts
