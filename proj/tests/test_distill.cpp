#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>

#include "s3tts/distill/distill.hpp"
#include "s3tts/quant/split_rvq.hpp"
#include "test_util.hpp"

using namespace s3tts;
using V = Var<double>;

namespace {

struct TempDir {
  std::filesystem::path path;
  TempDir() : path(std::filesystem::temp_directory_path() / "s3tts_distill_test") {
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
  std::string file(const char* name) const { return (path / name).string(); }
};

// Identity head so the loss compares c0 with the teacher directly.
ProjectionHead<double> identity_head(std::size_t D) {
  ProjectionHead<double> h;
  Tensor<double> w(Shape{D, D});
  for (std::size_t i = 0; i < D; ++i) w(i, i) = 1;
  h.weight = make_param(w);
  h.bias = make_param(Tensor<double>(Shape{D}));
  return h;
}

}  // namespace

TEST_CASE("teacher file format", "[distill][io]") {
  TempDir dir;
  TeacherEmbeddings e;
  e.frame_rate = 50;
  e.frames = Tensor<float>(Shape{8, 4});
  for (std::size_t i = 0; i < 32; ++i) e.frames[i] = 0.25f * float(i) - 3.0f;
  save_teacher(dir.file("a.s3te"), e);
  auto r = load_teacher(dir.file("a.s3te"));
  CHECK(r.frames.shape() == Shape{8, 4});
  CHECK(r.frames == e.frames);
  CHECK(r.frame_rate == 50.0f);

  SECTION("save of load is byte-identical") {
    save_teacher(dir.file("b.s3te"), r);
    CHECK(io::load_file(dir.file("a.s3te")) == io::load_file(dir.file("b.s3te")));
  }
  SECTION("truncated payload") {
    auto bytes = io::load_file(dir.file("a.s3te"));
    bytes.resize(bytes.size() - 3);
    std::ofstream(dir.file("c.s3te"), std::ios::binary).write(reinterpret_cast<const char*>(bytes.data()), bytes.size());
    CHECK_THROWS_AS(load_teacher(dir.file("c.s3te")), FormatError);
  }
  SECTION("bad magic and version") {
    auto bytes = io::load_file(dir.file("a.s3te"));
    bytes[3] = 'X';
    std::ofstream(dir.file("d.s3te"), std::ios::binary).write(reinterpret_cast<const char*>(bytes.data()), bytes.size());
    CHECK_THROWS_AS(load_teacher(dir.file("d.s3te")), FormatError);
    bytes[3] = 'E';
    bytes[4] = 2;
    std::ofstream(dir.file("e.s3te"), std::ios::binary).write(reinterpret_cast<const char*>(bytes.data()), bytes.size());
    CHECK_THROWS_AS(load_teacher(dir.file("e.s3te")), FormatError);
  }
  SECTION("NaN payload") {
    e.frames[5] = std::numeric_limits<float>::quiet_NaN();
    save_teacher(dir.file("f.s3te"), e);
    CHECK_THROWS_AS(load_teacher(dir.file("f.s3te")), DataError);
  }
}

TEST_CASE("resample_teacher", "[distill]") {
  CHECK(resample_teacher(Tensor<double>(Shape{4, 1}, {1, 2, 3, 4}), 1)[0] == 2.5);
  Rng rng(1);
  auto x = test::random_tensor(Shape{6, 3}, rng);
  CHECK(resample_teacher(x, 6) == x);
  auto big = test::random_tensor(Shape{40, 8}, rng);
  auto r = resample_teacher(big, 10);
  for (std::size_t t = 0; t < 10; ++t)
    for (std::size_t j = 0; j < 8; ++j) {
      const double m = (big(4 * t, j) + big(4 * t + 1, j) + big(4 * t + 2, j) + big(4 * t + 3, j)) / 4;
      CHECK(std::abs(r(t, j) - m) < 1e-15);
    }
  SECTION("ragged tail repeats the last frame") {
    auto z = resample_teacher(Tensor<double>(Shape{5, 1}, {1, 2, 3, 4, 5}), 2);
    CHECK(z[0] == 2.0);
    CHECK(z[1] == Catch::Approx(14.0 / 3).epsilon(1e-15));
  }
  CHECK_THROWS_AS(resample_teacher(x, 7), LengthError);
}

TEST_CASE("distill_loss reference cases", "[distill]") {
  const auto head = identity_head(2);
  Tensor<double> teacher(Shape{3, 2}, {1, 0, 0, 2, -1, -1});
  SECTION("parallel") { CHECK(std::abs(distill_loss(V(Tensor<double>(Shape{3, 2}, {2, 0, 0, 5, -3, -3})), teacher, head).item()) < 1e-7); }
  SECTION("orthogonal") {
    CHECK(std::abs(distill_loss(V(Tensor<double>(Shape{3, 2}, {0, 1, 3, 0, 1, -1})), teacher, head).item() - 1) < 1e-12);
  }
  SECTION("anti-parallel") {
    CHECK(std::abs(distill_loss(V(Tensor<double>(Shape{3, 2}, {-1, 0, 0, -1, 2, 2})), teacher, head).item() - 2) < 1e-7);
  }
  SECTION("zero frames stay finite") {
    CHECK(distill_loss(V(Tensor<double>(Shape{3, 2})), teacher, head).item() == 1.0);
  }
}

TEST_CASE("distill_loss invariants", "[distill][property]") {
  Rng rng(2);
  ProjectionHead<double> head(6, 4, rng);
  for (int trial = 0; trial < 200; ++trial) {
    auto c0 = test::random_tensor(Shape{5, 4}, rng, -2, 2);
    auto teacher = test::random_tensor(Shape{20, 6}, rng, -2, 2);
    const double l = distill_loss(V(c0), teacher, head).item();
    CHECK(l >= 0.0);
    CHECK(l <= 2.0);
    auto scaled = c0;
    const double a = std::uniform_real_distribution<double>(0.01, 100)(rng);
    for (auto& v : scaled.data()) v *= a;
    CHECK(std::abs(distill_loss(V(scaled), teacher, head).item() - l) < 1e-6);
  }
}

TEST_CASE("distill_loss gradients", "[distill][gradcheck]") {
  Rng rng(3);
  ProjectionHead<double> head(6, 4, rng);
  auto teacher = test::random_tensor(Shape{12, 6}, rng);
  auto c0 = test::random_tensor(Shape{3, 4}, rng);
  DifferentiableFn<double> f = [&](const std::vector<V>& in) {
    ProjectionHead<double> h;
    h.weight = in[1];
    h.bias = in[2];
    return distill_loss(in[0], teacher, h);
  };
  CHECK(grad_check(f, {c0, head.weight.value(), head.bias.value()}) < 1e-5);

  SECTION("teacher side receives nothing, head receives gradient") {
    V c(c0, true);
    backward(distill_loss(c, teacher, head));
    CHECK(head.weight.has_grad());
    CHECK(c.has_grad());
  }
}

TEST_CASE("distillation leaves the acoustic codebooks untouched", "[distill][quant]") {
  Rng rng(4);
  QuantizerStack<double> stack(4, 16, 4, rng);
  ProjectionHead<double> head(6, 4, rng);
  V z(test::random_tensor(Shape{10, 4}, rng), true);
  auto r = split_quantize(stack, z);
  backward(distill_loss(r.c0, test::random_tensor(Shape{40, 6}, rng), head));
  CHECK(z.has_grad());
  for (const auto& cb : stack.acoustic)
    for (double g : cb.entries.grad()) CHECK(g == 0.0);
}
