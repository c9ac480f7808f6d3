#include <gtest/gtest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "autorobust/core/errors.hpp"
#include "autorobust/data/dataset.hpp"
#include "autorobust/data/noise.hpp"
#include "autorobust/nets/networks.hpp"
#include "autorobust/nets/train.hpp"

using namespace autorobust;
using namespace autorobust::data;

namespace {

double l2(const Tensor& a, const Tensor& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("autorobust_" + name)).string();
}

}  // namespace

TEST(Shapes, DeterministicAndBalanced) {
  const Dataset a = make_shapes_dataset(10, 8, 3, 0.0, 42);
  const Dataset b = make_shapes_dataset(10, 8, 3, 0.0, 42);
  EXPECT_TRUE(a.inputs.same_values(b.inputs));
  EXPECT_EQ(a.labels, b.labels);
  EXPECT_EQ(a.size(), 30u);
  std::vector<int> count(3);
  for (std::size_t y : a.labels) {
    ASSERT_LT(y, 3u);
    ++count[y];
  }
  for (int c : count) EXPECT_GT(c, 0);
}

TEST(Shapes, PixelRangeAndNoise) {
  const Dataset d = make_shapes_dataset(5, 16, 8, 0.3, 1);
  for (double v : d.inputs.data()) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
  EXPECT_EQ(d.inputs.shape(), (grad::Shape{40, 1, 16, 16}));
  EXPECT_FALSE(make_shapes_dataset(5, 8, 3, 0.05, 1).inputs.same_values(make_shapes_dataset(5, 8, 3, 0.05, 2).inputs));
}

TEST(Shapes, ArgumentChecks) {
  EXPECT_THROW(make_shapes_dataset(5, 8, 2, 0.0, 1), ArgumentError);
  EXPECT_THROW(make_shapes_dataset(5, 8, 9, 0.0, 1), ArgumentError);
  EXPECT_THROW(make_shapes_dataset(5, 7, 3, 0.0, 1), ArgumentError);
  EXPECT_THROW(make_shapes_dataset(5, 8, 3, 0.31, 1), ArgumentError);
}

TEST(Shapes, TemplatesAreDistinct) {
  const Dataset d = make_shapes_dataset(1, 8, 8, 0.0, 3);
  for (std::size_t a = 0; a < 8; ++a)
    for (std::size_t b = a + 1; b < 8; ++b)
      EXPECT_FALSE(d.inputs.slice_rows(a, a + 1).same_values(d.inputs.slice_rows(b, b + 1))) << a << " vs " << b;
}

TEST(Shapes, SmallCnnLearnsTheTemplates) {
  const Dataset d = make_shapes_dataset(20, 8, 4, 0.05, 11);
  auto cnn = nets::build_cnn({1, 8, 8}, {8, 16}, 4, 5);
  nets::TrainSchedule s;
  s.epochs = 40;  // 5 batches per epoch, 200 steps
  s.batch_size = 16;
  s.learning_rate = 0.05;
  nets::train(*cnn, d, s, 1);
  EXPECT_GE(nets::accuracy(*cnn, d), 0.95);
}

TEST(Spirals, RadiusAndBalance) {
  const Dataset d = make_spirals_dataset(40, 1.5, 0.0, 9);
  std::size_t c0 = 0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    c0 += d.labels[i] == 0;
    const double t = static_cast<double>(i / 2 + 1) / 20.0;
    EXPECT_NEAR(std::hypot(d.inputs[2 * i], d.inputs[2 * i + 1]), t, 1e-12);
  }
  EXPECT_EQ(c0, 20u);
  EXPECT_THROW(make_spirals_dataset(41, 1.5, 0.0, 9), ArgumentError);
  EXPECT_THROW(make_spirals_dataset(6, 1.5, 0.0, 9), ArgumentError);
}

TEST(Spirals, LinearFailsWhereMlpSucceeds) {
  const Dataset d = make_spirals_dataset(200, 1.5, 0.0, 4);
  auto lin = nets::build_linear({2}, 2, 1);
  auto mlp = nets::build_mlp({2, 32, 32, 2}, 1);
  nets::TrainSchedule s;
  s.epochs = 300;
  s.batch_size = 32;
  s.learning_rate = 0.01;
  s.optimizer = nets::OptimizerKind::adam;
  nets::train(*lin, d, s, 2);
  nets::train(*mlp, d, s, 2);
  const double acc_lin = nets::accuracy(*lin, d), acc_mlp = nets::accuracy(*mlp, d);
  EXPECT_LT(acc_lin, 0.75);
  EXPECT_GT(acc_mlp, 0.75);
  EXPECT_GE(acc_mlp, 0.95);
}

TEST(Corrupt, FixedPoints) {
  Tensor zero({1, 4, 4}, 0.0);
  const Tensor b = corrupt(zero, {CorruptionKind::brightness, 1}, 0);
  for (double v : b.data()) EXPECT_DOUBLE_EQ(v, 0.1);
  Tensor half({1, 4, 4}, 0.5);
  EXPECT_TRUE(corrupt(half, {CorruptionKind::contrast, 5}, 0).same_values(half));
  Tensor c({2, 3, 6, 6}, 0.37);
  for (int s = 1; s <= 5; ++s) {
    const Tensor g = corrupt(c, {CorruptionKind::gaussian_blur, s}, 0);
    for (double v : g.data()) EXPECT_NEAR(v, 0.37, 1e-12);
    const Tensor m = corrupt(c, {CorruptionKind::motion_blur, s}, 5);
    for (double v : m.data()) EXPECT_NEAR(v, 0.37, 1e-12);
  }
  EXPECT_THROW(corrupt(zero, {CorruptionKind::brightness, 0}, 0), ArgumentError);
  EXPECT_THROW(corrupt(zero, {CorruptionKind::brightness, 6}, 0), ArgumentError);
}

TEST(Corrupt, RangeShapeAndDeterminism) {
  const Dataset d = make_shapes_dataset(3, 8, 3, 0.1, 2);
  for (auto k : {CorruptionKind::brightness, CorruptionKind::contrast, CorruptionKind::gaussian_blur,
                 CorruptionKind::motion_blur, CorruptionKind::gaussian_noise}) {
    const Tensor y = corrupt(d.inputs, {k, 3}, 7);
    EXPECT_EQ(y.shape(), d.inputs.shape());
    for (double v : y.data()) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
    EXPECT_TRUE(y.same_values(corrupt(d.inputs, {k, 3}, 7)));
  }
}

TEST(Corrupt, SeverityIncreasesDistance) {
  const Dataset d = make_shapes_dataset(25, 8, 4, 0.1, 12);
  for (auto k : {CorruptionKind::brightness, CorruptionKind::gaussian_noise}) {
    double prev = 0.0;
    for (int s = 1; s <= 5; ++s) {
      double total = 0.0;
      for (std::size_t i = 0; i < d.size(); ++i) {
        const Tensor x = d.inputs.slice_rows(i, i + 1);
        total += l2(corrupt(x, {k, s}, 1000 + i), x);
      }
      const double mean = total / static_cast<double>(d.size());
      EXPECT_GT(mean, prev + 1e-3) << corruption_name(k) << " severity " << s;
      prev = mean;
    }
  }
}

TEST(SystemNoise, IdentityConstantAndWitness) {
  const Dataset d = make_shapes_dataset(2, 8, 3, 0.1, 2);
  EXPECT_TRUE(system_noise(d.inputs, {Resampler::nearest, Resampler::nearest, 8}).same_values(d.inputs));
  Tensor c({1, 1, 8, 8}, 0.42);
  for (auto down : {Resampler::nearest, Resampler::bilinear, Resampler::bicubic, Resampler::box})
    for (auto up : {Resampler::nearest, Resampler::bilinear, Resampler::bicubic, Resampler::box}) {
      const Tensor y = system_noise(c, {down, up, 3});
      for (double v : y.data()) EXPECT_NEAR(v, 0.42, 1e-12);
      const Tensor z = system_noise(d.inputs, {down, up, 5});
      EXPECT_EQ(z.shape(), d.inputs.shape());
      for (double v : z.data()) {
        EXPECT_GE(v, 0.0);
        EXPECT_LE(v, 1.0);
      }
    }
  Tensor checker({1, 1, 8, 8});
  for (std::size_t i = 0; i < 8; ++i)
    for (std::size_t j = 0; j < 8; ++j) checker[i * 8 + j] = (i + j) % 2 ? 1.0 : 0.0;
  const Tensor a = system_noise(checker, {Resampler::nearest, Resampler::nearest, 4});
  const Tensor b = system_noise(checker, {Resampler::bilinear, Resampler::bilinear, 4});
  EXPECT_FALSE(a.same_values(b));
  EXPECT_THROW(parse_resampler("lanczos"), ConfigError);
  EXPECT_THROW(system_noise(c, {Resampler::box, Resampler::box, 1}), ArgumentError);
  EXPECT_THROW(system_noise(c, {Resampler::box, Resampler::box, 9}), ArgumentError);
}

TEST(Cifar, LoaderCases) {
  const std::string empty = temp_path("empty.bin");
  std::ofstream(empty, std::ios::binary).close();
  EXPECT_EQ(load_cifar10_binary(empty).size(), 0u);
  const std::string one = temp_path("one.bin");
  {
    std::ofstream out(one, std::ios::binary);
    out.put(3);
    for (int i = 0; i < 3072; ++i) out.put(static_cast<char>(255));
  }
  const Dataset d = load_cifar10_binary(one);
  ASSERT_EQ(d.size(), 1u);
  EXPECT_EQ(d.labels[0], 3u);
  for (double v : d.inputs.data()) EXPECT_EQ(v, 1.0);
  const std::string trunc = temp_path("trunc.bin");
  {
    std::ofstream out(trunc, std::ios::binary);
    for (int i = 0; i < 100; ++i) out.put(1);
  }
  EXPECT_THROW(load_cifar10_binary(trunc), FormatError);
  const std::string badlabel = temp_path("badlabel.bin");
  {
    std::ofstream out(badlabel, std::ios::binary);
    out.put(10);
    for (int i = 0; i < 3072; ++i) out.put(0);
  }
  EXPECT_THROW(load_cifar10_binary(badlabel), FormatError);
  for (const auto& p : {empty, one, trunc, badlabel}) std::remove(p.c_str());
}

TEST(Export, RoundTrip) {
  const Dataset d = make_shapes_dataset(3, 8, 3, 0.1, 5);
  const std::string prefix = temp_path("export");
  export_dataset(d, prefix);
  const Dataset back = import_dataset(prefix);
  EXPECT_TRUE(back.inputs.same_values(d.inputs));
  EXPECT_EQ(back.labels, d.labels);
  EXPECT_EQ(fingerprint(back), fingerprint(d));
  std::remove((prefix + ".tensor").c_str());
  std::remove((prefix + ".labels.csv").c_str());
}
