#include "dull/synth.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "dull/cifar.hpp"
#include "dull/rng.hpp"

namespace dull {

LabeledDataset make_label_source(int classes, int per_class) {
  LabeledDataset d;
  d.class_count = classes;
  int id = 0;
  for (int c = 0; c < classes; ++c)
    for (int i = 0; i < per_class; ++i) {
      Instance inst;
      inst.id = id++;
      inst.true_label = c;
      d.instances.push_back(std::move(inst));
    }
  return d;
}

std::pair<LabeledDataset, LabeledDataset> make_blob_source(
    int classes, int train_per_class, int test_per_class, int dim,
    double signal, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<std::vector<double>> centers(static_cast<std::size_t>(classes));
  for (auto& ctr : centers) {
    ctr.resize(static_cast<std::size_t>(dim));
    for (auto& v : ctr) v = signal * rng.normal();
  }
  auto sample = [&](int c) {
    std::vector<double> x = centers[static_cast<std::size_t>(c)];
    for (auto& v : x) v += rng.normal();
    return x;
  };
  LabeledDataset train, test;
  train.class_count = test.class_count = classes;
  int id = 0;
  for (int c = 0; c < classes; ++c)
    for (int i = 0; i < train_per_class; ++i) {
      Instance inst;
      inst.id = id++;
      inst.true_label = c;
      inst.payload = sample(c);
      train.instances.push_back(std::move(inst));
    }
  for (int c = 0; c < classes; ++c)
    for (int i = 0; i < test_per_class; ++i) {
      Instance inst;
      inst.id = id++;
      inst.true_label = c;
      inst.split = "test";
      inst.payload = sample(c);
      test.instances.push_back(std::move(inst));
    }
  return {std::move(train), std::move(test)};
}

namespace {

// 8x8 random grid bilinearly upsampled to 32x32, zero mean / unit std.
std::vector<double> smooth_field(Rng& rng) {
  constexpr int g = 8, s = 32;
  std::vector<double> grid(g * g);
  for (auto& v : grid) v = rng.normal();
  std::vector<double> field(s * s);
  const double scale = static_cast<double>(g) / s;
  for (int y = 0; y < s; ++y)
    for (int x = 0; x < s; ++x) {
      const double fy = y * scale, fx = x * scale;
      const int y0 = std::min(g - 1, static_cast<int>(fy));
      const int x0 = std::min(g - 1, static_cast<int>(fx));
      const int y1 = std::min(g - 1, y0 + 1), x1 = std::min(g - 1, x0 + 1);
      const double wy = fy - y0, wx = fx - x0;
      field[y * s + x] = (1 - wy) * ((1 - wx) * grid[y0 * g + x0] +
                                     wx * grid[y0 * g + x1]) +
                         wy * ((1 - wx) * grid[y1 * g + x0] +
                               wx * grid[y1 * g + x1]);
    }
  double mean = 0.0;
  for (double v : field) mean += v;
  mean /= field.size();
  double var = 0.0;
  for (double v : field) var += (v - mean) * (v - mean);
  const double stddev = std::sqrt(var / field.size());
  for (auto& v : field) v = (v - mean) / (stddev > 0 ? stddev : 1.0);
  return field;
}

}  // namespace

void write_synthetic_image_corpus(const std::filesystem::path& dir,
                                  int classes, int train_per_class,
                                  int test_per_class, double signal,
                                  std::uint64_t seed) {
  constexpr int s = 32;
  Rng rng(seed);
  // three template fields per class (one per channel)
  std::vector<std::vector<std::vector<double>>> templates(
      static_cast<std::size_t>(classes));
  for (auto& tpl : templates) {
    tpl.resize(3);
    for (auto& ch : tpl) ch = smooth_field(rng);
  }

  auto render = [&](int c) {
    std::vector<std::uint8_t> img(kCifarImageBytes);
    const double contrast = 1.0 + 0.25 * rng.normal();
    const int dy = rng.uniform_int(-2, 2), dx = rng.uniform_int(-2, 2);
    std::vector<double> nuisance = smooth_field(rng);
    for (int ch = 0; ch < 3; ++ch) {
      const auto& tpl = templates[static_cast<std::size_t>(c)][static_cast<std::size_t>(ch)];
      for (int y = 0; y < s; ++y)
        for (int x = 0; x < s; ++x) {
          const int sy = std::clamp(y + dy, 0, s - 1);
          const int sx = std::clamp(x + dx, 0, s - 1);
          double v = signal * tpl[sy * s + sx] + nuisance[y * s + x] +
                     0.6 * rng.normal();
          v = 128.0 + 40.0 * contrast * v;
          img[static_cast<std::size_t>(ch) * s * s + y * s + x] =
              static_cast<std::uint8_t>(std::clamp(v, 0.0, 255.0));
        }
    }
    return img;
  };

  std::filesystem::create_directories(dir);
  std::vector<std::vector<std::uint8_t>> images;
  std::vector<int> labels;
  for (int c = 0; c < classes; ++c)
    for (int i = 0; i < train_per_class; ++i) {
      images.push_back(render(c));
      labels.push_back(c);
    }
  write_cifar10_batch(dir / "data_batch_1.bin", images, labels);

  images.clear();
  labels.clear();
  for (int c = 0; c < classes; ++c)
    for (int i = 0; i < test_per_class; ++i) {
      images.push_back(render(c));
      labels.push_back(c);
    }
  write_cifar10_batch(dir / "test_batch.bin", images, labels);
}

}  // namespace dull
