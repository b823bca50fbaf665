#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "dull/checkpoint.hpp"
#include "dull/ifd.hpp"
#include "dull/net.hpp"
#include "dull/rng.hpp"

using namespace dull;

namespace {

Tensor random_batch(int n, int d, std::uint64_t seed) {
  Rng rng(seed);
  Tensor x({n, d});
  for (auto& v : x.data) v = rng.normal();
  return x;
}

Tensor random_image_batch(int n, int c, int h, int w, std::uint64_t seed) {
  Rng rng(seed);
  Tensor x({n, c, h, w});
  for (auto& v : x.data) v = rng.normal();
  return x;
}

std::vector<int> random_labels(int n, int classes, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<int> y(static_cast<std::size_t>(n));
  for (auto& v : y) v = static_cast<int>(rng.uniform_below(classes));
  return y;
}

// Central finite differences of ifd_loss with respect to one parameter entry.
double fd_ifd(ModelBundle& bundle, Tensor& param, std::size_t j,
              const Tensor& x, const std::vector<int>& y, double beta, int p) {
  const double h = 1e-5;
  const double orig = param.data[j];
  param.data[j] = orig + h;
  const double up = ifd_loss(bundle, x, y, beta, p).total;
  param.data[j] = orig - h;
  const double dn = ifd_loss(bundle, x, y, beta, p).total;
  param.data[j] = orig;
  return (up - dn) / (2 * h);
}

void gradcheck_bundle(ModelBundle bundle, const Tensor& x,
                      const std::vector<int>& y) {
  const double beta = 0.01;
  auto params = bundle_params(bundle);
  auto grads = zeros_like(params);
  ifd_loss_grad(bundle, x, y, beta, 1, grads);
  Rng pick(5);
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Tensor& t = *params[pi].tensor;
    const int probes = 6;
    for (int k = 0; k < probes; ++k) {
      const auto j =
          static_cast<std::size_t>(pick.uniform_below(t.data.size()));
      const double fd = fd_ifd(bundle, t, j, x, y, beta, 1);
      const double an = grads[pi].data[j];
      const double denom = std::max({std::abs(fd), std::abs(an), 1e-8});
      INFO(params[pi].name << "[" << j << "] fd=" << fd << " an=" << an);
      CHECK(std::abs(fd - an) / denom < 1e-4);
    }
  }
}

}  // namespace

TEST_CASE("masked_forward with identity mask equals forward exactly") {
  const auto bundle = make_mlp_bundle(12, 20, 8, 5, 3);
  const Tensor x = random_batch(7, 12, 10);
  const auto r = forward(bundle, x);
  Tensor ones({8});
  ones.fill(1.0);
  const Tensor masked = masked_forward(bundle, r.features, ones);
  REQUIRE(masked.same_shape(r.logits));
  for (std::size_t j = 0; j < masked.data.size(); ++j)
    CHECK(masked.data[j] == r.logits.data[j]);
}

TEST_CASE("masked_forward with zero mask is the classifier of zero") {
  const auto bundle = make_mlp_bundle(6, 10, 4, 3, 1);
  const Tensor x = random_batch(2, 6, 2);
  const auto r = forward(bundle, x);
  Tensor zeros({4});
  const Tensor masked = masked_forward(bundle, r.features, zeros);
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 3; ++j)
      CHECK(masked.at(i, j) == doctest::Approx(bundle.classifier.b[j]).epsilon(1e-12));
}

TEST_CASE("masked_forward validates mask length") {
  const auto bundle = make_mlp_bundle(6, 10, 4, 3, 1);
  const Tensor x = random_batch(2, 6, 2);
  const auto r = forward(bundle, x);
  CHECK_THROWS_AS(masked_forward(bundle, r.features, Tensor({5})), NetError);
  CHECK_THROWS_AS(masked_forward(bundle, r.features, Tensor({3, 4})), NetError);
}

TEST_CASE("project_g clamps and is idempotent") {
  Tensor g({2, 2});
  g.data = {1.3, -0.2, 0.5, 1.0};
  project_g(g);
  CHECK(g.data == std::vector<double>{1.0, 0.0, 0.5, 1.0});
  Tensor again = g;
  project_g(again);
  CHECK(again.data == g.data);
}

TEST_CASE("forward determinism and batch shape contract") {
  const auto bundle = make_conv_bundle(3, {4, 6}, 5, 11);
  const Tensor x = random_image_batch(3, 3, 8, 8, 4);
  const auto a = forward(bundle, x);
  const auto b = forward(bundle, x);
  CHECK(a.logits == b.logits);
  CHECK(a.features == b.features);
  CHECK(a.logits.dim(0) == 3);
  CHECK(a.logits.dim(1) == 5);
  CHECK(a.features.dim(1) == bundle.feature_dim());
  // features are post-relu pooled values
  for (double v : a.features.data) CHECK(v >= 0.0);
}

TEST_CASE("gradient check through the mlp path (masked branch, G, penalties)") {
  const auto bundle = make_mlp_bundle(5, 9, 6, 4, 21);
  const Tensor x = random_batch(3, 5, 22);
  const auto y = random_labels(3, 4, 23);
  gradcheck_bundle(bundle, x, y);
}

TEST_CASE("gradient check through the conv path") {
  const auto bundle = make_conv_bundle(2, {3, 5}, 3, 31);
  const Tensor x = random_image_batch(2, 2, 8, 8, 32);
  const auto y = random_labels(2, 3, 33);
  gradcheck_bundle(bundle, x, y);
}

TEST_CASE("orthogonality and sparsity gradients match finite differences") {
  Rng rng(7);
  Tensor g({6, 4});
  for (auto& v : g.data) v = 0.05 + 0.9 * rng.uniform();
  const double beta = 0.37;

  Tensor dg_orth(g.shape);
  orthogonality_penalty_grad(g, beta, dg_orth);
  Tensor dg_sp1(g.shape), dg_sp2(g.shape);
  sparsity_penalty_grad(g, 1, 1.0, dg_sp1);
  sparsity_penalty_grad(g, 2, 1.0, dg_sp2);

  const double h = 1e-6;
  for (std::size_t j = 0; j < g.data.size(); ++j) {
    const double orig = g.data[j];
    g.data[j] = orig + h;
    const double o_up = orthogonality_penalty(g, beta);
    const double s1_up = sparsity_penalty(g, 1);
    const double s2_up = sparsity_penalty(g, 2);
    g.data[j] = orig - h;
    const double o_dn = orthogonality_penalty(g, beta);
    const double s1_dn = sparsity_penalty(g, 1);
    const double s2_dn = sparsity_penalty(g, 2);
    g.data[j] = orig;
    CHECK(std::abs((o_up - o_dn) / (2 * h) - dg_orth.data[j]) /
              std::max(1e-8, std::abs(dg_orth.data[j])) < 1e-4);
    CHECK(std::abs((s1_up - s1_dn) / (2 * h) - dg_sp1.data[j]) < 1e-6);
    CHECK(std::abs((s2_up - s2_dn) / (2 * h) - dg_sp2.data[j]) /
              std::max(1e-8, std::abs(dg_sp2.data[j])) < 1e-4);
  }
}

TEST_CASE("soft cross entropy agrees with hard labels on one-hot targets") {
  const auto logits = random_batch(4, 6, 77);
  const auto y = random_labels(4, 6, 78);
  Tensor onehot({4, 6});
  for (int i = 0; i < 4; ++i) onehot.at(i, y[static_cast<std::size_t>(i)]) = 1.0;
  Tensor d1({4, 6}), d2({4, 6});
  const double a = cross_entropy(logits, y, &d1);
  const double b = soft_cross_entropy(logits, onehot, &d2);
  CHECK(a == doctest::Approx(b).epsilon(1e-12));
  for (std::size_t j = 0; j < d1.data.size(); ++j)
    CHECK(d1.data[j] == doctest::Approx(d2.data[j]).epsilon(1e-12));
}

TEST_CASE("checkpoint round trip preserves every parameter bit") {
  for (const bool conv : {false, true}) {
    ModelBundle bundle = conv ? make_conv_bundle(3, {4, 6}, 7, 5)
                              : make_mlp_bundle(11, 13, 6, 7, 5);
    bundle.stage = Stage::unlearned;
    bundle.config_hash = 0xabcdef0123456789ull;
    const auto path = std::filesystem::temp_directory_path() /
                      (conv ? "dull_ckpt_conv.bin" : "dull_ckpt_mlp.bin");
    save_checkpoint(bundle, path);
    auto loaded = load_checkpoint(path);
    CHECK(loaded.stage == Stage::unlearned);
    CHECK(loaded.config_hash == bundle.config_hash);
    auto pa = bundle_params(bundle);
    auto pb = bundle_params(loaded);
    REQUIRE(pa.size() == pb.size());
    for (std::size_t i = 0; i < pa.size(); ++i) {
      CHECK(pa[i].name == pb[i].name);
      CHECK(*pa[i].tensor == *pb[i].tensor);
    }
    CHECK_THROWS_AS(load_checkpoint(path, 99), NetError);
    CHECK_THROWS_AS(load_checkpoint(path, -1, 99), NetError);
  }
}

TEST_CASE("checkpoint refuses foreign files") {
  const auto path = std::filesystem::temp_directory_path() / "dull_not_ckpt";
  std::ofstream(path) << "not a checkpoint";
  CHECK_THROWS_AS(load_checkpoint(path), NetError);
}

TEST_CASE("golden logits: fixed-seed tiny net on the zero image") {
  const auto bundle = make_conv_bundle(3, {4, 4}, 3, 12345);
  Tensor x({1, 3, 8, 8});
  const auto r = forward(bundle, x);
  const auto golden_path =
      std::filesystem::path(DULL_TEST_DATA_DIR) / "golden_forward.json";
  REQUIRE(std::filesystem::exists(golden_path));
  std::ifstream in(golden_path);
  nlohmann::json j;
  in >> j;
  const auto logits = j.at("logits").get<std::vector<double>>();
  const auto features = j.at("features").get<std::vector<double>>();
  REQUIRE(static_cast<std::int64_t>(logits.size()) == r.logits.size());
  REQUIRE(static_cast<std::int64_t>(features.size()) == r.features.size());
  for (std::size_t i = 0; i < logits.size(); ++i)
    CHECK(r.logits.data[i] == doctest::Approx(logits[i]).epsilon(1e-12));
  for (std::size_t i = 0; i < features.size(); ++i)
    CHECK(r.features.data[i] == doctest::Approx(features[i]).epsilon(1e-12));

  // same net on a fixed nonzero pattern (the zero image is a degenerate case)
  Tensor patterned({1, 3, 8, 8});
  for (std::size_t i = 0; i < patterned.data.size(); ++i)
    patterned.data[i] = 0.25 * std::sin(0.37 * static_cast<double>(i));
  const auto rp = forward(bundle, patterned);
  const auto plogits = j.at("pattern_logits").get<std::vector<double>>();
  const auto pfeatures = j.at("pattern_features").get<std::vector<double>>();
  double mag = 0.0;
  for (std::size_t i = 0; i < plogits.size(); ++i) {
    CHECK(rp.logits.data[i] ==
          doctest::Approx(plogits[i]).epsilon(1e-12).scale(1.0));
    mag += std::abs(plogits[i]);
  }
  CHECK(mag > 0.01);  // the anchor itself is nontrivial
  for (std::size_t i = 0; i < pfeatures.size(); ++i)
    CHECK(rp.features.data[i] ==
          doctest::Approx(pfeatures[i]).epsilon(1e-12).scale(1.0));
}

TEST_CASE("property: projection keeps G inside [0,1] after arbitrary steps") {
  Rng rng(9);
  for (int trial = 0; trial < 1000; ++trial) {
    Tensor g({3, 3});
    for (auto& v : g.data) v = 10.0 * rng.normal();
    project_g(g);
    for (double v : g.data) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
  }
}
