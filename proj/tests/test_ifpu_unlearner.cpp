#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "dull/ifd.hpp"
#include "dull/rng.hpp"
#include "dull/synth.hpp"
#include "dull/training_set.hpp"
#include "dull/unlearn.hpp"

using namespace dull;

namespace {

// Per-channel loop oracle, no shared code with instance_mask.
std::vector<double> brute_mask(const std::vector<int>& labels, const Tensor& g) {
  std::vector<double> m(static_cast<std::size_t>(g.dim(0)), 0.0);
  for (int ch = 0; ch < g.dim(0); ++ch) {
    double s = 0.0;
    for (int l : labels) s += g.at(ch, l);
    if (s > 1e-8) m[static_cast<std::size_t>(ch)] = 1.0;
  }
  return m;
}

TrainingSet blob_set(int classes, int per_class, int dim, double signal,
                     std::uint64_t seed, double noise) {
  auto [train, test] = make_blob_source(classes, per_class, 1, dim, signal,
                                        seed);
  train.long_tailed = true;
  const auto noisy = inject_t2h_noise(train, noise, seed + 1);
  return materialize(noisy, "train", nullptr);
}

IfpuConfig fast_ifpu(std::uint64_t seed) {
  IfpuConfig cfg;
  cfg.epochs = 1;
  cfg.batch_size = 16;
  cfg.lr = 0.01;
  cfg.seed = seed;
  cfg.augment = AugmentConfig::none();
  cfg.relabel.weak = AugmentConfig::none();
  cfg.relabel.strong = AugmentConfig::none();
  cfg.relabel.strong.enabled = true;
  cfg.relabel.strong.feat_noise = 0.1;
  return cfg;
}

}  // namespace

TEST_CASE("instance_mask: anchor example") {
  Tensor g({4, 2});
  g.data = {1, 0, 1, 0, 0, 1, 0, 1};
  const auto m = instance_mask({0}, g);
  CHECK(m.data == std::vector<double>{1, 1, 0, 0});
  const auto m1 = instance_mask({1}, g);
  CHECK(m1.data == std::vector<double>{0, 0, 1, 1});
  const auto mall = instance_mask({0, 1}, g);
  CHECK(mall.data == std::vector<double>{1, 1, 1, 1});
}

TEST_CASE("instance_mask: full label set with no zero rows is all ones") {
  Rng rng(4);
  Tensor g({6, 3});
  for (auto& v : g.data) v = 0.2 + 0.8 * rng.uniform();
  std::vector<int> all{0, 1, 2};
  const auto m = instance_mask(all, g);
  for (double v : m.data) CHECK(v == 1.0);
}

TEST_CASE("instance_mask: epsilon guard against projected float dust") {
  Tensor g({2, 2});
  g.at(0, 0) = 1e-9;   // below the guard
  g.at(1, 0) = 1e-7;   // above it
  const auto m = instance_mask({0}, g);
  CHECK(m.data == std::vector<double>{0.0, 1.0});
}

TEST_CASE("instance_mask: errors") {
  Tensor g({2, 2});
  CHECK_THROWS_AS(instance_mask({2}, g), TrainError);
  CHECK_THROWS_AS(instance_mask({-1}, g), TrainError);
  CHECK_THROWS_AS(instance_mask({}, g), TrainError);
}

TEST_CASE("instance_mask: exhaustive over binary G and every label set") {
  // K=3, C=3: all 2^9 binary matrices x all 7 nonempty label sets
  for (int bits = 0; bits < 512; ++bits) {
    Tensor g({3, 3});
    for (int e = 0; e < 9; ++e) g.data[static_cast<std::size_t>(e)] = (bits >> e) & 1;
    for (int setbits = 1; setbits < 8; ++setbits) {
      std::vector<int> labels;
      for (int c = 0; c < 3; ++c)
        if ((setbits >> c) & 1) labels.push_back(c);
      const auto m = instance_mask(labels, g);
      CHECK(m.data == brute_mask(labels, g));
    }
  }
}

TEST_CASE("instance_mask: random real-valued cases match the oracle") {
  Rng rng(8);
  for (int trial = 0; trial < 1000; ++trial) {
    const int k = 1 + static_cast<int>(rng.uniform_below(8));
    const int c = 1 + static_cast<int>(rng.uniform_below(4));
    Tensor g({k, c});
    for (auto& v : g.data) v = rng.bernoulli(0.4) ? 0.0 : rng.uniform();
    std::vector<int> labels;
    for (int cls = 0; cls < c; ++cls)
      if (rng.bernoulli(0.5)) labels.push_back(cls);
    if (labels.empty()) labels.push_back(static_cast<int>(rng.uniform_below(c)));
    const auto m = instance_mask(labels, g);
    CHECK(m.data == brute_mask(labels, g));
  }
}

TEST_CASE("property: enlarging the label set never deactivates a channel") {
  Rng rng(19);
  for (int trial = 0; trial < 1000; ++trial) {
    const int k = 2 + static_cast<int>(rng.uniform_below(6));
    const int c = 2 + static_cast<int>(rng.uniform_below(4));
    Tensor g({k, c});
    for (auto& v : g.data) v = rng.bernoulli(0.5) ? 0.0 : rng.uniform();
    std::vector<int> small, big;
    for (int cls = 0; cls < c; ++cls) {
      const bool in_small = rng.bernoulli(0.3);
      if (in_small) small.push_back(cls);
      if (in_small || rng.bernoulli(0.4)) big.push_back(cls);
    }
    if (small.empty()) small.push_back(0);
    for (int cls : small)
      if (std::find(big.begin(), big.end(), cls) == big.end())
        big.push_back(cls);
    const auto ms = instance_mask(small, g);
    const auto mb = instance_mask(big, g);
    for (std::size_t ch = 0; ch < ms.data.size(); ++ch)
      if (ms.data[ch] == 1.0) CHECK(mb.data[ch] == 1.0);
  }
}

TEST_CASE("ifpu_loss: all-ones masks give exactly zero") {
  auto original = make_mlp_bundle(5, 8, 6, 3, 2);
  auto unlearned = original;
  unlearned.stage = Stage::unlearned;
  Rng rng(3);
  Tensor x({4, 5});
  for (auto& v : x.data) v = rng.normal();
  Tensor masks({4, 6});
  masks.fill(1.0);
  CHECK(ifpu_loss(original, unlearned, x, masks) == 0.0);
}

TEST_CASE("ifpu_loss: stage mismatch is refused") {
  auto original = make_mlp_bundle(5, 8, 6, 3, 2);
  auto unlearned = original;
  Tensor x({1, 5});
  Tensor masks({1, 6});
  CHECK_THROWS_AS(ifpu_loss(original, unlearned, x, masks), TrainError);
  unlearned.stage = Stage::unlearned;
  CHECK_NOTHROW(ifpu_loss(original, unlearned, x, masks));
  original.stage = Stage::unlearned;
  CHECK_THROWS_AS(ifpu_loss(original, unlearned, x, masks), TrainError);
}

TEST_CASE("ifpu_loss: duplicated instances keep the batch mean fixed") {
  auto original = make_mlp_bundle(4, 6, 5, 3, 7);
  auto unlearned = original;
  unlearned.stage = Stage::unlearned;
  Rng rng(5);
  std::vector<double> one(4);
  for (auto& v : one) v = rng.normal();
  Tensor x1({1, 4}), x3({3, 4});
  Tensor m1({1, 5}), m3({3, 5});
  for (int f = 0; f < 4; ++f) x1.at(0, f) = one[static_cast<std::size_t>(f)];
  for (int f = 0; f < 5; ++f) m1.at(0, f) = f % 2;
  for (int i = 0; i < 3; ++i) {
    for (int f = 0; f < 4; ++f) x3.at(i, f) = one[static_cast<std::size_t>(f)];
    for (int f = 0; f < 5; ++f) m3.at(i, f) = f % 2;
  }
  const double a = ifpu_loss(original, unlearned, x1, m1);
  const double b = ifpu_loss(original, unlearned, x3, m3);
  CHECK(a == doctest::Approx(b).epsilon(1e-12));
  CHECK(a > 0.0);
}

TEST_CASE("ifpu_loss: equals a hand-rolled MSE oracle") {
  auto original = make_mlp_bundle(3, 5, 4, 2, 11);
  auto unlearned = original;
  unlearned.stage = Stage::unlearned;
  Rng rng(6);
  Tensor x({2, 3});
  for (auto& v : x.data) v = rng.normal();
  Tensor masks({2, 4});
  for (auto& v : masks.data) v = rng.bernoulli(0.5) ? 1.0 : 0.0;

  const auto r = forward(unlearned, x);
  double want = 0.0;
  for (int i = 0; i < 2; ++i) {
    std::vector<double> masked_logits(2, 0.0);
    for (int j = 0; j < 2; ++j) {
      double s = unlearned.classifier.b[j];
      for (int f = 0; f < 4; ++f)
        s += unlearned.classifier.w.at(j, f) * r.features.at(i, f) *
             masks.at(i, f);
      masked_logits[static_cast<std::size_t>(j)] = s;
    }
    for (int j = 0; j < 2; ++j) {
      const double diff = r.logits.at(i, j) -
                          masked_logits[static_cast<std::size_t>(j)];
      want += diff * diff;
    }
  }
  want /= 2.0 * 2.0;
  CHECK(ifpu_loss(original, unlearned, x, masks) ==
        doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("unlearn_finetune: one epoch smoke, stage tag, frozen original") {
  const auto set = blob_set(4, 8, 6, 2.5, 41, 0.25);
  IfdConfig icfg;
  icfg.epochs = 5;
  icfg.batch_size = 16;
  icfg.lr = 0.05;
  icfg.arch.kind = "mlp";
  icfg.arch.feature_dim = 8;
  icfg.arch.mlp_hidden = 16;
  icfg.augment = AugmentConfig::none();
  auto [original, report] = train_ifd(set, icfg);

  // snapshot every original parameter
  auto snapshot = original;
  auto [unlearned, ureport] = unlearn_finetune(original, set, fast_ifpu(2));
  CHECK(unlearned.stage == Stage::unlearned);
  CHECK(ureport.epochs.size() == 1);
  CHECK(ureport.last_records.size() == set.size());

  auto pa = bundle_params(original);
  auto pb = bundle_params(snapshot);
  for (std::size_t i = 0; i < pa.size(); ++i)
    CHECK(*pa[i].tensor == *pb[i].tensor);  // bit identical
  CHECK(original.stage == Stage::original);

  // the unlearned bundle did actually move
  auto pu = bundle_params(unlearned);
  bool moved = false;
  for (std::size_t i = 0; i + 1 < pu.size(); ++i)  // g stays put by design
    if (!(*pu[i].tensor == *pa[i].tensor)) moved = true;
  CHECK(moved);
  CHECK(unlearned.g == original.g);

  // needs an original-stage input
  CHECK_THROWS_AS(unlearn_finetune(unlearned, set, fast_ifpu(2)), TrainError);
}

TEST_CASE("unlearn_finetune is deterministic given the seed") {
  const auto set = blob_set(3, 8, 5, 2.5, 43, 0.3);
  IfdConfig icfg;
  icfg.epochs = 3;
  icfg.batch_size = 8;
  icfg.arch.kind = "mlp";
  icfg.arch.feature_dim = 6;
  icfg.arch.mlp_hidden = 10;
  icfg.augment = AugmentConfig::none();
  auto [original, report] = train_ifd(set, icfg);
  auto cfg = fast_ifpu(9);
  cfg.epochs = 2;
  auto [u1, r1] = unlearn_finetune(original, set, cfg);
  auto [u2, r2] = unlearn_finetune(original, set, cfg);
  auto p1 = bundle_params(u1);
  auto p2 = bundle_params(u2);
  for (std::size_t i = 0; i < p1.size(); ++i)
    CHECK(*p1[i].tensor == *p2[i].tensor);
  REQUIRE(r1.epochs.size() == r2.epochs.size());
  for (std::size_t e = 0; e < r1.epochs.size(); ++e) {
    CHECK(r1.epochs[e].ce == r2.epochs[e].ce);
    CHECK(r1.epochs[e].ifpu == r2.epochs[e].ifpu);
  }
}
