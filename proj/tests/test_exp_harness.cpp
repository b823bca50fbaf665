#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <chrono>
#include <filesystem>
#include <fstream>

#include "dull/harness.hpp"
#include "dull/manifest.hpp"
#include "dull/rng.hpp"
#include "dull/synth.hpp"

using namespace dull;
namespace fs = std::filesystem;

namespace {

ExperimentConfig tiny_blob_config(const std::string& name, double noise,
                                  std::uint64_t seed) {
  ExperimentConfig cfg;
  cfg.name = name;
  cfg.threads = 2;
  cfg.data.source = "synthetic-blobs";
  cfg.data.classes = 4;
  cfg.data.train_per_class = 12;
  cfg.data.test_per_class = 6;
  cfg.data.input_dim = 6;
  cfg.data.signal = 2.5;
  cfg.data.imbalance_factor = 3.0;
  cfg.data.noise_ratio = noise;
  cfg.data.seed = seed;
  cfg.ifd.epochs = 4;
  cfg.ifd.batch_size = 16;
  cfg.ifd.lr = 0.05;
  cfg.ifd.lr_decay_epochs = {3};
  cfg.ifd.arch.kind = "mlp";
  cfg.ifd.arch.feature_dim = 8;
  cfg.ifd.arch.mlp_hidden = 16;
  cfg.ifd.augment = AugmentConfig::none();
  cfg.ifd.seed = seed;
  cfg.ifpu.epochs = 2;
  cfg.ifpu.batch_size = 16;
  cfg.ifpu.lr = 0.01;
  cfg.ifpu.lr_decay_epochs = {};
  cfg.ifpu.seed = seed;
  cfg.ifpu.augment = AugmentConfig::none();
  cfg.ifpu.relabel.weak = AugmentConfig::none();
  cfg.ifpu.relabel.strong = AugmentConfig::none();
  cfg.ifpu.relabel.strong.enabled = true;
  cfg.ifpu.relabel.strong.feat_noise = 0.1;
  cfg.out_dir = (fs::temp_directory_path() / ("dull_h_" + name)).string();
  return cfg;
}

}  // namespace

TEST_CASE("tercile partition: forced splits") {
  std::vector<int> sizes100(100);
  for (int i = 0; i < 100; ++i) sizes100[static_cast<std::size_t>(i)] = 1000 - i;
  const auto t100 = tercile_partition(sizes100);
  int counts[3] = {0, 0, 0};
  for (int t : t100) counts[t]++;
  CHECK(counts[0] == 33);
  CHECK(counts[1] == 33);
  CHECK(counts[2] == 34);

  std::vector<int> sizes10(10);
  for (int i = 0; i < 10; ++i) sizes10[static_cast<std::size_t>(i)] = 100 - i;
  const auto t10 = tercile_partition(sizes10);
  int c10[3] = {0, 0, 0};
  for (int t : t10) c10[t]++;
  CHECK(c10[0] == 3);
  CHECK(c10[1] == 3);
  CHECK(c10[2] == 4);
  // class 0 is the largest, so head
  CHECK(t10[0] == 0);
  CHECK(t10[9] == 2);
}

TEST_CASE("evaluate: perfect predictor scores 100 everywhere") {
  auto [train, test] = make_blob_source(3, 40, 15, 6.0, 5);  // far-apart blobs
  train.long_tailed = true;
  const auto noisy = inject_t2h_noise(train, 0.0, 1);
  const auto train_set = materialize(noisy, "train", nullptr);
  const auto manifest = with_test_split(noisy, test);
  const auto test_set = materialize(manifest, "test", nullptr);

  IfdConfig cfg;
  cfg.epochs = 12;
  cfg.batch_size = 16;
  cfg.lr = 0.05;
  cfg.arch.kind = "mlp";
  cfg.arch.feature_dim = 8;
  cfg.arch.mlp_hidden = 16;
  cfg.augment = AugmentConfig::none();
  auto [bundle, report] = train_ifd(train_set, cfg);

  const auto m = evaluate(bundle, test_set, train_set.observed_sizes);
  CHECK(m.overall == 100.0);
  CHECK(m.head == 100.0);
  CHECK(m.middle == 100.0);
  CHECK(m.tail == 100.0);
  CHECK(m.absent_classes.empty());
}

TEST_CASE("evaluate: uniform-random predictor sits near chance") {
  auto [train, test] = make_blob_source(10, 12, 40, 2.0, 9);
  train.long_tailed = true;
  const auto noisy = inject_t2h_noise(train, 0.0, 1);
  const auto train_set = materialize(noisy, "train", nullptr);
  const auto manifest = with_test_split(noisy, test);
  const auto test_set = materialize(manifest, "test", nullptr);
  // untrained random weights approximate a uniform-random predictor
  const auto bundle = make_mlp_bundle(40, 16, 8, 10, 77);
  const auto m = evaluate(bundle, test_set, train_set.observed_sizes);
  CHECK(m.overall >= 10.0 - 7.0);
  CHECK(m.overall <= 10.0 + 7.0);
}

TEST_CASE("evaluate: tercile accuracies aggregate to the overall") {
  auto [train, test] = make_blob_source(5, 30, 8, 1.5, 21);
  train.long_tailed = true;
  const auto lt = build_longtail(train, 4.0, 2);
  const auto noisy = inject_t2h_noise(lt, 0.2, 3);
  const auto train_set = materialize(noisy, "train", nullptr);
  const auto manifest = with_test_split(noisy, test);
  const auto test_set = materialize(manifest, "test", nullptr);
  IfdConfig cfg;
  cfg.epochs = 3;
  cfg.batch_size = 16;
  cfg.arch.kind = "mlp";
  cfg.arch.feature_dim = 6;
  cfg.arch.mlp_hidden = 12;
  cfg.augment = AugmentConfig::none();
  auto [bundle, report] = train_ifd(train_set, cfg);
  const auto m = evaluate(bundle, test_set, train_set.observed_sizes);

  const auto terc = tercile_partition(train_set.observed_sizes);
  double weighted = 0.0, total = 0.0;
  std::vector<double> group_acc{m.head, m.middle, m.tail};
  std::vector<int> counts(5, 0);
  for (int t : test_set.true_labels) counts[static_cast<std::size_t>(t)]++;
  for (int cls = 0; cls < 5; ++cls) {
    weighted += m.per_class[static_cast<std::size_t>(cls)] *
                counts[static_cast<std::size_t>(cls)];
    total += counts[static_cast<std::size_t>(cls)];
  }
  CHECK(m.overall == doctest::Approx(weighted / total).epsilon(1e-6));
  // group aggregation identity
  double g_weighted = 0.0;
  for (int cls = 0; cls < 5; ++cls)
    g_weighted += group_acc[static_cast<std::size_t>(terc[static_cast<std::size_t>(cls)])] *
                  counts[static_cast<std::size_t>(cls)] /
                  total;
  // head/middle/tail accs are instance-weighted within groups, so the
  // identity holds only through group counts; recompute directly:
  double acc_from_groups = 0.0;
  double n_head = 0, n_mid = 0, n_tail = 0;
  for (int cls = 0; cls < 5; ++cls) {
    const int t = terc[static_cast<std::size_t>(cls)];
    if (t == 0) n_head += counts[static_cast<std::size_t>(cls)];
    if (t == 1) n_mid += counts[static_cast<std::size_t>(cls)];
    if (t == 2) n_tail += counts[static_cast<std::size_t>(cls)];
  }
  acc_from_groups =
      (m.head * n_head + m.middle * n_mid + m.tail * n_tail) / total;
  CHECK(m.overall == doctest::Approx(acc_from_groups).epsilon(1e-6));
}

TEST_CASE("config hash: stable and sensitive") {
  const auto a = tiny_blob_config("hash", 0.2, 1);
  auto b = tiny_blob_config("hash", 0.2, 1);
  CHECK(config_hash(a) == config_hash(b));
  b.ifd.beta = 0.5;
  CHECK(config_hash(a) != config_hash(b));
  auto c = tiny_blob_config("hash", 0.2, 1);
  c.data.noise_ratio = 0.3;
  CHECK(config_hash(a) != config_hash(c));
}

TEST_CASE("config json round trip keeps defaults and values") {
  auto a = tiny_blob_config("rt", 0.25, 3);
  a.ifpu.mixer.lambda_mode = "beta";
  a.ifpu.mixer.pairs_per_batch = 5;
  nlohmann::json j = a;
  const auto b = j.get<ExperimentConfig>();
  CHECK(config_hash(a) == config_hash(b));
  CHECK(b.ifpu.mixer.lambda_mode == "beta");
  CHECK(b.ifpu.mixer.pairs_per_batch == 5);
  // partial config: missing fields keep defaults
  const auto c = nlohmann::json::parse(R"({"name":"x"})").get<ExperimentConfig>();
  CHECK(c.ifd.beta == 0.01);
  CHECK(c.ifpu.mixer.alpha == 0.1);
  CHECK(c.ifpu.relabel.gamma == 0.5);
}

TEST_CASE("run_experiment: smoke config completes quickly and reproducibly") {
  const auto t0 = std::chrono::steady_clock::now();
  auto cfg = tiny_blob_config("smoke", 0.25, 7);
  fs::remove_all(cfg.out_dir);
  const auto rec1 = run_experiment(cfg);
  CHECK(rec1.failure_stage.empty());
  CHECK(rec1.metrics.overall >= 0.0);
  CHECK(rec1.metrics.overall <= 100.0);
  CHECK(rec1.om_curve.size() == 4);
  CHECK(rec1.hit >= 0.0);
  CHECK(rec1.observed_if >= rec1.original_if);
  const auto secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  CHECK(secs < 60.0);

  // artifacts exist
  const fs::path out(cfg.out_dir);
  CHECK(fs::exists(out / "smoke-dull.json"));
  CHECK(fs::exists(out / "summary.csv"));
  CHECK(fs::exists(out / "smoke" / "manifest.json"));
  CHECK(fs::exists(out / "smoke" / "original.ckpt"));
  CHECK(fs::exists(out / "smoke" / "unlearned.ckpt"));
  CHECK(fs::exists(out / "smoke" / "ifd_log.jsonl"));
  CHECK(fs::exists(out / "smoke" / "unlearn_log.jsonl"));
  CHECK(fs::exists(out / "smoke" / "relabel.jsonl"));

  // bit-equal reproducibility (wall clock aside)
  const auto rec2 = run_experiment(cfg);
  CHECK(rec1.metrics.overall == rec2.metrics.overall);
  CHECK(rec1.metrics.head == rec2.metrics.head);
  CHECK(rec1.metrics.middle == rec2.metrics.middle);
  CHECK(rec1.metrics.tail == rec2.metrics.tail);
  CHECK(rec1.om_curve == rec2.om_curve);
  CHECK(rec1.lsm_curve == rec2.lsm_curve);
  CHECK(rec1.ce_curve == rec2.ce_curve);
  CHECK(rec1.hit == rec2.hit);
  CHECK(rec1.transition.p == rec2.transition.p);
}

TEST_CASE("baseline_ce shares the config hash and evaluates") {
  auto cfg = tiny_blob_config("base", 0.25, 7);
  fs::remove_all(cfg.out_dir);
  const auto dull_rec = run_experiment(cfg);
  const auto ce_rec = baseline_ce(cfg);
  CHECK(ce_rec.failure_stage.empty());
  CHECK(ce_rec.hash == dull_rec.hash);
  CHECK(ce_rec.method == "ce");
  const auto rows = compare(ce_rec, dull_rec);
  CHECK(rows.size() == 5);
  CHECK(rows[0].metric == "overall");
  CHECK(rows[0].delta ==
        doctest::Approx(dull_rec.metrics.overall - ce_rec.metrics.overall));
  // self-comparison is all zeros
  for (const auto& row : compare(dull_rec, dull_rec))
    CHECK(row.delta == 0.0);
}

TEST_CASE("compare refuses mismatched config hashes") {
  auto a = tiny_blob_config("cmp_a", 0.2, 1);
  auto b = tiny_blob_config("cmp_b", 0.3, 1);
  ResultRecord ra, rb;
  ra.hash = config_hash(a);
  rb.hash = config_hash(b);
  CHECK_THROWS_AS(compare(ra, rb), ForgeError);
}

TEST_CASE("result records persist, reload, and re-render") {
  auto cfg = tiny_blob_config("persist", 0.2, 3);
  fs::remove_all(cfg.out_dir);
  const auto rec = run_experiment(cfg);
  const auto path = fs::path(cfg.out_dir) / "persist-dull.json";
  REQUIRE(fs::exists(path));
  const auto loaded = load_result(path);
  CHECK(loaded.name == rec.name);
  CHECK(loaded.method == "dull");
  CHECK(loaded.hash == rec.hash);
  CHECK(loaded.metrics.overall == rec.metrics.overall);
  CHECK(loaded.om_curve == rec.om_curve);
  CHECK(loaded.transition.p == rec.transition.p);

  const auto plot_dir = fs::path(cfg.out_dir) / "plots";
  emit_plots({loaded}, plot_dir);
  for (const auto* name : {"om.svg", "lsm.svg", "accuracy.svg", "transition.svg"}) {
    CHECK(fs::exists(plot_dir / name));
    CHECK(fs::file_size(plot_dir / name) > 100);
  }
}

TEST_CASE("run_experiment reports the failing stage instead of throwing") {
  auto cfg = tiny_blob_config("fail", 0.2, 3);
  cfg.data.source = "cifar10";
  cfg.data.path = "/nonexistent/dir";
  fs::remove_all(cfg.out_dir);
  const auto rec = run_experiment(cfg);
  CHECK(rec.failure_stage.find("forge") == 0);
}

TEST_CASE("synthetic image corpus flows through the cifar ingest path") {
  auto cfg = tiny_blob_config("img", 0.25, 5);
  cfg.data.source = "synthetic-images";
  cfg.data.classes = 10;  // cifar10 layout is 10-class
  cfg.data.train_per_class = 8;
  cfg.data.test_per_class = 4;
  cfg.data.imbalance_factor = 2.0;
  cfg.ifd.arch.kind = "conv";
  cfg.ifd.arch.conv_widths = {4, 8};
  cfg.ifd.arch.feature_dim = 8;
  cfg.ifd.epochs = 1;
  cfg.ifpu.epochs = 1;
  cfg.ifd.augment = AugmentConfig::weak_image();
  cfg.ifpu.augment = AugmentConfig::weak_image();
  cfg.ifpu.relabel.weak = AugmentConfig::weak_image();
  cfg.ifpu.relabel.strong = AugmentConfig::strong_image();
  fs::remove_all(cfg.out_dir);
  const auto rec = run_experiment(cfg);
  CHECK(rec.failure_stage.empty());
  // manifest references pixels by (file, offset); reload and re-materialize
  const auto manifest =
      load_manifest(fs::path(cfg.out_dir) / "img" / "manifest.json");
  PixelReader reader(manifest.sources);
  const auto set = materialize(manifest, "train", &reader);
  CHECK(set.is_image);
  CHECK(set.size() > 0);
}
