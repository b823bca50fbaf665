#include "dull/harness.hpp"

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <numeric>

#include "dull/checkpoint.hpp"
#include "dull/manifest.hpp"
#include "dull/svg.hpp"
#include "dull/synth.hpp"

namespace dull {

using nlohmann::json;

// ---- config (de)serialization ----

void to_json(json& j, const AugmentConfig& c) {
  j = json{{"enabled", c.enabled},   {"crop_pad", c.crop_pad},
           {"hflip", c.hflip},       {"jitter", c.jitter},
           {"cutout", c.cutout},     {"feat_noise", c.feat_noise},
           {"feat_drop", c.feat_drop}};
}

void from_json(const json& j, AugmentConfig& c) {
  c.enabled = j.value("enabled", c.enabled);
  c.crop_pad = j.value("crop_pad", c.crop_pad);
  c.hflip = j.value("hflip", c.hflip);
  c.jitter = j.value("jitter", c.jitter);
  c.cutout = j.value("cutout", c.cutout);
  c.feat_noise = j.value("feat_noise", c.feat_noise);
  c.feat_drop = j.value("feat_drop", c.feat_drop);
}

void to_json(json& j, const ArchConfig& c) {
  j = json{{"kind", c.kind},
           {"conv_widths", c.conv_widths},
           {"mlp_hidden", c.mlp_hidden},
           {"feature_dim", c.feature_dim}};
}

void from_json(const json& j, ArchConfig& c) {
  c.kind = j.value("kind", c.kind);
  c.conv_widths = j.value("conv_widths", c.conv_widths);
  c.mlp_hidden = j.value("mlp_hidden", c.mlp_hidden);
  c.feature_dim = j.value("feature_dim", c.feature_dim);
}

void to_json(json& j, const IfdConfig& c) {
  j = json{{"beta", c.beta},
           {"sparsity_p", c.sparsity_p},
           {"epochs", c.epochs},
           {"batch_size", c.batch_size},
           {"lr", c.lr},
           {"momentum", c.momentum},
           {"weight_decay", c.weight_decay},
           {"lr_decay_epochs", c.lr_decay_epochs},
           {"lr_decay_factor", c.lr_decay_factor},
           {"seed", c.seed},
           {"arch", c.arch},
           {"augment", c.augment}};
}

void from_json(const json& j, IfdConfig& c) {
  c.beta = j.value("beta", c.beta);
  c.sparsity_p = j.value("sparsity_p", c.sparsity_p);
  c.epochs = j.value("epochs", c.epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.lr = j.value("lr", c.lr);
  c.momentum = j.value("momentum", c.momentum);
  c.weight_decay = j.value("weight_decay", c.weight_decay);
  c.lr_decay_epochs = j.value("lr_decay_epochs", c.lr_decay_epochs);
  c.lr_decay_factor = j.value("lr_decay_factor", c.lr_decay_factor);
  c.seed = j.value("seed", c.seed);
  if (j.contains("arch")) j.at("arch").get_to(c.arch);
  if (j.contains("augment")) j.at("augment").get_to(c.augment);
}

void to_json(json& j, const RelabelConfig& c) {
  j = json{{"gamma", c.gamma},
           {"weak", c.weak},
           {"strong", c.strong},
           {"seed", c.seed},
           {"chunk", c.chunk}};
}

void from_json(const json& j, RelabelConfig& c) {
  c.gamma = j.value("gamma", c.gamma);
  if (j.contains("weak")) j.at("weak").get_to(c.weak);
  if (j.contains("strong")) j.at("strong").get_to(c.strong);
  c.seed = j.value("seed", c.seed);
  c.chunk = j.value("chunk", c.chunk);
}

void to_json(json& j, const MixerConfig& c) {
  j = json{{"alpha", c.alpha},
           {"lambda_mode", c.lambda_mode},
           {"lambda_value", c.lambda_value},
           {"beta_a", c.beta_a},
           {"beta_b", c.beta_b},
           {"pairs_per_batch", c.pairs_per_batch}};
}

void from_json(const json& j, MixerConfig& c) {
  c.alpha = j.value("alpha", c.alpha);
  c.lambda_mode = j.value("lambda_mode", c.lambda_mode);
  c.lambda_value = j.value("lambda_value", c.lambda_value);
  c.beta_a = j.value("beta_a", c.beta_a);
  c.beta_b = j.value("beta_b", c.beta_b);
  c.pairs_per_batch = j.value("pairs_per_batch", c.pairs_per_batch);
}

void to_json(json& j, const IfpuConfig& c) {
  j = json{{"epochs", c.epochs},
           {"batch_size", c.batch_size},
           {"lr", c.lr},
           {"momentum", c.momentum},
           {"weight_decay", c.weight_decay},
           {"lr_decay_epochs", c.lr_decay_epochs},
           {"lr_decay_factor", c.lr_decay_factor},
           {"seed", c.seed},
           {"relabel", c.relabel},
           {"mixer", c.mixer},
           {"augment", c.augment}};
}

void from_json(const json& j, IfpuConfig& c) {
  c.epochs = j.value("epochs", c.epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.lr = j.value("lr", c.lr);
  c.momentum = j.value("momentum", c.momentum);
  c.weight_decay = j.value("weight_decay", c.weight_decay);
  c.lr_decay_epochs = j.value("lr_decay_epochs", c.lr_decay_epochs);
  c.lr_decay_factor = j.value("lr_decay_factor", c.lr_decay_factor);
  c.seed = j.value("seed", c.seed);
  if (j.contains("relabel")) j.at("relabel").get_to(c.relabel);
  if (j.contains("mixer")) j.at("mixer").get_to(c.mixer);
  if (j.contains("augment")) j.at("augment").get_to(c.augment);
}

void to_json(json& j, const DataConfig& c) {
  j = json{{"source", c.source},
           {"path", c.path},
           {"classes", c.classes},
           {"train_per_class", c.train_per_class},
           {"test_per_class", c.test_per_class},
           {"input_dim", c.input_dim},
           {"signal", c.signal},
           {"imbalance_factor", c.imbalance_factor},
           {"noise_ratio", c.noise_ratio},
           {"seed", c.seed}};
}

void from_json(const json& j, DataConfig& c) {
  c.source = j.value("source", c.source);
  c.path = j.value("path", c.path);
  c.classes = j.value("classes", c.classes);
  c.train_per_class = j.value("train_per_class", c.train_per_class);
  c.test_per_class = j.value("test_per_class", c.test_per_class);
  c.input_dim = j.value("input_dim", c.input_dim);
  c.signal = j.value("signal", c.signal);
  c.imbalance_factor = j.value("imbalance_factor", c.imbalance_factor);
  c.noise_ratio = j.value("noise_ratio", c.noise_ratio);
  c.seed = j.value("seed", c.seed);
}

void to_json(json& j, const ExperimentConfig& cfg) {
  j = json{{"name", cfg.name},
           {"threads", cfg.threads},
           {"data", cfg.data},
           {"ifd", cfg.ifd},
           {"ifpu", cfg.ifpu},
           {"out_dir", cfg.out_dir}};
}

void from_json(const json& j, ExperimentConfig& cfg) {
  cfg.name = j.value("name", cfg.name);
  cfg.threads = j.value("threads", cfg.threads);
  if (j.contains("data")) j.at("data").get_to(cfg.data);
  if (j.contains("ifd")) j.at("ifd").get_to(cfg.ifd);
  if (j.contains("ifpu")) j.at("ifpu").get_to(cfg.ifpu);
  cfg.out_dir = j.value("out_dir", cfg.out_dir);
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ForgeError("cannot open config " + path.string());
  json j;
  in >> j;
  return j.get<ExperimentConfig>();
}

std::uint64_t config_hash(const ExperimentConfig& cfg) {
  const std::string dump = json(cfg).dump();
  return fnv1a64(dump.data(), dump.size());
}

// ---- data forging ----

std::filesystem::path resolve_data_root(const std::string& configured) {
  if (!configured.empty()) return configured;
  if (const char* env = std::getenv("DULL_DATA_ROOT")) return env;
  throw ForgeError("no data path configured and DULL_DATA_ROOT is unset");
}

namespace {

// Deterministic per-class cap: keeps the first n of each class in id order.
LabeledDataset cap_per_class(const LabeledDataset& d, int per_class) {
  if (per_class <= 0) return d;
  LabeledDataset out;
  out.class_count = d.class_count;
  out.long_tailed = d.long_tailed;
  out.sources = d.sources;
  std::vector<int> taken(d.class_count, 0);
  for (const auto& inst : d.instances) {
    if (taken[inst.true_label] >= per_class) continue;
    taken[inst.true_label]++;
    out.instances.push_back(inst);
  }
  return out;
}

LabeledDataset filter_split(const LabeledDataset& d, const std::string& split) {
  LabeledDataset out;
  out.class_count = d.class_count;
  out.sources = d.sources;
  for (const auto& inst : d.instances)
    if (inst.split == split) out.instances.push_back(inst);
  return out;
}

}  // namespace

ForgedData forge_data(const DataConfig& cfg,
                      const std::filesystem::path& work_dir) {
  ForgedData out;
  std::filesystem::create_directories(work_dir);

  if (cfg.source == "manifest") {
    out.manifest = load_manifest(cfg.path);
    PixelReader reader(out.manifest.sources);
    out.train = materialize(out.manifest, "train", &reader);
    out.test = materialize(out.manifest, "test", &reader);
    out.observed_if = imbalance_factor(out.train.observed_sizes);
    out.original_if = out.observed_if;
    return out;
  }

  LabeledDataset source_train, source_test;
  if (cfg.source == "synthetic-blobs") {
    auto [train, test] = make_blob_source(cfg.classes, cfg.train_per_class,
                                          cfg.test_per_class, cfg.input_dim,
                                          cfg.signal, cfg.seed);
    source_train = std::move(train);
    source_test = std::move(test);
  } else if (cfg.source == "synthetic-images") {
    const auto corpus = work_dir / "corpus";
    if (!std::filesystem::exists(corpus / "data_batch_1.bin"))
      write_synthetic_image_corpus(corpus, cfg.classes, cfg.train_per_class,
                                   cfg.test_per_class, cfg.signal, cfg.seed);
    const auto all = ingest_cifar(corpus, "cifar10-single");
    source_train = filter_split(all, "train");
    source_test = filter_split(all, "test");
  } else if (cfg.source == "cifar10" || cfg.source == "cifar100") {
    const auto root = resolve_data_root(cfg.path);
    const auto all = ingest_cifar(root, cfg.source);
    source_train = cap_per_class(filter_split(all, "train"),
                                 cfg.train_per_class);
    source_test = cap_per_class(filter_split(all, "test"), cfg.test_per_class);
  } else {
    throw ForgeError("unknown data source '" + cfg.source + "'");
  }

  const auto longtail =
      build_longtail(source_train, cfg.imbalance_factor, cfg.seed);
  auto noisy = inject_t2h_noise(longtail, cfg.noise_ratio, cfg.seed + 1000003);
  out.original_if = imbalance_factor(longtail);
  out.observed_if = observed_imbalance_factor(noisy);
  out.manifest = with_test_split(std::move(noisy), source_test);

  const bool needs_pixels =
      !out.manifest.instances.empty() &&
      std::holds_alternative<ImageRef>(out.manifest.instances.front().payload);
  PixelReader reader(out.manifest.sources);
  out.train = materialize(out.manifest, "train", needs_pixels ? &reader : nullptr);
  out.test = materialize(out.manifest, "test", needs_pixels ? &reader : nullptr);
  return out;
}

// ---- evaluation ----

std::vector<int> tercile_partition(const std::vector<int>& observed_sizes) {
  const int c = static_cast<int>(observed_sizes.size());
  const auto rank = class_rank_by_size(observed_sizes);
  const int third = c / 3;
  std::vector<int> tercile(c);
  for (int k = 0; k < c; ++k) {
    if (rank[k] < third) tercile[k] = 0;
    else if (rank[k] < 2 * third) tercile[k] = 1;
    else tercile[k] = 2;
  }
  return tercile;
}

EvalMetrics evaluate(const ModelBundle& bundle, const TrainingSet& test,
                     const std::vector<int>& observed_sizes) {
  const int c = bundle.class_count();
  if (static_cast<int>(observed_sizes.size()) != c)
    throw ForgeError("evaluate: observed_sizes does not match class count");
  EvalMetrics m;
  m.tercile_of_class = tercile_partition(observed_sizes);

  std::vector<int> correct(c, 0), total(c, 0);
  const int n = static_cast<int>(test.size());
  for (int start = 0; start < n; start += 256) {
    const int stop = std::min(n, start + 256);
    std::vector<int> idx(static_cast<std::size_t>(stop - start));
    std::iota(idx.begin(), idx.end(), start);
    const Tensor logits =
        forward(bundle, make_batch(test, idx, nullptr, nullptr)).logits;
    for (int i = 0; i < stop - start; ++i) {
      int arg = 0;
      for (int j = 1; j < c; ++j)
        if (logits.at(i, j) > logits.at(i, arg)) arg = j;
      const int truth = test.true_labels[static_cast<std::size_t>(start + i)];
      total[truth]++;
      if (arg == truth) correct[truth]++;
    }
  }

  double group_correct[3] = {0, 0, 0}, group_total[3] = {0, 0, 0};
  double all_correct = 0, all_total = 0;
  m.per_class.assign(c, -1.0);
  for (int k = 0; k < c; ++k) {
    if (total[k] == 0) {
      m.absent_classes.push_back(k);  // excluded from its tercile mean
      continue;
    }
    m.per_class[k] = 100.0 * correct[k] / total[k];
    group_correct[m.tercile_of_class[k]] += correct[k];
    group_total[m.tercile_of_class[k]] += total[k];
    all_correct += correct[k];
    all_total += total[k];
  }
  m.overall = all_total > 0 ? 100.0 * all_correct / all_total : 0.0;
  m.head = group_total[0] > 0 ? 100.0 * group_correct[0] / group_total[0] : 0.0;
  m.middle =
      group_total[1] > 0 ? 100.0 * group_correct[1] / group_total[1] : 0.0;
  m.tail = group_total[2] > 0 ? 100.0 * group_correct[2] / group_total[2] : 0.0;
  return m;
}

// ---- records ----

namespace {

json metrics_to_json(const EvalMetrics& m) {
  return json{{"overall", m.overall},
              {"head", m.head},
              {"middle", m.middle},
              {"tail", m.tail},
              {"per_class", m.per_class},
              {"tercile_of_class", m.tercile_of_class},
              {"absent_classes", m.absent_classes}};
}

EvalMetrics metrics_from_json(const json& j) {
  EvalMetrics m;
  m.overall = j.value("overall", 0.0);
  m.head = j.value("head", 0.0);
  m.middle = j.value("middle", 0.0);
  m.tail = j.value("tail", 0.0);
  m.per_class = j.value("per_class", std::vector<double>{});
  m.tercile_of_class = j.value("tercile_of_class", std::vector<int>{});
  m.absent_classes = j.value("absent_classes", std::vector<int>{});
  return m;
}

}  // namespace

void save_result(const ResultRecord& rec, const std::filesystem::path& path) {
  json j;
  j["name"] = rec.name;
  j["method"] = rec.method;
  j["config_hash"] = rec.hash;
  j["failure_stage"] = rec.failure_stage;
  j["metrics"] = metrics_to_json(rec.metrics);
  j["om_curve"] = rec.om_curve;
  j["lsm_curve"] = rec.lsm_curve;
  j["ce_curve"] = rec.ce_curve;
  j["ifpu_curve"] = rec.ifpu_curve;
  j["hit_rate"] = rec.hit;
  j["top1_hit_rate"] = rec.top1_hit;
  j["transition"] = {{"class_count", rec.transition.class_count},
                     {"p", rec.transition.p},
                     {"empty_rows", rec.transition.empty_rows}};
  j["wall_seconds"] = rec.wall_seconds;
  j["observed_if"] = rec.observed_if;
  j["original_if"] = rec.original_if;
  j["config"] = rec.config;
  std::ofstream out(path);
  if (!out) throw ForgeError("cannot write " + path.string());
  out << j.dump(1) << "\n";
}

ResultRecord load_result(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ForgeError("cannot open " + path.string());
  json j;
  in >> j;
  ResultRecord rec;
  rec.name = j.value("name", "");
  rec.method = j.value("method", "");
  rec.hash = j.value("config_hash", std::uint64_t{0});
  rec.failure_stage = j.value("failure_stage", "");
  rec.metrics = metrics_from_json(j.value("metrics", json::object()));
  rec.om_curve = j.value("om_curve", std::vector<double>{});
  rec.lsm_curve = j.value("lsm_curve", std::vector<double>{});
  rec.ce_curve = j.value("ce_curve", std::vector<double>{});
  rec.ifpu_curve = j.value("ifpu_curve", std::vector<double>{});
  rec.hit = j.value("hit_rate", 0.0);
  rec.top1_hit = j.value("top1_hit_rate", 0.0);
  if (j.contains("transition")) {
    rec.transition.class_count = j["transition"].value("class_count", 0);
    rec.transition.p = j["transition"].value("p", std::vector<double>{});
    rec.transition.empty_rows =
        j["transition"].value("empty_rows", std::vector<int>{});
  }
  rec.wall_seconds = j.value("wall_seconds", 0.0);
  rec.observed_if = j.value("observed_if", 0.0);
  rec.original_if = j.value("original_if", 0.0);
  rec.config = j.value("config", json::object());
  return rec;
}

void append_csv_summary(const ResultRecord& rec,
                        const std::filesystem::path& csv) {
  const bool fresh = !std::filesystem::exists(csv);
  std::ofstream out(csv, std::ios::app);
  if (!out) throw ForgeError("cannot append " + csv.string());
  if (fresh)
    out << "name,method,failure_stage,original_if,observed_if,overall,head,"
           "middle,tail,hit_rate,wall_seconds,config_hash\n";
  out << rec.name << ',' << rec.method << ',' << rec.failure_stage << ','
      << rec.original_if << ',' << rec.observed_if << ','
      << rec.metrics.overall << ',' << rec.metrics.head << ','
      << rec.metrics.middle << ',' << rec.metrics.tail << ',' << rec.hit << ','
      << rec.wall_seconds << ',' << rec.hash << "\n";
}

// ---- training drivers ----

ModelBundle train_ce_baseline(const TrainingSet& train, const IfdConfig& ifd,
                              int total_epochs) {
  ModelBundle bundle = make_bundle_for(train, ifd);
  auto params = bundle_params(bundle);
  std::vector<char> decay_mask(params.size(), 1);
  decay_mask.back() = 0;
  SgdState opt;
  SgdConfig sgd{ifd.lr, ifd.momentum, ifd.weight_decay};
  Rng rng(ifd.seed);
  std::vector<int> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  for (int epoch = 0; epoch < total_epochs; ++epoch) {
    for (int de : ifd.lr_decay_epochs)
      if (epoch == de) sgd.lr *= ifd.lr_decay_factor;
    rng.shuffle(order);
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(ifd.batch_size)) {
      const std::size_t stop = std::min(order.size(), start + ifd.batch_size);
      std::vector<int> idx(order.begin() + start, order.begin() + stop);
      std::vector<int> y(idx.size());
      for (std::size_t i = 0; i < idx.size(); ++i)
        y[i] = train.observed[static_cast<std::size_t>(idx[i])];
      const Tensor x = make_batch(train, idx, &ifd.augment, &rng);

      ExtractorTrace trace;
      const Tensor features = extractor_forward(bundle.extractor, x, trace);
      const Tensor logits = linear_forward(bundle.classifier, features);
      auto grads = zeros_like(params);
      Tensor dlogits(logits.shape);
      const double loss = cross_entropy(logits, y, &dlogits);
      if (!std::isfinite(loss))
        throw TrainError("ce baseline diverged at epoch " +
                         std::to_string(epoch));
      Tensor dfeatures(features.shape);
      linear_backward(bundle.classifier, features, dlogits,
                      grads[grads.size() - 3], grads[grads.size() - 2],
                      &dfeatures);
      extractor_backward(bundle.extractor, trace, dfeatures, grads);
      sgd_step(params, grads, opt, sgd, decay_mask);
    }
  }
  return bundle;
}

namespace {

void write_ifd_log(const DisentangleReport& report,
                   const std::filesystem::path& path) {
  std::ofstream out(path);
  for (int e = 0; e < report.epochs(); ++e) {
    json j{{"epoch", e},
           {"L0", report.l0[static_cast<std::size_t>(e)]},
           {"L1", report.l1[static_cast<std::size_t>(e)]},
           {"sparsity", report.sparsity[static_cast<std::size_t>(e)]},
           {"OM", report.om[static_cast<std::size_t>(e)]},
           {"LSM", report.lsm[static_cast<std::size_t>(e)]},
           {"train_acc", report.train_acc[static_cast<std::size_t>(e)]}};
    out << j.dump() << "\n";
  }
}

void write_unlearn_log(const UnlearnReport& report,
                       const std::filesystem::path& path) {
  std::ofstream out(path);
  for (std::size_t e = 0; e < report.epochs.size(); ++e) {
    const auto& ep = report.epochs[e];
    json j{{"epoch", e},
           {"ce", ep.ce},
           {"ifpu", ep.ifpu},
           {"hit_rate", ep.hit_rate},
           {"val_acc", ep.val_acc}};
    out << j.dump() << "\n";
  }
}

ResultRecord start_record(const ExperimentConfig& cfg,
                          const std::string& method) {
  ResultRecord rec;
  rec.name = cfg.name;
  rec.method = method;
  rec.hash = config_hash(cfg);
  rec.config = json(cfg);
  return rec;
}

void finish_record(ResultRecord& rec, const ExperimentConfig& cfg,
                   std::chrono::steady_clock::time_point t0) {
  rec.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  std::filesystem::create_directories(cfg.out_dir);
  save_result(rec, std::filesystem::path(cfg.out_dir) /
                       (cfg.name + "-" + rec.method + ".json"));
  append_csv_summary(rec, std::filesystem::path(cfg.out_dir) / "summary.csv");
}

}  // namespace

ResultRecord run_experiment(const ExperimentConfig& cfg) {
  set_gemm_threads(cfg.threads);
  const auto t0 = std::chrono::steady_clock::now();
  ResultRecord rec = start_record(cfg, "dull");
  const auto run_dir = std::filesystem::path(cfg.out_dir) / cfg.name;
  std::string stage = "forge";
  try {
    ForgedData data = forge_data(cfg.data, run_dir);
    rec.original_if = data.original_if;
    rec.observed_if = data.observed_if;
    {
      NoisyDataset train_only = data.manifest;
      std::erase_if(train_only.instances,
                    [](const NoisyInstance& i) { return i.split != "train"; });
      rec.transition = empirical_transition_matrix(train_only);
    }
    std::filesystem::create_directories(run_dir);
    save_manifest(data.manifest, run_dir / "manifest.json");

    stage = "ifd";
    auto [original, report] = train_ifd(data.train, cfg.ifd, run_dir);
    original.config_hash = rec.hash;
    rec.om_curve = report.om;
    rec.lsm_curve = report.lsm;
    write_ifd_log(report, run_dir / "ifd_log.jsonl");
    save_checkpoint(original, run_dir / "original.ckpt");

    stage = "ifpu";
    auto [unlearned, ureport] =
        unlearn_finetune(original, data.train, cfg.ifpu, &data.test, run_dir);
    unlearned.config_hash = rec.hash;
    write_unlearn_log(ureport, run_dir / "unlearn_log.jsonl");
    save_checkpoint(unlearned, run_dir / "unlearned.ckpt");
    save_relabel_dump(ureport.last_records, run_dir / "relabel.jsonl");
    for (const auto& ep : ureport.epochs) {
      rec.ce_curve.push_back(ep.ce);
      rec.ifpu_curve.push_back(ep.ifpu);
    }
    rec.hit = hit_rate(ureport.last_records, data.train.true_labels);
    rec.top1_hit = top1_hit_rate(ureport.last_records, data.train.true_labels);

    stage = "evaluate";
    rec.metrics = evaluate(unlearned, data.test, data.train.observed_sizes);
  } catch (const std::exception& e) {
    rec.failure_stage = stage + ": " + e.what();
  }
  finish_record(rec, cfg, t0);
  return rec;
}

ResultRecord baseline_ce(const ExperimentConfig& cfg) {
  set_gemm_threads(cfg.threads);
  const auto t0 = std::chrono::steady_clock::now();
  ResultRecord rec = start_record(cfg, "ce");
  const auto run_dir = std::filesystem::path(cfg.out_dir) / cfg.name;
  std::string stage = "forge";
  try {
    ForgedData data = forge_data(cfg.data, run_dir);
    rec.original_if = data.original_if;
    rec.observed_if = data.observed_if;

    stage = "train";
    ModelBundle bundle = train_ce_baseline(
        data.train, cfg.ifd, cfg.ifd.epochs + cfg.ifpu.epochs);
    bundle.config_hash = rec.hash;
    std::filesystem::create_directories(run_dir);
    save_checkpoint(bundle, run_dir / "ce.ckpt");

    stage = "evaluate";
    rec.metrics = evaluate(bundle, data.test, data.train.observed_sizes);
  } catch (const std::exception& e) {
    rec.failure_stage = stage + ": " + e.what();
  }
  finish_record(rec, cfg, t0);
  return rec;
}

// ---- comparison & plots ----

std::vector<CompareRow> compare(const ResultRecord& base,
                                const ResultRecord& other) {
  if (base.hash != other.hash)
    throw ForgeError("compare: config hashes differ (" +
                     std::to_string(base.hash) + " vs " +
                     std::to_string(other.hash) + ")");
  auto row = [&](const std::string& name, double b, double o) {
    return CompareRow{name, b, o, o - b};
  };
  return {row("overall", base.metrics.overall, other.metrics.overall),
          row("head", base.metrics.head, other.metrics.head),
          row("middle", base.metrics.middle, other.metrics.middle),
          row("tail", base.metrics.tail, other.metrics.tail),
          row("hit_rate", base.hit, other.hit)};
}

std::string compare_text(const std::vector<CompareRow>& rows) {
  std::string out = "metric      base      other     delta\n";
  char buf[96];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%-10s %9.3f %9.3f %+9.3f\n",
                  r.metric.c_str(), r.base, r.other, r.delta);
    out += buf;
  }
  return out;
}

void emit_plots(const std::vector<ResultRecord>& records,
                const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  auto write = [&](const std::string& name, const std::string& content) {
    std::ofstream out(out_dir / name);
    out << content;
  };

  std::vector<Series> om, lsm;
  for (const auto& rec : records) {
    if (!rec.om_curve.empty()) om.push_back({rec.name, rec.om_curve});
    if (!rec.lsm_curve.empty()) lsm.push_back({rec.name, rec.lsm_curve});
  }
  if (!om.empty()) write("om.svg", svg_line_chart("orthogonality measure", om));
  if (!lsm.empty()) write("lsm.svg", svg_line_chart("L1 sparsity measure", lsm));

  std::vector<Series> bars;
  for (const auto& rec : records)
    bars.push_back({rec.name + "-" + rec.method,
                    {rec.metrics.overall, rec.metrics.head, rec.metrics.middle,
                     rec.metrics.tail}});
  write("accuracy.svg",
        svg_bar_chart("top-1 accuracy (%)",
                      {"overall", "head", "middle", "tail"}, bars));

  for (const auto& rec : records) {
    if (rec.transition.class_count == 0) continue;
    write("transition.svg",
          svg_heatmap("empirical transition matrix (true row -> observed col)",
                      rec.transition.p, rec.transition.class_count,
                      rec.transition.class_count));
    break;
  }
}

}  // namespace dull
