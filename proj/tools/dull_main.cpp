#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "dull/checkpoint.hpp"
#include "dull/harness.hpp"
#include "dull/manifest.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

dull::IfdConfig read_ifd_config(const std::string& path) {
  dull::IfdConfig cfg;
  if (path.empty()) return cfg;
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config " + path);
  json j;
  in >> j;
  j.get_to(cfg);
  return cfg;
}

dull::IfpuConfig read_ifpu_config(const std::string& path) {
  dull::IfpuConfig cfg;
  if (path.empty()) return cfg;
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config " + path);
  json j;
  in >> j;
  j.get_to(cfg);
  return cfg;
}

void write_jsonl_ifd(const dull::DisentangleReport& report,
                     const fs::path& path) {
  std::ofstream out(path);
  for (int e = 0; e < report.epochs(); ++e) {
    json j{{"epoch", e},
           {"L0", report.l0[e]},
           {"L1", report.l1[e]},
           {"sparsity", report.sparsity[e]},
           {"OM", report.om[e]},
           {"LSM", report.lsm[e]},
           {"train_acc", report.train_acc[e]}};
    out << j.dump() << "\n";
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"long-tailed noisy-label training toolkit"};
  app.require_subcommand(1);

  // ---- forge ----
  std::string forge_source, forge_variant = "cifar10", forge_out;
  double forge_if = 10.0, forge_noise = 0.4;
  std::uint64_t forge_seed = 1;
  auto* forge = app.add_subcommand("forge",
                                   "build a long-tailed T2H-noisy manifest");
  forge->add_option("--source", forge_source,
                    "directory with CIFAR binaries (or DULL_DATA_ROOT)");
  forge->add_option("--variant", forge_variant, "cifar10 | cifar100");
  forge->add_option("--if", forge_if, "imbalance factor")->required();
  forge->add_option("--noise", forge_noise, "T2H noise ratio in [0,1)")
      ->required();
  forge->add_option("--seed", forge_seed, "rng seed");
  forge->add_option("--out", forge_out, "output manifest path")->required();

  // ---- train-ifd ----
  std::string ti_manifest, ti_config, ti_out;
  int ti_threads = 2;
  auto* tifd = app.add_subcommand("train-ifd",
                                  "train the original disentangled model");
  tifd->add_option("--manifest", ti_manifest)->required();
  tifd->add_option("--config", ti_config, "IFD config JSON");
  tifd->add_option("--out", ti_out, "checkpoint directory")->required();
  tifd->add_option("--threads", ti_threads);

  // ---- unlearn ----
  std::string un_manifest, un_original, un_config, un_out;
  int un_threads = 2;
  auto* unlearn = app.add_subcommand("unlearn",
                                     "partial-unlearning fine-tune");
  unlearn->add_option("--manifest", un_manifest)->required();
  unlearn->add_option("--original", un_original,
                      "directory holding original.ckpt")->required();
  unlearn->add_option("--config", un_config, "IFPU config JSON");
  unlearn->add_option("--out", un_out, "output directory")->required();
  unlearn->add_option("--threads", un_threads);

  // ---- run ----
  std::string run_config;
  bool run_with_baseline = false;
  auto* run = app.add_subcommand("run", "full experiment pipeline");
  run->add_option("--config", run_config)->required();
  run->add_flag("--with-baseline", run_with_baseline,
                "also run the CE baseline");

  // ---- compare ----
  std::vector<std::string> cmp_runs;
  auto* cmp = app.add_subcommand("compare", "delta table between two runs");
  cmp->add_option("--runs", cmp_runs, "two result JSON files")
      ->expected(2)
      ->required();

  // ---- report ----
  std::string rep_dir, rep_out;
  auto* rep = app.add_subcommand("report", "plots + summary for a results dir");
  rep->add_option("--dir", rep_dir)->required();
  rep->add_option("--out", rep_out)->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*forge) {
      const auto root = dull::resolve_data_root(forge_source);
      const auto all = dull::ingest_cifar(root, forge_variant);
      dull::LabeledDataset train, test;
      train.class_count = test.class_count = all.class_count;
      train.sources = test.sources = all.sources;
      for (const auto& inst : all.instances)
        (inst.split == "train" ? train : test).instances.push_back(inst);
      const auto longtail = dull::build_longtail(train, forge_if, forge_seed);
      auto noisy =
          dull::inject_t2h_noise(longtail, forge_noise, forge_seed + 1000003);
      std::cout << "original IF " << dull::imbalance_factor(longtail)
                << ", observed IF " << dull::observed_imbalance_factor(noisy)
                << "\n";
      dull::save_manifest(dull::with_test_split(std::move(noisy), test),
                          forge_out);
      std::cout << "wrote " << forge_out << "\n";
      return 0;
    }

    if (*tifd) {
      dull::set_gemm_threads(ti_threads);
      const auto manifest = dull::load_manifest(ti_manifest);
      dull::PixelReader reader(manifest.sources);
      const auto train = dull::materialize(manifest, "train", &reader);
      const auto cfg = read_ifd_config(ti_config);
      fs::create_directories(ti_out);
      auto [bundle, report] = dull::train_ifd(train, cfg, fs::path(ti_out));
      dull::save_checkpoint(bundle, fs::path(ti_out) / "original.ckpt");
      write_jsonl_ifd(report, fs::path(ti_out) / "ifd_log.jsonl");
      std::cout << "final OM " << report.final_om << ", final LSM "
                << report.final_lsm << "\n";
      return 0;
    }

    if (*unlearn) {
      dull::set_gemm_threads(un_threads);
      const auto manifest = dull::load_manifest(un_manifest);
      dull::PixelReader reader(manifest.sources);
      const auto train = dull::materialize(manifest, "train", &reader);
      dull::TrainingSet test;
      bool have_test = false;
      try {
        test = dull::materialize(manifest, "test", &reader);
        have_test = true;
      } catch (const dull::ForgeError&) {
      }
      const auto original = dull::load_checkpoint(
          fs::path(un_original) / "original.ckpt", manifest.class_count);
      const auto cfg = read_ifpu_config(un_config);
      fs::create_directories(un_out);
      auto [bundle, report] = dull::unlearn_finetune(
          original, train, cfg, have_test ? &test : nullptr, fs::path(un_out));
      dull::save_checkpoint(bundle, fs::path(un_out) / "unlearned.ckpt");
      dull::save_relabel_dump(report.last_records,
                              fs::path(un_out) / "relabel.jsonl");
      std::ofstream log(fs::path(un_out) / "unlearn_log.jsonl");
      for (std::size_t e = 0; e < report.epochs.size(); ++e) {
        const auto& ep = report.epochs[e];
        log << json{{"epoch", e},
                    {"ce", ep.ce},
                    {"ifpu", ep.ifpu},
                    {"hit_rate", ep.hit_rate},
                    {"val_acc", ep.val_acc}}
                   .dump()
            << "\n";
      }
      if (!report.epochs.empty())
        std::cout << "final val acc " << report.epochs.back().val_acc << "\n";
      return 0;
    }

    if (*run) {
      const auto cfg = dull::load_experiment_config(run_config);
      const auto rec = dull::run_experiment(cfg);
      if (!rec.failure_stage.empty()) {
        std::cerr << "pipeline failed at " << rec.failure_stage << "\n";
        return 1;
      }
      std::cout << "dull overall " << rec.metrics.overall << " (head "
                << rec.metrics.head << ", middle " << rec.metrics.middle
                << ", tail " << rec.metrics.tail << ")\n";
      if (run_with_baseline) {
        const auto base = dull::baseline_ce(cfg);
        if (!base.failure_stage.empty()) {
          std::cerr << "baseline failed at " << base.failure_stage << "\n";
          return 1;
        }
        std::cout << "ce overall " << base.metrics.overall << "\n";
        std::cout << dull::compare_text(dull::compare(base, rec));
      }
      return 0;
    }

    if (*cmp) {
      const auto a = dull::load_result(cmp_runs[0]);
      const auto b = dull::load_result(cmp_runs[1]);
      std::cout << dull::compare_text(dull::compare(a, b));
      return 0;
    }

    if (*rep) {
      std::vector<dull::ResultRecord> records;
      for (const auto& entry : fs::directory_iterator(rep_dir)) {
        if (entry.path().extension() != ".json") continue;
        try {
          auto rec = dull::load_result(entry.path());
          if (!rec.method.empty()) records.push_back(std::move(rec));
        } catch (const std::exception&) {
        }
      }
      if (records.empty()) {
        std::cerr << "no result records under " << rep_dir << "\n";
        return 1;
      }
      fs::create_directories(rep_out);
      dull::emit_plots(records, rep_out);
      std::ofstream csv(fs::path(rep_out) / "summary.csv");
      csv << "name,method,overall,head,middle,tail,hit_rate\n";
      for (const auto& rec : records)
        csv << rec.name << ',' << rec.method << ',' << rec.metrics.overall
            << ',' << rec.metrics.head << ',' << rec.metrics.middle << ','
            << rec.metrics.tail << ',' << rec.hit << "\n";
      std::cout << "wrote report to " << rep_out << " (" << records.size()
                << " runs)\n";
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
