#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "dull/dataset.hpp"
#include "dull/ifd.hpp"
#include "dull/net.hpp"
#include "dull/training_set.hpp"
#include "dull/unlearn.hpp"

namespace dull {

struct DataConfig {
  std::string source = "synthetic-blobs";  // synthetic-blobs | synthetic-images
                                           // | cifar10 | cifar100 | manifest
  std::string path;                        // data dir or manifest file
  int classes = 10;
  int train_per_class = 600;   // balanced source, before the long-tail cut
  int test_per_class = 100;
  int input_dim = 32;          // blobs
  double signal = 1.5;         // synthetic separation knob
  double imbalance_factor = 10.0;
  double noise_ratio = 0.4;
  std::uint64_t seed = 1;
};

struct ExperimentConfig {
  std::string name = "exp";
  int threads = 2;
  DataConfig data;
  IfdConfig ifd;
  IfpuConfig ifpu;
  std::string out_dir = "results";
};

void to_json(nlohmann::json& j, const AugmentConfig& c);
void from_json(const nlohmann::json& j, AugmentConfig& c);
void to_json(nlohmann::json& j, const ArchConfig& c);
void from_json(const nlohmann::json& j, ArchConfig& c);
void to_json(nlohmann::json& j, const IfdConfig& c);
void from_json(const nlohmann::json& j, IfdConfig& c);
void to_json(nlohmann::json& j, const RelabelConfig& c);
void from_json(const nlohmann::json& j, RelabelConfig& c);
void to_json(nlohmann::json& j, const MixerConfig& c);
void from_json(const nlohmann::json& j, MixerConfig& c);
void to_json(nlohmann::json& j, const IfpuConfig& c);
void from_json(const nlohmann::json& j, IfpuConfig& c);
void to_json(nlohmann::json& j, const DataConfig& c);
void from_json(const nlohmann::json& j, DataConfig& c);
void to_json(nlohmann::json& j, const ExperimentConfig& cfg);
void from_json(const nlohmann::json& j, ExperimentConfig& cfg);
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

// Stable hash of the canonical config JSON (method is not part of the config,
// so a run and its CE baseline share the hash).
std::uint64_t config_hash(const ExperimentConfig& cfg);

struct EvalMetrics {
  double overall = 0.0, head = 0.0, middle = 0.0, tail = 0.0;  // percent
  std::vector<double> per_class;     // percent, -1 when absent from test set
  std::vector<int> tercile_of_class; // 0 head, 1 middle, 2 tail
  std::vector<int> absent_classes;
};

// Top-1 accuracy overall and per head/middle/tail tercile of the observed
// training-size ranking.
EvalMetrics evaluate(const ModelBundle& bundle, const TrainingSet& test,
                     const std::vector<int>& observed_sizes);

std::vector<int> tercile_partition(const std::vector<int>& observed_sizes);

struct ResultRecord {
  std::string name;
  std::string method;  // dull | ce
  std::uint64_t hash = 0;
  std::string failure_stage;  // empty on success
  EvalMetrics metrics;
  std::vector<double> om_curve, lsm_curve;
  std::vector<double> ce_curve, ifpu_curve;
  double hit = 0.0, top1_hit = 0.0;
  TransitionMatrix transition;
  double wall_seconds = 0.0;
  double observed_if = 0.0, original_if = 0.0;
  nlohmann::json config;
};

void save_result(const ResultRecord& rec, const std::filesystem::path& path);
ResultRecord load_result(const std::filesystem::path& path);
void append_csv_summary(const ResultRecord& rec,
                        const std::filesystem::path& csv);

// Full pipeline: forge -> ifd -> ifpu -> evaluate.  Any stage failure yields
// a partial record with failure_stage set instead of throwing.
ResultRecord run_experiment(const ExperimentConfig& cfg);

// Plain cross-entropy baseline on the same forged data, backbone, optimizer
// and augmentation; runs ifd.epochs + ifpu.epochs epochs.
ResultRecord baseline_ce(const ExperimentConfig& cfg);

struct CompareRow {
  std::string metric;
  double base = 0.0, other = 0.0, delta = 0.0;
};

// Deltas of `other` minus `base`; refuses records with different hashes.
std::vector<CompareRow> compare(const ResultRecord& base,
                                const ResultRecord& other);
std::string compare_text(const std::vector<CompareRow>& rows);

void emit_plots(const std::vector<ResultRecord>& records,
                const std::filesystem::path& out_dir);

// Data-root resolution for CIFAR sources: explicit path, else DULL_DATA_ROOT.
std::filesystem::path resolve_data_root(const std::string& configured);

// Internals reused by the CLI and the acceptance suite.
struct ForgedData {
  NoisyDataset manifest;   // train (noisy) + test split
  TrainingSet train;
  TrainingSet test;
  double original_if = 0.0;
  double observed_if = 0.0;
};
ForgedData forge_data(const DataConfig& cfg,
                      const std::filesystem::path& work_dir);

ModelBundle train_ce_baseline(const TrainingSet& train, const IfdConfig& ifd,
                              int total_epochs);

}  // namespace dull
