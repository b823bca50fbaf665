#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "dull/augment.hpp"
#include "dull/net.hpp"
#include "dull/training_set.hpp"

namespace dull {

struct RelabelConfig {
  double gamma = 0.5;  // weak/strong fusion weight
  AugmentConfig weak = AugmentConfig::weak_image();
  AugmentConfig strong = AugmentConfig::strong_image();
  std::uint64_t seed = 1;
  int chunk = 256;
};

struct MultiLabelRecord {
  int id = 0;
  double d = 0.0;   // JSD score in [0,1]
  bool clean = true;
  int q = 1;
  std::vector<int> labels;  // the adaptive label set, size q
  int top1 = -1;            // argmax of the fused prediction (not serialized)
};

// gamma * p_w + (1 - gamma) * p_s. Inputs must be probability vectors.
std::vector<double> fused_confidence(const std::vector<double>& p_weak,
                                     const std::vector<double>& p_strong,
                                     double gamma);

// Jensen-Shannon divergence, log base 2 so the range is [0, 1];
// 0 * log(0/x) == 0 by convention.
double jsd(const std::vector<double>& a, const std::vector<double>& b);

// q = max(1, floor(d * C)).
int label_count(double d, int class_count);

// clean <=> d <= mean(d). Returns flags; threshold_out receives the cutoff.
std::vector<char> split_clean_noisy(const std::vector<double>& d,
                                    double* threshold_out = nullptr);

// Top-q classes of p; noisy instances exclude the observed label. Ties break
// toward the lower class index.
std::vector<int> build_multilabel(const std::vector<double>& p, int observed,
                                  int q, bool clean);

// Uniform distribution over the label set (the normalized multi-label).
std::vector<double> multilabel_distribution(const std::vector<int>& labels,
                                            int class_count);

// Fraction of records whose true label is inside the label set.
double hit_rate(const std::vector<MultiLabelRecord>& records,
                const std::vector<int>& true_labels);
// Fraction whose true label equals the fused argmax (single-label baseline).
double top1_hit_rate(const std::vector<MultiLabelRecord>& records,
                     const std::vector<int>& true_labels);

// Dual-view scoring pass over a frozen bundle; records come back in set order.
std::vector<MultiLabelRecord> relabel_dataset(const ModelBundle& bundle,
                                              const TrainingSet& set,
                                              const RelabelConfig& cfg);

// JSON-lines {id, d, clean, q, labels:[...]}.
void save_relabel_dump(const std::vector<MultiLabelRecord>& records,
                       const std::filesystem::path& path);
std::vector<MultiLabelRecord> load_relabel_dump(
    const std::filesystem::path& path);

}  // namespace dull
