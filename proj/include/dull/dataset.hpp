#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace dull {

// Reference into an on-disk CIFAR-style binary: `offset` points at the first
// of the 3072 pixel bytes, not at the record header.
struct ImageRef {
  std::string file;
  std::uint64_t offset = 0;
  bool operator==(const ImageRef&) const = default;
};

// An instance payload is either absent (label-only work), an image reference,
// or an inline feature vector (synthetic tasks).
using Payload = std::variant<std::monostate, ImageRef, std::vector<double>>;

inline bool payload_equal(const Payload& a, const Payload& b) {
  return a == b;
}

struct Instance {
  int id = 0;
  int true_label = 0;
  std::string split = "train";
  Payload payload;
  bool operator==(const Instance&) const = default;
};

// A file an ImageRef may point into; checksummed so stale manifests fail
// loudly instead of feeding wrong pixels.
struct SourceFile {
  std::string file;
  std::uint64_t bytes = 0;
  std::uint64_t fnv64 = 0;
  bool operator==(const SourceFile&) const = default;
};

struct LabeledDataset {
  int class_count = 0;
  bool long_tailed = false;  // true => classes indexed in descending size
  std::vector<Instance> instances;
  std::vector<SourceFile> sources;

  std::vector<int> class_sizes() const;
  bool operator==(const LabeledDataset&) const = default;
};

struct NoisyInstance {
  int id = 0;
  int true_label = 0;
  int observed_label = 0;
  std::string split = "train";
  Payload payload;
  bool operator==(const NoisyInstance&) const = default;
};

struct NoisyDataset {
  int class_count = 0;
  double noise_ratio = 0.0;
  std::uint64_t seed = 0;
  std::vector<NoisyInstance> instances;
  std::vector<SourceFile> sources;

  // Counts by observed label over the train split.
  std::vector<int> observed_sizes_by_class() const;
  bool operator==(const NoisyDataset&) const = default;
};

// Row-stochastic C x C matrix, T[t][h] = P(observed = h | true = t).
struct TransitionMatrix {
  int class_count = 0;
  std::vector<double> p;                 // row-major
  std::vector<int> empty_rows;           // classes with no instances (identity rows)

  double at(int t, int h) const {
    return p[static_cast<std::size_t>(t) * class_count + h];
  }
  double& at(int t, int h) {
    return p[static_cast<std::size_t>(t) * class_count + h];
  }
};

class ForgeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Subsamples a balanced source into an exponential long-tail profile
// n_k = round(n_1 * IF^(-k/(C-1))) and re-indexes classes in descending size.
LabeledDataset build_longtail(const LabeledDataset& source,
                              double imbalance_factor, std::uint64_t seed);

// Tail-to-head noise: class 0 (the largest) is never touched; each remaining
// class contributes a uniformly chosen floor(n_k * r) of its instances, whose
// labels are replaced by uniform draws from [0, true_label - 1]. True labels
// are retained for evaluation only.
NoisyDataset inject_t2h_noise(const LabeledDataset& dataset, double noise_ratio,
                              std::uint64_t seed);

TransitionMatrix empirical_transition_matrix(const NoisyDataset& noisy);

double imbalance_factor(const std::vector<int>& class_sizes);
double imbalance_factor(const LabeledDataset& dataset);
double observed_imbalance_factor(const NoisyDataset& noisy);

// Observed train-split counts sorted N_1 >= ... >= N_C.
std::vector<int> observed_class_sizes(const NoisyDataset& noisy);

// Rank of each class in descending observed-size order (0 = largest class);
// ties broken by class index for determinism.
std::vector<int> class_rank_by_size(const std::vector<int>& sizes);

}  // namespace dull
