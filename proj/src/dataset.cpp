#include "dull/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "dull/rng.hpp"

namespace dull {

namespace {

void check_dense_labels(const LabeledDataset& d) {
  for (const auto& inst : d.instances) {
    if (inst.true_label < 0 || inst.true_label >= d.class_count)
      throw ForgeError("class index " + std::to_string(inst.true_label) +
                       " outside [0, " + std::to_string(d.class_count) + ")");
  }
}

int round_half_up(double x) { return static_cast<int>(std::floor(x + 0.5)); }

}  // namespace

std::vector<int> LabeledDataset::class_sizes() const {
  std::vector<int> sizes(class_count, 0);
  for (const auto& inst : instances) sizes[inst.true_label]++;
  return sizes;
}

std::vector<int> NoisyDataset::observed_sizes_by_class() const {
  std::vector<int> sizes(class_count, 0);
  for (const auto& inst : instances)
    if (inst.split == "train") sizes[inst.observed_label]++;
  return sizes;
}

LabeledDataset build_longtail(const LabeledDataset& source,
                              double imbalance_factor, std::uint64_t seed) {
  if (imbalance_factor < 1.0)
    throw ForgeError("imbalance factor must be >= 1, got " +
                     std::to_string(imbalance_factor));
  check_dense_labels(source);
  const int c = source.class_count;
  if (c < 2) throw ForgeError("need at least 2 classes");
  const auto src_sizes = source.class_sizes();
  const int n1 = *std::max_element(src_sizes.begin(), src_sizes.end());
  for (int k = 0; k < c; ++k) {
    if (src_sizes[k] != n1)
      throw ForgeError("source must be balanced; class " + std::to_string(k) +
                       " has " + std::to_string(src_sizes[k]) + " != " +
                       std::to_string(n1));
  }

  // n_k = n1 * IF^(-k/(C-1)); rejects profiles whose tail rounds to zero and
  // names the feasibility boundary (round-half-up keeps n_C >= 1 iff
  // IF <= 2 * n1).
  std::vector<int> target(c);
  for (int k = 0; k < c; ++k) {
    const double exact =
        n1 * std::pow(imbalance_factor, -static_cast<double>(k) / (c - 1));
    target[k] = round_half_up(exact);
    if (target[k] <= 0)
      throw ForgeError(
          "imbalance factor " + std::to_string(imbalance_factor) +
          " rounds class " + std::to_string(k) +
          " to zero instances; largest feasible IF for this source is " +
          std::to_string(2.0 * n1));
  }

  // Bucket instance indices per class, subsample each class to its target
  // size, assign new class index k to the k-th largest class.
  std::vector<std::vector<std::size_t>> buckets(c);
  for (std::size_t i = 0; i < source.instances.size(); ++i)
    buckets[source.instances[i].true_label].push_back(i);

  Rng rng(seed);
  LabeledDataset out;
  out.class_count = c;
  out.long_tailed = true;
  out.sources = source.sources;
  for (int k = 0; k < c; ++k) {
    auto& bucket = buckets[k];  // source classes are interchangeable: all n1
    auto keep = rng.sample_indices(bucket.size(),
                                   static_cast<std::size_t>(target[k]));
    std::sort(keep.begin(), keep.end());
    for (std::size_t pos : keep) {
      Instance inst = source.instances[bucket[pos]];
      inst.true_label = k;
      out.instances.push_back(std::move(inst));
    }
  }
  return out;
}

NoisyDataset inject_t2h_noise(const LabeledDataset& dataset, double noise_ratio,
                              std::uint64_t seed) {
  if (noise_ratio < 0.0 || noise_ratio >= 1.0)
    throw ForgeError("noise ratio must lie in [0, 1), got " +
                     std::to_string(noise_ratio));
  if (!dataset.long_tailed)
    throw ForgeError("dataset must be tagged long-tailed (descending class "
                     "order); re-index the caller's classes first");
  check_dense_labels(dataset);
  const auto sizes = dataset.class_sizes();
  for (std::size_t k = 1; k < sizes.size(); ++k) {
    if (sizes[k] > sizes[k - 1])
      throw ForgeError("class sizes not in descending order at class " +
                       std::to_string(k));
  }

  NoisyDataset out;
  out.class_count = dataset.class_count;
  out.noise_ratio = noise_ratio;
  out.seed = seed;
  out.sources = dataset.sources;
  out.instances.reserve(dataset.instances.size());
  for (const auto& inst : dataset.instances) {
    NoisyInstance ni;
    ni.id = inst.id;
    ni.true_label = inst.true_label;
    ni.observed_label = inst.true_label;
    ni.split = inst.split;
    ni.payload = inst.payload;
    out.instances.push_back(std::move(ni));
  }

  // Transferable set S excludes the largest class (class 0). Each class k >= 1
  // contributes a uniformly chosen floor(n_k * r) of its instances to S'; each
  // selected label is replaced by a uniform draw from [0, y-1].
  std::vector<std::vector<std::size_t>> by_class(dataset.class_count);
  for (std::size_t i = 0; i < out.instances.size(); ++i)
    by_class[out.instances[i].true_label].push_back(i);

  Rng rng(seed);
  for (int k = 1; k < dataset.class_count; ++k) {
    const auto& members = by_class[k];
    const auto quota = static_cast<std::size_t>(
        static_cast<double>(members.size()) * noise_ratio);
    auto chosen = rng.sample_indices(members.size(), quota);
    std::sort(chosen.begin(), chosen.end());
    for (std::size_t pos : chosen) {
      NoisyInstance& inst = out.instances[members[pos]];
      inst.observed_label = static_cast<int>(
          rng.uniform_below(static_cast<std::uint64_t>(k)));
    }
  }
  return out;
}

TransitionMatrix empirical_transition_matrix(const NoisyDataset& noisy) {
  const int c = noisy.class_count;
  TransitionMatrix t;
  t.class_count = c;
  t.p.assign(static_cast<std::size_t>(c) * c, 0.0);
  std::vector<std::int64_t> row_total(c, 0);
  for (const auto& inst : noisy.instances) {
    t.at(inst.true_label, inst.observed_label) += 1.0;
    row_total[inst.true_label]++;
  }
  for (int k = 0; k < c; ++k) {
    if (row_total[k] == 0) {
      t.at(k, k) = 1.0;  // identity row, flagged
      t.empty_rows.push_back(k);
      continue;
    }
    for (int h = 0; h < c; ++h) t.at(k, h) /= static_cast<double>(row_total[k]);
  }
  return t;
}

double imbalance_factor(const std::vector<int>& class_sizes) {
  const auto [mn, mx] =
      std::minmax_element(class_sizes.begin(), class_sizes.end());
  if (*mn <= 0) throw ForgeError("imbalance factor undefined: empty class");
  return static_cast<double>(*mx) / static_cast<double>(*mn);
}

double imbalance_factor(const LabeledDataset& dataset) {
  return imbalance_factor(dataset.class_sizes());
}

double observed_imbalance_factor(const NoisyDataset& noisy) {
  return imbalance_factor(noisy.observed_sizes_by_class());
}

std::vector<int> observed_class_sizes(const NoisyDataset& noisy) {
  auto sizes = noisy.observed_sizes_by_class();
  for (int s : sizes)
    if (s <= 0) throw ForgeError("observed class sizes undefined: empty class");
  std::sort(sizes.begin(), sizes.end(), std::greater<int>());
  return sizes;
}

std::vector<int> class_rank_by_size(const std::vector<int>& sizes) {
  const int c = static_cast<int>(sizes.size());
  std::vector<int> order(c);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return sizes[a] != sizes[b] ? sizes[a] > sizes[b] : a < b;
  });
  std::vector<int> rank(c);
  for (int r = 0; r < c; ++r) rank[order[r]] = r;
  return rank;
}

}  // namespace dull
