#pragma once

#include <string>
#include <vector>

#include "dull/augment.hpp"
#include "dull/cifar.hpp"
#include "dull/dataset.hpp"
#include "dull/tensor.hpp"

namespace dull {

// In-memory view of one manifest split, ready for batching. Images stay as
// raw bytes until batch assembly; observed labels drive training, true labels
// exist for evaluation and diagnostics only.
struct TrainingSet {
  int class_count = 0;
  bool is_image = false;
  int channels = 0, height = 0, width = 0;
  int feat_dim = 0;

  std::vector<std::vector<std::uint8_t>> images;  // CHW bytes when is_image
  std::vector<std::vector<double>> features;      // when !is_image
  std::vector<int> observed;
  std::vector<int> true_labels;
  std::vector<int> ids;
  std::vector<int> observed_sizes;  // per observed class, this split

  std::size_t size() const { return observed.size(); }
  int input_channels() const { return is_image ? channels : 0; }
};

// reader may be null for feature-payload datasets.
TrainingSet materialize(const NoisyDataset& manifest, const std::string& split,
                        PixelReader* reader);

// Assembles a [n, C, H, W] or [n, D] batch; images are mapped to
// byte/255 - 0.5. aug/rng may be null for deterministic evaluation batches.
Tensor make_batch(const TrainingSet& set, const std::vector<int>& idx,
                  const AugmentConfig* aug, Rng* rng);

// One instance as a [1, ...] tensor (no augmentation).
Tensor single_input(const TrainingSet& set, int index);

}  // namespace dull
