#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "dull/ifd.hpp"
#include "dull/mixer.hpp"
#include "dull/net.hpp"
#include "dull/relabel.hpp"
#include "dull/training_set.hpp"

namespace dull {

// Eq-style instance mask: channel k is active iff the G-column sum over the
// label set exceeds eps (guards against [0,1]-projected float dust).
inline constexpr double kMaskEps = 1e-8;

Tensor instance_mask(const std::vector<int>& label_set, const Tensor& g);

// Stacks instance_mask rows for a batch, [N, K].
Tensor instance_masks(const std::vector<const std::vector<int>*>& label_sets,
                      const Tensor& g);

// MSE between the unlearned bundle's plain and masked predictions, averaged
// over batch and classes. The frozen original only vouches for the stage
// pairing; it contributes no values here.
double ifpu_loss(const ModelBundle& original, const ModelBundle& unlearned,
                 const Tensor& x, const Tensor& masks);

struct IfpuConfig {
  int epochs = 15;
  int batch_size = 128;
  double lr = 0.02;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  std::vector<int> lr_decay_epochs = {8, 12};
  double lr_decay_factor = 0.1;
  std::uint64_t seed = 1;
  RelabelConfig relabel;
  MixerConfig mixer;
  AugmentConfig augment = AugmentConfig::weak_image();
};

struct UnlearnEpoch {
  double ce = 0.0;
  double ifpu = 0.0;
  double hit_rate = 0.0;
  double val_acc = 0.0;
};

struct UnlearnReport {
  std::vector<UnlearnEpoch> epochs;
  std::vector<MultiLabelRecord> last_records;  // final epoch's relabeling
};

// Fine-tunes a copy of `original` per the partial-unlearning objective:
// each epoch re-scores the dataset (dual-view JSD multi-labels), derives
// per-instance channel masks from the frozen original's G, and optimizes
// CE(smoothed + mixed batches) + MSE(plain vs masked predictions).
std::pair<ModelBundle, UnlearnReport> unlearn_finetune(
    const ModelBundle& original, const TrainingSet& train,
    const IfpuConfig& config, const TrainingSet* val = nullptr,
    const std::optional<std::filesystem::path>& abort_dir = std::nullopt);

}  // namespace dull
