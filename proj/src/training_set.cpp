#include "dull/training_set.hpp"

namespace dull {

TrainingSet materialize(const NoisyDataset& manifest, const std::string& split,
                        PixelReader* reader) {
  TrainingSet set;
  set.class_count = manifest.class_count;
  set.observed_sizes.assign(manifest.class_count, 0);
  bool geometry_set = false;
  for (const auto& inst : manifest.instances) {
    if (inst.split != split) continue;
    if (const auto* ref = std::get_if<ImageRef>(&inst.payload)) {
      if (!reader)
        throw ForgeError("manifest references image files but no data root "
                         "reader was provided");
      auto bytes = reader->read(*ref);
      if (!geometry_set) {
        set.is_image = true;
        set.channels = 3;
        set.height = 32;
        set.width = 32;
        geometry_set = true;
      } else if (!set.is_image) {
        throw ForgeError("mixed image/feature payloads in one split");
      }
      set.images.push_back(std::move(bytes));
    } else if (const auto* feats =
                   std::get_if<std::vector<double>>(&inst.payload)) {
      if (!geometry_set) {
        set.is_image = false;
        set.feat_dim = static_cast<int>(feats->size());
        geometry_set = true;
      } else if (set.is_image) {
        throw ForgeError("mixed image/feature payloads in one split");
      } else if (static_cast<int>(feats->size()) != set.feat_dim) {
        throw ForgeError("inconsistent feature dims in manifest");
      }
      set.features.push_back(*feats);
    } else {
      throw ForgeError("instance " + std::to_string(inst.id) +
                       " carries no payload; label-only manifests cannot be "
                       "materialized for training");
    }
    set.observed.push_back(inst.observed_label);
    set.true_labels.push_back(inst.true_label);
    set.ids.push_back(inst.id);
    set.observed_sizes[inst.observed_label]++;
  }
  if (set.observed.empty())
    throw ForgeError("split '" + split + "' is empty");
  return set;
}

Tensor make_batch(const TrainingSet& set, const std::vector<int>& idx,
                  const AugmentConfig* aug, Rng* rng) {
  const int n = static_cast<int>(idx.size());
  if (set.is_image) {
    const std::size_t plane =
        static_cast<std::size_t>(set.channels) * set.height * set.width;
    Tensor x({n, set.channels, set.height, set.width});
    std::vector<double> img(plane);
    for (int i = 0; i < n; ++i) {
      const auto& bytes = set.images[static_cast<std::size_t>(idx[i])];
      for (std::size_t j = 0; j < plane; ++j)
        img[j] = bytes[j] / 255.0 - 0.5;
      if (aug && rng)
        augment_image_chw(img, set.channels, set.height, set.width, *aug, *rng);
      std::copy(img.begin(), img.end(),
                x.ptr() + static_cast<std::size_t>(i) * plane);
    }
    return x;
  }
  Tensor x({n, set.feat_dim});
  std::vector<double> feats;
  for (int i = 0; i < n; ++i) {
    feats = set.features[static_cast<std::size_t>(idx[i])];
    if (aug && rng) augment_features(feats, *aug, *rng);
    std::copy(feats.begin(), feats.end(),
              x.ptr() + static_cast<std::size_t>(i) * set.feat_dim);
  }
  return x;
}

Tensor single_input(const TrainingSet& set, int index) {
  return make_batch(set, {index}, nullptr, nullptr);
}

}  // namespace dull
