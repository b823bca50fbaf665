#pragma once

#include <vector>

#include "dull/rng.hpp"

namespace dull {

// Weak view: crop + horizontal flip. Strong view: weak + color jitter +
// cutout. The vector-input analogs are additive noise and feature dropout.
// The exact strong recipe is configuration, not contract.
struct AugmentConfig {
  bool enabled = true;
  // image ops (CHW)
  int crop_pad = 4;
  bool hflip = true;
  double jitter = 0.0;   // per-channel scale/shift strength
  int cutout = 0;        // square side, 0 disables
  // feature-vector ops
  double feat_noise = 0.0;
  double feat_drop = 0.0;

  static AugmentConfig weak_image() { return {true, 4, true, 0.0, 0, 0.05, 0.0}; }
  static AugmentConfig strong_image() { return {true, 4, true, 0.25, 8, 0.15, 0.25}; }
  static AugmentConfig none() { return {false, 0, false, 0.0, 0, 0.0, 0.0}; }
};

void augment_image_chw(std::vector<double>& img, int channels, int height,
                       int width, const AugmentConfig& cfg, Rng& rng);

void augment_features(std::vector<double>& feats, const AugmentConfig& cfg,
                      Rng& rng);

}  // namespace dull
