#include "dull/augment.hpp"

#include <algorithm>

namespace dull {

void augment_image_chw(std::vector<double>& img, int channels, int height,
                       int width, const AugmentConfig& cfg, Rng& rng) {
  if (!cfg.enabled) return;
  const std::size_t plane = static_cast<std::size_t>(height) * width;

  if (cfg.crop_pad > 0) {
    // zero-pad then crop back to the original size
    const int pad = cfg.crop_pad;
    const int dy = rng.uniform_int(-pad, pad);
    const int dx = rng.uniform_int(-pad, pad);
    if (dy != 0 || dx != 0) {
      std::vector<double> shifted(img.size(), 0.0);
      for (int c = 0; c < channels; ++c)
        for (int y = 0; y < height; ++y) {
          const int sy = y + dy;
          if (sy < 0 || sy >= height) continue;
          for (int x = 0; x < width; ++x) {
            const int sx = x + dx;
            if (sx < 0 || sx >= width) continue;
            shifted[c * plane + static_cast<std::size_t>(y) * width + x] =
                img[c * plane + static_cast<std::size_t>(sy) * width + sx];
          }
        }
      img = std::move(shifted);
    }
  }

  if (cfg.hflip && rng.bernoulli(0.5)) {
    for (int c = 0; c < channels; ++c)
      for (int y = 0; y < height; ++y) {
        double* row = img.data() + c * plane + static_cast<std::size_t>(y) * width;
        std::reverse(row, row + width);
      }
  }

  if (cfg.jitter > 0.0) {
    for (int c = 0; c < channels; ++c) {
      const double scale = 1.0 + rng.uniform(-cfg.jitter, cfg.jitter);
      const double shift = rng.uniform(-cfg.jitter, cfg.jitter) * 0.5;
      double* p = img.data() + c * plane;
      for (std::size_t j = 0; j < plane; ++j) p[j] = p[j] * scale + shift;
    }
  }

  if (cfg.cutout > 0) {
    const int cy = rng.uniform_int(0, height - 1);
    const int cx = rng.uniform_int(0, width - 1);
    const int half = cfg.cutout / 2;
    for (int c = 0; c < channels; ++c)
      for (int y = std::max(0, cy - half); y < std::min(height, cy + half); ++y)
        for (int x = std::max(0, cx - half); x < std::min(width, cx + half); ++x)
          img[c * plane + static_cast<std::size_t>(y) * width + x] = 0.0;
  }
}

void augment_features(std::vector<double>& feats, const AugmentConfig& cfg,
                      Rng& rng) {
  if (!cfg.enabled) return;
  if (cfg.feat_noise > 0.0)
    for (auto& v : feats) v += cfg.feat_noise * rng.normal();
  if (cfg.feat_drop > 0.0)
    for (auto& v : feats)
      if (rng.bernoulli(cfg.feat_drop)) v = 0.0;
}

}  // namespace dull
