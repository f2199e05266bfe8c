#pragma once

#include "oat/autodiff.hpp"
#include "oat/rng.hpp"

#include <optional>

namespace oat {

struct ImageShape {
  int channels = 1;
  int height = 28;
  int width = 28;
  int size() const { return channels * height * width; }
};

/// Stochastic view generator. With an image shape the crop and flip are spatial
/// (pad-and-shift, mirror columns); for tabular rows the crop becomes bounded
/// additive jitter and the flip is a no-op. Output is always clipped to [0,1].
struct AugmentationPolicy {
  std::optional<ImageShape> image;
  int crop_pad = 4;            // images: max shift in pixels
  double jitter = 0.02;        // tabular: additive U(-jitter, jitter)
  double flip_prob = 0.5;      // images only
  double scale_jitter = 0.0;   // per-feature multiplicative U(1-s, 1+s)
  double erase_prob = 0.0;     // random erasing, filled with U(0,1)
  double erase_frac = 0.0;     // fraction of features (or image area) erased

  /// tau1: crop-style jitter and horizontal flip.
  static AugmentationPolicy weak(std::optional<ImageShape> image = std::nullopt);
  /// tau2: crop-jitter, flip, per-feature scaling jitter and random erasing.
  static AugmentationPolicy strong(std::optional<ImageShape> image = std::nullopt);
};

ad::Matrix augment(const ad::Matrix& batch, const AugmentationPolicy& policy, SplitMix64& rng);

}  // namespace oat
