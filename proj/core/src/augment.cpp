#include "oat/augment.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace oat {

AugmentationPolicy AugmentationPolicy::weak(std::optional<ImageShape> image) {
  AugmentationPolicy p;
  p.image = image;
  return p;
}

AugmentationPolicy AugmentationPolicy::strong(std::optional<ImageShape> image) {
  AugmentationPolicy p;
  p.image = image;
  p.jitter = 0.05;
  p.scale_jitter = 0.2;
  p.erase_prob = 0.5;
  p.erase_frac = 0.125;
  return p;
}

namespace {

void crop_and_flip(Eigen::Ref<ad::RowVector> row, const ImageShape& s, const AugmentationPolicy& p,
                   SplitMix64& rng) {
  const int span = 2 * p.crop_pad + 1;
  const int dy = static_cast<int>(rng.below(static_cast<std::uint64_t>(span))) - p.crop_pad;
  const int dx = static_cast<int>(rng.below(static_cast<std::uint64_t>(span))) - p.crop_pad;
  const bool flip = rng.bernoulli(p.flip_prob);
  const ad::RowVector src = row;
  for (int c = 0; c < s.channels; ++c) {
    for (int y = 0; y < s.height; ++y) {
      for (int x = 0; x < s.width; ++x) {
        const int sy = y + dy;
        int sx = x + dx;
        if (flip) sx = s.width - 1 - sx;
        double v = 0.0;
        if (sy >= 0 && sy < s.height && sx >= 0 && sx < s.width) {
          v = src((c * s.height + sy) * s.width + sx);
        }
        row((c * s.height + y) * s.width + x) = v;
      }
    }
  }
}

void erase(Eigen::Ref<ad::RowVector> row, const std::optional<ImageShape>& image, double frac,
           SplitMix64& rng) {
  if (image) {
    const ImageShape& s = *image;
    const double side = std::sqrt(frac);
    const int eh = std::max(1, static_cast<int>(std::lround(side * s.height)));
    const int ew = std::max(1, static_cast<int>(std::lround(side * s.width)));
    const int y0 = static_cast<int>(rng.below(static_cast<std::uint64_t>(s.height - eh + 1)));
    const int x0 = static_cast<int>(rng.below(static_cast<std::uint64_t>(s.width - ew + 1)));
    for (int c = 0; c < s.channels; ++c) {
      for (int y = y0; y < y0 + eh; ++y) {
        for (int x = x0; x < x0 + ew; ++x) row((c * s.height + y) * s.width + x) = rng.uniform();
      }
    }
    return;
  }
  const auto d = static_cast<int>(row.size());
  const int len = std::max(1, static_cast<int>(std::lround(frac * d)));
  const int start = static_cast<int>(rng.below(static_cast<std::uint64_t>(d - len + 1)));
  for (int j = start; j < start + len; ++j) row(j) = rng.uniform();
}

}  // namespace

ad::Matrix augment(const ad::Matrix& batch, const AugmentationPolicy& p, SplitMix64& rng) {
  if (p.image && p.image->size() != batch.cols()) {
    throw std::invalid_argument("augment: image shape does not match feature count");
  }
  ad::Matrix out = batch;
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    auto row = out.row(i);
    if (p.image) {
      crop_and_flip(row, *p.image, p, rng);
    } else if (p.jitter > 0.0) {
      for (Eigen::Index j = 0; j < row.size(); ++j) row(j) += rng.uniform(-p.jitter, p.jitter);
    }
    if (p.scale_jitter > 0.0) {
      for (Eigen::Index j = 0; j < row.size(); ++j) {
        row(j) *= rng.uniform(1.0 - p.scale_jitter, 1.0 + p.scale_jitter);
      }
    }
    if (p.erase_prob > 0.0 && p.erase_frac > 0.0 && rng.bernoulli(p.erase_prob)) {
      erase(row, p.image, p.erase_frac, rng);
    }
  }
  return out.cwiseMax(0.0).cwiseMin(1.0);
}

}  // namespace oat
