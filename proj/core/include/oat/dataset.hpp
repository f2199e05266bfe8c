#pragma once

#include "oat/autodiff.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

namespace oat {

using Matrix = ad::Matrix;
using Labels = std::vector<int>;

class DatasetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Samples (one row per sample, values in [0,1]) with observed labels and,
/// when known, the ground-truth labels used only for diagnostics.
struct LabeledDataset {
  Matrix samples;
  Labels observed_labels;
  std::optional<Labels> gt_labels;
  int num_classes = 0;
  std::vector<std::int64_t> ids;

  std::size_t size() const { return observed_labels.size(); }
  Eigen::Index dim() const { return samples.cols(); }
  bool has_gt() const { return gt_labels.has_value(); }

  /// Throws DatasetError when a structural invariant is broken.
  void validate() const;

  /// Rows `indices` (in that order) as a new dataset; ids are carried over.
  LabeledDataset subset(std::span<const std::size_t> indices) const;

  friend bool operator==(const LabeledDataset&, const LabeledDataset&) = default;
};

struct SyntheticSpec {
  int num_classes = 10;
  int dim = 16;
  int per_class = 200;
  double cluster_spread = 0.1;
  std::uint64_t seed = 0;
};

/// Class means on a scaled simplex (one-hot, C <= d) or grid inside [0.2, 0.8]^d.
Matrix synthetic_class_means(int num_classes, int dim);

/// Isotropic Gaussian clusters, clipped to [0,1]. Samples are grouped by class.
LabeledDataset gen_synthetic(const SyntheticSpec& spec);

/// MNIST-style IDX pair (magic 0x00000803 images, 0x00000801 labels). Pixels
/// are scaled by 1/255. num_classes = 0 infers max label + 1.
LabeledDataset load_idx(const std::filesystem::path& image_path,
                        const std::filesystem::path& label_path, int num_classes = 0);

/// Writes meta.json, samples.csv and labels.csv into `dir` (created if absent).
void save_dataset(const LabeledDataset& ds, const std::filesystem::path& dir);
LabeledDataset load_dataset(const std::filesystem::path& dir);

/// Per-class counts of `labels` over [0, num_classes).
std::vector<std::int64_t> class_counts(std::span<const int> labels, int num_classes);

}  // namespace oat
