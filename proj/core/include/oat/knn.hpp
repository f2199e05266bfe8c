#pragma once

#include "oat/autodiff.hpp"

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

namespace oat {

/// Read-only exact k-NN index over embedding rows (Euclidean distance).
class KnnIndex {
 public:
  KnnIndex(ad::Matrix points, int k);

  std::size_t size() const { return static_cast<std::size_t>(points_.rows()); }
  int k() const { return k_; }
  const ad::Matrix& points() const { return points_; }

  /// The k nearest indexed points to `query`; `self` (if given) is skipped.
  /// Equal distances go to the lower point index. Result is sorted by (distance, index).
  std::vector<std::size_t> query(std::span<const double> query, std::optional<std::size_t> self,
                                 int k) const;
  std::vector<std::size_t> neighbors_of(std::size_t member, int k) const;

 private:
  ad::Matrix points_;
  int k_;
};

/// Sum of squared coordinate differences, accumulated left to right.
double squared_distance(std::span<const double> a, std::span<const double> b);

/// Most frequent label among `neighbors`; ties go to the lower class id.
int majority_label(std::span<const std::size_t> neighbors, std::span<const int> labels,
                   int num_classes);

struct SplitSets {
  std::vector<std::size_t> clean_idx;
  std::vector<std::size_t> noisy_idx;
  std::vector<int> knn_labels;  // majority label per sample
};

/// A sample is clean iff the majority label of its k nearest neighbours (self
/// excluded) equals its own label. Requires k < index size. `threads` > 0
/// spreads queries across that many workers; the result does not depend on it.
SplitSets knn_split(const KnnIndex& index, std::span<const int> labels, int k, int num_classes,
                    int threads = 0);

/// min(k, n / 10), at least 1.
int effective_k(std::size_t n, int k);

}  // namespace oat
