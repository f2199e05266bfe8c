#pragma once

#include "oat/dataset.hpp"

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace oat {

enum class NoiseType { none, symmetric, asymmetric };

std::string to_string(NoiseType t);
NoiseType parse_noise_type(const std::string& s);

using ClassCounts = std::vector<std::int64_t>;
using ClassPair = std::pair<int, int>;  // source -> target

struct CorruptionSpec {
  NoiseType noise_type = NoiseType::none;
  double target_nr = 0.0;
  double target_ir = 1.0;
  std::vector<ClassPair> asym_pairs;
  std::uint64_t seed = 0;

  void validate(int num_classes) const;
};

/// Fraction of samples whose observed label differs from ground truth.
double compute_nr(const LabeledDataset& ds);

/// min(N_i) / max(N_i).
double compute_ir(const ClassCounts& counts);

/// Flips exactly round(nr * |S|) labels, chosen uniformly without replacement,
/// to a label drawn uniformly from the classes other than the ground truth.
LabeledDataset apply_symmetric_noise(const LabeledDataset& ds, double nr, std::uint64_t seed);

/// For each (source -> target) pair, relabels exactly round(nr * N_source) of
/// the source class's samples to `target`.
LabeledDataset apply_asymmetric_noise(const LabeledDataset& ds, double nr,
                                      const std::vector<ClassPair>& pairs, std::uint64_t seed);

/// Target count for the class at descending-count rank `rank`:
/// round(n_max * ir^(rank / (C - 1))), clamped to at least 1.
std::int64_t exponential_profile_count(std::int64_t n_max, double ir, int rank, int num_classes);

/// Exponential long-tail subsampling over observed labels. Classes are ranked by
/// descending observed count (ties to the lower class id). A class that would
/// lose all of its correctly labeled samples keeps one of them.
LabeledDataset apply_exponential_imbalance(const LabeledDataset& ds, double ir, std::uint64_t seed);

/// Tops every observed class up to N_max by drawing copies with replacement.
/// Originals keep their order; copies are appended and carry the source id.
LabeledDataset balanced_oversample(const LabeledDataset& ds, std::uint64_t seed);

struct CorruptionResult {
  LabeledDataset dataset;
  double realized_nr = 0.0;  // right after the noise stage
  double final_nr = 0.0;     // after imbalance subsampling
  double realized_ir = 1.0;  // over observed labels of the final dataset
  double gt_ir = 1.0;        // over ground-truth labels of the final dataset
};

/// Noise first, then exponential imbalance on the noisy labels.
CorruptionResult corrupt(const LabeledDataset& clean, const CorruptionSpec& spec);

}  // namespace oat
