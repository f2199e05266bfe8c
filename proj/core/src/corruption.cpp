#include "oat/corruption.hpp"

#include "oat/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <stdexcept>

namespace oat {

std::string to_string(NoiseType t) {
  switch (t) {
    case NoiseType::none: return "none";
    case NoiseType::symmetric: return "symmetric";
    case NoiseType::asymmetric: return "asymmetric";
  }
  return "none";
}

NoiseType parse_noise_type(const std::string& s) {
  if (s == "none") return NoiseType::none;
  if (s == "symmetric") return NoiseType::symmetric;
  if (s == "asymmetric") return NoiseType::asymmetric;
  throw std::invalid_argument("unknown noise type '" + s + "'");
}

namespace {

void check_pairs(const std::vector<ClassPair>& pairs, int num_classes) {
  std::set<int> sources;
  for (auto [src, dst] : pairs) {
    if (src < 0 || src >= num_classes || dst < 0 || dst >= num_classes) {
      throw std::invalid_argument("asymmetric pair " + std::to_string(src) + "->" +
                                  std::to_string(dst) + " references a class outside [0, " +
                                  std::to_string(num_classes) + ")");
    }
    if (src == dst) throw std::invalid_argument("asymmetric pair maps a class onto itself");
    if (!sources.insert(src).second) {
      throw std::invalid_argument("asymmetric pairs list class " + std::to_string(src) + " twice");
    }
  }
}

void check_ratio(double nr) {
  if (!(nr >= 0.0 && nr < 1.0)) throw std::invalid_argument("noise ratio must lie in [0, 1)");
}

const Labels& reference_labels(const LabeledDataset& ds) {
  return ds.gt_labels ? *ds.gt_labels : ds.observed_labels;
}

}  // namespace

void CorruptionSpec::validate(int num_classes) const {
  check_ratio(target_nr);
  if (!(target_ir > 0.0 && target_ir <= 1.0)) {
    throw std::invalid_argument("imbalance ratio must lie in (0, 1]");
  }
  if (noise_type == NoiseType::asymmetric) {
    if (asym_pairs.empty()) throw std::invalid_argument("asymmetric noise needs class pairs");
    check_pairs(asym_pairs, num_classes);
  } else if (!asym_pairs.empty()) {
    throw std::invalid_argument("class pairs are only meaningful for asymmetric noise");
  }
}

double compute_nr(const LabeledDataset& ds) {
  if (!ds.gt_labels) throw std::invalid_argument("compute_nr: dataset has no ground-truth labels");
  if (ds.size() == 0) return 0.0;
  std::size_t wrong = 0;
  for (std::size_t i = 0; i < ds.size(); ++i) wrong += ds.observed_labels[i] != (*ds.gt_labels)[i];
  return static_cast<double>(wrong) / static_cast<double>(ds.size());
}

double compute_ir(const ClassCounts& counts) {
  if (counts.empty()) throw std::invalid_argument("compute_ir: no classes");
  const auto [lo, hi] = std::minmax_element(counts.begin(), counts.end());
  if (*hi <= 0) throw std::invalid_argument("compute_ir: all class counts are zero");
  return static_cast<double>(*lo) / static_cast<double>(*hi);
}

LabeledDataset apply_symmetric_noise(const LabeledDataset& ds, double nr, std::uint64_t seed) {
  check_ratio(nr);
  if (!ds.gt_labels) throw std::invalid_argument("symmetric noise needs ground-truth labels");
  LabeledDataset out = ds;
  const auto flips = static_cast<std::size_t>(std::llround(nr * static_cast<double>(ds.size())));
  if (flips == 0) return out;
  if (ds.num_classes < 2) throw std::invalid_argument("symmetric noise needs at least 2 classes");

  SplitMix64 rng(seed);
  for (std::size_t i : rng.sample_without_replacement(ds.size(), flips)) {
    const int gt = (*ds.gt_labels)[i];
    const int r = static_cast<int>(rng.below(static_cast<std::uint64_t>(ds.num_classes - 1)));
    out.observed_labels[i] = r < gt ? r : r + 1;
  }
  return out;
}

LabeledDataset apply_asymmetric_noise(const LabeledDataset& ds, double nr,
                                      const std::vector<ClassPair>& pairs, std::uint64_t seed) {
  check_ratio(nr);
  if (pairs.empty()) throw std::invalid_argument("asymmetric noise needs class pairs");
  check_pairs(pairs, ds.num_classes);
  LabeledDataset out = ds;
  const Labels& ref = reference_labels(ds);
  SplitMix64 rng(seed);
  for (auto [src, dst] : pairs) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < ds.size(); ++i) {
      if (ref[i] == src) members.push_back(i);
    }
    const auto flips =
        static_cast<std::size_t>(std::llround(nr * static_cast<double>(members.size())));
    for (std::size_t k : rng.sample_without_replacement(members.size(), flips)) {
      out.observed_labels[members[k]] = dst;
    }
  }
  return out;
}

std::int64_t exponential_profile_count(std::int64_t n_max, double ir, int rank, int num_classes) {
  if (!(ir > 0.0 && ir <= 1.0)) throw std::invalid_argument("imbalance ratio must lie in (0, 1]");
  if (num_classes <= 1) return std::max<std::int64_t>(n_max, 1);
  const double exponent = static_cast<double>(rank) / static_cast<double>(num_classes - 1);
  const auto k = std::llround(static_cast<double>(n_max) * std::pow(ir, exponent));
  return std::max<std::int64_t>(k, 1);
}

LabeledDataset apply_exponential_imbalance(const LabeledDataset& ds, double ir, std::uint64_t seed) {
  if (!(ir > 0.0 && ir <= 1.0)) throw std::invalid_argument("imbalance ratio must lie in (0, 1]");
  const int C = ds.num_classes;
  const ClassCounts counts = class_counts(ds.observed_labels, C);

  std::vector<int> order(static_cast<std::size_t>(C));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return counts[static_cast<std::size_t>(a)] > counts[static_cast<std::size_t>(b)];
  });
  const std::int64_t n_max = counts[static_cast<std::size_t>(order.front())];

  std::vector<std::int64_t> target(static_cast<std::size_t>(C));
  for (int rank = 0; rank < C; ++rank) {
    const auto c = static_cast<std::size_t>(order[static_cast<std::size_t>(rank)]);
    target[c] = std::min(exponential_profile_count(n_max, ir, rank, C), counts[c]);
  }

  SplitMix64 rng(seed);
  std::vector<std::size_t> keep;
  for (int c = 0; c < C; ++c) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < ds.size(); ++i) {
      if (ds.observed_labels[i] == c) members.push_back(i);
    }
    const auto k = static_cast<std::size_t>(target[static_cast<std::size_t>(c)]);
    std::vector<std::size_t> chosen;
    for (std::size_t pos : rng.sample_without_replacement(members.size(), k)) {
      chosen.push_back(members[pos]);
    }
    if (ds.gt_labels && !chosen.empty()) {
      auto is_correct = [&](std::size_t i) { return (*ds.gt_labels)[i] == ds.observed_labels[i]; };
      if (std::none_of(chosen.begin(), chosen.end(), is_correct)) {
        std::vector<std::size_t> correct;
        std::copy_if(members.begin(), members.end(), std::back_inserter(correct), is_correct);
        if (!correct.empty()) chosen.back() = correct[rng.below(correct.size())];
      }
    }
    keep.insert(keep.end(), chosen.begin(), chosen.end());
  }
  std::sort(keep.begin(), keep.end());
  return ds.subset(keep);
}

LabeledDataset balanced_oversample(const LabeledDataset& ds, std::uint64_t seed) {
  const int C = ds.num_classes;
  const ClassCounts counts = class_counts(ds.observed_labels, C);
  for (int c = 0; c < C; ++c) {
    if (counts[static_cast<std::size_t>(c)] == 0) {
      throw std::invalid_argument("balanced_oversample: class " + std::to_string(c) + " is empty");
    }
  }
  const std::int64_t n_max = *std::max_element(counts.begin(), counts.end());

  std::vector<std::size_t> rows(ds.size());
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  SplitMix64 rng(seed);
  for (int c = 0; c < C; ++c) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < ds.size(); ++i) {
      if (ds.observed_labels[i] == c) members.push_back(i);
    }
    for (std::int64_t extra = n_max - counts[static_cast<std::size_t>(c)]; extra > 0; --extra) {
      rows.push_back(members[rng.below(members.size())]);
    }
  }
  return ds.subset(rows);
}

CorruptionResult corrupt(const LabeledDataset& clean, const CorruptionSpec& spec) {
  spec.validate(clean.num_classes);
  if (!clean.gt_labels) throw std::invalid_argument("corrupt: input needs ground-truth labels");

  CorruptionResult result;
  LabeledDataset noisy = clean;
  const std::uint64_t noise_seed = derive_seed(spec.seed, "noise");
  switch (spec.noise_type) {
    case NoiseType::none: break;
    case NoiseType::symmetric: noisy = apply_symmetric_noise(clean, spec.target_nr, noise_seed); break;
    case NoiseType::asymmetric:
      noisy = apply_asymmetric_noise(clean, spec.target_nr, spec.asym_pairs, noise_seed);
      break;
  }
  result.realized_nr = compute_nr(noisy);
  result.dataset = spec.target_ir < 1.0
                       ? apply_exponential_imbalance(noisy, spec.target_ir,
                                                     derive_seed(spec.seed, "imbalance"))
                       : std::move(noisy);
  result.final_nr = compute_nr(result.dataset);
  result.realized_ir = compute_ir(class_counts(result.dataset.observed_labels, clean.num_classes));
  result.gt_ir = compute_ir(class_counts(*result.dataset.gt_labels, clean.num_classes));
  return result;
}

}  // namespace oat
