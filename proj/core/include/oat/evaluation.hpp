#pragma once

#include "oat/adversary.hpp"
#include "oat/dataset.hpp"
#include "oat/models.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace oat {

struct NamedAttack {
  std::string name;
  AttackSpec spec;
};

/// Attack menu: "pgd20", "pgd100" (cross-entropy PGD), "cw100" (CW-margin PGD)
/// and "none". Default epsilon 8/255; alpha is always epsilon / 4.
std::optional<NamedAttack> named_attack(const std::string& name,
                                        std::optional<double> epsilon = std::nullopt);

struct MetricsRecord {
  int epoch = 0;
  double clean_accuracy = 0.0;
  std::map<std::string, double> robust_accuracy;
  std::optional<double> refurbished_nr;
  std::optional<double> dist_l1_prior;
  std::optional<double> dist_l1_estimated;

  /// Throws std::logic_error if some robust accuracy exceeds clean accuracy.
  void check() const;
  nlohmann::json to_json() const;
};

/// Clean accuracy of raw logits against ground truth, and robust accuracy per
/// attack. A sample counts as robust only when it is classified correctly both
/// clean and under attack. Batches are attacked with per-batch seeds derived from
/// `seed`, so results do not depend on `threads`.
MetricsRecord evaluate(const ModelParams& model, const LabeledDataset& test,
                       std::span<const NamedAttack> attacks, std::uint64_t seed, int threads = 0);

/// Total-variation distance between two count vectors after normalization.
double distribution_error(std::span<const std::int64_t> estimated,
                          std::span<const std::int64_t> reference);

/// OAT_THREADS environment variable; 0 (sequential) when unset or invalid.
int threads_from_env();

}  // namespace oat
