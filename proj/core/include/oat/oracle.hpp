#pragma once

#include "oat/augment.hpp"
#include "oat/dataset.hpp"
#include "oat/knn.hpp"
#include "oat/losses.hpp"
#include "oat/models.hpp"
#include "oat/rng.hpp"

#include <optional>
#include <span>
#include <vector>

namespace oat {

struct RefurbishedLabels {
  Labels labels;
  std::vector<bool> refurbished_mask;

  std::size_t refurbished_count() const;
};

/// Replace a label by argmax(probs) when max(probs) >= theta_r; otherwise keep
/// the incoming label. Argmax ties go to the lower class id.
RefurbishedLabels refurbish_from_probs(const ad::Matrix& probs, std::span<const int> incoming,
                                       double theta_r);
RefurbishedLabels refurbish(const ModelParams& oracle, const ad::Matrix& samples,
                            std::span<const int> incoming, double theta_r);

/// Row-wise argmax with lowest-index tie break.
Labels argmax_rows(const ad::Matrix& m);

/// -mean cos(sg(H(F(weak(x)))), P(H(F(strong(x))))). With `detach_weak_branch`
/// false the stop-gradient is removed (used to check where gradient flows).
Value oracle_contrastive_loss(const ModelParams& oracle, const ad::Matrix& batch,
                              const AugmentationPolicy& weak, const AugmentationPolicy& strong,
                              SplitMix64& rng, bool detach_weak_branch = true);

/// Same loss on explicitly supplied views (no augmentation).
Value oracle_contrastive_loss_on_views(const ModelParams& oracle, const ad::Matrix& weak_view,
                                       const ad::Matrix& strong_view,
                                       bool detach_weak_branch = true);

/// Mean cross-entropy of O(x) against the refurbished labels of clean samples.
Value oracle_supervised_loss(const ModelParams& oracle, const ad::Matrix& clean_batch,
                             std::span<const int> labels);

/// -MSE(softmax(O(x)), softmax(M(x))) over the clean batch; M is frozen.
Value oracle_interaction_loss(const ModelParams& oracle, const ModelParams& at_model,
                              const ad::Matrix& clean_batch);

struct OracleConfig {
  double theta_r = 0.8;
  int k = 200;
  int batch_size = 128;
  double lr = 0.1;
  bool interaction_enabled = true;
  bool refurbish_from_original = false;
  bool detach_weak_branch = true;
  AugmentationPolicy weak = AugmentationPolicy::weak();
  AugmentationPolicy strong = AugmentationPolicy::strong();
  int threads = 0;
};

struct OracleLossRecord {
  double cos = 0.0;
  double ce = 0.0;
  std::optional<double> mse;  // present iff interaction was enabled
  double total = 0.0;
};

struct OracleEpochRecord {
  int epoch = 0;
  std::optional<double> refurbished_nr;
  std::size_t refurbished_count = 0;
  std::size_t clean_count = 0;
  std::size_t noisy_count = 0;
  int k = 0;
  bool clean_set_empty = false;
  OracleLossRecord loss;
};

/// Oracle-side training state. `balanced` is the oversampled set S' built once
/// per run; `labels` holds the current refurbished mapping A_r over S'.
struct OracleState {
  LabeledDataset balanced;
  Labels labels;
  SplitSets split;
  ModelParams model;
  ad::OptimizerState optimizer;
};

OracleState make_oracle_state(const LabeledDataset& train, ModelParams oracle,
                              const OracleConfig& config, std::uint64_t oversample_seed);

/// Refurbish, k-NN split and one pass of minibatch SGD over L_O.
OracleEpochRecord oracle_epoch(OracleState& state, const ModelParams* at_model,
                               const OracleConfig& config, SplitMix64& rng, int epoch);

}  // namespace oat
