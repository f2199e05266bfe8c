#pragma once

#include "oat/adversary.hpp"
#include "oat/augment.hpp"
#include "oat/dataset.hpp"
#include "oat/evaluation.hpp"
#include "oat/models.hpp"
#include "oat/oracle.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace oat {

enum class Method { oat, pgd_at };

std::string to_string(Method m);
Method parse_method(const std::string& s);  // "oat", "pgd_at" or "pgd-at"

struct TrainConfig {
  int epochs = 60;
  int batch_size = 128;
  double lr = 0.1;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  std::vector<int> lr_decay_epochs{30, 45};
  double lr_decay_factor = 0.1;
  double theta_r = 0.8;
  int k = 200;
  AttackSpec attack;  // training-time PGD; adjustment is filled in per epoch
  Method method = Method::oat;
  bool interaction_enabled = true;
  bool adjustment_enabled = true;
  std::uint64_t seed = 0;

  // Architecture template; input_dim and num_classes are taken from the data.
  std::vector<int> encoder_widths{64};
  int feature_dim = 64;
  int projector_hidden = 256;
  int projector_out = 128;
  int predictor_hidden = 256;
  int predictor_out = 128;

  int distribution_interval = 1;   // epochs between N^O refreshes
  bool refurbish_from_original = false;
  bool detach_weak_branch = true;
  std::optional<ImageShape> image_shape;
  int threads = 0;                 // k-NN and evaluation workers; 0 = sequential

  void validate() const;
  ArchSpec arch_for(const LabeledDataset& data) const;
};

nlohmann::json config_to_json(const TrainConfig& c);
/// Missing keys keep their defaults; unknown keys are rejected.
TrainConfig config_from_json(const nlohmann::json& j);

/// Oracle-predicted class counts N^O and the smoothed counts max(N^O, 1) used
/// inside the logarithm.
struct LabelDistribution {
  std::vector<std::int64_t> counts;
  std::vector<double> smoothed;
};

LabelDistribution distribution_from_counts(std::vector<std::int64_t> counts);
LabelDistribution estimate_label_distribution(const ModelParams& oracle, const Matrix& samples);

/// logits + log(smoothed), row-wise.
Value adjust_logits(const Value& logits, const LabelDistribution& dist);

struct AtLossTerms {
  Value total;
  Value ce;
  std::optional<Value> cos;  // present iff interaction is enabled
};

/// Soft-label cross-entropy on (optionally adjusted) adversarial logits, targets
/// softmax(O(x)) on the clean input; plus the feature-alignment term through the
/// frozen oracle projector/predictor when interaction is enabled. The oracle
/// receives no gradient.
AtLossTerms at_model_loss(const ModelParams& at_model, const ModelParams& oracle, const Matrix& x,
                          const Matrix& x_adv, const LabelDistribution& dist,
                          const TrainConfig& config);

struct LearningRates {
  double model = 0.0;
  double oracle = 0.0;
};

/// Step decay for the AT-model; the oracle keeps the initial rate.
LearningRates lr_at_epoch(const TrainConfig& config, int epoch);

struct ModelLossRecord {
  double ce = 0.0;
  std::optional<double> cos;
  double total = 0.0;
  bool logit_adjustment = false;
};

struct EpochRecord {
  int epoch = 0;
  LearningRates lr;
  MetricsRecord metrics;
  ModelLossRecord model_loss;
  std::optional<OracleEpochRecord> oracle;
  std::vector<std::int64_t> prior_counts;
  std::optional<std::vector<std::int64_t>> estimated_counts;
  std::optional<std::vector<std::int64_t>> gt_counts;

  nlohmann::json to_json() const;
};

struct Checkpoint {
  int epoch = -1;
  ModelParams model;
  MetricsRecord metrics;
};

struct RunState {
  TrainConfig config;
  ModelParams model;
  std::optional<OracleState> oracle;
  std::optional<LabelDistribution> distribution;
  std::vector<EpochRecord> history;
  Checkpoint best;
  Checkpoint last;
};

class TrainingAborted : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Full training loop. For OAT each epoch trains the oracle first, refreshes
/// N^O, then runs one PGD adversarial epoch of the AT-model. Test CA and PGD-20
/// RA are measured after every epoch; "best" is the epoch with the highest
/// PGD-20 RA (earliest on ties), "last" the final epoch. When `run_dir` is set
/// the run's config, metrics and checkpoints are written there.
RunState train(const TrainConfig& config, const LabeledDataset& train_set,
               const LabeledDataset& test_set,
               const std::optional<std::filesystem::path>& run_dir = std::nullopt);

/// Attack used for checkpoint selection (PGD-20 at the training epsilon).
NamedAttack selection_attack(const TrainConfig& config);

}  // namespace oat
