#pragma once

#include "oat/autodiff.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

namespace oat {

using ad::Matrix;
using ad::Value;

struct ArchSpec {
  int input_dim = 16;
  std::vector<int> encoder_widths{64};
  int feature_dim = 64;
  int num_classes = 10;
  int projector_hidden = 256;
  int projector_out = 128;
  int predictor_hidden = 256;
  int predictor_out = 128;

  void validate() const;
  friend bool operator==(const ArchSpec&, const ArchSpec&) = default;
};

enum class ModelRole { oracle, at_model };

struct Linear {
  Value weight;  // in x out
  Value bias;    // 1 x out
};

/// Linear layers with ReLU between consecutive layers (none after the last).
struct Mlp {
  std::vector<Linear> layers;
};

/// Encoder (F) + linear head (C); the oracle additionally owns the projector
/// (H) and predictor (P) used by the contrastive losses.
struct ModelParams {
  ArchSpec arch;
  ModelRole role = ModelRole::at_model;
  Mlp encoder;
  Linear head;
  std::optional<Mlp> projector;
  std::optional<Mlp> predictor;

  std::vector<Value> parameters() const;
  std::vector<Value> encoder_head_parameters() const;
  /// Deep copy with freshly allocated leaves.
  ModelParams clone() const;
};

/// Closed-form parameter count for the given architecture and role.
std::size_t parameter_count(const ArchSpec& arch, ModelRole role);
std::size_t parameter_count(const ModelParams& p);

/// Fan-in uniform init U(-1/sqrt(fan_in), 1/sqrt(fan_in)) for weights and biases.
ModelParams init_model(const ArchSpec& arch, ModelRole role, std::uint64_t seed);

/// When `frozen`, parameters enter the graph detached so no gradient reaches them.
enum class Grad { track, frozen };

Value apply_mlp(const Mlp& mlp, const Value& x, Grad mode = Grad::track);
Value forward_features(const ModelParams& p, const Value& x, Grad mode = Grad::track);
Value forward_logits(const ModelParams& p, const Value& x, Grad mode = Grad::track);
Value head_logits(const ModelParams& p, const Value& features, Grad mode = Grad::track);

/// Projector output, optionally followed by the predictor. Throws
/// std::invalid_argument when the required heads are absent.
Value project_predict(const ModelParams& p, const Value& features, bool use_predictor,
                      Grad mode = Grad::track);

/// Plain forward without graph bookkeeping beyond a single pass; convenience for inference.
Matrix predict_logits(const ModelParams& p, const Matrix& x);
Matrix predict_features(const ModelParams& p, const Matrix& x);

/// Checkpoint directory: checkpoint.json manifest (arch, role, buffer index) and
/// params.bin holding little-endian doubles at the recorded byte offsets.
void save_checkpoint(const ModelParams& p, const std::filesystem::path& dir);
ModelParams load_checkpoint(const std::filesystem::path& dir);

}  // namespace oat
