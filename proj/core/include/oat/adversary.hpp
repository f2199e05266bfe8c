#pragma once

#include "oat/models.hpp"
#include "oat/rng.hpp"

#include <optional>
#include <span>
#include <vector>

namespace oat {

enum class AttackLoss { cross_entropy, cw_margin };

/// L-infinity PGD configuration. `adjustment`, when set, holds strictly positive
/// class counts whose log is added to the logits inside the attack loss.
struct AttackSpec {
  double epsilon = 8.0 / 255.0;
  double alpha = 2.0 / 255.0;
  int steps = 10;
  AttackLoss loss = AttackLoss::cross_entropy;
  std::optional<std::vector<double>> adjustment;
  bool random_start = true;

  void validate() const;
};

/// mean_i (max_{j != y_i} z_ij - z_{i,y_i}).
Value cw_margin_loss(const Value& logits, std::span<const int> labels);

/// Iterated x <- clip_[0,1](clip_eps(x + alpha * sign(grad_x loss))). Model
/// parameters are read only; their gradients are not touched.
Matrix pgd_attack(const ModelParams& model, const Matrix& x, std::span<const int> labels,
                  const AttackSpec& spec, SplitMix64& rng);

}  // namespace oat
