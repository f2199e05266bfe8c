#include "oat/adversary.hpp"

#include "oat/losses.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace oat {

void AttackSpec::validate() const {
  if (!(epsilon >= 0.0)) throw std::invalid_argument("AttackSpec: epsilon must be >= 0");
  if (!(alpha >= 0.0) || alpha > epsilon) {
    throw std::invalid_argument("AttackSpec: alpha must lie in [0, epsilon]");
  }
  if (steps < 1) throw std::invalid_argument("AttackSpec: steps must be >= 1");
  if (adjustment) {
    for (double c : *adjustment) {
      if (!(c > 0.0)) throw std::invalid_argument("AttackSpec: adjustment counts must be positive");
    }
  }
}

Value cw_margin_loss(const Value& logits, std::span<const int> labels) {
  const Matrix& z = logits.data();
  if (z.cols() < 2) throw std::invalid_argument("cw_margin_loss: needs at least 2 classes");
  std::vector<int> runner_up(labels.size());
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    const int y = labels[static_cast<std::size_t>(i)];
    int best = -1;
    for (Eigen::Index j = 0; j < z.cols(); ++j) {
      if (j == y) continue;
      if (best < 0 || z(i, j) > z(i, best)) best = static_cast<int>(j);
    }
    runner_up[static_cast<std::size_t>(i)] = best;
  }
  return ad::mean(ad::sub(ad::pick(logits, runner_up), ad::pick(logits, labels)));
}

namespace {

double sign0(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

}  // namespace

Matrix pgd_attack(const ModelParams& model, const Matrix& x, std::span<const int> labels,
                  const AttackSpec& spec, SplitMix64& rng) {
  spec.validate();
  const int C = model.arch.num_classes;
  if (static_cast<Eigen::Index>(labels.size()) != x.rows()) {
    throw std::invalid_argument("pgd_attack: one label per row");
  }
  for (int y : labels) {
    if (y < 0 || y >= C) throw std::invalid_argument("pgd_attack: label " + std::to_string(y) + " out of range");
  }
  if (spec.epsilon == 0.0) return x;

  // log N shifted by its maximum: same loss gradients, and exactly zero for a
  // uniform distribution so the adjusted and plain attacks coincide bitwise.
  std::optional<Value> offset;
  if (spec.adjustment) {
    if (static_cast<int>(spec.adjustment->size()) != C) {
      throw std::invalid_argument("pgd_attack: adjustment length differs from class count");
    }
    Matrix log_prior(1, C);
    for (int c = 0; c < C; ++c) log_prior(0, c) = std::log((*spec.adjustment)[static_cast<std::size_t>(c)]);
    log_prior.array() -= log_prior.maxCoeff();
    offset = Value::leaf(std::move(log_prior));
  }

  const Matrix lower = (x.array() - spec.epsilon).cwiseMax(0.0).matrix();
  const Matrix upper = (x.array() + spec.epsilon).cwiseMin(1.0).matrix();

  Matrix adv = x;
  if (spec.random_start) {
    for (Eigen::Index i = 0; i < adv.size(); ++i) {
      adv.data()[i] += rng.uniform(-spec.epsilon, spec.epsilon);
    }
    adv = adv.cwiseMax(lower).cwiseMin(upper);
  }

  for (int step = 0; step < spec.steps; ++step) {
    Value input = Value::leaf(adv, true);
    Value logits = forward_logits(model, input, Grad::frozen);
    if (offset) logits = ad::add(logits, *offset);
    const Value loss = spec.loss == AttackLoss::cross_entropy ? cross_entropy(logits, labels)
                                                              : cw_margin_loss(logits, labels);
    ad::backward(loss);
    const Matrix& g = input.grad();
    for (Eigen::Index i = 0; i < adv.size(); ++i) {
      adv.data()[i] += spec.alpha * sign0(g.data()[i]);
    }
    adv = adv.cwiseMax(lower).cwiseMin(upper);
  }
  return adv;
}

}  // namespace oat
