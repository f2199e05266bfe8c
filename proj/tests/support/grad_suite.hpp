#pragma once

#include "oat/adversary.hpp"
#include "oat/oracle.hpp"
#include "oat/trainer.hpp"

#include "test_support.hpp"

namespace oat::testing {

struct LossCheck {
  std::string name;
  GradCheck check;
  double frozen_grad_abs = 0.0;  // |grad| mass that reached parameters meant to stay frozen
};

inline double grad_mass(const std::vector<Value>& params) {
  double s = 0.0;
  for (const auto& p : params) s += p.grad().cwiseAbs().sum();
  return s;
}

// Every training and attack loss on one random small model pair.
inline std::vector<LossCheck> gradient_suite(std::uint64_t seed) {
  SplitMix64 rng(seed);
  const int d = 3 + static_cast<int>(rng.below(4));
  const int C = 2 + static_cast<int>(rng.below(4));
  std::vector<int> widths;
  for (int l = 0, L = 1 + static_cast<int>(rng.below(2)); l < L; ++l) {
    widths.push_back(2 + static_cast<int>(rng.below(15)));
  }
  const int feat = 2 + static_cast<int>(rng.below(7));
  const ArchSpec arch = small_arch(d, C, widths, feat, 2 + static_cast<int>(rng.below(5)));
  const ModelParams oracle = init_model(arch, ModelRole::oracle, rng.next());
  const ModelParams model = init_model(arch, ModelRole::at_model, rng.next());
  const std::vector<Value> op = oracle.parameters();
  const std::vector<Value> mp = model.parameters();

  const Eigen::Index n = 3 + static_cast<Eigen::Index>(rng.below(3));
  const Matrix x = random_matrix(n, d, rng);
  const Matrix x_adv = (x + random_matrix(n, d, rng, -0.03, 0.03)).cwiseMax(0.0).cwiseMin(1.0);
  const Matrix weak = random_matrix(n, d, rng);
  const Matrix strong = random_matrix(n, d, rng);
  const Labels y = random_labels(static_cast<std::size_t>(n), C, rng);

  std::vector<std::int64_t> counts(static_cast<std::size_t>(C));
  for (auto& c : counts) c = static_cast<std::int64_t>(rng.below(500));
  const LabelDistribution dist = distribution_from_counts(counts);

  std::vector<LossCheck> out;
  auto run = [&](const std::string& name, std::vector<Value> params, const std::function<Value()>& f,
                 const std::vector<Value>& frozen) {
    zero_grads_all(op);
    zero_grads_all(mp);
    ad::backward(f());
    const double leaked = frozen.empty() ? 0.0 : grad_mass(frozen);
    zero_grads_all(op);
    zero_grads_all(mp);
    out.push_back({name, check_gradients(std::move(params), f), leaked});
  };

  // Weak branch detached: gradient equals that of the loss with a constant target.
  const ModelParams snapshot = oracle.clone();
  const Matrix target =
      project_predict(snapshot, Value::leaf(predict_features(snapshot, weak)), false, Grad::frozen).data();
  {
    auto const_target = [&] {
      const Value online = project_predict(oracle, forward_features(oracle, Value::leaf(strong)), true);
      return negative_cosine_loss(Value::leaf(target), online);
    };
    auto detached = [&] { return oracle_contrastive_loss_on_views(oracle, weak, strong, true); };
    out.push_back({"cos_oracle_detached", check_gradients(op, const_target, detached), 0.0});
  }
  run("cos_oracle_full", op, [&] { return oracle_contrastive_loss_on_views(oracle, weak, strong, false); }, {});
  run("ce_oracle", op, [&] { return oracle_supervised_loss(oracle, x, y); }, {});
  run("mse_oracle", op, [&] { return oracle_interaction_loss(oracle, model, x); }, mp);

  TrainConfig plain;
  plain.interaction_enabled = false;
  plain.adjustment_enabled = false;
  TrainConfig adjusted = plain;
  adjusted.adjustment_enabled = true;
  TrainConfig interact = plain;
  interact.interaction_enabled = true;
  run("ce_model", mp, [&] { return at_model_loss(model, oracle, x, x_adv, dist, plain).ce; }, op);
  run("ce_model_adjusted", mp, [&] { return at_model_loss(model, oracle, x, x_adv, dist, adjusted).ce; }, op);
  run("cos_model", mp, [&] { return *at_model_loss(model, oracle, x, x_adv, dist, interact).cos; }, op);

  const Value input = Value::leaf(x_adv, true);
  std::vector<Value> with_input = mp;
  with_input.push_back(input);
  run("cw_margin", with_input, [&] { return cw_margin_loss(forward_logits(model, input), y); }, {});
  run("attack_ce_adjusted", {input}, [&] {
    return cross_entropy(adjust_logits(forward_logits(model, input, Grad::frozen), dist), y);
  }, mp);
  return out;
}

}  // namespace oat::testing
