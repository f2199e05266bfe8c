#include "oat/adversary.hpp"
#include "oat/evaluation.hpp"
#include "oat/oracle.hpp"
#include "oat/trainer.hpp"

#include "grad_suite.hpp"
#include "test_support.hpp"

#include <gtest/gtest.h>

namespace oat {
namespace {

TEST(Refurbish, ThresholdBranches) {
  ad::Matrix probs(3, 3);
  probs << 0.05, 0.9, 0.05,  //
      0.5, 0.3, 0.2,         //
      0.1, 0.1, 0.8;
  const Labels incoming{2, 1, 0};
  const RefurbishedLabels r = refurbish_from_probs(probs, incoming, 0.8);
  EXPECT_EQ(r.labels, (Labels{1, 1, 2}));
  EXPECT_EQ(r.refurbished_mask, (std::vector<bool>{true, false, true}));
  EXPECT_EQ(r.refurbished_count(), 2u);
  EXPECT_THROW(refurbish_from_probs(probs, incoming, 0.0), std::invalid_argument);
}

TEST(Refurbish, ArgmaxTiesGoLow) {
  ad::Matrix m(1, 3);
  m << 0.4, 0.4, 0.2;
  EXPECT_EQ(argmax_rows(m), (Labels{0}));
}

TEST(OracleLosses, GradientSuiteOneSeed) {
  for (const auto& c : testing::gradient_suite(1)) {
    EXPECT_LT(c.check.max_rel_error, 1e-4) << c.name;
    EXPECT_EQ(c.frozen_grad_abs, 0.0) << c.name;
  }
}

TEST(OracleLosses, InteractionIsNegativeMse) {
  SplitMix64 rng(3);
  const ArchSpec a = testing::small_arch(4, 3);
  const ModelParams o = init_model(a, ModelRole::oracle, 1);
  const ModelParams m = init_model(a, ModelRole::at_model, 2);
  const ad::Matrix x = testing::random_matrix(6, 4, rng);
  const ad::Matrix po = ad::softmax(Value::leaf(predict_logits(o, x))).data();
  const ad::Matrix pm = ad::softmax(Value::leaf(predict_logits(m, x))).data();
  EXPECT_NEAR(oracle_interaction_loss(o, m, x).item(), -(po - pm).array().square().mean(), 1e-14);
}

LabeledDataset tiny_noisy(std::uint64_t seed) {
  LabeledDataset ds = gen_synthetic({4, 6, 40, 0.08, seed});
  SplitMix64 rng(seed + 1);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    if (rng.bernoulli(0.2)) ds.observed_labels[i] = (ds.observed_labels[i] + 1) % 4;
  }
  return ds;
}

TEST(OracleEpoch, RecordsAndCounts) {
  const LabeledDataset train = tiny_noisy(5);
  const ArchSpec a = testing::small_arch(6, 4, {16}, 8, 6);
  OracleConfig cfg;
  cfg.batch_size = 32;
  cfg.interaction_enabled = false;
  OracleState st = make_oracle_state(train, init_model(a, ModelRole::oracle, 3), cfg, 4);
  const auto counts = class_counts(train.observed_labels, 4);
  const std::int64_t n_max = *std::max_element(counts.begin(), counts.end());
  EXPECT_EQ(class_counts(st.balanced.observed_labels, 4), std::vector<std::int64_t>(4, n_max));
  SplitMix64 rng(1);
  const OracleEpochRecord r = oracle_epoch(st, nullptr, cfg, rng, 0);
  EXPECT_EQ(r.k, static_cast<int>(st.balanced.size() / 10));
  EXPECT_EQ(r.clean_count + r.noisy_count, st.balanced.size());
  ASSERT_TRUE(r.refurbished_nr.has_value());
  EXPECT_FALSE(r.loss.mse.has_value());
  EXPECT_TRUE(std::isfinite(r.loss.total));
  cfg.interaction_enabled = true;
  EXPECT_THROW(oracle_epoch(st, nullptr, cfg, rng, 1), std::invalid_argument);
  const ModelParams m = init_model(a, ModelRole::at_model, 9);
  EXPECT_TRUE(oracle_epoch(st, &m, cfg, rng, 1).loss.mse.has_value());
}

TEST(OracleEpoch, LearnsSeparableData) {
  const LabeledDataset train = tiny_noisy(8);
  const ArchSpec a = testing::small_arch(6, 4, {32}, 16, 16);
  OracleConfig cfg;
  cfg.batch_size = 32;
  cfg.k = 10;
  cfg.interaction_enabled = false;
  OracleState st = make_oracle_state(train, init_model(a, ModelRole::oracle, 3), cfg, 4);
  SplitMix64 rng(2);
  OracleEpochRecord r;
  for (int e = 0; e < 30; ++e) r = oracle_epoch(st, nullptr, cfg, rng, e);
  ASSERT_TRUE(r.refurbished_nr.has_value());
  EXPECT_LT(*r.refurbished_nr, 0.1);
}

ModelParams linear_two_class(double w0, double w1) {
  ArchSpec a = testing::small_arch(2, 2, {}, 2);
  ModelParams m = init_model(a, ModelRole::at_model, 0);
  m.encoder.layers[0].weight.mutable_data() = ad::Matrix::Identity(2, 2);
  m.encoder.layers[0].bias.mutable_data().setZero();
  m.head.weight.mutable_data() << w0, -w0, w1, -w1;
  m.head.bias.mutable_data().setZero();
  return m;
}

TEST(Pgd, OneStepMatchesSignGradient) {
  // Logit difference z1 - z0 = -2 (w0 x0 + w1 x1): for label 0 the CE gradient
  // sign is sign(W[:,1] - W[:,0]) = -sign(w).
  const ModelParams m = linear_two_class(0.7, -1.3);
  ad::Matrix x(1, 2);
  x << 0.5, 0.5;
  AttackSpec spec{0.1, 0.1, 1, AttackLoss::cross_entropy, std::nullopt, false};
  SplitMix64 rng(0);
  const ad::Matrix adv = pgd_attack(m, x, Labels{0}, spec, rng);
  EXPECT_EQ(adv(0, 0), 0.5 - 0.1);
  EXPECT_EQ(adv(0, 1), 0.5 + 0.1);
}

TEST(Pgd, EpsZeroIsIdentity) {
  SplitMix64 rng(1);
  const ModelParams m = init_model(testing::small_arch(4, 3), ModelRole::at_model, 1);
  const ad::Matrix x = testing::random_matrix(5, 4, rng);
  AttackSpec spec;
  spec.epsilon = 0.0;
  spec.alpha = 0.0;
  EXPECT_EQ(pgd_attack(m, x, Labels{0, 1, 2, 0, 1}, spec, rng), x);
}

TEST(Pgd, StaysInBallAndBox) {
  SplitMix64 rng(4);
  const ModelParams m = init_model(testing::small_arch(4, 3), ModelRole::at_model, 1);
  const ad::Matrix x = testing::random_matrix(8, 4, rng);
  AttackSpec spec;
  spec.loss = AttackLoss::cw_margin;
  const ad::Matrix adv = pgd_attack(m, x, testing::random_labels(8, 3, rng), spec, rng);
  EXPECT_LE((adv - x).cwiseAbs().maxCoeff(), spec.epsilon + 1e-9);
  EXPECT_GE(adv.minCoeff(), 0.0);
  EXPECT_LE(adv.maxCoeff(), 1.0);
}

TEST(Pgd, UniformAdjustmentBitwiseIdentical) {
  SplitMix64 data_rng(6);
  const ModelParams m = init_model(testing::small_arch(4, 3), ModelRole::at_model, 1);
  const ad::Matrix x = testing::random_matrix(8, 4, data_rng);
  const Labels y = testing::random_labels(8, 3, data_rng);
  AttackSpec plain;
  AttackSpec adjusted = plain;
  adjusted.adjustment = std::vector<double>(3, 417.0);
  SplitMix64 r1(9), r2(9);
  EXPECT_EQ(pgd_attack(m, x, y, plain, r1), pgd_attack(m, x, y, adjusted, r2));
}

TEST(Pgd, SpecValidation) {
  AttackSpec s;
  s.alpha = s.epsilon * 2;
  EXPECT_THROW(s.validate(), std::invalid_argument);
  s = AttackSpec{};
  s.epsilon = -0.1;
  EXPECT_THROW(s.validate(), std::invalid_argument);
  const ModelParams m = init_model(testing::small_arch(2, 3), ModelRole::at_model, 1);
  SplitMix64 rng(0);
  EXPECT_THROW(pgd_attack(m, ad::Matrix::Zero(1, 2), Labels{3}, AttackSpec{}, rng), std::invalid_argument);
}

TEST(Adjustment, FlipExample) {
  const Value logits = Value::leaf((ad::Matrix(1, 2) << 0.0, 2.0).finished());
  const ad::Matrix adj = adjust_logits(logits, distribution_from_counts({900, 100})).data();
  EXPECT_NEAR(adj(0, 0), 6.8024, 1e-4);
  EXPECT_NEAR(adj(0, 1), 6.6052, 1e-4);
  EXPECT_EQ(argmax_rows(adj), (Labels{0}));
}

TEST(Adjustment, SmoothsEmptyClasses) {
  const LabelDistribution d = distribution_from_counts({0, 5});
  EXPECT_EQ(d.smoothed, (std::vector<double>{1.0, 5.0}));
  const Value logits = Value::leaf(ad::Matrix::Zero(1, 2));
  EXPECT_EQ(adjust_logits(logits, d).data()(0, 0), 0.0);
  EXPECT_THROW(adjust_logits(Value::leaf(ad::Matrix::Zero(1, 3)), d), ad::ShapeError);
}

TEST(AtModelLoss, OracleGetsNoGradient) {
  SplitMix64 rng(2);
  const ArchSpec a = testing::small_arch(4, 3);
  const ModelParams o = init_model(a, ModelRole::oracle, 1);
  const ModelParams m = init_model(a, ModelRole::at_model, 2);
  const ad::Matrix x = testing::random_matrix(5, 4, rng);
  TrainConfig cfg;
  const AtLossTerms t = at_model_loss(m, o, x, x, distribution_from_counts({3, 4, 5}), cfg);
  ASSERT_TRUE(t.cos.has_value());
  EXPECT_NEAR(t.total.item(), t.ce.item() + t.cos->item(), 1e-14);
  ad::backward(t.total);
  EXPECT_EQ(testing::grad_mass(o.parameters()), 0.0);
  EXPECT_GT(testing::grad_mass(m.parameters()), 0.0);
}

TEST(Evaluate, PerfectModelIdentityAttack) {
  // Two well-separated classes and a hand-set linear separator.
  const ModelParams m = linear_two_class(1.0, -1.0);
  LabeledDataset test;
  test.num_classes = 2;
  test.samples.resize(4, 2);
  test.samples << 0.9, 0.1, 0.8, 0.2, 0.1, 0.9, 0.2, 0.7;
  test.observed_labels = {0, 0, 1, 1};
  test.gt_labels = test.observed_labels;
  test.ids = {0, 1, 2, 3};
  std::vector<NamedAttack> none{{"eps0", AttackSpec{0.0, 0.0, 1, AttackLoss::cross_entropy, {}, false}}};
  const MetricsRecord r = evaluate(m, test, none, 0);
  EXPECT_EQ(r.clean_accuracy, 1.0);
  EXPECT_EQ(r.robust_accuracy.at("eps0"), 1.0);
}

TEST(Evaluate, RandomGuessNearChance) {
  const ModelParams m = init_model(testing::small_arch(16, 10), ModelRole::at_model, 3);
  LabeledDataset test = gen_synthetic({10, 16, 100, 0.3, 4});
  SplitMix64 rng(5);
  // Labels independent of inputs make any model a random guesser.
  test.gt_labels = testing::random_labels(1000, 10, rng);
  test.observed_labels = *test.gt_labels;
  const MetricsRecord r = evaluate(m, test, {}, 0);
  EXPECT_NEAR(r.clean_accuracy, 0.1, 0.03);
  EXPECT_TRUE(r.robust_accuracy.empty());
}

TEST(Evaluate, MonotoneThreat) {
  const LabeledDataset test = gen_synthetic({4, 6, 50, 0.15, 2});
  const ModelParams m = init_model(testing::small_arch(6, 4), ModelRole::at_model, 3);
  std::vector<NamedAttack> attacks{*named_attack("pgd20"), *named_attack("pgd100"), *named_attack("cw100")};
  const MetricsRecord r = evaluate(m, test, attacks, 1);
  EXPECT_LE(r.robust_accuracy.at("pgd100"), r.robust_accuracy.at("pgd20") + 0.005);
  for (const auto& [_, ra] : r.robust_accuracy) EXPECT_LE(ra, r.clean_accuracy);
  EXPECT_EQ(evaluate(m, test, attacks, 1).robust_accuracy, r.robust_accuracy);
  EXPECT_EQ(evaluate(m, test, attacks, 1, 3).robust_accuracy, r.robust_accuracy);
}

TEST(Evaluate, NamedAttacks) {
  EXPECT_FALSE(named_attack("none").has_value());
  const auto a = named_attack("cw100", 0.031373);
  ASSERT_TRUE(a.has_value());
  EXPECT_EQ(a->spec.steps, 100);
  EXPECT_EQ(a->spec.loss, AttackLoss::cw_margin);
  EXPECT_DOUBLE_EQ(a->spec.alpha, 0.031373 / 4);
  EXPECT_THROW(named_attack("fgsm"), std::invalid_argument);
}

TEST(DistributionError, Examples) {
  EXPECT_EQ(distribution_error(std::vector<std::int64_t>{3, 7}, std::vector<std::int64_t>{30, 70}), 0.0);
  EXPECT_EQ(distribution_error(std::vector<std::int64_t>{5, 0}, std::vector<std::int64_t>{0, 9}), 1.0);
  EXPECT_NEAR(distribution_error(std::vector<std::int64_t>{450, 550}, std::vector<std::int64_t>{500, 500}),
              0.05, 1e-12);
  EXPECT_THROW(distribution_error(std::vector<std::int64_t>{0, 0}, std::vector<std::int64_t>{1, 1}),
               std::invalid_argument);
}

TEST(Metrics, CheckRejectsRobustAboveClean) {
  MetricsRecord r;
  r.clean_accuracy = 0.5;
  r.robust_accuracy["pgd20"] = 0.6;
  EXPECT_THROW(r.check(), std::logic_error);
}

}  // namespace
}  // namespace oat
