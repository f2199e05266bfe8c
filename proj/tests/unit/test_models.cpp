#include "oat/augment.hpp"
#include "oat/knn.hpp"
#include "oat/models.hpp"

#include "test_support.hpp"

#include <gtest/gtest.h>

namespace oat {
namespace {

TEST(Models, ParameterCountMatchesClosedForm) {
  const ArchSpec a = testing::small_arch(4, 3, {8, 5}, 6, 5);
  const ModelParams oracle = init_model(a, ModelRole::oracle, 1);
  const ModelParams model = init_model(a, ModelRole::at_model, 1);
  // encoder 4-8-5-6, head 6-3, projector 6-7-5, predictor 5-6-5
  const std::size_t enc = 4 * 8 + 8 + 8 * 5 + 5 + 5 * 6 + 6;
  const std::size_t head = 6 * 3 + 3;
  const std::size_t proj = 6 * 7 + 7 + 7 * 5 + 5;
  const std::size_t pred = 5 * 6 + 6 + 6 * 5 + 5;
  EXPECT_EQ(parameter_count(model), enc + head);
  EXPECT_EQ(parameter_count(oracle), enc + head + proj + pred);
  EXPECT_EQ(parameter_count(a, ModelRole::oracle), parameter_count(oracle));
  EXPECT_FALSE(model.projector.has_value());
}

TEST(Models, ArchValidation) {
  ArchSpec a = testing::small_arch(4, 3);
  a.predictor_out = a.projector_out + 1;
  EXPECT_THROW(a.validate(), std::invalid_argument);
  a = testing::small_arch(0, 3);
  EXPECT_THROW(a.validate(), std::invalid_argument);
}

TEST(Models, InitDeterministicAndCloneIndependent) {
  const ArchSpec a = testing::small_arch(4, 3);
  const ModelParams m1 = init_model(a, ModelRole::oracle, 5);
  const ModelParams m2 = init_model(a, ModelRole::oracle, 5);
  const auto p1 = m1.parameters(), p2 = m2.parameters();
  for (std::size_t i = 0; i < p1.size(); ++i) EXPECT_EQ(p1[i].data(), p2[i].data());

  ModelParams c = m1.clone();
  c.head.weight.mutable_data()(0, 0) += 1.0;
  EXPECT_NE(c.head.weight.data(), m1.head.weight.data());
}

TEST(Models, ForwardShapes) {
  SplitMix64 rng(1);
  const ArchSpec a = testing::small_arch(4, 3);
  const ModelParams m = init_model(a, ModelRole::oracle, 2);
  const ad::Matrix x = testing::random_matrix(7, 4, rng);
  EXPECT_EQ(predict_logits(m, x).rows(), 7);
  EXPECT_EQ(predict_logits(m, x).cols(), 3);
  EXPECT_EQ(predict_features(m, x).cols(), 6);
  const Value z = project_predict(m, Value::leaf(predict_features(m, x)), true);
  EXPECT_EQ(z.cols(), 5);
  const ModelParams at = init_model(a, ModelRole::at_model, 2);
  EXPECT_THROW(project_predict(at, Value::leaf(predict_features(at, x)), false), std::invalid_argument);
}

TEST(Models, FrozenModeBlocksParameterGradient) {
  SplitMix64 rng(1);
  const ModelParams m = init_model(testing::small_arch(4, 3), ModelRole::at_model, 2);
  const Value x = Value::leaf(testing::random_matrix(5, 4, rng), true);
  ad::backward(ad::sum(forward_logits(m, x, Grad::frozen)));
  for (const auto& p : m.parameters()) EXPECT_EQ(p.grad().cwiseAbs().sum(), 0.0);
  EXPECT_GT(x.grad().cwiseAbs().sum(), 0.0);
}

TEST(Checkpoint, RoundTrip) {
  const auto dir = testing::scratch_dir("ckpt");
  const ModelParams m = init_model(testing::small_arch(4, 3, {8, 8}), ModelRole::oracle, 3);
  save_checkpoint(m, dir / "c");
  const ModelParams r = load_checkpoint(dir / "c");
  EXPECT_EQ(r.arch, m.arch);
  EXPECT_EQ(r.role, m.role);
  const auto a = m.parameters(), b = r.parameters();
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i].data(), b[i].data());
  EXPECT_THROW(load_checkpoint(dir / "missing"), std::exception);
}

TEST(Augment, StaysInBoxAndDiffers) {
  SplitMix64 rng(4);
  const ad::Matrix x = testing::random_matrix(20, 16, rng);
  for (const auto& policy : {AugmentationPolicy::weak(), AugmentationPolicy::strong()}) {
    const ad::Matrix y = augment(x, policy, rng);
    EXPECT_EQ(y.rows(), x.rows());
    EXPECT_GE(y.minCoeff(), 0.0);
    EXPECT_LE(y.maxCoeff(), 1.0);
    EXPECT_NE(y, x);
  }
}

TEST(Augment, ImageCropAndFlipKeepPixels) {
  SplitMix64 rng(8);
  ImageShape shape{1, 4, 4};
  AugmentationPolicy p = AugmentationPolicy::weak(shape);
  p.jitter = 0.0;
  p.crop_pad = 0;
  p.flip_prob = 1.0;
  ad::Matrix x(1, 16);
  for (int i = 0; i < 16; ++i) x(0, i) = i / 16.0;
  const ad::Matrix y = augment(x, p, rng);
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c) EXPECT_DOUBLE_EQ(y(0, r * 4 + c), x(0, r * 4 + (3 - c)));
}

TEST(Knn, MatchesBruteForceWithTies) {
  SplitMix64 rng(12);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t n = 30 + rng.below(70);
    ad::Matrix pts(static_cast<Eigen::Index>(n), 3);
    for (Eigen::Index i = 0; i < pts.size(); ++i) pts.data()[i] = static_cast<double>(rng.below(3));
    const Labels y = testing::random_labels(n, 4, rng);
    const int k = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(n - 1)));
    const KnnIndex index(pts, k);
    for (std::size_t i = 0; i < n; ++i) {
      EXPECT_EQ(index.neighbors_of(i, k), testing::brute_force_neighbors(pts, i, k));
    }
    const SplitSets s = knn_split(index, y, k, 4);
    const auto b = testing::brute_force_split(pts, y, k, 4);
    EXPECT_EQ(s.clean_idx, b.clean);
    EXPECT_EQ(s.noisy_idx, b.noisy);
    EXPECT_EQ(s.knn_labels, b.majority);
  }
}

TEST(Knn, ThreadedSplitIdentical) {
  SplitMix64 rng(2);
  const ad::Matrix pts = testing::random_matrix(200, 5, rng);
  const Labels y = testing::random_labels(200, 3, rng);
  const KnnIndex index(pts, 20);
  const SplitSets a = knn_split(index, y, 20, 3, 0);
  const SplitSets b = knn_split(index, y, 20, 3, 4);
  EXPECT_EQ(a.clean_idx, b.clean_idx);
  EXPECT_EQ(a.knn_labels, b.knn_labels);
}

TEST(Knn, Edges) {
  SplitMix64 rng(2);
  const ad::Matrix pts = testing::random_matrix(10, 2, rng);
  const KnnIndex index(pts, 3);
  const Labels y(10, 0);
  EXPECT_THROW(knn_split(index, y, 10, 2), std::invalid_argument);
  EXPECT_EQ(knn_split(index, y, 9, 2).clean_idx.size(), 10u);
  EXPECT_EQ(effective_k(5000, 200), 200);
  EXPECT_EQ(effective_k(1000, 200), 100);
  EXPECT_EQ(effective_k(5, 200), 1);
  const std::vector<std::size_t> nb{0, 1, 2, 3};
  const Labels tie{2, 1, 2, 1};
  EXPECT_EQ(majority_label(nb, tie, 3), 1);
}

}  // namespace
}  // namespace oat
