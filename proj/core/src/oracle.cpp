#include "oat/oracle.hpp"

#include "oat/corruption.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>

namespace oat {

std::size_t RefurbishedLabels::refurbished_count() const {
  return static_cast<std::size_t>(std::count(refurbished_mask.begin(), refurbished_mask.end(), true));
}

Labels argmax_rows(const ad::Matrix& m) {
  Labels out(static_cast<std::size_t>(m.rows()));
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    Eigen::Index best = 0;
    for (Eigen::Index j = 1; j < m.cols(); ++j) {
      if (m(i, j) > m(i, best)) best = j;
    }
    out[static_cast<std::size_t>(i)] = static_cast<int>(best);
  }
  return out;
}

RefurbishedLabels refurbish_from_probs(const ad::Matrix& probs, std::span<const int> incoming,
                                       double theta_r) {
  if (!(theta_r > 0.0 && theta_r <= 1.0)) throw std::invalid_argument("theta_r must lie in (0, 1]");
  if (static_cast<std::size_t>(probs.rows()) != incoming.size()) {
    throw std::invalid_argument("refurbish: one incoming label per row");
  }
  const Labels top = argmax_rows(probs);
  RefurbishedLabels out;
  out.labels.assign(incoming.begin(), incoming.end());
  out.refurbished_mask.assign(incoming.size(), false);
  for (std::size_t i = 0; i < incoming.size(); ++i) {
    const double confidence = probs(static_cast<Eigen::Index>(i), top[i]);
    if (confidence >= theta_r) {
      out.labels[i] = top[i];
      out.refurbished_mask[i] = true;
    }
  }
  return out;
}

RefurbishedLabels refurbish(const ModelParams& oracle, const ad::Matrix& samples,
                            std::span<const int> incoming, double theta_r) {
  const ad::Matrix probs = ad::softmax(Value::leaf(predict_logits(oracle, samples))).data();
  return refurbish_from_probs(probs, incoming, theta_r);
}

Value oracle_contrastive_loss_on_views(const ModelParams& oracle, const ad::Matrix& weak_view,
                                       const ad::Matrix& strong_view, bool detach_weak_branch) {
  if (weak_view.rows() == 0) throw std::invalid_argument("contrastive loss: empty batch");
  const Grad target_mode = detach_weak_branch ? Grad::frozen : Grad::track;
  Value target = project_predict(
      oracle, forward_features(oracle, Value::leaf(weak_view), target_mode), false, target_mode);
  if (detach_weak_branch) target = ad::detach(target);
  const Value online =
      project_predict(oracle, forward_features(oracle, Value::leaf(strong_view)), true);
  return negative_cosine_loss(target, online);
}

Value oracle_contrastive_loss(const ModelParams& oracle, const ad::Matrix& batch,
                              const AugmentationPolicy& weak, const AugmentationPolicy& strong,
                              SplitMix64& rng, bool detach_weak_branch) {
  const ad::Matrix v1 = augment(batch, weak, rng);
  const ad::Matrix v2 = augment(batch, strong, rng);
  return oracle_contrastive_loss_on_views(oracle, v1, v2, detach_weak_branch);
}

Value oracle_supervised_loss(const ModelParams& oracle, const ad::Matrix& clean_batch,
                             std::span<const int> labels) {
  return cross_entropy(forward_logits(oracle, Value::leaf(clean_batch)), labels);
}

Value oracle_interaction_loss(const ModelParams& oracle, const ModelParams& at_model,
                              const ad::Matrix& clean_batch) {
  const Value x = Value::leaf(clean_batch);
  const Value p_oracle = ad::softmax(forward_logits(oracle, x));
  const Value p_model = ad::detach(ad::softmax(forward_logits(at_model, x, Grad::frozen)));
  return ad::scale(ad::mse(p_oracle, p_model), -1.0);
}

OracleState make_oracle_state(const LabeledDataset& train, ModelParams oracle,
                              const OracleConfig& config, std::uint64_t oversample_seed) {
  OracleState s;
  s.balanced = balanced_oversample(train, oversample_seed);
  s.labels = s.balanced.observed_labels;
  s.model = std::move(oracle);
  s.optimizer.learning_rate = config.lr;
  return s;
}

OracleEpochRecord oracle_epoch(OracleState& state, const ModelParams* at_model,
                               const OracleConfig& config, SplitMix64& rng, int epoch) {
  const LabeledDataset& data = state.balanced;
  const std::size_t n = data.size();
  const int C = data.num_classes;
  if (config.interaction_enabled && at_model == nullptr) {
    throw std::invalid_argument("oracle_epoch: interaction needs the AT-model");
  }

  OracleEpochRecord rec;
  rec.epoch = epoch;

  // Refurbish, then split by k-NN agreement in O_F space.
  const Labels& incoming = config.refurbish_from_original ? data.observed_labels : state.labels;
  RefurbishedLabels refurbished = refurbish(state.model, data.samples, incoming, config.theta_r);
  state.labels = std::move(refurbished.labels);
  rec.refurbished_count = refurbished.refurbished_count();
  if (data.gt_labels) {
    std::size_t wrong = 0;
    for (std::size_t i = 0; i < n; ++i) wrong += state.labels[i] != (*data.gt_labels)[i];
    rec.refurbished_nr = static_cast<double>(wrong) / static_cast<double>(n);
  }

  rec.k = effective_k(n, config.k);
  const KnnIndex index(predict_features(state.model, data.samples), rec.k);
  state.split = knn_split(index, state.labels, rec.k, C, config.threads);
  rec.clean_count = state.split.clean_idx.size();
  rec.noisy_count = state.split.noisy_idx.size();
  rec.clean_set_empty = rec.clean_count == 0;

  std::vector<bool> is_clean(n, false);
  for (std::size_t i : state.split.clean_idx) is_clean[i] = true;

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  rng.shuffle(std::span<std::size_t>(order));

  state.optimizer.learning_rate = config.lr;
  std::vector<Value> params = state.model.parameters();
  const auto bs = static_cast<std::size_t>(config.batch_size);
  double sum_cos = 0.0, sum_ce = 0.0, sum_mse = 0.0, sum_total = 0.0;
  std::size_t batches = 0;

  for (std::size_t start = 0; start < n; start += bs) {
    const std::size_t end = std::min(n, start + bs);
    ad::Matrix x(static_cast<Eigen::Index>(end - start), data.dim());
    ad::Matrix x_clean(0, data.dim());
    std::vector<std::size_t> clean_rows;
    Labels y_clean;
    for (std::size_t k = start; k < end; ++k) {
      x.row(static_cast<Eigen::Index>(k - start)) = data.samples.row(static_cast<Eigen::Index>(order[k]));
      if (is_clean[order[k]]) {
        clean_rows.push_back(order[k]);
        y_clean.push_back(state.labels[order[k]]);
      }
    }
    if (!clean_rows.empty()) {
      x_clean.resize(static_cast<Eigen::Index>(clean_rows.size()), data.dim());
      for (std::size_t k = 0; k < clean_rows.size(); ++k) {
        x_clean.row(static_cast<Eigen::Index>(k)) = data.samples.row(static_cast<Eigen::Index>(clean_rows[k]));
      }
    }

    // Contrastive + supervised on clean rows, plus interaction when enabled.
    Value total = oracle_contrastive_loss(state.model, x, config.weak, config.strong, rng,
                                          config.detach_weak_branch);
    const double cos_v = total.item();
    double ce_v = 0.0, mse_v = 0.0;
    if (!clean_rows.empty()) {
      const Value ce = oracle_supervised_loss(state.model, x_clean, y_clean);
      ce_v = ce.item();
      total = ad::add(total, ce);
      if (config.interaction_enabled) {
        const Value mse = oracle_interaction_loss(state.model, *at_model, x_clean);
        mse_v = mse.item();
        total = ad::add(total, mse);
      }
    }
    if (!std::isfinite(total.item())) {
      throw std::runtime_error("oracle_epoch: non-finite loss at epoch " + std::to_string(epoch));
    }
    ad::backward(total);
    ad::sgd_step(params, state.optimizer);

    sum_cos += cos_v;
    sum_ce += ce_v;
    sum_mse += mse_v;
    sum_total += total.item();
    ++batches;
  }

  const auto nb = static_cast<double>(std::max<std::size_t>(batches, 1));
  rec.loss.cos = sum_cos / nb;
  rec.loss.ce = sum_ce / nb;
  if (config.interaction_enabled) rec.loss.mse = sum_mse / nb;
  rec.loss.total = sum_total / nb;
  return rec;
}

}  // namespace oat
