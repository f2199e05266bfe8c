#include "oat/trainer.hpp"

#include "oat/losses.hpp"
#include "oat/rng.hpp"
#include "oat/run_io.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

namespace oat {

using nlohmann::json;

std::string to_string(Method m) { return m == Method::oat ? "oat" : "pgd_at"; }

Method parse_method(const std::string& s) {
  if (s == "oat") return Method::oat;
  if (s == "pgd_at" || s == "pgd-at") return Method::pgd_at;
  throw std::invalid_argument("unknown method '" + s + "'");
}

void TrainConfig::validate() const {
  if (epochs < 1) throw std::invalid_argument("TrainConfig: epochs must be >= 1");
  if (batch_size < 1) throw std::invalid_argument("TrainConfig: batch_size must be >= 1");
  if (!(lr > 0.0)) throw std::invalid_argument("TrainConfig: lr must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw std::invalid_argument("TrainConfig: momentum must lie in [0,1)");
  if (!(weight_decay >= 0.0)) throw std::invalid_argument("TrainConfig: weight_decay must be >= 0");
  for (std::size_t i = 0; i < lr_decay_epochs.size(); ++i) {
    if (lr_decay_epochs[i] >= epochs || lr_decay_epochs[i] < 0 ||
        (i > 0 && lr_decay_epochs[i] <= lr_decay_epochs[i - 1])) {
      throw std::invalid_argument("TrainConfig: lr_decay_epochs must be strictly increasing and < epochs");
    }
  }
  if (!(theta_r > 0.0 && theta_r <= 1.0)) throw std::invalid_argument("TrainConfig: theta_r must lie in (0,1]");
  if (k < 1) throw std::invalid_argument("TrainConfig: k must be >= 1");
  if (distribution_interval < 1) throw std::invalid_argument("TrainConfig: distribution_interval must be >= 1");
  attack.validate();
}

ArchSpec TrainConfig::arch_for(const LabeledDataset& data) const {
  ArchSpec a;
  a.input_dim = static_cast<int>(data.dim());
  a.num_classes = data.num_classes;
  a.encoder_widths = encoder_widths;
  a.feature_dim = feature_dim;
  a.projector_hidden = projector_hidden;
  a.projector_out = projector_out;
  a.predictor_hidden = predictor_hidden;
  a.predictor_out = predictor_out;
  a.validate();
  return a;
}

// ---------------------------------------------------------------------------
// Config (de)serialization

json config_to_json(const TrainConfig& c) {
  json j = {
      {"epochs", c.epochs},
      {"batch_size", c.batch_size},
      {"lr", c.lr},
      {"momentum", c.momentum},
      {"weight_decay", c.weight_decay},
      {"lr_decay_epochs", c.lr_decay_epochs},
      {"lr_decay_factor", c.lr_decay_factor},
      {"theta_r", c.theta_r},
      {"k", c.k},
      {"attack",
       {{"epsilon", c.attack.epsilon},
        {"alpha", c.attack.alpha},
        {"steps", c.attack.steps},
        {"loss", c.attack.loss == AttackLoss::cross_entropy ? "cross_entropy" : "cw_margin"},
        {"random_start", c.attack.random_start}}},
      {"method", to_string(c.method)},
      {"interaction_enabled", c.interaction_enabled},
      {"adjustment_enabled", c.adjustment_enabled},
      {"seed", c.seed},
      {"encoder_widths", c.encoder_widths},
      {"feature_dim", c.feature_dim},
      {"projector_hidden", c.projector_hidden},
      {"projector_out", c.projector_out},
      {"predictor_hidden", c.predictor_hidden},
      {"predictor_out", c.predictor_out},
      {"distribution_interval", c.distribution_interval},
      {"refurbish_from_original", c.refurbish_from_original},
      {"detach_weak_branch", c.detach_weak_branch},
      {"threads", c.threads},
  };
  if (c.image_shape) {
    j["image_shape"] = {{"channels", c.image_shape->channels},
                        {"height", c.image_shape->height},
                        {"width", c.image_shape->width}};
  } else {
    j["image_shape"] = nullptr;
  }
  return j;
}

TrainConfig config_from_json(const json& j) {
  static const std::set<std::string> known = {
      "epochs", "batch_size", "lr", "momentum", "weight_decay", "lr_decay_epochs",
      "lr_decay_factor", "theta_r", "k", "attack", "method", "interaction_enabled",
      "adjustment_enabled", "seed", "encoder_widths", "feature_dim", "projector_hidden",
      "projector_out", "predictor_hidden", "predictor_out", "distribution_interval",
      "refurbish_from_original", "detach_weak_branch", "threads", "image_shape"};
  if (!j.is_object()) throw std::invalid_argument("config: expected a JSON object");
  for (const auto& [key, _] : j.items()) {
    if (!known.contains(key)) throw std::invalid_argument("config: unknown key '" + key + "'");
  }
  TrainConfig c;
  auto get = [&](const char* key, auto& field) {
    if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
  };
  get("epochs", c.epochs);
  get("batch_size", c.batch_size);
  get("lr", c.lr);
  get("momentum", c.momentum);
  get("weight_decay", c.weight_decay);
  get("lr_decay_epochs", c.lr_decay_epochs);
  get("lr_decay_factor", c.lr_decay_factor);
  get("theta_r", c.theta_r);
  get("k", c.k);
  if (j.contains("attack")) {
    const json& a = j.at("attack");
    if (a.contains("epsilon")) c.attack.epsilon = a.at("epsilon").get<double>();
    if (a.contains("alpha")) c.attack.alpha = a.at("alpha").get<double>();
    if (a.contains("steps")) c.attack.steps = a.at("steps").get<int>();
    if (a.contains("random_start")) c.attack.random_start = a.at("random_start").get<bool>();
    if (a.contains("loss")) {
      const auto loss = a.at("loss").get<std::string>();
      if (loss == "cross_entropy") c.attack.loss = AttackLoss::cross_entropy;
      else if (loss == "cw_margin") c.attack.loss = AttackLoss::cw_margin;
      else throw std::invalid_argument("config: unknown attack loss '" + loss + "'");
    }
  }
  if (j.contains("method")) c.method = parse_method(j.at("method").get<std::string>());
  get("interaction_enabled", c.interaction_enabled);
  get("adjustment_enabled", c.adjustment_enabled);
  get("seed", c.seed);
  get("encoder_widths", c.encoder_widths);
  get("feature_dim", c.feature_dim);
  get("projector_hidden", c.projector_hidden);
  get("projector_out", c.projector_out);
  get("predictor_hidden", c.predictor_hidden);
  get("predictor_out", c.predictor_out);
  get("distribution_interval", c.distribution_interval);
  get("refurbish_from_original", c.refurbish_from_original);
  get("detach_weak_branch", c.detach_weak_branch);
  get("threads", c.threads);
  if (j.contains("image_shape") && !j.at("image_shape").is_null()) {
    const json& s = j.at("image_shape");
    c.image_shape = ImageShape{s.at("channels").get<int>(), s.at("height").get<int>(),
                               s.at("width").get<int>()};
  }
  c.validate();
  return c;
}

// ---------------------------------------------------------------------------
// Label distribution and AT-model loss

LabelDistribution distribution_from_counts(std::vector<std::int64_t> counts) {
  LabelDistribution d;
  d.smoothed.reserve(counts.size());
  for (std::int64_t c : counts) d.smoothed.push_back(static_cast<double>(std::max<std::int64_t>(c, 1)));
  d.counts = std::move(counts);
  return d;
}

LabelDistribution estimate_label_distribution(const ModelParams& oracle, const Matrix& samples) {
  const Labels predicted = argmax_rows(predict_logits(oracle, samples));
  return distribution_from_counts(class_counts(predicted, oracle.arch.num_classes));
}

Value adjust_logits(const Value& logits, const LabelDistribution& dist) {
  if (static_cast<Eigen::Index>(dist.smoothed.size()) != logits.cols()) {
    throw ad::ShapeError("adjust_logits: distribution length differs from logit width");
  }
  Matrix log_prior(1, logits.cols());
  for (Eigen::Index c = 0; c < logits.cols(); ++c) {
    log_prior(0, c) = std::log(dist.smoothed[static_cast<std::size_t>(c)]);
  }
  return ad::add(logits, Value::leaf(std::move(log_prior)));
}

AtLossTerms at_model_loss(const ModelParams& at_model, const ModelParams& oracle, const Matrix& x,
                          const Matrix& x_adv, const LabelDistribution& dist,
                          const TrainConfig& config) {
  const Value clean = Value::leaf(x);
  const Matrix soft_labels = ad::softmax(forward_logits(oracle, clean, Grad::frozen)).data();

  const Value adv_features = forward_features(at_model, Value::leaf(x_adv));
  Value logits = head_logits(at_model, adv_features);
  if (config.adjustment_enabled) logits = adjust_logits(logits, dist);

  AtLossTerms terms;
  terms.ce = soft_cross_entropy(logits, soft_labels);
  terms.total = terms.ce;
  if (config.interaction_enabled) {
    const Value target =
        ad::detach(project_predict(oracle, forward_features(oracle, clean, Grad::frozen), false, Grad::frozen));
    const Value online = project_predict(oracle, adv_features, true, Grad::frozen);
    terms.cos = negative_cosine_loss(target, online);
    terms.total = ad::add(terms.total, *terms.cos);
  }
  return terms;
}

LearningRates lr_at_epoch(const TrainConfig& config, int epoch) {
  const auto decays = std::count_if(config.lr_decay_epochs.begin(), config.lr_decay_epochs.end(),
                                    [epoch](int d) { return epoch >= d; });
  return {config.lr * std::pow(config.lr_decay_factor, static_cast<double>(decays)), config.lr};
}

NamedAttack selection_attack(const TrainConfig& config) {
  return *named_attack("pgd20", config.attack.epsilon);
}

json EpochRecord::to_json() const {
  json j = {{"epoch", epoch}, {"lr_model", lr.model}, {"lr_oracle", lr.oracle}};
  j["metrics"] = metrics.to_json();
  json ml = {{"ce", model_loss.ce}, {"total", model_loss.total}, {"logit_adjustment", model_loss.logit_adjustment}};
  if (model_loss.cos) ml["cos"] = *model_loss.cos;
  j["model_loss"] = ml;
  if (oracle) {
    json o = {{"epoch", oracle->epoch},
              {"refurbished_count", oracle->refurbished_count},
              {"clean_count", oracle->clean_count},
              {"noisy_count", oracle->noisy_count},
              {"k", oracle->k},
              {"clean_set_empty", oracle->clean_set_empty}};
    o["refurbished_nr"] = oracle->refurbished_nr ? json(*oracle->refurbished_nr) : json();
    json loss = {{"cos", oracle->loss.cos}, {"ce", oracle->loss.ce}, {"total", oracle->loss.total}};
    if (oracle->loss.mse) loss["mse"] = *oracle->loss.mse;
    o["loss"] = loss;
    j["oracle"] = o;
  } else {
    j["oracle"] = nullptr;
  }
  j["prior_counts"] = prior_counts;
  j["estimated_counts"] = estimated_counts ? json(*estimated_counts) : json();
  j["gt_counts"] = gt_counts ? json(*gt_counts) : json();
  return j;
}

// ---------------------------------------------------------------------------
// Training loop

namespace {

Matrix gather(const Matrix& samples, std::span<const std::size_t> rows) {
  Matrix out(static_cast<Eigen::Index>(rows.size()), samples.cols());
  for (std::size_t k = 0; k < rows.size(); ++k) {
    out.row(static_cast<Eigen::Index>(k)) = samples.row(static_cast<Eigen::Index>(rows[k]));
  }
  return out;
}

struct AtEpochOutcome {
  ModelLossRecord loss;
  bool finite = true;
};

}  // namespace

RunState train(const TrainConfig& config, const LabeledDataset& train_set,
               const LabeledDataset& test_set, const std::optional<std::filesystem::path>& run_dir) {
  config.validate();
  train_set.validate();
  test_set.validate();
  if (train_set.dim() != test_set.dim() || train_set.num_classes != test_set.num_classes) {
    throw std::invalid_argument("train: train and test sets differ in dimension or class count");
  }

  const ArchSpec arch = config.arch_for(train_set);
  const bool use_oracle = config.method == Method::oat;

  RunState state;
  state.config = config;
  state.model = init_model(arch, ModelRole::at_model, derive_seed(config.seed, "model-init"));
  ad::OptimizerState model_opt{config.lr, config.momentum, config.weight_decay, {}};

  OracleConfig ocfg;
  ocfg.theta_r = config.theta_r;
  ocfg.k = config.k;
  ocfg.batch_size = config.batch_size;
  ocfg.interaction_enabled = config.interaction_enabled;
  ocfg.refurbish_from_original = config.refurbish_from_original;
  ocfg.detach_weak_branch = config.detach_weak_branch;
  ocfg.weak = AugmentationPolicy::weak(config.image_shape);
  ocfg.strong = AugmentationPolicy::strong(config.image_shape);
  ocfg.threads = config.threads;
  if (use_oracle) {
    ModelParams oracle = init_model(arch, ModelRole::oracle, derive_seed(config.seed, "oracle-init"));
    state.oracle = make_oracle_state(train_set, std::move(oracle), ocfg,
                                     derive_seed(config.seed, "oversample"));
    state.oracle->optimizer.momentum = config.momentum;
    state.oracle->optimizer.weight_decay = config.weight_decay;
  }

  SplitMix64 oracle_rng(derive_seed(config.seed, "oracle-epochs"));
  SplitMix64 at_rng(derive_seed(config.seed, "at-epochs"));
  const std::uint64_t eval_seed = derive_seed(config.seed, "eval");
  const NamedAttack select = selection_attack(config);

  std::optional<RunWriter> writer;
  if (run_dir) writer.emplace(*run_dir, config);

  const std::vector<std::int64_t> prior = class_counts(train_set.observed_labels, train_set.num_classes);
  std::optional<std::vector<std::int64_t>> gt;
  if (train_set.gt_labels) gt = class_counts(*train_set.gt_labels, train_set.num_classes);

  const std::size_t n = train_set.size();
  const auto bs = static_cast<std::size_t>(config.batch_size);
  std::vector<Value> model_params = state.model.parameters();

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    EpochRecord rec;
    rec.epoch = epoch;
    rec.lr = lr_at_epoch(config, epoch);
    rec.prior_counts = prior;
    rec.gt_counts = gt;

    Labels at_labels = train_set.observed_labels;
    if (use_oracle) {
      ocfg.lr = rec.lr.oracle;
      try {
        rec.oracle = oracle_epoch(*state.oracle, &state.model, ocfg, oracle_rng, epoch);
      } catch (const std::runtime_error& e) {
        if (writer) writer->append_abort(epoch, e.what());
        throw TrainingAborted(e.what());
      }
      const ModelParams& oracle = state.oracle->model;
      const Matrix oracle_logits = predict_logits(oracle, train_set.samples);
      at_labels = argmax_rows(oracle_logits);
      if (!state.distribution || epoch % config.distribution_interval == 0) {
        state.distribution = distribution_from_counts(class_counts(at_labels, train_set.num_classes));
      }
      rec.estimated_counts = state.distribution->counts;
    }

    // Adversarial epoch over the original (not oversampled) training set.
    AttackSpec spec = config.attack;
    spec.adjustment.reset();
    const bool adjust = use_oracle && config.adjustment_enabled;
    if (adjust) spec.adjustment = state.distribution->smoothed;
    rec.model_loss.logit_adjustment = adjust;

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    at_rng.shuffle(std::span<std::size_t>(order));
    model_opt.learning_rate = rec.lr.model;

    double sum_ce = 0.0, sum_cos = 0.0, sum_total = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < n; start += bs) {
      const std::span<const std::size_t> rows(order.data() + start, std::min(n, start + bs) - start);
      const Matrix x = gather(train_set.samples, rows);
      Labels y;
      y.reserve(rows.size());
      for (std::size_t r : rows) y.push_back(at_labels[r]);

      const Matrix x_adv = pgd_attack(state.model, x, y, spec, at_rng);
      Value total;
      if (use_oracle) {
        const AtLossTerms terms =
            at_model_loss(state.model, state.oracle->model, x, x_adv, *state.distribution, config);
        total = terms.total;
        sum_ce += terms.ce.item();
        if (terms.cos) sum_cos += terms.cos->item();
      } else {
        total = cross_entropy(forward_logits(state.model, Value::leaf(x_adv)), y);
        sum_ce += total.item();
      }
      if (!std::isfinite(total.item())) {
        const std::string why = "non-finite AT-model loss at epoch " + std::to_string(epoch);
        if (writer) writer->append_abort(epoch, why);
        throw TrainingAborted(why);
      }
      sum_total += total.item();
      ad::backward(total);
      ad::sgd_step(model_params, model_opt);
      ++batches;
    }
    const auto nb = static_cast<double>(std::max<std::size_t>(batches, 1));
    rec.model_loss.ce = sum_ce / nb;
    if (use_oracle && config.interaction_enabled) rec.model_loss.cos = sum_cos / nb;
    rec.model_loss.total = sum_total / nb;

    rec.metrics = evaluate(state.model, test_set, std::span<const NamedAttack>(&select, 1), eval_seed,
                           config.threads);
    rec.metrics.epoch = epoch;
    if (rec.oracle) rec.metrics.refurbished_nr = rec.oracle->refurbished_nr;
    if (gt) {
      rec.metrics.dist_l1_prior = distribution_error(prior, *gt);
      if (rec.estimated_counts) rec.metrics.dist_l1_estimated = distribution_error(*rec.estimated_counts, *gt);
    }

    const double ra = rec.metrics.robust_accuracy.at(select.name);
    if (state.best.epoch < 0 || ra > state.best.metrics.robust_accuracy.at(select.name)) {
      state.best = {epoch, state.model.clone(), rec.metrics};
      if (writer) writer->save("best", state.best);
    }
    if (writer) writer->append(rec);
    state.history.push_back(std::move(rec));
  }

  state.last = {config.epochs - 1, state.model.clone(), state.history.back().metrics};
  if (writer) writer->save("last", state.last);
  return state;
}

}  // namespace oat
