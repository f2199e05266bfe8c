#include "oat/evaluation.hpp"

#include "oat/oracle.hpp"
#include "oat/rng.hpp"

#include <cmath>
#include <cstdlib>
#include <stdexcept>
#include <thread>

namespace oat {

std::optional<NamedAttack> named_attack(const std::string& name, std::optional<double> epsilon) {
  AttackSpec spec;
  if (epsilon) {
    spec.epsilon = *epsilon;
    spec.alpha = *epsilon / 4.0;
  }
  if (name == "pgd20") {
    spec.steps = 20;
  } else if (name == "pgd100") {
    spec.steps = 100;
  } else if (name == "cw100") {
    spec.steps = 100;
    spec.loss = AttackLoss::cw_margin;
  } else if (name == "none") {
    return std::nullopt;
  } else {
    throw std::invalid_argument("unknown attack '" + name + "'");
  }
  return NamedAttack{name, spec};
}

void MetricsRecord::check() const {
  for (const auto& [name, ra] : robust_accuracy) {
    if (ra > clean_accuracy) {
      throw std::logic_error("metrics: robust accuracy under " + name + " exceeds clean accuracy");
    }
  }
}

nlohmann::json MetricsRecord::to_json() const {
  nlohmann::json j = {{"epoch", epoch},
                      {"clean_accuracy", clean_accuracy},
                      {"robust_accuracy", robust_accuracy}};
  j["refurbished_nr"] = refurbished_nr ? nlohmann::json(*refurbished_nr) : nlohmann::json();
  j["dist_l1_prior"] = dist_l1_prior ? nlohmann::json(*dist_l1_prior) : nlohmann::json();
  j["dist_l1_estimated"] = dist_l1_estimated ? nlohmann::json(*dist_l1_estimated) : nlohmann::json();
  return j;
}

namespace {

constexpr Eigen::Index kEvalBatch = 256;

struct BatchOutcome {
  std::size_t clean_correct = 0;
  std::vector<std::size_t> robust_correct;
};

}  // namespace

MetricsRecord evaluate(const ModelParams& model, const LabeledDataset& test,
                       std::span<const NamedAttack> attacks, std::uint64_t seed, int threads) {
  if (!test.gt_labels) throw std::invalid_argument("evaluate: test set needs ground-truth labels");
  const Labels& truth = *test.gt_labels;
  const Eigen::Index n = test.samples.rows();
  const auto num_batches = static_cast<std::size_t>((n + kEvalBatch - 1) / kEvalBatch);
  std::vector<BatchOutcome> outcomes(num_batches);

  auto run_batch = [&](std::size_t b) {
    const Eigen::Index start = static_cast<Eigen::Index>(b) * kEvalBatch;
    const Eigen::Index rows = std::min(kEvalBatch, n - start);
    const Matrix x = test.samples.middleRows(start, rows);
    const std::span<const int> y(truth.data() + start, static_cast<std::size_t>(rows));

    const Labels pred = argmax_rows(predict_logits(model, x));
    std::vector<bool> correct(static_cast<std::size_t>(rows));
    BatchOutcome& out = outcomes[b];
    for (std::size_t i = 0; i < correct.size(); ++i) {
      correct[i] = pred[i] == y[i];
      out.clean_correct += correct[i];
    }
    for (const NamedAttack& attack : attacks) {
      SplitMix64 rng(derive_seed(seed, attack.name + "/" + std::to_string(b)));
      const Labels adv_pred = argmax_rows(predict_logits(model, pgd_attack(model, x, y, attack.spec, rng)));
      std::size_t robust = 0;
      for (std::size_t i = 0; i < correct.size(); ++i) robust += correct[i] && adv_pred[i] == y[i];
      out.robust_correct.push_back(robust);
    }
  };

  if (threads > 1 && num_batches > 1) {
    std::vector<std::jthread> pool;
    const auto workers = std::min<std::size_t>(static_cast<std::size_t>(threads), num_batches);
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        for (std::size_t b = w; b < num_batches; b += workers) run_batch(b);
      });
    }
  } else {
    for (std::size_t b = 0; b < num_batches; ++b) run_batch(b);
  }

  MetricsRecord rec;
  const double denom = n > 0 ? static_cast<double>(n) : 1.0;
  std::size_t clean = 0;
  std::vector<std::size_t> robust(attacks.size(), 0);
  for (const BatchOutcome& o : outcomes) {
    clean += o.clean_correct;
    for (std::size_t a = 0; a < attacks.size(); ++a) robust[a] += o.robust_correct[a];
  }
  rec.clean_accuracy = static_cast<double>(clean) / denom;
  for (std::size_t a = 0; a < attacks.size(); ++a) {
    rec.robust_accuracy[attacks[a].name] = static_cast<double>(robust[a]) / denom;
  }
  rec.check();
  return rec;
}

double distribution_error(std::span<const std::int64_t> estimated,
                          std::span<const std::int64_t> reference) {
  if (estimated.size() != reference.size()) {
    throw std::invalid_argument("distribution_error: class counts differ in length");
  }
  double se = 0.0, sr = 0.0;
  for (std::size_t i = 0; i < estimated.size(); ++i) {
    se += static_cast<double>(estimated[i]);
    sr += static_cast<double>(reference[i]);
  }
  if (se <= 0.0 || sr <= 0.0) throw std::invalid_argument("distribution_error: zero total");
  double tv = 0.0;
  for (std::size_t i = 0; i < estimated.size(); ++i) {
    tv += std::abs(static_cast<double>(estimated[i]) / se - static_cast<double>(reference[i]) / sr);
  }
  return 0.5 * tv;
}

int threads_from_env() {
  const char* v = std::getenv("OAT_THREADS");
  if (v == nullptr) return 0;
  char* end = nullptr;
  const long n = std::strtol(v, &end, 10);
  if (end == v || *end != '\0' || n < 0) return 0;
  return static_cast<int>(std::min<long>(n, 256));
}

}  // namespace oat
