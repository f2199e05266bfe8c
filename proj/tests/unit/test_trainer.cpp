#include "oat/cli.hpp"
#include "oat/corruption.hpp"
#include "oat/run_io.hpp"
#include "oat/trainer.hpp"

#include "test_support.hpp"

#include <gtest/gtest.h>

#include <sstream>

namespace oat {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

TrainConfig quick_config(Method method, int epochs = 3) {
  TrainConfig c;
  c.method = method;
  c.epochs = epochs;
  c.lr_decay_epochs = {};
  c.batch_size = 64;
  c.encoder_widths = {16};
  c.feature_dim = 8;
  c.projector_hidden = 16;
  c.projector_out = 8;
  c.predictor_hidden = 16;
  c.predictor_out = 8;
  c.seed = 5;
  return c;
}

struct Fixture {
  LabeledDataset train, test;
};

Fixture small_problem() {
  const LabeledDataset clean = gen_synthetic({4, 8, 60, 0.15, 1});
  Fixture f;
  f.train = corrupt(clean, CorruptionSpec{NoiseType::symmetric, 0.3, 0.3, {}, 2}).dataset;
  f.test = gen_synthetic({4, 8, 25, 0.15, 3});
  return f;
}

TEST(Config, JsonRoundTrip) {
  TrainConfig c = quick_config(Method::pgd_at);
  c.image_shape = ImageShape{1, 2, 4};
  c.attack.loss = AttackLoss::cw_margin;
  const TrainConfig r = config_from_json(config_to_json(c));
  EXPECT_EQ(config_to_json(r), config_to_json(c));
}

TEST(Config, RejectsUnknownKeyAndBadValues) {
  EXPECT_THROW(config_from_json(json{{"epochz", 3}}), std::invalid_argument);
  EXPECT_THROW(config_from_json(json{{"epochs", 10}, {"lr_decay_epochs", {5, 5}}}), std::invalid_argument);
  EXPECT_THROW(config_from_json(json{{"epochs", 10}}), std::invalid_argument);  // default decays at 30, 45
  EXPECT_THROW(config_from_json(json{{"method", "trades"}}), std::invalid_argument);
  EXPECT_EQ(config_from_json(json::object()).epochs, 60);
}

TEST(Config, DeskDefaults) {
  const TrainConfig c;
  EXPECT_EQ(c.batch_size, 128);
  EXPECT_DOUBLE_EQ(c.lr, 0.1);
  EXPECT_DOUBLE_EQ(c.momentum, 0.9);
  EXPECT_DOUBLE_EQ(c.weight_decay, 5e-4);
  EXPECT_DOUBLE_EQ(c.theta_r, 0.8);
  EXPECT_EQ(c.k, 200);
  EXPECT_EQ(c.projector_hidden, 256);
  EXPECT_EQ(c.projector_out, 128);
  EXPECT_DOUBLE_EQ(c.attack.epsilon, 8.0 / 255.0);
  EXPECT_DOUBLE_EQ(c.attack.alpha, 2.0 / 255.0);
  EXPECT_EQ(c.attack.steps, 10);
}

TEST(Schedule, ModelDecaysOracleConstant) {
  const TrainConfig c;
  EXPECT_DOUBLE_EQ(lr_at_epoch(c, 0).model, 0.1);
  EXPECT_DOUBLE_EQ(lr_at_epoch(c, 29).model, 0.1);
  EXPECT_NEAR(lr_at_epoch(c, 30).model, 0.01, 1e-15);
  EXPECT_NEAR(lr_at_epoch(c, 45).model, 0.001, 1e-15);
  EXPECT_DOUBLE_EQ(lr_at_epoch(c, 59).oracle, 0.1);
}

TEST(Distribution, EstimateExamples) {
  // Constant logits: every argmax ties and goes to class 0.
  const LabeledDataset ds = gen_synthetic({3, 4, 10, 0.1, 1});
  ModelParams constant = init_model(ArchSpec{4, {5}, 3, 3, 4, 2, 4, 2}, ModelRole::oracle, 1);
  constant.head.weight.mutable_data().setZero();
  constant.head.bias.mutable_data().setZero();
  const LabelDistribution d = estimate_label_distribution(constant, ds.samples);
  EXPECT_EQ(d.counts, (std::vector<std::int64_t>{30, 0, 0}));
  EXPECT_EQ(d.smoothed, (std::vector<double>{30.0, 1.0, 1.0}));

  // A perfect separator on two clusters recovers the ground-truth counts.
  LabeledDataset two = gen_synthetic({2, 2, 25, 0.05, 2});
  two = two.subset(std::vector<std::size_t>{0, 1, 2, 3, 4, 25, 26});
  ModelParams perfect = init_model(ArchSpec{2, {}, 2, 2, 4, 2, 4, 2}, ModelRole::oracle, 1);
  perfect.encoder.layers[0].weight.mutable_data() = ad::Matrix::Identity(2, 2);
  perfect.encoder.layers[0].bias.mutable_data().setZero();
  perfect.head.weight.mutable_data() << 1, -1, -1, 1;
  perfect.head.bias.mutable_data().setZero();
  const LabelDistribution p = estimate_label_distribution(perfect, two.samples);
  EXPECT_EQ(p.counts, class_counts(*two.gt_labels, 2));
}

TEST(Distribution, CountsPartitionSamples) {
  const LabeledDataset ds = gen_synthetic({5, 6, 13, 0.3, 4});
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const ModelParams o = init_model(ArchSpec{6, {7}, 4, 5, 4, 3, 4, 3}, ModelRole::oracle, seed);
    const LabelDistribution d = estimate_label_distribution(o, ds.samples);
    std::int64_t total = 0;
    for (auto c : d.counts) total += c;
    EXPECT_EQ(static_cast<std::size_t>(total), ds.size());
    for (double v : d.smoothed) EXPECT_GE(v, 1.0);
  }
}

TEST(AtModelLoss, OneHotOracleGivesHardCrossEntropy) {
  SplitMix64 rng(3);
  const ArchSpec a{4, {6}, 5, 3, 4, 2, 4, 2};
  ModelParams oracle = init_model(a, ModelRole::oracle, 1);
  oracle.head.weight.mutable_data().setZero();
  oracle.head.bias.mutable_data() << 0.0, 1000.0, 0.0;
  const ModelParams model = init_model(a, ModelRole::at_model, 2);
  const ad::Matrix x = testing::random_matrix(6, 4, rng);
  const ad::Matrix x_adv = testing::random_matrix(6, 4, rng);
  TrainConfig cfg;
  cfg.interaction_enabled = false;
  cfg.adjustment_enabled = false;
  const AtLossTerms t = at_model_loss(model, oracle, x, x_adv, distribution_from_counts({1, 1, 1}), cfg);
  const Labels ones(6, 1);
  EXPECT_NEAR(t.ce.item(), cross_entropy(forward_logits(model, Value::leaf(x_adv)), ones).item(), 1e-12);
  EXPECT_FALSE(t.cos.has_value());
  EXPECT_EQ(t.total.item(), t.ce.item());
}

TEST(Train, RecordedTotalsAreSumsOfTerms) {
  const Fixture f = small_problem();
  const RunState s = train(quick_config(Method::oat), f.train, f.test);
  for (const auto& r : s.history) {
    EXPECT_NEAR(r.model_loss.total, r.model_loss.ce + r.model_loss.cos.value(), 1e-12);
    const auto& o = r.oracle->loss;
    EXPECT_NEAR(o.total, o.cos + o.ce + o.mse.value(), 1e-12);
  }
  EXPECT_LE(s.best.epoch, s.last.epoch);
}

TEST(Train, PgdAtRecords) {
  const Fixture f = small_problem();
  const RunState s = train(quick_config(Method::pgd_at), f.train, f.test);
  ASSERT_EQ(s.history.size(), 3u);
  EXPECT_FALSE(s.oracle.has_value());
  for (const auto& r : s.history) {
    EXPECT_FALSE(r.oracle.has_value());
    EXPECT_FALSE(r.model_loss.cos.has_value());
    EXPECT_FALSE(r.model_loss.logit_adjustment);
    EXPECT_TRUE(r.metrics.robust_accuracy.contains("pgd20"));
  }
  EXPECT_EQ(s.last.epoch, 2);
  EXPECT_GE(s.best.epoch, 0);
}

TEST(Train, OatRecordsEnabledTerms) {
  const Fixture f = small_problem();
  for (bool inter : {false, true}) {
    for (bool adj : {false, true}) {
      TrainConfig c = quick_config(Method::oat, 2);
      c.interaction_enabled = inter;
      c.adjustment_enabled = adj;
      const RunState s = train(c, f.train, f.test);
      for (const auto& r : s.history) {
        ASSERT_TRUE(r.oracle.has_value());
        EXPECT_EQ(r.oracle->loss.mse.has_value(), inter);
        EXPECT_EQ(r.model_loss.cos.has_value(), inter);
        EXPECT_EQ(r.model_loss.logit_adjustment, adj);
        ASSERT_TRUE(r.estimated_counts.has_value());
        std::int64_t total = 0;
        for (auto v : *r.estimated_counts) total += v;
        EXPECT_EQ(static_cast<std::size_t>(total), f.train.size());
      }
    }
  }
}

TEST(Train, BestIsEarliestMaximum) {
  const Fixture f = small_problem();
  const RunState s = train(quick_config(Method::pgd_at, 4), f.train, f.test);
  double best = -1.0;
  int epoch = -1;
  for (const auto& r : s.history) {
    if (r.metrics.robust_accuracy.at("pgd20") > best) {
      best = r.metrics.robust_accuracy.at("pgd20");
      epoch = r.epoch;
    }
  }
  EXPECT_EQ(s.best.epoch, epoch);
}

TEST(Train, RejectsMismatchedSets) {
  const Fixture f = small_problem();
  const LabeledDataset other = gen_synthetic({4, 5, 10, 0.1, 1});
  EXPECT_THROW(train(quick_config(Method::oat), f.train, other), std::invalid_argument);
}

TEST(RunIo, WritesAndReloads) {
  const Fixture f = small_problem();
  const auto dir = testing::scratch_dir("run_io");
  const RunState s = train(quick_config(Method::oat), f.train, f.test, dir / "run");
  for (const char* file : {"config.json", "metrics.jsonl", "oracle.jsonl", "distribution_epoch_0.csv",
                           "best/checkpoint.json", "last/state.json"}) {
    EXPECT_TRUE(fs::exists(dir / "run" / file)) << file;
  }
  const Checkpoint last = load_run_checkpoint(dir / "run" / "last");
  EXPECT_EQ(last.epoch, 2);
  EXPECT_EQ(last.metrics.clean_accuracy, s.last.metrics.clean_accuracy);
  EXPECT_EQ(last.metrics.robust_accuracy, s.last.metrics.robust_accuracy);

  const json rep = json::parse(report(dir / "run", ReportFormat::json));
  EXPECT_EQ(rep.at("epochs").size(), 3u);
  std::int64_t total = 0;
  for (const auto& row : rep.at("epochs")[0].at("distribution")) total += row.at("estimated_count").get<std::int64_t>();
  EXPECT_EQ(static_cast<std::size_t>(total), f.train.size());
  const std::string csv = report(dir / "run", ReportFormat::csv);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 4);
  EXPECT_THROW(report(dir, ReportFormat::csv), std::runtime_error);
}

int cli(std::vector<std::string> args, std::string* out_text = nullptr) {
  args.insert(args.begin(), "oat");
  std::vector<const char*> argv;
  for (auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  if (out_text) *out_text = out.str();
  return code;
}

TEST(Cli, ExitCodes) {
  EXPECT_EQ(cli({}), 1);
  EXPECT_EQ(cli({"train", "--bogus"}), 1);
  EXPECT_EQ(cli({"corrupt", "--input", "x", "--output", "y", "--noise", "gaussian"}), 1);
  EXPECT_EQ(cli({"report", "--run", "/nonexistent/oat"}), 2);
  EXPECT_EQ(cli({"--help"}), 0);
}

TEST(Cli, CorruptTrainEvalReportChain) {
  const auto dir = testing::scratch_dir("cli_chain");
  const std::string d = dir.string();
  ASSERT_EQ(cli({"generate", "--classes", "4", "--dim", "8", "--per-class", "60", "--spread", "0.15", "--seed",
                 "1", "--output", d + "/clean"}),
            0);
  ASSERT_EQ(cli({"generate", "--classes", "4", "--dim", "8", "--per-class", "20", "--seed", "2", "--output",
                 d + "/test"}),
            0);
  ASSERT_EQ(cli({"corrupt", "--input", d + "/clean", "--noise", "symmetric", "--nr", "0.4", "--ir", "0.1",
                 "--seed", "3", "--output", d + "/noisy"}),
            0);
  std::string text;
  ASSERT_EQ(cli({"report", "--run", d + "/noisy", "--emit", "json"}, &text), 0);
  EXPECT_EQ(json::parse(text).at("realized_nr_pct").get<double>(), 40.0);

  {
    std::ofstream cfg(dir / "cfg.json");
    cfg << config_to_json(quick_config(Method::oat, 2)).dump();
  }
  ASSERT_EQ(cli({"train", "--config", d + "/cfg.json", "--data", d + "/noisy", "--test", d + "/test",
                 "--method", "pgd-at", "--out", d + "/run"}),
            0);
  EXPECT_FALSE(fs::exists(dir / "run" / "oracle.jsonl"));
  ASSERT_EQ(cli({"eval", "--checkpoint", d + "/run/best", "--data", d + "/test", "--attack", "none", "--out",
                 d + "/eval.json"}),
            0);
  const json ev = json::parse(testing::read_file(dir / "eval.json"));
  EXPECT_TRUE(ev.at("robust_accuracy").empty());
  EXPECT_TRUE(ev.contains("clean_accuracy"));
  ASSERT_EQ(cli({"eval", "--checkpoint", d + "/run/last", "--data", d + "/test", "--attack", "pgd20", "--eps",
                 "0.031373"},
                &text),
            0);
  EXPECT_TRUE(json::parse(text).at("robust_accuracy").contains("pgd20"));
  ASSERT_EQ(cli({"report", "--run", d + "/run", "--emit", "csv"}, &text), 0);
  EXPECT_EQ(text.rfind("epoch,", 0), 0u);
}

}  // namespace
}  // namespace oat
