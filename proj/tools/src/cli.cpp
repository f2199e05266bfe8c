#include "oat/cli.hpp"

#include "oat/corruption.hpp"
#include "oat/dataset.hpp"
#include "oat/evaluation.hpp"
#include "oat/run_io.hpp"
#include "oat/trainer.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <fstream>
#include <iostream>
#include <sstream>

namespace oat {

namespace fs = std::filesystem;

namespace {

std::vector<ClassPair> parse_pairs(const std::string& text) {
  std::vector<ClassPair> pairs;
  if (text.empty()) return pairs;
  std::istringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    const auto colon = item.find(':');
    if (colon == std::string::npos) throw CLI::ValidationError("--pairs", "expected a:b entries, got '" + item + "'");
    try {
      pairs.emplace_back(std::stoi(item.substr(0, colon)), std::stoi(item.substr(colon + 1)));
    } catch (const std::logic_error&) {
      throw CLI::ValidationError("--pairs", "non-integer class in '" + item + "'");
    }
  }
  return pairs;
}

std::ofstream open_out(const fs::path& file) {
  if (file.has_parent_path()) fs::create_directories(file.parent_path());
  std::ofstream out(file);
  if (!out) throw std::runtime_error("cannot open '" + file.string() + "' for writing");
  return out;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Adversarial training under label noise and class imbalance"};
  app.require_subcommand(1);

  // corrupt
  std::string c_input, c_output, c_noise = "none", c_pairs;
  double c_nr = 0.0, c_ir = 1.0;
  std::uint64_t c_seed = 0;
  auto* corrupt_cmd = app.add_subcommand("corrupt", "Inject label noise, then exponential imbalance");
  corrupt_cmd->add_option("--input", c_input, "Clean dataset directory")->required();
  corrupt_cmd->add_option("--noise", c_noise, "Noise type")
      ->check(CLI::IsMember({"symmetric", "asymmetric", "none"}));
  corrupt_cmd->add_option("--nr", c_nr, "Target noise ratio")->check(CLI::Range(0.0, 1.0));
  corrupt_cmd->add_option("--ir", c_ir, "Target imbalance ratio")->check(CLI::Range(0.0, 1.0));
  corrupt_cmd->add_option("--pairs", c_pairs, "Asymmetric pairs a:b,c:d");
  corrupt_cmd->add_option("--seed", c_seed, "Seed");
  corrupt_cmd->add_option("--output", c_output, "Output dataset directory")->required();

  // train
  std::string t_config, t_data, t_test, t_method, t_out;
  std::optional<std::uint64_t> t_seed;
  std::optional<int> t_epochs;
  auto* train_cmd = app.add_subcommand("train", "Train an AT-model (OAT or PGD-AT)");
  train_cmd->add_option("--config", t_config, "TrainConfig JSON file");
  train_cmd->add_option("--data", t_data, "Training dataset directory")->required();
  train_cmd->add_option("--test", t_test, "Test dataset directory")->required();
  train_cmd->add_option("--method", t_method, "Override the configured method")
      ->check(CLI::IsMember({"oat", "pgd-at", "pgd_at"}));
  train_cmd->add_option("--out", t_out, "Run directory")->required();
  train_cmd->add_option("--seed", t_seed, "Override the configured seed");
  train_cmd->add_option("--epochs", t_epochs, "Override the configured epoch count");

  // eval
  std::string e_ckpt, e_data, e_attack = "pgd20", e_out;
  std::optional<double> e_eps;
  std::uint64_t e_seed = 0;
  auto* eval_cmd = app.add_subcommand("eval", "Clean and robust accuracy of a checkpoint");
  eval_cmd->add_option("--checkpoint", e_ckpt, "Checkpoint directory")->required();
  eval_cmd->add_option("--data", e_data, "Test dataset directory")->required();
  eval_cmd->add_option("--attack", e_attack, "Attack")
      ->check(CLI::IsMember({"pgd20", "pgd100", "cw100", "none"}));
  eval_cmd->add_option("--eps", e_eps, "L-inf radius (default 8/255)")->check(CLI::NonNegativeNumber);
  eval_cmd->add_option("--seed", e_seed, "Attack seed");
  eval_cmd->add_option("--out", e_out, "Metrics JSON file (stdout when omitted)");

  // report
  std::string r_run, r_emit = "csv", r_out;
  auto* report_cmd = app.add_subcommand("report", "Summarize a run or a corrupted dataset");
  report_cmd->add_option("--run", r_run, "Run or dataset directory")->required();
  report_cmd->add_option("--emit", r_emit, "Output format")->check(CLI::IsMember({"csv", "json"}));
  report_cmd->add_option("--out", r_out, "Output file (stdout when omitted)");

  // generate
  SyntheticSpec g_spec;
  std::string g_output;
  auto* gen_cmd = app.add_subcommand("generate", "Write a synthetic Gaussian-cluster dataset");
  gen_cmd->add_option("--classes", g_spec.num_classes, "Number of classes")->check(CLI::PositiveNumber);
  gen_cmd->add_option("--dim", g_spec.dim, "Feature dimension")->check(CLI::PositiveNumber);
  gen_cmd->add_option("--per-class", g_spec.per_class, "Samples per class")->check(CLI::PositiveNumber);
  gen_cmd->add_option("--spread", g_spec.cluster_spread, "Cluster standard deviation")
      ->check(CLI::NonNegativeNumber);
  gen_cmd->add_option("--seed", g_spec.seed, "Seed");
  gen_cmd->add_option("--output", g_output, "Output dataset directory")->required();

  // import-idx
  std::string i_images, i_labels, i_output;
  int i_classes = 0;
  auto* idx_cmd = app.add_subcommand("import-idx", "Convert an IDX image/label pair");
  idx_cmd->add_option("--images", i_images, "IDX image file")->required()->check(CLI::ExistingFile);
  idx_cmd->add_option("--labels", i_labels, "IDX label file")->required()->check(CLI::ExistingFile);
  idx_cmd->add_option("--classes", i_classes, "Class count (0 infers max label + 1)");
  idx_cmd->add_option("--output", i_output, "Output dataset directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*corrupt_cmd) {
      CorruptionSpec spec;
      spec.noise_type = parse_noise_type(c_noise);
      spec.target_nr = c_nr;
      spec.target_ir = c_ir;
      spec.asym_pairs = parse_pairs(c_pairs);
      spec.seed = c_seed;
      const LabeledDataset clean = load_dataset(c_input);
      const CorruptionResult result = corrupt(clean, spec);
      save_dataset(result.dataset, c_output);
      write_provenance(c_output, spec, result);
      out << "wrote " << result.dataset.size() << " samples to " << c_output << " (nr "
          << result.realized_nr << ", ir " << result.realized_ir << ")\n";
    } else if (*train_cmd) {
      TrainConfig config;
      if (!t_config.empty()) {
        std::ifstream in(t_config);
        if (!in) throw std::runtime_error("cannot open config '" + t_config + "'");
        config = config_from_json(nlohmann::json::parse(in));
      }
      if (!t_method.empty()) config.method = parse_method(t_method);
      if (t_seed) config.seed = *t_seed;
      if (t_epochs) {
        config.epochs = *t_epochs;
        std::erase_if(config.lr_decay_epochs, [&](int d) { return d >= config.epochs; });
      }
      if (config.threads == 0) config.threads = threads_from_env();
      config.validate();
      const LabeledDataset train_set = load_dataset(t_data);
      const LabeledDataset test_set = load_dataset(t_test);
      const RunState state = train(config, train_set, test_set, fs::path(t_out));
      const std::string sel = selection_attack(config).name;
      out << "best epoch " << state.best.epoch << ": CA " << state.best.metrics.clean_accuracy << ", RA "
          << state.best.metrics.robust_accuracy.at(sel) << "\nlast epoch " << state.last.epoch << ": CA "
          << state.last.metrics.clean_accuracy << ", RA " << state.last.metrics.robust_accuracy.at(sel)
          << '\n';
    } else if (*eval_cmd) {
      const Checkpoint ckpt = load_run_checkpoint(e_ckpt);
      const LabeledDataset test = load_dataset(e_data);
      std::vector<NamedAttack> attacks;
      if (auto a = named_attack(e_attack, e_eps)) attacks.push_back(*a);
      MetricsRecord m = evaluate(ckpt.model, test, attacks, e_seed, threads_from_env());
      m.epoch = ckpt.epoch;
      const std::string text = m.to_json().dump(2) + "\n";
      if (e_out.empty()) out << text;
      else open_out(e_out) << text;
    } else if (*report_cmd) {
      const std::string text = report(r_run, r_emit == "json" ? ReportFormat::json : ReportFormat::csv);
      if (r_out.empty()) out << text;
      else open_out(r_out) << text;
    } else if (*gen_cmd) {
      const LabeledDataset ds = gen_synthetic(g_spec);
      save_dataset(ds, g_output);
      out << "wrote " << ds.size() << " samples to " << g_output << '\n';
    } else if (*idx_cmd) {
      const LabeledDataset ds = load_idx(i_images, i_labels, i_classes);
      save_dataset(ds, i_output);
      out << "wrote " << ds.size() << " samples to " << i_output << '\n';
    }
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}

}  // namespace oat
