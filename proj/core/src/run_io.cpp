#include "oat/run_io.hpp"

#include <cmath>
#include <iomanip>
#include <sstream>
#include <stdexcept>

namespace oat {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::ofstream open_out(const fs::path& file, std::ios::openmode mode = std::ios::trunc) {
  std::ofstream out(file, std::ios::out | mode);
  if (!out) throw std::runtime_error("cannot open '" + file.string() + "' for writing");
  return out;
}

json read_json(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw std::runtime_error("cannot open '" + file.string() + "'");
  return json::parse(in);
}

std::optional<double> opt_double(const json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<double>();
}

MetricsRecord metrics_from_json(const json& j) {
  MetricsRecord m;
  m.epoch = j.at("epoch").get<int>();
  m.clean_accuracy = j.at("clean_accuracy").get<double>();
  m.robust_accuracy = j.at("robust_accuracy").get<std::map<std::string, double>>();
  m.refurbished_nr = opt_double(j, "refurbished_nr");
  m.dist_l1_prior = opt_double(j, "dist_l1_prior");
  m.dist_l1_estimated = opt_double(j, "dist_l1_estimated");
  return m;
}

// Ratio in [0,1] as a percentage rounded to two decimals.
std::string pct(double ratio) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(2) << ratio * 100.0;
  return os.str();
}

json pct_json(double ratio) { return std::round(ratio * 10000.0) / 100.0; }

json pct_json(const json& maybe_ratio) {
  return maybe_ratio.is_null() ? json() : pct_json(maybe_ratio.get<double>());
}

std::string csv_cell(const json& maybe_ratio) {
  return maybe_ratio.is_null() ? std::string() : pct(maybe_ratio.get<double>());
}

std::vector<json> read_jsonl(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw std::runtime_error("cannot open '" + file.string() + "'");
  std::vector<json> out;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) out.push_back(json::parse(line));
  }
  return out;
}

struct DistRow {
  int cls;
  std::string prior, estimated, gt;
};

std::vector<DistRow> read_distribution_csv(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw std::runtime_error("cannot open '" + file.string() + "'");
  std::string line;
  std::getline(in, line);
  std::vector<DistRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    DistRow r;
    std::string cls;
    std::getline(ls, cls, ',');
    std::getline(ls, r.prior, ',');
    std::getline(ls, r.estimated, ',');
    std::getline(ls, r.gt, ',');
    r.cls = std::stoi(cls);
    rows.push_back(std::move(r));
  }
  return rows;
}

json cell_json(const std::string& s) { return s.empty() ? json() : json(std::stoll(s)); }

std::string report_dataset(const fs::path& dir, ReportFormat format) {
  const json prov = read_json(dir / "corruption.json");
  const json& r = prov.at("realized");
  if (format == ReportFormat::json) {
    json out = {{"kind", "dataset"},
                {"spec", prov.at("spec")},
                {"num_samples", r.at("num_samples")},
                {"realized_nr_pct", pct_json(r.at("nr"))},
                {"final_nr_pct", pct_json(r.at("final_nr"))},
                {"realized_ir_pct", pct_json(r.at("ir"))},
                {"gt_ir_pct", pct_json(r.at("gt_ir"))},
                {"observed_counts", r.at("observed_counts")},
                {"gt_counts", r.at("gt_counts")}};
    return out.dump(2) + "\n";
  }
  std::ostringstream os;
  os << "num_samples,realized_nr_pct,final_nr_pct,realized_ir_pct,gt_ir_pct\n"
     << r.at("num_samples").get<std::int64_t>() << ',' << csv_cell(r.at("nr")) << ','
     << csv_cell(r.at("final_nr")) << ',' << csv_cell(r.at("ir")) << ',' << csv_cell(r.at("gt_ir"))
     << '\n';
  return os.str();
}

std::string report_run(const fs::path& dir, ReportFormat format) {
  const std::vector<json> records = read_jsonl(dir / "metrics.jsonl");
  std::vector<std::string> attacks;
  for (const json& rec : records) {
    if (!rec.contains("metrics")) continue;
    for (const auto& [name, _] : rec.at("metrics").at("robust_accuracy").items()) {
      if (std::find(attacks.begin(), attacks.end(), name) == attacks.end()) attacks.push_back(name);
    }
  }

  if (format == ReportFormat::csv) {
    std::ostringstream os;
    os << "epoch,lr_model,clean_accuracy_pct";
    for (const auto& a : attacks) os << ",ra_" << a << "_pct";
    os << ",refurbished_nr_pct,dist_l1_prior_pct,dist_l1_estimated_pct,estimated_total\n";
    for (const json& rec : records) {
      if (!rec.contains("metrics")) continue;
      const json& m = rec.at("metrics");
      os << rec.at("epoch").get<int>() << ',' << rec.at("lr_model").get<double>() << ','
         << pct(m.at("clean_accuracy").get<double>());
      for (const auto& a : attacks) {
        const json& ra = m.at("robust_accuracy");
        os << ',' << (ra.contains(a) ? pct(ra.at(a).get<double>()) : std::string());
      }
      std::int64_t est_total = 0;
      if (!rec.at("estimated_counts").is_null()) {
        for (const auto& c : rec.at("estimated_counts")) est_total += c.get<std::int64_t>();
      }
      os << ',' << csv_cell(m.at("refurbished_nr")) << ',' << csv_cell(m.at("dist_l1_prior")) << ','
         << csv_cell(m.at("dist_l1_estimated")) << ','
         << (rec.at("estimated_counts").is_null() ? std::string() : std::to_string(est_total)) << '\n';
    }
    return os.str();
  }

  json out = {{"kind", "run"}, {"epochs", json::array()}, {"aborted", nullptr}};
  for (const json& rec : records) {
    if (rec.contains("aborted")) {
      out["aborted"] = rec;
      continue;
    }
    const json& m = rec.at("metrics");
    json ra = json::object();
    for (const auto& [name, v] : m.at("robust_accuracy").items()) ra[name] = pct_json(v.get<double>());
    const int epoch = rec.at("epoch").get<int>();
    json e = {{"epoch", epoch},
              {"lr_model", rec.at("lr_model")},
              {"clean_accuracy_pct", pct_json(m.at("clean_accuracy").get<double>())},
              {"robust_accuracy_pct", ra},
              {"refurbished_nr_pct", pct_json(m.at("refurbished_nr"))},
              {"dist_l1_prior_pct", pct_json(m.at("dist_l1_prior"))},
              {"dist_l1_estimated_pct", pct_json(m.at("dist_l1_estimated"))},
              {"model_loss", rec.at("model_loss")}};
    const fs::path dist = dir / ("distribution_epoch_" + std::to_string(epoch) + ".csv");
    if (fs::exists(dist)) {
      json rows = json::array();
      for (const DistRow& r : read_distribution_csv(dist)) {
        rows.push_back({{"class", r.cls},
                        {"prior_count", cell_json(r.prior)},
                        {"estimated_count", cell_json(r.estimated)},
                        {"gt_count", cell_json(r.gt)}});
      }
      e["distribution"] = rows;
    }
    out["epochs"].push_back(e);
  }
  for (const char* name : {"best", "last"}) {
    const fs::path state = dir / name / "state.json";
    if (fs::exists(state)) {
      const json s = read_json(state);
      const json& m = s.at("metrics");
      json ra = json::object();
      for (const auto& [a, v] : m.at("robust_accuracy").items()) ra[a] = pct_json(v.get<double>());
      out[name] = {{"epoch", s.at("epoch")},
                   {"clean_accuracy_pct", pct_json(m.at("clean_accuracy").get<double>())},
                   {"robust_accuracy_pct", ra}};
    }
  }
  return out.dump(2) + "\n";
}

}  // namespace

RunWriter::RunWriter(fs::path dir, const TrainConfig& config) : dir_(std::move(dir)) {
  fs::create_directories(dir_);
  open_out(dir_ / "config.json") << config_to_json(config).dump(2) << '\n';
  metrics_ = open_out(dir_ / "metrics.jsonl");
  if (config.method == Method::oat) oracle_ = open_out(dir_ / "oracle.jsonl");
}

void RunWriter::append(const EpochRecord& rec) {
  rec.metrics.check();
  const json j = rec.to_json();
  metrics_ << j.dump() << '\n';
  metrics_.flush();
  if (oracle_.is_open() && !j.at("oracle").is_null()) {
    oracle_ << j.at("oracle").dump() << '\n';
    oracle_.flush();
  }
  write_distribution_csv(dir_ / ("distribution_epoch_" + std::to_string(rec.epoch) + ".csv"), rec);
}

void RunWriter::append_abort(int epoch, const std::string& reason) {
  metrics_ << json{{"epoch", epoch}, {"aborted", true}, {"reason", reason}}.dump() << '\n';
  metrics_.flush();
}

void RunWriter::save(const std::string& name, const Checkpoint& ckpt) const {
  const fs::path dir = dir_ / name;
  save_checkpoint(ckpt.model, dir);
  open_out(dir / "state.json") << json{{"epoch", ckpt.epoch}, {"metrics", ckpt.metrics.to_json()}}.dump(2)
                               << '\n';
}

void write_distribution_csv(const fs::path& file, const EpochRecord& rec) {
  std::ofstream out = open_out(file);
  out << "class,prior_count,estimated_count,gt_count\n";
  for (std::size_t c = 0; c < rec.prior_counts.size(); ++c) {
    out << c << ',' << rec.prior_counts[c] << ',';
    if (rec.estimated_counts) out << (*rec.estimated_counts)[c];
    out << ',';
    if (rec.gt_counts) out << (*rec.gt_counts)[c];
    out << '\n';
  }
}

Checkpoint load_run_checkpoint(const fs::path& dir) {
  Checkpoint ckpt;
  ckpt.model = load_checkpoint(dir);
  const fs::path state = dir / "state.json";
  if (fs::exists(state)) {
    const json s = read_json(state);
    ckpt.epoch = s.at("epoch").get<int>();
    ckpt.metrics = metrics_from_json(s.at("metrics"));
  }
  return ckpt;
}

void write_provenance(const fs::path& dir, const CorruptionSpec& spec, const CorruptionResult& result) {
  fs::create_directories(dir);
  json pairs = json::array();
  for (const auto& [a, b] : spec.asym_pairs) pairs.push_back({a, b});
  const LabeledDataset& ds = result.dataset;
  json j = {{"format", "oat-corruption"},
            {"version", 1},
            {"spec",
             {{"noise", to_string(spec.noise_type)},
              {"nr", spec.target_nr},
              {"ir", spec.target_ir},
              {"pairs", pairs},
              {"seed", spec.seed}}},
            {"realized",
             {{"num_samples", ds.size()},
              {"nr", result.realized_nr},
              {"final_nr", result.final_nr},
              {"ir", result.realized_ir},
              {"gt_ir", result.gt_ir},
              {"observed_counts", class_counts(ds.observed_labels, ds.num_classes)},
              {"gt_counts", ds.gt_labels ? json(class_counts(*ds.gt_labels, ds.num_classes)) : json()}}}};
  open_out(dir / "corruption.json") << j.dump(2) << '\n';
}

std::string report(const fs::path& dir, ReportFormat format) {
  if (fs::exists(dir / "metrics.jsonl")) return report_run(dir, format);
  if (fs::exists(dir / "corruption.json")) return report_dataset(dir, format);
  throw std::runtime_error("'" + dir.string() + "' holds neither metrics.jsonl nor corruption.json");
}

}  // namespace oat
