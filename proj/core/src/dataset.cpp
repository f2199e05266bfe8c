#include "oat/dataset.hpp"

#include "oat/rng.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <array>
#include <charconv>
#include <fstream>
#include <sstream>
#include <string>

namespace oat {

namespace fs = std::filesystem;
using nlohmann::json;

void LabeledDataset::validate() const {
  const auto n = observed_labels.size();
  if (num_classes <= 0) throw DatasetError("dataset: num_classes must be positive");
  if (static_cast<std::size_t>(samples.rows()) != n || ids.size() != n) {
    throw DatasetError("dataset: samples, labels and ids differ in length");
  }
  if (gt_labels && gt_labels->size() != n) throw DatasetError("dataset: gt_labels length mismatch");
  auto in_range = [this](int y) { return y >= 0 && y < num_classes; };
  if (!std::all_of(observed_labels.begin(), observed_labels.end(), in_range)) {
    throw DatasetError("dataset: observed label out of range");
  }
  if (gt_labels && !std::all_of(gt_labels->begin(), gt_labels->end(), in_range)) {
    throw DatasetError("dataset: ground-truth label out of range");
  }
  if (samples.size() > 0 && (samples.minCoeff() < 0.0 || samples.maxCoeff() > 1.0)) {
    throw DatasetError("dataset: sample values must lie in [0,1]");
  }
}

LabeledDataset LabeledDataset::subset(std::span<const std::size_t> indices) const {
  LabeledDataset out;
  out.num_classes = num_classes;
  out.samples.resize(static_cast<Eigen::Index>(indices.size()), samples.cols());
  out.observed_labels.reserve(indices.size());
  out.ids.reserve(indices.size());
  if (gt_labels) out.gt_labels.emplace().reserve(indices.size());
  for (std::size_t k = 0; k < indices.size(); ++k) {
    const std::size_t i = indices[k];
    out.samples.row(static_cast<Eigen::Index>(k)) = samples.row(static_cast<Eigen::Index>(i));
    out.observed_labels.push_back(observed_labels[i]);
    out.ids.push_back(ids[i]);
    if (gt_labels) out.gt_labels->push_back((*gt_labels)[i]);
  }
  return out;
}

std::vector<std::int64_t> class_counts(std::span<const int> labels, int num_classes) {
  std::vector<std::int64_t> counts(static_cast<std::size_t>(num_classes), 0);
  for (int y : labels) {
    if (y < 0 || y >= num_classes) throw DatasetError("class_counts: label out of range");
    ++counts[static_cast<std::size_t>(y)];
  }
  return counts;
}

// ---------------------------------------------------------------------------
// Synthetic

Matrix synthetic_class_means(int num_classes, int dim) {
  if (num_classes <= 0 || dim <= 0) throw DatasetError("synthetic: classes and dim must be positive");
  Matrix means = Matrix::Constant(num_classes, dim, 0.2);
  if (num_classes <= dim) {
    for (int c = 0; c < num_classes; ++c) means(c, c) = 0.8;
    return means;
  }
  int levels = 2;
  auto capacity = [&](int g) {
    double cap = 1.0;
    for (int j = 0; j < dim && cap < num_classes; ++j) cap *= g;
    return cap;
  };
  while (capacity(levels) < num_classes) ++levels;
  for (int c = 0; c < num_classes; ++c) {
    int code = c;
    for (int j = 0; j < dim; ++j) {
      means(c, j) = 0.2 + 0.6 * static_cast<double>(code % levels) / (levels - 1);
      code /= levels;
    }
  }
  return means;
}

LabeledDataset gen_synthetic(const SyntheticSpec& spec) {
  if (spec.per_class < 1) throw DatasetError("synthetic: per_class must be >= 1");
  if (!(spec.cluster_spread > 0.0)) throw DatasetError("synthetic: cluster_spread must be > 0");
  const Matrix means = synthetic_class_means(spec.num_classes, spec.dim);
  SplitMix64 rng(spec.seed);

  LabeledDataset ds;
  ds.num_classes = spec.num_classes;
  const auto n = static_cast<Eigen::Index>(spec.num_classes) * spec.per_class;
  ds.samples.resize(n, spec.dim);
  Eigen::Index row = 0;
  for (int c = 0; c < spec.num_classes; ++c) {
    for (int k = 0; k < spec.per_class; ++k, ++row) {
      for (int j = 0; j < spec.dim; ++j) {
        const double v = means(c, j) + spec.cluster_spread * rng.normal();
        ds.samples(row, j) = std::clamp(v, 0.0, 1.0);
      }
      ds.observed_labels.push_back(c);
      ds.ids.push_back(row);
    }
  }
  ds.gt_labels = ds.observed_labels;
  return ds;
}

// ---------------------------------------------------------------------------
// IDX

namespace {

std::uint32_t read_be32(std::istream& in, const fs::path& path) {
  std::array<unsigned char, 4> b{};
  if (!in.read(reinterpret_cast<char*>(b.data()), 4)) {
    throw DatasetError("idx: truncated header in " + path.string());
  }
  return (std::uint32_t{b[0]} << 24) | (std::uint32_t{b[1]} << 16) | (std::uint32_t{b[2]} << 8) |
         std::uint32_t{b[3]};
}

std::ifstream open_binary(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DatasetError("cannot open " + path.string());
  return in;
}

}  // namespace

LabeledDataset load_idx(const fs::path& image_path, const fs::path& label_path, int num_classes) {
  auto img = open_binary(image_path);
  if (const auto magic = read_be32(img, image_path); magic != 0x00000803) {
    std::ostringstream os;
    os << "idx: bad image magic 0x" << std::hex << magic << " in " << image_path.string();
    throw DatasetError(os.str());
  }
  const std::uint32_t count = read_be32(img, image_path);
  const std::uint32_t rows = read_be32(img, image_path);
  const std::uint32_t cols = read_be32(img, image_path);

  auto lab = open_binary(label_path);
  if (const auto magic = read_be32(lab, label_path); magic != 0x00000801) {
    std::ostringstream os;
    os << "idx: bad label magic 0x" << std::hex << magic << " in " << label_path.string();
    throw DatasetError(os.str());
  }
  const std::uint32_t label_count = read_be32(lab, label_path);
  if (label_count != count) {
    throw DatasetError("idx: " + std::to_string(count) + " images but " +
                       std::to_string(label_count) + " labels");
  }

  const std::size_t pixels = std::size_t{rows} * cols;
  std::vector<unsigned char> buf(pixels * count);
  if (!img.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()))) {
    throw DatasetError("idx: truncated image data in " + image_path.string());
  }
  std::vector<unsigned char> labels(count);
  if (!lab.read(reinterpret_cast<char*>(labels.data()), static_cast<std::streamsize>(count))) {
    throw DatasetError("idx: truncated label data in " + label_path.string());
  }

  LabeledDataset ds;
  ds.samples.resize(count, static_cast<Eigen::Index>(pixels));
  for (std::size_t i = 0; i < count; ++i) {
    for (std::size_t j = 0; j < pixels; ++j) {
      ds.samples(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          static_cast<double>(buf[i * pixels + j]) / 255.0;
    }
    ds.observed_labels.push_back(labels[i]);
    ds.ids.push_back(static_cast<std::int64_t>(i));
  }
  const int max_label = count ? *std::max_element(labels.begin(), labels.end()) : 0;
  if (num_classes > 0 && max_label >= num_classes) {
    throw DatasetError("idx: label " + std::to_string(max_label) + " exceeds num_classes");
  }
  ds.num_classes = num_classes > 0 ? num_classes : max_label + 1;
  ds.gt_labels = ds.observed_labels;
  return ds;
}

// ---------------------------------------------------------------------------
// Directory format

namespace {

void append_double(std::string& out, double v) {
  std::array<char, 32> buf{};
  auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  out.append(buf.data(), ptr);
}

std::vector<std::string_view> split_csv(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  for (;;) {
    const auto pos = line.find(',', start);
    fields.push_back(line.substr(start, pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return fields;
}

template <typename T>
T parse_field(std::string_view s, const fs::path& file, std::size_t line) {
  T v{};
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw DatasetError("malformed value '" + std::string(s) + "' in " + file.string() + " line " +
                       std::to_string(line));
  }
  return v;
}

std::vector<std::string> read_lines(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw DatasetError("cannot open " + file.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) lines.push_back(std::move(line));
  }
  return lines;
}

}  // namespace

void save_dataset(const LabeledDataset& ds, const fs::path& dir) {
  ds.validate();
  fs::create_directories(dir);

  json meta = {
      {"format", "oat-dataset"},
      {"version", 1},
      {"num_classes", ds.num_classes},
      {"dim", ds.dim()},
      {"count", ds.size()},
      {"has_gt", ds.has_gt()},
      {"observed_counts", class_counts(ds.observed_labels, ds.num_classes)},
  };
  if (ds.gt_labels) meta["gt_counts"] = class_counts(*ds.gt_labels, ds.num_classes);
  {
    std::ofstream out(dir / "meta.json");
    if (!out) throw DatasetError("cannot write " + (dir / "meta.json").string());
    out << meta.dump(2) << '\n';
  }

  std::string text = "id";
  for (Eigen::Index j = 0; j < ds.dim(); ++j) text += ",f" + std::to_string(j);
  text += '\n';
  for (std::size_t i = 0; i < ds.size(); ++i) {
    text += std::to_string(ds.ids[i]);
    for (Eigen::Index j = 0; j < ds.dim(); ++j) {
      text += ',';
      append_double(text, ds.samples(static_cast<Eigen::Index>(i), j));
    }
    text += '\n';
  }
  {
    std::ofstream out(dir / "samples.csv", std::ios::binary);
    if (!out) throw DatasetError("cannot write " + (dir / "samples.csv").string());
    out << text;
  }

  text = ds.has_gt() ? "id,observed_label,gt_label\n" : "id,observed_label\n";
  for (std::size_t i = 0; i < ds.size(); ++i) {
    text += std::to_string(ds.ids[i]) + ',' + std::to_string(ds.observed_labels[i]);
    if (ds.gt_labels) text += ',' + std::to_string((*ds.gt_labels)[i]);
    text += '\n';
  }
  std::ofstream out(dir / "labels.csv", std::ios::binary);
  if (!out) throw DatasetError("cannot write " + (dir / "labels.csv").string());
  out << text;
  if (!out) throw DatasetError("write failed for " + (dir / "labels.csv").string());
}

LabeledDataset load_dataset(const fs::path& dir) {
  const fs::path meta_path = dir / "meta.json";
  std::ifstream meta_in(meta_path);
  if (!meta_in) throw DatasetError("cannot open " + meta_path.string());
  json meta;
  try {
    meta_in >> meta;
  } catch (const json::exception& e) {
    throw DatasetError("malformed " + meta_path.string() + ": " + e.what());
  }
  if (meta.value("format", "") != "oat-dataset" || !meta.contains("num_classes") ||
      !meta.contains("dim") || !meta.contains("count")) {
    throw DatasetError("malformed header in " + meta_path.string());
  }
  const int num_classes = meta["num_classes"].get<int>();
  const auto dim = meta["dim"].get<Eigen::Index>();
  const auto count = meta["count"].get<std::size_t>();
  const bool has_gt = meta.value("has_gt", false);

  LabeledDataset ds;
  ds.num_classes = num_classes;
  ds.samples.resize(static_cast<Eigen::Index>(count), dim);

  const fs::path samples_path = dir / "samples.csv";
  const auto sample_lines = read_lines(samples_path);
  if (sample_lines.size() != count + 1) {
    throw DatasetError(samples_path.string() + ": expected " + std::to_string(count) + " rows");
  }
  for (std::size_t i = 0; i < count; ++i) {
    const auto fields = split_csv(sample_lines[i + 1]);
    if (fields.size() != static_cast<std::size_t>(dim) + 1) {
      throw DatasetError(samples_path.string() + ": wrong column count on line " +
                         std::to_string(i + 2));
    }
    ds.ids.push_back(parse_field<std::int64_t>(fields[0], samples_path, i + 2));
    for (Eigen::Index j = 0; j < dim; ++j) {
      ds.samples(static_cast<Eigen::Index>(i), j) =
          parse_field<double>(fields[static_cast<std::size_t>(j) + 1], samples_path, i + 2);
    }
  }

  const fs::path labels_path = dir / "labels.csv";
  const auto label_lines = read_lines(labels_path);
  if (label_lines.size() != count + 1) {
    throw DatasetError(labels_path.string() + ": expected " + std::to_string(count) + " rows");
  }
  const std::size_t expected_cols = has_gt ? 3 : 2;
  if (has_gt) ds.gt_labels.emplace();
  for (std::size_t i = 0; i < count; ++i) {
    const auto fields = split_csv(label_lines[i + 1]);
    if (fields.size() != expected_cols) {
      throw DatasetError(labels_path.string() + ": wrong column count on line " +
                         std::to_string(i + 2));
    }
    if (parse_field<std::int64_t>(fields[0], labels_path, i + 2) != ds.ids[i]) {
      throw DatasetError(labels_path.string() + ": id mismatch on line " + std::to_string(i + 2));
    }
    ds.observed_labels.push_back(parse_field<int>(fields[1], labels_path, i + 2));
    if (has_gt) ds.gt_labels->push_back(parse_field<int>(fields[2], labels_path, i + 2));
  }
  ds.validate();
  return ds;
}

}  // namespace oat
