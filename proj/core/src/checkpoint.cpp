#include "oat/models.hpp"

#include <nlohmann/json.hpp>

#include <bit>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace oat {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kCheckpointVersion = 1;

struct NamedBuffer {
  std::string name;
  Value value;
};

std::vector<NamedBuffer> named_buffers(const ModelParams& p) {
  std::vector<NamedBuffer> out;
  auto add_mlp = [&](const std::string& prefix, const Mlp& mlp) {
    for (std::size_t i = 0; i < mlp.layers.size(); ++i) {
      out.push_back({prefix + "." + std::to_string(i) + ".weight", mlp.layers[i].weight});
      out.push_back({prefix + "." + std::to_string(i) + ".bias", mlp.layers[i].bias});
    }
  };
  add_mlp("encoder", p.encoder);
  out.push_back({"head.weight", p.head.weight});
  out.push_back({"head.bias", p.head.bias});
  if (p.projector) add_mlp("projector", *p.projector);
  if (p.predictor) add_mlp("predictor", *p.predictor);
  return out;
}

json arch_to_json(const ArchSpec& a) {
  return {{"input_dim", a.input_dim},           {"encoder_widths", a.encoder_widths},
          {"feature_dim", a.feature_dim},       {"num_classes", a.num_classes},
          {"projector_hidden", a.projector_hidden}, {"projector_out", a.projector_out},
          {"predictor_hidden", a.predictor_hidden}, {"predictor_out", a.predictor_out}};
}

ArchSpec arch_from_json(const json& j) {
  ArchSpec a;
  a.input_dim = j.at("input_dim").get<int>();
  a.encoder_widths = j.at("encoder_widths").get<std::vector<int>>();
  a.feature_dim = j.at("feature_dim").get<int>();
  a.num_classes = j.at("num_classes").get<int>();
  a.projector_hidden = j.at("projector_hidden").get<int>();
  a.projector_out = j.at("projector_out").get<int>();
  a.predictor_hidden = j.at("predictor_hidden").get<int>();
  a.predictor_out = j.at("predictor_out").get<int>();
  return a;
}

std::uint64_t to_le(double v) {
  auto bits = std::bit_cast<std::uint64_t>(v);
  if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap64(bits);
  return bits;
}

double from_le(std::uint64_t bits) {
  if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap64(bits);
  return std::bit_cast<double>(bits);
}

}  // namespace

void save_checkpoint(const ModelParams& p, const fs::path& dir) {
  fs::create_directories(dir);
  json manifest = {{"format", "oat-checkpoint"},
                   {"version", kCheckpointVersion},
                   {"role", p.role == ModelRole::oracle ? "oracle" : "at_model"},
                   {"arch", arch_to_json(p.arch)},
                   {"data_file", "params.bin"},
                   {"buffers", json::array()}};

  std::ofstream bin(dir / "params.bin", std::ios::binary);
  if (!bin) throw std::runtime_error("cannot write " + (dir / "params.bin").string());
  std::size_t offset = 0;
  for (const auto& [name, value] : named_buffers(p)) {
    const Matrix& m = value.data();
    const std::size_t bytes = static_cast<std::size_t>(m.size()) * sizeof(double);
    manifest["buffers"].push_back({{"name", name},
                                   {"shape", {m.rows(), m.cols()}},
                                   {"offset", offset},
                                   {"length", bytes}});
    for (Eigen::Index i = 0; i < m.size(); ++i) {
      const std::uint64_t le = to_le(m.data()[i]);
      bin.write(reinterpret_cast<const char*>(&le), sizeof le);
    }
    offset += bytes;
  }
  if (!bin) throw std::runtime_error("write failed for " + (dir / "params.bin").string());

  std::ofstream out(dir / "checkpoint.json");
  if (!out) throw std::runtime_error("cannot write " + (dir / "checkpoint.json").string());
  out << manifest.dump(2) << '\n';
}

ModelParams load_checkpoint(const fs::path& dir) {
  std::ifstream in(dir / "checkpoint.json");
  if (!in) throw std::runtime_error("cannot open " + (dir / "checkpoint.json").string());
  json manifest;
  try {
    in >> manifest;
  } catch (const json::exception& e) {
    throw std::runtime_error("malformed checkpoint manifest: " + std::string(e.what()));
  }
  if (manifest.value("format", "") != "oat-checkpoint" ||
      manifest.value("version", 0) != kCheckpointVersion) {
    throw std::runtime_error("unsupported checkpoint format in " + dir.string());
  }
  const ModelRole role = manifest.at("role") == "oracle" ? ModelRole::oracle : ModelRole::at_model;
  ModelParams p = init_model(arch_from_json(manifest.at("arch")), role, 0);

  const fs::path bin_path = dir / manifest.value("data_file", "params.bin");
  std::ifstream bin(bin_path, std::ios::binary);
  if (!bin) throw std::runtime_error("cannot open " + bin_path.string());
  std::vector<char> blob((std::istreambuf_iterator<char>(bin)), std::istreambuf_iterator<char>());

  auto buffers = named_buffers(p);
  const auto& entries = manifest.at("buffers");
  if (entries.size() != buffers.size()) {
    throw std::runtime_error("checkpoint buffer count does not match its architecture");
  }
  for (std::size_t k = 0; k < buffers.size(); ++k) {
    const auto& e = entries[k];
    Value& v = buffers[k].value;
    if (e.at("name") != buffers[k].name) {
      throw std::runtime_error("checkpoint buffer " + std::to_string(k) + " is '" +
                               e.at("name").get<std::string>() + "', expected '" +
                               buffers[k].name + "'");
    }
    const auto shape = e.at("shape").get<std::vector<Eigen::Index>>();
    if (shape.size() != 2 || shape[0] != v.rows() || shape[1] != v.cols()) {
      throw std::runtime_error("checkpoint buffer '" + buffers[k].name + "' has the wrong shape");
    }
    const auto offset = e.at("offset").get<std::size_t>();
    const auto length = e.at("length").get<std::size_t>();
    if (length != static_cast<std::size_t>(v.data().size()) * sizeof(double) ||
        offset + length > blob.size()) {
      throw std::runtime_error("checkpoint buffer '" + buffers[k].name + "' is truncated");
    }
    Matrix& m = v.mutable_data();
    for (Eigen::Index i = 0; i < m.size(); ++i) {
      std::uint64_t le = 0;
      std::memcpy(&le, blob.data() + offset + static_cast<std::size_t>(i) * sizeof le, sizeof le);
      m.data()[i] = from_le(le);
    }
  }
  return p;
}

}  // namespace oat
