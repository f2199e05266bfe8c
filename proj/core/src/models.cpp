#include "oat/models.hpp"

#include "oat/rng.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace oat {

void ArchSpec::validate() const {
  if (input_dim <= 0 || feature_dim <= 0 || num_classes <= 0) {
    throw std::invalid_argument("ArchSpec: dimensions must be positive");
  }
  for (int w : encoder_widths) {
    if (w <= 0) throw std::invalid_argument("ArchSpec: encoder widths must be positive");
  }
  if (projector_hidden <= 0 || projector_out <= 0 || predictor_hidden <= 0 || predictor_out <= 0) {
    throw std::invalid_argument("ArchSpec: projector/predictor sizes must be positive");
  }
  if (projector_out != predictor_out) {
    throw std::invalid_argument("ArchSpec: projector_out must equal predictor_out");
  }
}

namespace {

Linear make_linear(int in, int out, SplitMix64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  Matrix w(in, out);
  for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = rng.uniform(-bound, bound);
  Matrix b(1, out);
  for (Eigen::Index i = 0; i < b.size(); ++i) b.data()[i] = rng.uniform(-bound, bound);
  return {Value::leaf(std::move(w), true), Value::leaf(std::move(b), true)};
}

Mlp make_mlp(const std::vector<int>& sizes, SplitMix64& rng) {
  Mlp mlp;
  for (std::size_t i = 0; i + 1 < sizes.size(); ++i) {
    mlp.layers.push_back(make_linear(sizes[i], sizes[i + 1], rng));
  }
  return mlp;
}

std::vector<int> encoder_sizes(const ArchSpec& a) {
  std::vector<int> sizes{a.input_dim};
  sizes.insert(sizes.end(), a.encoder_widths.begin(), a.encoder_widths.end());
  sizes.push_back(a.feature_dim);
  return sizes;
}

std::size_t mlp_count(const std::vector<int>& sizes) {
  std::size_t n = 0;
  for (std::size_t i = 0; i + 1 < sizes.size(); ++i) {
    n += static_cast<std::size_t>(sizes[i]) * sizes[i + 1] + sizes[i + 1];
  }
  return n;
}

void push(std::vector<Value>& out, const Mlp& mlp) {
  for (const Linear& l : mlp.layers) {
    out.push_back(l.weight);
    out.push_back(l.bias);
  }
}

Linear clone_linear(const Linear& l) {
  return {Value::leaf(l.weight.data(), true), Value::leaf(l.bias.data(), true)};
}

Mlp clone_mlp(const Mlp& m) {
  Mlp out;
  for (const Linear& l : m.layers) out.layers.push_back(clone_linear(l));
  return out;
}

Value linear(const Linear& l, const Value& x, Grad mode) {
  if (mode == Grad::frozen) {
    return ad::add(ad::matmul(x, ad::detach(l.weight)), ad::detach(l.bias));
  }
  return ad::add(ad::matmul(x, l.weight), l.bias);
}

}  // namespace

std::vector<Value> ModelParams::encoder_head_parameters() const {
  std::vector<Value> out;
  push(out, encoder);
  out.push_back(head.weight);
  out.push_back(head.bias);
  return out;
}

std::vector<Value> ModelParams::parameters() const {
  std::vector<Value> out = encoder_head_parameters();
  if (projector) push(out, *projector);
  if (predictor) push(out, *predictor);
  return out;
}

ModelParams ModelParams::clone() const {
  ModelParams out;
  out.arch = arch;
  out.role = role;
  out.encoder = clone_mlp(encoder);
  out.head = clone_linear(head);
  if (projector) out.projector = clone_mlp(*projector);
  if (predictor) out.predictor = clone_mlp(*predictor);
  return out;
}

std::size_t parameter_count(const ArchSpec& a, ModelRole role) {
  std::size_t n = mlp_count(encoder_sizes(a));
  n += static_cast<std::size_t>(a.feature_dim) * a.num_classes + a.num_classes;
  if (role == ModelRole::oracle) {
    n += mlp_count({a.feature_dim, a.projector_hidden, a.projector_out});
    n += mlp_count({a.projector_out, a.predictor_hidden, a.predictor_out});
  }
  return n;
}

std::size_t parameter_count(const ModelParams& p) {
  std::size_t n = 0;
  for (const Value& v : p.parameters()) n += static_cast<std::size_t>(v.data().size());
  return n;
}

ModelParams init_model(const ArchSpec& arch, ModelRole role, std::uint64_t seed) {
  arch.validate();
  SplitMix64 rng(seed);
  ModelParams p;
  p.arch = arch;
  p.role = role;
  p.encoder = make_mlp(encoder_sizes(arch), rng);
  p.head = make_linear(arch.feature_dim, arch.num_classes, rng);
  if (role == ModelRole::oracle) {
    p.projector = make_mlp({arch.feature_dim, arch.projector_hidden, arch.projector_out}, rng);
    p.predictor = make_mlp({arch.projector_out, arch.predictor_hidden, arch.predictor_out}, rng);
  }
  return p;
}

Value apply_mlp(const Mlp& mlp, const Value& x, Grad mode) {
  Value h = x;
  for (std::size_t i = 0; i < mlp.layers.size(); ++i) {
    h = linear(mlp.layers[i], h, mode);
    if (i + 1 < mlp.layers.size()) h = ad::relu(h);
  }
  return h;
}

Value forward_features(const ModelParams& p, const Value& x, Grad mode) {
  if (x.cols() != p.arch.input_dim) {
    throw ad::ShapeError("forward_features: input has " + std::to_string(x.cols()) +
                         " columns, model expects " + std::to_string(p.arch.input_dim));
  }
  return apply_mlp(p.encoder, x, mode);
}

Value head_logits(const ModelParams& p, const Value& features, Grad mode) {
  return linear(p.head, features, mode);
}

Value forward_logits(const ModelParams& p, const Value& x, Grad mode) {
  return head_logits(p, forward_features(p, x, mode), mode);
}

Value project_predict(const ModelParams& p, const Value& features, bool use_predictor, Grad mode) {
  if (!p.projector) throw std::invalid_argument("project_predict: model has no projector");
  Value z = apply_mlp(*p.projector, features, mode);
  if (!use_predictor) return z;
  if (!p.predictor) throw std::invalid_argument("project_predict: model has no predictor");
  return apply_mlp(*p.predictor, z, mode);
}

Matrix predict_logits(const ModelParams& p, const Matrix& x) {
  return forward_logits(p, Value::leaf(x), Grad::frozen).data();
}

Matrix predict_features(const ModelParams& p, const Matrix& x) {
  return forward_features(p, Value::leaf(x), Grad::frozen).data();
}

}  // namespace oat
