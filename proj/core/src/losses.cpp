#include "oat/losses.hpp"

namespace oat {

Value cross_entropy(const Value& logits, std::span<const int> labels) {
  return ad::scale(ad::mean(ad::pick(ad::log_softmax(logits), labels)), -1.0);
}

Value soft_cross_entropy(const Value& logits, const ad::Matrix& target) {
  if (target.rows() != logits.rows() || target.cols() != logits.cols()) {
    throw ad::ShapeError("soft_cross_entropy: target shape differs from logits");
  }
  const Value weighted = ad::mul(ad::log_softmax(logits), Value::leaf(target));
  return ad::scale(ad::sum(weighted), -1.0 / static_cast<double>(logits.rows()));
}

Value cosine_similarity(const Value& a, const Value& b) {
  const Value na = ad::l2_norm(a);
  const Value nb = ad::l2_norm(b);
  if ((na.data().array() == 0.0).any() || (nb.data().array() == 0.0).any()) {
    throw DegenerateEmbedding("cosine similarity: zero-norm embedding");
  }
  return ad::div(ad::dot(a, b), ad::mul(na, nb));
}

Value negative_cosine_loss(const Value& a, const Value& b) {
  return ad::scale(ad::mean(cosine_similarity(a, b)), -1.0);
}

}  // namespace oat
