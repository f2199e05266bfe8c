#pragma once

#include "oat/autodiff.hpp"

#include <span>
#include <stdexcept>

namespace oat {

using ad::Value;

/// Raised when a cosine loss sees a zero-norm embedding (representation collapse).
class DegenerateEmbedding : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Mean hard-label cross-entropy of row logits against `labels`.
Value cross_entropy(const Value& logits, std::span<const int> labels);

/// -mean_i sum_c target(i,c) * log_softmax(logits)(i,c). `target` rows are
/// probability vectors and are treated as constants.
Value soft_cross_entropy(const Value& logits, const ad::Matrix& target);

/// Row-wise cosine similarity (m x 1).
Value cosine_similarity(const Value& a, const Value& b);

/// -mean of row-wise cosine similarity; lies in [-1, 1].
Value negative_cosine_loss(const Value& a, const Value& b);

}  // namespace oat
