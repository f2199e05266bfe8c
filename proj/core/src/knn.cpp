#include "oat/knn.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>

namespace oat {

KnnIndex::KnnIndex(ad::Matrix points, int k) : points_(std::move(points)), k_(k) {
  if (k_ < 1) throw std::invalid_argument("KnnIndex: k must be positive");
}

double squared_distance(std::span<const double> a, std::span<const double> b) {
  double acc = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) {
    const double d = a[j] - b[j];
    acc += d * d;
  }
  return acc;
}

std::vector<std::size_t> KnnIndex::query(std::span<const double> q,
                                         std::optional<std::size_t> self, int k) const {
  const auto n = size();
  const auto d = static_cast<std::size_t>(points_.cols());
  if (q.size() != d) throw std::invalid_argument("KnnIndex::query: dimension mismatch");
  const std::size_t available = self ? n - 1 : n;
  if (k < 1 || static_cast<std::size_t>(k) > available) {
    throw std::invalid_argument("KnnIndex::query: k=" + std::to_string(k) + " exceeds " +
                                std::to_string(available) + " candidates");
  }
  std::vector<std::pair<double, std::size_t>> cand;
  cand.reserve(available);
  for (std::size_t j = 0; j < n; ++j) {
    if (self && *self == j) continue;
    cand.emplace_back(squared_distance(q, {points_.row(static_cast<Eigen::Index>(j)).data(), d}), j);
  }
  const auto kth = cand.begin() + (k - 1);
  std::nth_element(cand.begin(), kth, cand.end());
  std::sort(cand.begin(), kth + 1);
  std::vector<std::size_t> out;
  out.reserve(static_cast<std::size_t>(k));
  for (auto it = cand.begin(); it != kth + 1; ++it) out.push_back(it->second);
  return out;
}

std::vector<std::size_t> KnnIndex::neighbors_of(std::size_t member, int k) const {
  const auto d = static_cast<std::size_t>(points_.cols());
  return query({points_.row(static_cast<Eigen::Index>(member)).data(), d}, member, k);
}

int majority_label(std::span<const std::size_t> neighbors, std::span<const int> labels,
                   int num_classes) {
  std::vector<int> votes(static_cast<std::size_t>(num_classes), 0);
  for (std::size_t j : neighbors) ++votes[static_cast<std::size_t>(labels[j])];
  return static_cast<int>(std::max_element(votes.begin(), votes.end()) - votes.begin());
}

int effective_k(std::size_t n, int k) {
  return std::max(1, std::min(k, static_cast<int>(n / 10)));
}

SplitSets knn_split(const KnnIndex& index, std::span<const int> labels, int k, int num_classes,
                    int threads) {
  const std::size_t n = index.size();
  if (labels.size() != n) throw std::invalid_argument("knn_split: one label per indexed point");
  if (k < 1 || static_cast<std::size_t>(k) >= n) {
    throw std::invalid_argument("knn_split: k=" + std::to_string(k) + " must be < n=" +
                                std::to_string(n));
  }
  std::vector<int> majority(n);
  auto work = [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      majority[i] = majority_label(index.neighbors_of(i, k), labels, num_classes);
    }
  };
  if (threads > 1 && n > 1) {
    const auto workers = std::min<std::size_t>(static_cast<std::size_t>(threads), n);
    std::vector<std::jthread> pool;
    const std::size_t chunk = (n + workers - 1) / workers;
    for (std::size_t w = 0; w < workers; ++w) {
      const std::size_t b = w * chunk;
      const std::size_t e = std::min(n, b + chunk);
      if (b < e) pool.emplace_back(work, b, e);
    }
  } else {
    work(0, n);
  }

  SplitSets split;
  split.knn_labels = std::move(majority);
  for (std::size_t i = 0; i < n; ++i) {
    (split.knn_labels[i] == labels[i] ? split.clean_idx : split.noisy_idx).push_back(i);
  }
  return split;
}

}  // namespace oat
