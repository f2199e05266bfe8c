#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

namespace oat {

/// SplitMix64. Every random draw in the library goes through this generator so
/// that seeded runs are bit-reproducible across compilers and platforms
/// (std::*_distribution output is implementation-defined).
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed = 0) : state_(seed) {}

  std::uint64_t next();

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, bound). bound must be > 0.
  std::uint64_t below(std::uint64_t bound);

  /// Standard normal via Box-Muller (no cached second draw).
  double normal();

  bool bernoulli(double p) { return uniform() < p; }

  template <typename T>
  void shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(below(i));
      std::swap(items[i - 1], items[j]);
    }
  }

  /// `count` distinct indices from [0, n), in draw order (partial Fisher-Yates).
  std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t count);

  std::uint64_t state() const { return state_; }

 private:
  std::uint64_t state_;
};

/// Derive an independent stream seed from a base seed and a stream tag.
std::uint64_t derive_seed(std::uint64_t base, std::string_view tag);

}  // namespace oat
