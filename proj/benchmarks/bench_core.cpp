#include "oat/adversary.hpp"
#include "oat/knn.hpp"
#include "oat/models.hpp"
#include "oat/rng.hpp"

#include <benchmark/benchmark.h>

namespace {

oat::ad::Matrix uniform(Eigen::Index r, Eigen::Index c, std::uint64_t seed) {
  oat::SplitMix64 rng(seed);
  oat::ad::Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform();
  return m;
}

oat::ArchSpec desk_arch() {
  oat::ArchSpec a;
  a.input_dim = 16;
  a.num_classes = 10;
  return a;
}

void BM_MatmulBackward(benchmark::State& state) {
  const auto n = state.range(0);
  const oat::ad::Value w = oat::ad::Value::leaf(uniform(n, n, 1), true);
  const oat::ad::Value x = oat::ad::Value::leaf(uniform(128, n, 2));
  for (auto _ : state) {
    oat::ad::backward(oat::ad::mean(oat::ad::relu(oat::ad::matmul(x, w))));
    benchmark::DoNotOptimize(w.grad().data());
  }
}
BENCHMARK(BM_MatmulBackward)->Arg(64)->Arg(256);

void BM_OracleForwardBackward(benchmark::State& state) {
  const oat::ModelParams m = oat::init_model(desk_arch(), oat::ModelRole::oracle, 3);
  const oat::ad::Matrix x = uniform(128, 16, 4);
  for (auto _ : state) {
    const auto z = oat::project_predict(m, oat::forward_features(m, oat::ad::Value::leaf(x)), true);
    oat::ad::backward(oat::ad::mean(z));
  }
}
BENCHMARK(BM_OracleForwardBackward);

void BM_KnnSplit(benchmark::State& state) {
  const auto n = state.range(0);
  const oat::ad::Matrix pts = uniform(n, 64, 5);
  std::vector<int> labels(static_cast<std::size_t>(n));
  for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = static_cast<int>(i % 10);
  const int k = oat::effective_k(static_cast<std::size_t>(n), 200);
  const oat::KnnIndex index(pts, k);
  for (auto _ : state) benchmark::DoNotOptimize(oat::knn_split(index, labels, k, 10));
}
BENCHMARK(BM_KnnSplit)->Arg(500)->Arg(2000)->Unit(benchmark::kMillisecond);

void BM_Pgd10(benchmark::State& state) {
  const oat::ModelParams m = oat::init_model(desk_arch(), oat::ModelRole::at_model, 6);
  const oat::ad::Matrix x = uniform(128, 16, 7);
  std::vector<int> y(128);
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = static_cast<int>(i % 10);
  oat::SplitMix64 rng(8);
  const oat::AttackSpec spec;
  for (auto _ : state) benchmark::DoNotOptimize(oat::pgd_attack(m, x, y, spec, rng));
}
BENCHMARK(BM_Pgd10)->Unit(benchmark::kMicrosecond);

}  // namespace

BENCHMARK_MAIN();
