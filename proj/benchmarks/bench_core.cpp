#include <benchmark/benchmark.h>

#include "abip/bilinear.hpp"
#include "abip/network.hpp"
#include "abip/rng.hpp"
#include "abip/train.hpp"

using namespace abip;

namespace {

std::vector<double> random_vec(Rng& rng, int n) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.uniform(-1.0, 1.0);
  return v;
}

void BM_ProductCircular10(benchmark::State& state) {
  auto b = builtin_product(ProductKind::circular, 10);
  Rng rng(1);
  auto p = random_vec(rng, 10), q = random_vec(rng, 10);
  for (auto _ : state) benchmark::DoNotOptimize(product(p, q, b));
}
BENCHMARK(BM_ProductCircular10);

void BM_ProductQuaternion(benchmark::State& state) {
  auto b = builtin_product(ProductKind::quaternion);
  Rng rng(2);
  auto p = random_vec(rng, 4), q = random_vec(rng, 4);
  for (auto _ : state) benchmark::DoNotOptimize(product(p, q, b));
}
BENCHMARK(BM_ProductQuaternion);

void BM_MatrixRepCircular10(benchmark::State& state) {
  auto b = builtin_product(ProductKind::circular, 10);
  Rng rng(3);
  auto p = random_vec(rng, 10);
  for (auto _ : state) benchmark::DoNotOptimize(matrix_rep(p, b));
}
BENCHMARK(BM_MatrixRepCircular10);

void BM_ForwardSingle(benchmark::State& state) {
  auto b = builtin_product(ProductKind::circular, 10);
  Network net = init_network({64, 64, 64, 64}, b, Activation::sigmoid(), Activation::sigmoid(), 4);
  Rng rng(5);
  Matrix input(64, 10);
  for (double& v : input.flat()) v = rng.uniform();
  for (auto _ : state) benchmark::DoNotOptimize(forward(net, input));
}
BENCHMARK(BM_ForwardSingle);

void BM_PredictBatch128(benchmark::State& state) {
  auto b = builtin_product(ProductKind::circular, 10);
  Network net = init_network({64, 64, 64, 64}, b, Activation::sigmoid(), Activation::sigmoid(), 6);
  Rng rng(7);
  std::vector<Matrix> inputs(128, Matrix(64, 10));
  for (Matrix& m : inputs)
    for (double& v : m.flat()) v = rng.uniform();
  for (auto _ : state) benchmark::DoNotOptimize(predict_batch(net, inputs));
  state.SetItemsProcessed(state.iterations() * 128);
}
BENCHMARK(BM_PredictBatch128);

void BM_BackwardBatch128(benchmark::State& state) {
  auto b = builtin_product(ProductKind::circular, 10);
  Network net = init_network({64, 64, 64, 64}, b, Activation::sigmoid(), Activation::sigmoid(), 8);
  Rng rng(9);
  Dataset data;
  for (int i = 0; i < 128; ++i) {
    Sample s{Matrix(64, 10), Matrix(64, 10)};
    for (double& v : s.input.flat()) v = rng.uniform();
    for (double& v : s.target.flat()) v = rng.uniform();
    data.push_back(std::move(s));
  }
  std::vector<std::size_t> idx(128);
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  for (auto _ : state) benchmark::DoNotOptimize(backward_batch(net, data, idx));
  state.SetItemsProcessed(state.iterations() * 128);
}
BENCHMARK(BM_BackwardBatch128);

}  // namespace

BENCHMARK_MAIN();
