#include <benchmark/benchmark.h>

#include <random>

#include "tsxplain/fusion.hpp"
#include "tsxplain/model.hpp"
#include "tsxplain/saliency.hpp"
#include "tsxplain/tensor.hpp"

using namespace tsx;

static void BM_Conv1d(benchmark::State& state) {
  const int T = static_cast<int>(state.range(0));
  std::mt19937_64 rng(1);
  Tensor x = Tensor::randn({1, 8, T}, rng);
  Tensor w = Tensor::randn({16, 8, 3}, rng, 0.2);
  Tensor b = Tensor::randn({16}, rng, 0.2);
  for (auto _ : state) {
    Tensor y = conv1d(x, w, b, 1, 1);
    benchmark::DoNotOptimize(y.data());
  }
}
BENCHMARK(BM_Conv1d)->Arg(100)->Arg(400);

static void BM_Matmul(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  std::mt19937_64 rng(2);
  Tensor a = Tensor::randn({n, n}, rng);
  Tensor b = Tensor::randn({n, n}, rng);
  for (auto _ : state) {
    Tensor y = matmul(a, b);
    benchmark::DoNotOptimize(y.data());
  }
}
BENCHMARK(BM_Matmul)->Arg(64)->Arg(128);

static void BM_TransformerForward(benchmark::State& state) {
  const int T = static_cast<int>(state.range(0)), C = 5;
  std::mt19937_64 rng(3);
  auto model = make_model("transformer", Task::classification, 2, C, T, rng);
  std::vector<double> s(static_cast<size_t>(T) * C);
  std::normal_distribution<double> d(0.0, 1.0);
  for (auto& v : s) v = d(rng);
  Tensor x = to_model_input({s}, T, C);
  for (auto _ : state) {
    Tensor y = model->forward(x, false, rng);
    benchmark::DoNotOptimize(y.data());
  }
}
BENCHMARK(BM_TransformerForward)->Arg(50)->Arg(100);

static void BM_ExplainSample(benchmark::State& state) {
  const int T = 100, C = 5;
  std::mt19937_64 rng(4);
  auto model = make_model("hybrid", Task::classification, 2, C, T, rng);
  std::vector<double> s(static_cast<size_t>(T) * C);
  std::normal_distribution<double> d(0.0, 1.0);
  for (auto& v : s) v = d(rng);
  FusionConfig cfg;
  for (auto _ : state) {
    std::mt19937_64 fwd(0);
    ForwardCache cache;
    Tensor y = model->forward(to_model_input({s}, T, C, true), false, fwd, &cache);
    int target = 0;
    for (size_t k = 1; k < y.data().size(); ++k)
      if (y.data()[k] > y.data()[static_cast<size_t>(target)])
        target = static_cast<int>(k);
    Heatmap hr = minmax_normalize(resnet_heatmap(cache, target));
    Heatmap ht = minmax_normalize(transformer_heatmap(cache, target));
    Heatmap fused = minmax_normalize(fuse(hr, ht, cfg));
    benchmark::DoNotOptimize(fused.values);
  }
}
BENCHMARK(BM_ExplainSample);

BENCHMARK_MAIN();
