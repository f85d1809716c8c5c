#include <benchmark/benchmark.h>

#include "layersim/metrics.hpp"
#include "layersim/model.hpp"
#include "layersim/numerics.hpp"
#include "layersim/rng.hpp"
#include "layersim/theory.hpp"
#include "layersim/training.hpp"

using namespace layersim;

namespace {

Tensor random_tensor(Shape shape, Rng& rng) {
  Tensor t(std::move(shape));
  for (auto& v : t.data()) v = rng.normal();
  return t;
}

void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(1);
  const auto a = random_tensor({n, n}, rng), b = random_tensor({n, n}, rng);
  for (auto _ : state) benchmark::DoNotOptimize(matmul(a, b));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(2 * n * n * n));
}
BENCHMARK(BM_Matmul)->Arg(32)->Arg(64)->Arg(128)->Arg(256);

void BM_TrainStep(benchmark::State& state) {
  model::ModelConfig c;
  c.layers = 8;
  c.dim = 64;
  c.heads = 4;
  c.seq_len = 4;
  c.input_dim = 8;
  c.classes = 10;
  const bool aligned = state.range(0) != 0;
  Rng rng(2);
  const auto model = model::init_model(c, rng);
  const auto batch = random_tensor({32, c.seq_len, c.input_dim}, rng);
  std::vector<std::size_t> labels(32);
  for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = i % c.classes;
  const auto lambda = train::layer_weights(c.layers, train::WeightScheme::kLinear);
  for (auto _ : state) {
    const auto trace = model::forward_with_trace(model, batch, labels);
    const auto loss = aligned ? train::aligned_objective(trace, lambda) : train::final_layer_ce(trace);
    benchmark::DoNotOptimize(model::backward(model, trace, loss.grads));
  }
  state.SetLabel(aligned ? "aligned" : "standard");
}
BENCHMARK(BM_TrainStep)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_CkaLinear(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(3);
  const auto a = random_tensor({64, n}, rng), b = random_tensor({64, n}, rng);
  for (auto _ : state) benchmark::DoNotOptimize(metrics::cka_linear(a, b));
}
BENCHMARK(BM_CkaLinear)->Arg(200)->Arg(1000)->Unit(benchmark::kMicrosecond);

void BM_CosGeodesicSweep(benchmark::State& state) {
  Rng rng(4);
  const auto grid = theory::uniform_grid(100);
  for (auto _ : state) {
    for (int t = 0; t < 100; ++t) {
      benchmark::DoNotOptimize(theory::verify_cos_monotone(
          theory::make_path(theory::random_unit(64, rng), theory::random_unit(64, rng), grid)));
    }
  }
}
BENCHMARK(BM_CosGeodesicSweep)->Unit(benchmark::kMillisecond);

void BM_SoftmaxPathSweep(benchmark::State& state) {
  Rng rng(5);
  const auto grid = theory::uniform_grid(100);
  const auto etf = theory::make_etf(10, 64, rng);
  for (auto _ : state) {
    for (int t = 0; t < 100; ++t) {
      const auto k = rng.uniform_index(10);
      benchmark::DoNotOptimize(
          theory::verify_softmax_monotone(etf, k, theory::random_softmax_path_start(etf, k, 2.0, rng), 2.0, grid));
    }
  }
}
BENCHMARK(BM_SoftmaxPathSweep)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
