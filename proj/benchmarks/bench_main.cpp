#include <benchmark/benchmark.h>

#include <random>

#include "unisae/objective.hpp"
#include "unisae/sae.hpp"
#include "unisae/synthetic.hpp"
#include "unisae/trainer.hpp"
#include "unisae/transport.hpp"

namespace {

using namespace unisae;

Matrix uniform_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed, double lo, double hi) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  Matrix m(rows, cols);
  for (double& x : m.flat()) x = u(rng);
  return m;
}

void BM_Sinkhorn64x48(benchmark::State& state) {
  const Matrix cost = uniform_matrix(64, 48, 1, 0.0, 2.0);
  const Vector r(64, 1.0 / 64), c(48, 1.0 / 48);
  SinkhornOptions opt;
  opt.epsilon = static_cast<double>(state.range(0)) / 100.0;
  for (auto _ : state) benchmark::DoNotOptimize(sinkhorn(cost, r, c, opt).plan.data());
}
BENCHMARK(BM_Sinkhorn64x48)->Arg(10)->Arg(3)->Unit(benchmark::kMicrosecond);

void BM_EncodeRows(benchmark::State& state) {
  const std::size_t d = static_cast<std::size_t>(state.range(0));
  const SaeConfig cfg{d, 4 * d, 2 * d, 8, 4};
  const Matrix tokens = uniform_matrix(196, d, 2, -1.0, 1.0);
  const SaeParams p = init_params(cfg, tokens, 3);
  for (auto _ : state) benchmark::DoNotOptimize(encode_rows(tokens, p, cfg).shared.data());
  state.SetItemsProcessed(state.iterations() * 196);
}
BENCHMARK(BM_EncodeRows)->Arg(32)->Arg(128)->Unit(benchmark::kMicrosecond);

void BM_TrainStep(benchmark::State& state) {
  SyntheticConfig sc;
  sc.n_samples = 64;
  const auto data = generate_synthetic(sc).first;
  TrainConfig tc;
  tc.model.vision = {sc.d, 16, 8, 1, 1};
  tc.model.text = tc.model.vision;
  tc.batch_size = 32;
  tc.lr = 3e-3;
  Checkpoint ck = init_checkpoint(tc, data);
  for (auto _ : state) train_steps(ck, data, 1, static_cast<int>(state.range(0)));
}
BENCHMARK(BM_TrainStep)->Arg(1)->Arg(2)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
