#include <benchmark/benchmark.h>

#include "freqmrn/model.hpp"
#include "freqmrn/ops.hpp"
#include "freqmrn/trainer.hpp"
#include "freqmrn/transforms.hpp"

namespace {

using namespace freqmrn;

Tensor random_tensor(Shape shape, Rng& rng) {
  std::vector<double> v(shape_size(shape));
  for (auto& x : v) x = rng.uniform(-1.0, 1.0);
  return Tensor(std::move(shape), std::move(v));
}

void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(1);
  const Tensor a = random_tensor({n, n}, rng);
  const Tensor b = random_tensor({n, n}, rng);
  for (auto _ : state) benchmark::DoNotOptimize(matmul(a, b));
}
BENCHMARK(BM_Matmul)->Arg(66)->Arg(256);

void BM_Conv1d(benchmark::State& state) {
  Rng rng(2);
  const Tensor x = random_tensor({16, 66, 50}, rng);
  const Tensor k = random_tensor({256, 66, 6}, rng);
  const Tensor b = random_tensor({256}, rng);
  for (auto _ : state) benchmark::DoNotOptimize(conv1d(x, k, b));
}
BENCHMARK(BM_Conv1d);

void BM_Dct(benchmark::State& state) {
  Rng rng(3);
  const DctBasis basis(20);
  const Tensor x = random_tensor({32, 66, 20}, rng);
  for (auto _ : state) benchmark::DoNotOptimize(dct(x, basis));
}
BENCHMARK(BM_Dct);

void BM_Forward(benchmark::State& state) {
  Rng rng(4);
  ModelConfig cfg;
  Model model(cfg, 22, rng);
  const Tensor history = random_tensor({static_cast<std::size_t>(state.range(0)), 66, 50}, rng);
  for (auto _ : state) benchmark::DoNotOptimize(model.forward(history, Mode::eval).prediction);
}
BENCHMARK(BM_Forward)->Arg(1)->Arg(16)->Unit(benchmark::kMillisecond);

void BM_TrainEpoch(benchmark::State& state) {
  RunConfig cfg;
  cfg.model.history = 20;
  cfg.model.query = 5;
  cfg.model.future = 5;
  cfg.model.stages = 2;
  cfg.model.residual_pairs = 1;
  cfg.model.latent = 32;
  cfg.train.batch_size = 4;
  const Skeleton skeleton = synthetic_skeleton(SyntheticSkeletonSpec{});
  SyntheticMotionSpec motion;
  const SequenceDataset data = synthetic_dataset(skeleton, motion, 2, 5);
  const auto windows = extract_windows(data, 20, 5, 4);
  Trainer trainer(cfg, skeleton);
  for (auto _ : state) benchmark::DoNotOptimize(trainer.run_epoch(windows));
}
BENCHMARK(BM_TrainEpoch)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
