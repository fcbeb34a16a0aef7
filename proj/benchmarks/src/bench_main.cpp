#include <benchmark/benchmark.h>

#include <vector>

#include "i2md/dataset.hpp"
#include "i2md/encoder.hpp"
#include "i2md/memory_bank.hpp"
#include "i2md/ops.hpp"
#include "i2md/skeleton.hpp"
#include "i2md/trainer.hpp"

using namespace i2md;

namespace {

Tensor random_matrix(std::size_t rows, std::size_t cols, Rng& rng, bool requires_grad = false) {
  std::vector<double> v(rows * cols);
  for (double& x : v) x = normal(rng, 0.0, 1.0);
  return Tensor({rows, cols}, std::move(v), requires_grad);
}

void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(1);
  const Tensor a = random_matrix(n, n, rng), b = random_matrix(n, n, rng);
  for (auto _ : state) benchmark::DoNotOptimize(matmul(a, b));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(2 * n * n * n));
}
BENCHMARK(BM_Matmul)->Arg(64)->Arg(256);

void BM_MatmulBackward(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(2);
  Tensor a = random_matrix(n, n, rng, true), b = random_matrix(n, n, rng, true);
  for (auto _ : state) {
    a.zero_grad();
    b.zero_grad();
    sum(matmul(a, b)).backward();
  }
}
BENCHMARK(BM_MatmulBackward)->Arg(64)->Arg(256);

DatasetConfig bench_data() {
  DatasetConfig c;
  c.train_per_class = 8;
  c.test_per_class = 1;
  return c;
}

void BM_EncoderForward(benchmark::State& state) {
  const Dataset d = generate_dataset(bench_data());
  EncoderConfig cfg = EncoderConfig::preset(state.range(0) == 0 ? "small" : "desk");
  Rng rng(3);
  const EncoderParams p = EncoderParams::init(cfg, rng);
  const std::span<const SkeletonSequence> batch(d.train.data(), 32);
  const Tensor input = pack_batch(batch);
  for (auto _ : state) benchmark::DoNotOptimize(encode(p, input, batch.size(), d.topology).embedding);
  state.SetLabel(state.range(0) == 0 ? "small" : "desk");
}
BENCHMARK(BM_EncoderForward)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_TrainStep(benchmark::State& state) {
  const Dataset d = generate_dataset(bench_data());
  TrainConfig tc;
  tc.encoder = EncoderConfig::preset("small");
  tc.bank_size = 64;
  tc.k_c = 32;
  TrainState s = TrainState::init(tc, d.topology, d.train);
  const std::span<const SkeletonSequence> batch(d.train.data(), tc.batch_size);
  for (std::size_t i = 0; i < 3; ++i) train_step(s, batch);  // fill the banks
  for (auto _ : state) benchmark::DoNotOptimize(train_step(s, batch));
}
BENCHMARK(BM_TrainStep)->Unit(benchmark::kMillisecond);

void BM_BankTopK(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const std::size_t dim = 32;
  Rng rng(4);
  MemoryBank bank(n, dim);
  const Tensor keys = l2_normalize(random_matrix(n, dim, rng));
  std::vector<std::uint64_t> tags(n);
  for (std::size_t i = 0; i < n; ++i) tags[i] = i;
  bank.enqueue(keys, nullptr, tags);
  const Tensor queries = l2_normalize(random_matrix(32, dim, rng));
  for (auto _ : state) benchmark::DoNotOptimize(bank.top_k_rows(queries, 128));
}
BENCHMARK(BM_BankTopK)->Arg(512)->Arg(4096);

}  // namespace
BENCHMARK_MAIN();
