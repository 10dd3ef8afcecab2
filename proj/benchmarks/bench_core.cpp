#include <benchmark/benchmark.h>

#include "hqgan/discriminator.hpp"
#include "hqgan/generator.hpp"
#include "hqgan/metrics.hpp"
#include "hqgan/quantum.hpp"
#include "hqgan/rng.hpp"

namespace {

using namespace hqgan;

Tensor random_tensor(Shape shape, Rng& rng, double scale = 1.0) {
  Tensor t = Tensor::zeros(std::move(shape));
  for (double& v : t.mutable_data()) v = rng.normal(0.0, scale);
  return t;
}

void BM_QuantumForward(benchmark::State& state) {
  const std::size_t n = static_cast<std::size_t>(state.range(0));
  Rng rng(1);
  const Tensor z = random_tensor({8, n}, rng);
  const Tensor theta = init_circuit_params(n, 2);
  for (auto _ : state) {
    benchmark::DoNotOptimize(quantum_block(z, theta));
  }
  state.SetItemsProcessed(state.iterations() * 8);
}
BENCHMARK(BM_QuantumForward)->Arg(5)->Arg(8)->Arg(10);

void BM_ParameterShift(benchmark::State& state) {
  const std::size_t n = static_cast<std::size_t>(state.range(0));
  Rng rng(3);
  const Tensor z = random_tensor({8, n}, rng);
  const Tensor theta = init_circuit_params(n, 4);
  const Tensor upstream = random_tensor({8, n}, rng);
  for (auto _ : state) {
    benchmark::DoNotOptimize(parameter_shift_gradients(
        z.data(), 8, n, theta.data(), upstream.data()));
  }
  state.SetItemsProcessed(state.iterations() * 8);
}
BENCHMARK(BM_ParameterShift)->Arg(5)->Arg(8);

void BM_Conv2dForward(benchmark::State& state) {
  const std::size_t ch = static_cast<std::size_t>(state.range(0));
  const std::size_t side = static_cast<std::size_t>(state.range(1));
  Rng rng(5);
  const Tensor x = random_tensor({8, ch, side, side}, rng);
  const Tensor w = random_tensor({ch, ch, 3, 3}, rng, 0.1);
  for (auto _ : state) {
    benchmark::DoNotOptimize(conv2d(x, w, {}, 1, 1));
  }
  const double macs = 8.0 * ch * ch * 9.0 * side * side;
  state.counters["GFLOP/s"] = benchmark::Counter(
      2.0 * macs, benchmark::Counter::kIsIterationInvariantRate,
      benchmark::Counter::kIs1000);
}
BENCHMARK(BM_Conv2dForward)->Args({8, 16})->Args({16, 8})->Args({64, 32});

void BM_Conv2dBackward(benchmark::State& state) {
  const std::size_t ch = static_cast<std::size_t>(state.range(0));
  const std::size_t side = static_cast<std::size_t>(state.range(1));
  Rng rng(7);
  const Tensor x = random_tensor({8, ch, side, side}, rng);
  Tensor w = random_tensor({ch, ch, 3, 3}, rng, 0.1);
  Tensor wt = Tensor::from_data(w.shape(),
                                {w.data().begin(), w.data().end()}, true);
  for (auto _ : state) {
    wt.zero_grad();
    sum(conv2d(x, wt, {}, 1, 1)).backward();
  }
}
BENCHMARK(BM_Conv2dBackward)->Args({8, 16})->Args({16, 8});

void BM_GeneratorForward(benchmark::State& state) {
  GeneratorConfig cfg;
  cfg.block_kind = BlockKind::kQuantum;
  cfg.base_channels = static_cast<std::size_t>(state.range(0));
  cfg.output_size = static_cast<std::size_t>(state.range(1));
  Generator gen(cfg, 9);
  Rng rng(11);
  const Tensor z = sample_latent(8, cfg.n_qubits, rng);
  for (auto _ : state) {
    benchmark::DoNotOptimize(gen.forward(z, Mode::kTrain));
  }
}
BENCHMARK(BM_GeneratorForward)->Args({32, 16})->Args({256, 32});

void BM_DiscriminatorForward(benchmark::State& state) {
  DiscriminatorConfig cfg;
  const std::size_t base = static_cast<std::size_t>(state.range(0));
  cfg.backbone.stage_channels = {base, base, base * 2, base * 4, base * 8};
  cfg.backbone.input_size = static_cast<std::size_t>(state.range(1));
  cfg.head_kind = HeadKind::kHybrid;
  Discriminator disc(cfg, 13);
  Rng rng(15);
  const Tensor images =
      random_tensor({8, 3, cfg.backbone.input_size, cfg.backbone.input_size}, rng, 0.5);
  for (auto _ : state) {
    benchmark::DoNotOptimize(disc.forward(images, Mode::kTrain));
  }
}
BENCHMARK(BM_DiscriminatorForward)->Args({8, 16})->Args({64, 32});

void BM_Fid(benchmark::State& state) {
  const std::size_t d = static_cast<std::size_t>(state.range(0));
  Rng rng(17);
  FeatureSet a, b;
  a.n = b.n = 256;
  a.d = b.d = d;
  a.extractor_id = b.extractor_id = "bench";
  a.values.resize(a.n * d);
  b.values.resize(b.n * d);
  for (double& v : a.values) v = rng.normal();
  for (double& v : b.values) v = rng.normal(0.2, 1.1);
  for (auto _ : state) {
    benchmark::DoNotOptimize(fid(a, b));
  }
}
BENCHMARK(BM_Fid)->Arg(64)->Arg(128);

}  // namespace

BENCHMARK_MAIN();
