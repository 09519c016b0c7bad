#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "spikekit/data.hpp"
#include "spikekit/folding.hpp"
#include "spikekit/kernels.hpp"
#include "spikekit/network.hpp"

using namespace spikekit;

namespace {

std::vector<double> noise(std::size_t n, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> d(lo, hi);
  std::vector<double> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

template <bool Parallel>
void BM_gemm(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = noise(n * n, 1), b = noise(n * n, 2);
  std::vector<double> c(n * n);
  for (auto _ : state) {
    if constexpr (Parallel) kernels::parallel::gemm(false, true, n, n, n, a, b, c);
    else kernels::reference::gemm(false, true, n, n, n, a, b, c);
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n * n * n));
}

template <bool Parallel>
void BM_quantize_forward(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto u = noise(n, 3, -3.0, 8.0);
  const double alpha[] = {0.4};
  kernels::QuantArgs q{alpha, 4, 1.0, true};
  std::vector<double> out(n);
  for (auto _ : state) {
    if constexpr (Parallel) kernels::parallel::quantize_forward(u, q, out);
    else kernels::reference::quantize_forward(u, q, out);
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n));
}

template <bool Parallel>
void BM_quantize_backward_alpha(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto u = noise(n, 4, -3.0, 8.0), g = noise(n, 5);
  const double alpha[] = {0.4};
  kernels::QuantArgs q{alpha, 4, 1.0, true};
  std::vector<double> grad(1);
  for (auto _ : state) {
    grad[0] = 0.0;
    if constexpr (Parallel) kernels::parallel::quantize_backward_alpha(g, u, q, 1.0, grad);
    else kernels::reference::quantize_backward_alpha(g, u, q, 1.0, grad);
    benchmark::DoNotOptimize(grad.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n));
}

void BM_spike_inference(benchmark::State& state) {
  NetInit init;
  init.widths = {64, 256, 256};
  init.classes = 10;
  init.neuron = NeuronParams::asn(static_cast<int>(state.range(0)), 0.0);
  init.weight_gain = 2.0;
  const auto folded = fold_net(make_mlp(init));
  const auto data = gen_shifted_task(0, 32, 64, 10, 1.0);
  const auto x = encode_temporal(data, 4);
  for (auto _ : state) benchmark::DoNotOptimize(spike_inference(folded, x).logits.values().data());
}

/// One epoch of training: integer neurons over T steps vs binary LIF over T·D.
void BM_train_epoch(benchmark::State& state) {
  const bool binary = state.range(0) == 1;
  const int steps = 4;
  const std::size_t T = 4;
  const auto data = gen_shifted_task(0, 128, 256, 10, 1.0);
  NetInit init;
  init.widths = {256, 256, 256};
  init.classes = 10;
  init.neuron = binary ? NeuronParams::lif() : NeuronParams::ilif(steps);
  TrainConfig cfg;
  cfg.epochs = 1;
  cfg.batch = 32;
  cfg.timesteps = binary ? T * steps : T;
  for (auto _ : state) {
    state.PauseTiming();
    auto net = make_mlp(init);
    state.ResumeTiming();
    benchmark::DoNotOptimize(train(net, data, cfg).epochs.size());
  }
  state.SetLabel(binary ? "lif T*D=16" : "ilif T=4");
}

}  // namespace

BENCHMARK(BM_gemm<false>)->Name("gemm/reference")->Arg(64)->Arg(256);
BENCHMARK(BM_gemm<true>)->Name("gemm/parallel")->Arg(64)->Arg(256);
BENCHMARK(BM_quantize_forward<false>)->Name("quantize_forward/reference")->Arg(1 << 16)->Arg(1 << 20);
BENCHMARK(BM_quantize_forward<true>)->Name("quantize_forward/parallel")->Arg(1 << 16)->Arg(1 << 20);
BENCHMARK(BM_quantize_backward_alpha<false>)->Name("quantize_backward_alpha/reference")->Arg(1 << 20);
BENCHMARK(BM_quantize_backward_alpha<true>)->Name("quantize_backward_alpha/parallel")->Arg(1 << 20);
BENCHMARK(BM_spike_inference)->ArgName("D")->Arg(1)->Arg(4)->Arg(8)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_train_epoch)->ArgName("binary")->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
