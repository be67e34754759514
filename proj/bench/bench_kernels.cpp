// Serial reference kernels vs. the OpenMP im2col/GEMM kernels at the shapes
// the models actually run.

#include <benchmark/benchmark.h>

#include <vector>

#include "usdiff/numerics/kernels.hpp"
#include "usdiff/numerics/rng.hpp"

namespace {

using usdiff::nn::kernels::Conv2dDims;
using usdiff::nn::kernels::make_conv2d_dims;

std::vector<float> random_vec(std::size_t n, std::uint64_t seed) {
  usdiff::Rng rng(seed);
  std::vector<float> v(n);
  for (auto& x : v) x = static_cast<float>(rng.uniform(-1, 1));
  return v;
}

struct ConvCase {
  Conv2dDims d;
  std::vector<float> x, w, b, out;
  explicit ConvCase(const benchmark::State& state)
      : d(make_conv2d_dims(state.range(0), state.range(1), state.range(2), state.range(2),
                           state.range(3), 3, 3, state.range(4), 1)),
        x(random_vec(static_cast<std::size_t>(d.n * d.c * d.h * d.w), 1)),
        w(random_vec(static_cast<std::size_t>(d.k * d.c * 9), 2)),
        b(random_vec(static_cast<std::size_t>(d.k), 3)),
        out(static_cast<std::size_t>(d.n * d.k * d.ho * d.wo)) {}
  double macs() const { return static_cast<double>(d.n * d.k * d.ho * d.wo * d.c * 9); }
};

void BM_ConvReference(benchmark::State& state) {
  ConvCase c(state);
  for (auto _ : state) {
    usdiff::nn::kernels::reference::conv2d_forward(c.d, c.x.data(), c.w.data(), c.b.data(),
                                                   c.out.data());
    benchmark::DoNotOptimize(c.out.data());
  }
  state.counters["GMAC/s"] =
      benchmark::Counter(c.macs() * 1e-9, benchmark::Counter::kIsIterationInvariantRate);
}

void BM_ConvParallel(benchmark::State& state) {
  ConvCase c(state);
  for (auto _ : state) {
    usdiff::nn::kernels::parallel::conv2d_forward(c.d, c.x.data(), c.w.data(), c.b.data(),
                                                  c.out.data());
    benchmark::DoNotOptimize(c.out.data());
  }
  state.counters["GMAC/s"] =
      benchmark::Counter(c.macs() * 1e-9, benchmark::Counter::kIsIterationInvariantRate);
}

void BM_ConvBackwardWeightParallel(benchmark::State& state) {
  ConvCase c(state);
  std::vector<float> gw(c.w.size()), gb(c.b.size());
  for (auto _ : state) {
    usdiff::nn::kernels::parallel::conv2d_backward_weight(c.d, c.x.data(), c.out.data(), gw.data(),
                                                          gb.data());
    benchmark::DoNotOptimize(gw.data());
  }
  state.counters["GMAC/s"] =
      benchmark::Counter(c.macs() * 1e-9, benchmark::Counter::kIsIterationInvariantRate);
}

void BM_ConvBackwardInputParallel(benchmark::State& state) {
  ConvCase c(state);
  std::vector<float> gx(c.x.size());
  for (auto _ : state) {
    usdiff::nn::kernels::parallel::conv2d_backward_input(c.d, c.w.data(), c.out.data(), gx.data());
    benchmark::DoNotOptimize(gx.data());
  }
  state.counters["GMAC/s"] =
      benchmark::Counter(c.macs() * 1e-9, benchmark::Counter::kIsIterationInvariantRate);
}

void GemmArgs(benchmark::internal::Benchmark* b) {
  b->Args({64, 4096, 288})->Args({128, 128, 1152})->Args({32, 2048, 288});
}

void BM_GemmReference(benchmark::State& state) {
  const auto m = state.range(0), n = state.range(1), k = state.range(2);
  auto a = random_vec(static_cast<std::size_t>(m * k), 1);
  auto b = random_vec(static_cast<std::size_t>(k * n), 2);
  std::vector<float> c(static_cast<std::size_t>(m * n));
  for (auto _ : state) {
    usdiff::nn::kernels::reference::gemm(m, n, k, a.data(), b.data(), c.data(), false);
    benchmark::DoNotOptimize(c.data());
  }
  state.counters["GMAC/s"] = benchmark::Counter(static_cast<double>(m * n * k) * 1e-9,
                                                benchmark::Counter::kIsIterationInvariantRate);
}

void BM_GemmParallel(benchmark::State& state) {
  const auto m = state.range(0), n = state.range(1), k = state.range(2);
  auto a = random_vec(static_cast<std::size_t>(m * k), 1);
  auto b = random_vec(static_cast<std::size_t>(k * n), 2);
  std::vector<float> c(static_cast<std::size_t>(m * n));
  for (auto _ : state) {
    usdiff::nn::kernels::parallel::gemm(m, n, k, a.data(), b.data(), c.data(), false);
    benchmark::DoNotOptimize(c.data());
  }
  state.counters["GMAC/s"] = benchmark::Counter(static_cast<double>(m * n * k) * 1e-9,
                                                benchmark::Counter::kIsIterationInvariantRate);
}

// {batch, channels, size, filters, stride}
void ConvArgs(benchmark::internal::Benchmark* b) {
  b->Args({32, 32, 8, 32, 1})       // U-Net level 0
      ->Args({32, 128, 2, 128, 1})  // U-Net bottleneck
      ->Args({16, 32, 64, 32, 1})   // codec full resolution
      ->Args({16, 32, 64, 32, 2});  // codec stride-2 down
}

}  // namespace

BENCHMARK(BM_GemmReference)->Apply(GemmArgs)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_GemmParallel)->Apply(GemmArgs)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ConvReference)->Apply(ConvArgs)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ConvParallel)->Apply(ConvArgs)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ConvBackwardWeightParallel)->Apply(ConvArgs)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ConvBackwardInputParallel)->Apply(ConvArgs)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
