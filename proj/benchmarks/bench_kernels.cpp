#include <benchmark/benchmark.h>

#include "patchpref/rng.hpp"
#include "patchpref/tensor.hpp"

using namespace patchpref;

static void BM_GemmNN(benchmark::State& state) {
  const auto n = std::size_t(state.range(0));
  Rng rng(1);
  Tensor a = standard_normal(rng, {n, n});
  Tensor b = standard_normal(rng, {n, n});
  Tensor c({n, n});
  for (auto _ : state) {
    kernels::gemm_nn(n, n, n, a.data(), b.data(), c.data(), false);
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(state.iterations() * std::int64_t(2 * n * n * n));
}
BENCHMARK(BM_GemmNN)->Arg(64)->Arg(128)->Arg(256);

static void BM_GemmNT(benchmark::State& state) {
  const auto n = std::size_t(state.range(0));
  Rng rng(2);
  Tensor a = standard_normal(rng, {n, n});
  Tensor b = standard_normal(rng, {n, n});
  Tensor c({n, n});
  for (auto _ : state) {
    kernels::gemm_nt(n, n, n, a.data(), b.data(), c.data(), false);
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(state.iterations() * std::int64_t(2 * n * n * n));
}
BENCHMARK(BM_GemmNT)->Arg(64)->Arg(256);

// Denoiser-sized 3×3 convolution over a 32×32 map.
static void BM_Conv3x3(benchmark::State& state) {
  const auto c = std::size_t(state.range(0));
  Rng rng(3);
  Tensor x = standard_normal(rng, {c, 32, 32});
  Tensor k = standard_normal(rng, {c, c, 3, 3});
  for (auto _ : state) benchmark::DoNotOptimize(conv2d(x, k, 1, 1));
}
BENCHMARK(BM_Conv3x3)->Arg(16)->Arg(32);
