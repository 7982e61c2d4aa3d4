#include <benchmark/benchmark.h>

#include "patchpref/patch_match.hpp"
#include "patchpref/rng.hpp"

using namespace patchpref;

namespace {

template <PatchQualityMap (*Match)(const Tensor&, const Tensor&)>
void BM_PatchQuality(benchmark::State& state) {
  const auto d = std::size_t(state.range(0));
  const auto g = std::size_t(state.range(1));
  Rng rng(4);
  Tensor a = standard_normal(rng, {d, g, g});
  Tensor b = standard_normal(rng, {d, g, g});
  for (auto _ : state) benchmark::DoNotOptimize(Match(a, b));
  state.SetItemsProcessed(state.iterations() * std::int64_t(g * g * g * g));
}

}  // namespace

BENCHMARK(BM_PatchQuality<patch_quality>)->Args({16, 8})->Args({64, 8})->Args({64, 16});
BENCHMARK(BM_PatchQuality<patch_quality_naive>)->Args({16, 8})->Args({64, 8})->Args({64, 16});

BENCHMARK_MAIN();
