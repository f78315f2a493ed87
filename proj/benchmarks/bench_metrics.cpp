#include <benchmark/benchmark.h>

#include "dialogscore/metrics.hpp"
#include "dialogscore/prng.hpp"

namespace {

using namespace dialogscore;

void BM_Qwk(benchmark::State& state) {
  Prng rng(5);
  const std::size_t n = static_cast<std::size_t>(state.range(0));
  std::vector<int> pred(n), gold(n);
  for (std::size_t i = 0; i < n; ++i) {
    pred[i] = rng.range(1, 4);
    gold[i] = rng.range(1, 4);
  }
  for (auto _ : state) benchmark::DoNotOptimize(qwk(pred, gold));
}
BENCHMARK(BM_Qwk)->Arg(100)->Arg(2000);

void BM_KrippendorffAlpha(benchmark::State& state) {
  Prng rng(6);
  const std::size_t items = static_cast<std::size_t>(state.range(0));
  RatingMatrix rm(items, 3);
  for (std::size_t i = 0; i < items; ++i)
    for (std::size_t r = 0; r < 3; ++r)
      if (!rng.chance(0.1)) rm.at(i, r) = rng.range(1, 4);
  for (auto _ : state) benchmark::DoNotOptimize(krippendorff_alpha(rm));
}
BENCHMARK(BM_KrippendorffAlpha)->Arg(100)->Arg(2000);

void BM_CongerKappa(benchmark::State& state) {
  Prng rng(7);
  const std::size_t items = static_cast<std::size_t>(state.range(0));
  RatingMatrix rm(items, 3);
  for (std::size_t i = 0; i < items; ++i)
    for (std::size_t r = 0; r < 3; ++r) rm.at(i, r) = rng.range(1, 4);
  for (auto _ : state) benchmark::DoNotOptimize(conger_kappa(rm));
}
BENCHMARK(BM_CongerKappa)->Arg(100)->Arg(2000);

}  // namespace
