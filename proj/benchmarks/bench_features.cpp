#include <benchmark/benchmark.h>

#include "dialogscore/features.hpp"
#include "dialogscore/synth.hpp"

namespace {

using namespace dialogscore;

const std::vector<Dialog>& bench_corpus() {
  static const std::vector<Dialog> corpus = synthesize_corpus(1, 200);
  return corpus;
}

void BM_Tokenize(benchmark::State& state) {
  const auto& corpus = bench_corpus();
  std::size_t i = 0;
  for (auto _ : state) {
    const Dialog& d = corpus[i++ % corpus.size()];
    for (const Turn& t : d.turns) benchmark::DoNotOptimize(tokenize(t.text));
  }
}
BENCHMARK(BM_Tokenize);

void BM_ExtractFeatures(benchmark::State& state) {
  const auto& corpus = bench_corpus();
  FeatureConfig cfg;
  std::size_t i = 0;
  for (auto _ : state)
    benchmark::DoNotOptimize(extract_features(bench_corpus()[i++ % corpus.size()], cfg));
}
BENCHMARK(BM_ExtractFeatures);

void BM_Vectorize(benchmark::State& state) {
  const auto& corpus = bench_corpus();
  std::vector<ScoredDialog> scored;
  for (const Dialog& d : corpus) scored.push_back({&d, 2});
  FeatureConfig cfg;
  const FeatureSpace space = fit_feature_space(scored, cfg);
  std::size_t i = 0;
  for (auto _ : state)
    benchmark::DoNotOptimize(vectorize(corpus[i++ % corpus.size()], space));
}
BENCHMARK(BM_Vectorize);

void BM_PolitenessFlags(benchmark::State& state) {
  const auto& corpus = bench_corpus();
  std::size_t i = 0;
  for (auto _ : state)
    benchmark::DoNotOptimize(politeness_flags(bench_corpus()[i++ % corpus.size()]));
}
BENCHMARK(BM_PolitenessFlags);

}  // namespace
