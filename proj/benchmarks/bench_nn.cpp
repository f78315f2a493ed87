#include <benchmark/benchmark.h>

#include "dialogscore/bilstm.hpp"
#include "dialogscore/memn2n.hpp"
#include "dialogscore/synth.hpp"

namespace {

using namespace dialogscore;

BilstmScorer make_bilstm() {
  BilstmConfig cfg;
  cfg.embed_dim = 32;
  cfg.hidden = 24;
  cfg.depth = 2;
  cfg.seed = 9;
  std::vector<std::vector<std::string>> lists;
  for (const Dialog& d : synthesize_corpus(2, 50))
    lists.push_back(BilstmScorer::dialog_tokens(d));
  return BilstmScorer(cfg, Vocab::build(lists));
}

void BM_BilstmForward(benchmark::State& state) {
  BilstmScorer model = make_bilstm();
  const auto corpus = synthesize_corpus(3, 32);
  std::size_t i = 0;
  for (auto _ : state) benchmark::DoNotOptimize(model.predict(corpus[i++ % corpus.size()]));
}
BENCHMARK(BM_BilstmForward);

void BM_BilstmForwardBackward(benchmark::State& state) {
  BilstmScorer model = make_bilstm();
  const auto corpus = synthesize_corpus(3, 32);
  Prng rng(1);
  std::size_t i = 0;
  for (auto _ : state) {
    const Dialog& d = corpus[i++ % corpus.size()];
    const auto ids = model.token_ids(BilstmScorer::dialog_tokens(d));
    nn::Tape tape;
    nn::Tensor loss = model.loss(tape, ids, 2, true, rng);
    tape.backward(loss);
    benchmark::DoNotOptimize(loss.item());
  }
}
BENCHMARK(BM_BilstmForwardBackward);

void BM_MemN2NForward(benchmark::State& state) {
  MemN2NConfig cfg;
  cfg.embed_dim = 32;
  cfg.readout_hidden = 32;
  cfg.seed = 10;
  const auto corpus = synthesize_corpus(4, 32);
  std::vector<TurnSample> samples;
  std::vector<std::vector<std::string>> lists;
  for (const Dialog& d : corpus)
    for (TurnSample& s : build_turn_samples(d, 2, cfg.memory_size)) {
      lists.push_back(s.response);
      samples.push_back(std::move(s));
    }
  MemN2NScorer model(cfg, Vocab::build(lists));
  std::size_t i = 0;
  for (auto _ : state)
    benchmark::DoNotOptimize(model.predict_turn(samples[i++ % samples.size()]));
}
BENCHMARK(BM_MemN2NForward);

}  // namespace
