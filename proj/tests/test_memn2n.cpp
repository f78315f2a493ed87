#include <doctest.h>

#include <fstream>
#include <stdexcept>

#include <cmath>
#include <filesystem>

#include "dialogscore/memn2n.hpp"
#include "dialogscore/nn/grad_check.hpp"
#include "dialogscore/synth.hpp"

using namespace dialogscore;
namespace fs = std::filesystem;

namespace {

Dialog alternating_dialog(int user_turns) {
  Dialog d;
  d.id = "alt";
  for (int i = 0; i < user_turns; ++i) {
    d.turns.push_back({Speaker::kSystem, "prompt number " + std::to_string(i), std::nullopt});
    d.turns.push_back({Speaker::kUser, "reply number " + std::to_string(i), std::nullopt});
  }
  return d;
}

MemN2NConfig tiny_config() {
  MemN2NConfig cfg;
  cfg.embed_dim = 4;
  cfg.readout_hidden = 3;
  cfg.hops = 2;
  cfg.dropout = 0.0;
  cfg.seed = 9;
  return cfg;
}

Vocab vocab_of(std::initializer_list<std::string> words) {
  std::vector<std::vector<std::string>> lists;
  lists.emplace_back(words);
  return Vocab::build(lists);
}

TurnSample sample_of(std::vector<std::string> response,
                     std::vector<std::vector<std::string>> responses,
                     std::vector<std::vector<std::string>> prompts, int label) {
  TurnSample s;
  s.dialog_id = "s";
  s.response = std::move(response);
  s.response_history = std::move(responses);
  s.prompt_history = std::move(prompts);
  s.label = label;
  return s;
}

}  // namespace

TEST_CASE("build_turn_samples: one sample per user turn with growing histories") {
  const Dialog d = alternating_dialog(3);
  const auto samples = build_turn_samples(d, 3);
  REQUIRE(samples.size() == 3);
  CHECK(samples[0].response_history.empty());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    CHECK(samples[i].response_history.size() == i);
    CHECK(samples[i].prompt_history.size() == i + 1);  // includes the current prompt
    CHECK(samples[i].label == 3);
  }
  CHECK(samples[2].response == std::vector<std::string>{"reply", "number", "2"});
}

TEST_CASE("build_turn_samples truncates histories to the newest entries") {
  const Dialog d = alternating_dialog(12);
  const auto samples = build_turn_samples(d, 2, 10);
  REQUIRE(samples.size() == 12);
  CHECK(samples[11].response_history.size() == 10);
  // newest entries kept: the oldest surviving response is reply 1
  CHECK(samples[11].response_history.front() == std::vector<std::string>{"reply", "number", "1"});
  CHECK(samples[11].prompt_history.size() == 10);
}

TEST_CASE("encode_bow: empty list, single row, permutation invariance") {
  nn::Parameter table("t", {5, 3});
  Prng rng(4);
  normal_init(table, 1.0, rng);

  nn::Tape tape;
  nn::Tensor leaf = tape.leaf(table);
  const std::vector<int> none;
  CHECK(encode_bow(tape, leaf, none).value() == std::vector<double>{0.0, 0.0, 0.0});

  const std::vector<int> one = {2};
  const auto row = encode_bow(tape, leaf, one).value();
  for (std::size_t k = 0; k < 3; ++k) CHECK(row[k] == doctest::Approx(table.value[2 * 3 + k]));

  const std::vector<int> fwd = {1, 3, 4, 1};
  const std::vector<int> perm = {4, 1, 1, 3};
  const auto a = encode_bow(tape, leaf, fwd).value();
  const auto b = encode_bow(tape, leaf, perm).value();
  for (std::size_t k = 0; k < 3; ++k) CHECK(a[k] == doctest::Approx(b[k]).epsilon(1e-12));
}

TEST_CASE("memory hop: single slot, identical slots, hand-computed scalar case") {
  nn::Tape tape;
  {
    nn::Tensor u = tape.constant({2}, {0.3, -0.2});
    nn::Tensor m1 = tape.constant({2}, {1.0, 0.5});
    nn::Tensor c1 = tape.constant({2}, {2.0, 7.0});
    const std::array<nn::Tensor, 1> keys = {m1}, values = {c1};
    const HopResult hop = memory_hop(tape, u, keys, values);
    REQUIRE(hop.attention.size() == 1);
    CHECK(hop.attention[0] == doctest::Approx(1.0));
    CHECK(hop.output.value()[0] == doctest::Approx(2.0));
    CHECK(hop.output.value()[1] == doctest::Approx(7.0));
  }
  {
    nn::Tensor u = tape.constant({2}, {0.9, 0.1});
    nn::Tensor m = tape.constant({2}, {0.4, 0.4});
    nn::Tensor c1 = tape.constant({2}, {1.0, 0.0});
    nn::Tensor c2 = tape.constant({2}, {0.0, 1.0});
    const std::array<nn::Tensor, 3> keys = {m, m, m};
    const std::array<nn::Tensor, 3> values = {c1, c2, c1};
    const HopResult hop = memory_hop(tape, u, keys, values);
    for (double p : hop.attention) CHECK(p == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  }
  {
    // u=1, m=(1,-1), c=(2,4): p = softmax(1,-1), o = 2 p1 + 4 p2
    nn::Tensor u = tape.constant({1}, {1.0});
    nn::Tensor m1 = tape.constant({1}, {1.0});
    nn::Tensor m2 = tape.constant({1}, {-1.0});
    nn::Tensor c1 = tape.constant({1}, {2.0});
    nn::Tensor c2 = tape.constant({1}, {4.0});
    const std::array<nn::Tensor, 2> keys = {m1, m2}, values = {c1, c2};
    const HopResult hop = memory_hop(tape, u, keys, values);
    const double e1 = std::exp(1.0), e2 = std::exp(-1.0);
    const double p1 = e1 / (e1 + e2), p2 = e2 / (e1 + e2);
    CHECK(hop.attention[0] == doctest::Approx(p1).epsilon(1e-12));
    CHECK(hop.attention[1] == doctest::Approx(p2).epsilon(1e-12));
    CHECK(hop.output.value()[0] == doctest::Approx(2.0 * p1 + 4.0 * p2).epsilon(1e-12));
    CHECK(hop.attention[0] == doctest::Approx(0.8808).epsilon(1e-4));
    CHECK(hop.output.value()[0] == doctest::Approx(2.2384).epsilon(1e-4));
    double total = 0.0;
    for (double p : hop.attention) total += p;
    CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
  }
  {
    nn::Tensor u = tape.constant({3}, {1.0, 2.0, 3.0});
    const HopResult hop = memory_hop(tape, u, {}, {});
    CHECK(hop.output.value() == std::vector<double>{0.0, 0.0, 0.0});
    CHECK(hop.attention.empty());
  }
}

TEST_CASE("forward: empty histories collapse hops; posterior sums to one") {
  MemN2NScorer model(tiny_config(), vocab_of({"hello", "meeting", "friday"}));
  const TurnSample no_history = sample_of({"hello", "meeting"}, {}, {}, 2);
  const Posterior p = model.predict_turn(no_history);
  double total = 0.0;
  for (double v : p) total += v;
  CHECK(std::abs(total - 1.0) < 1e-9);

  const TurnSample with_history =
      sample_of({"hello", "meeting"}, {{"friday"}}, {{"meeting", "friday"}}, 2);
  const Posterior q = model.predict_turn(with_history);
  double total_q = 0.0;
  for (double v : q) total_q += v;
  CHECK(std::abs(total_q - 1.0) < 1e-9);
}

TEST_CASE("shuffling words within one memory slot leaves the forward pass unchanged") {
  MemN2NScorer model(tiny_config(), vocab_of({"a", "b", "c", "d"}));
  const TurnSample s1 = sample_of({"a", "b"}, {{"a", "b", "c"}}, {{"d", "c"}}, 1);
  const TurnSample s2 = sample_of({"a", "b"}, {{"c", "a", "b"}}, {{"c", "d"}}, 1);
  const Posterior p1 = model.predict_turn(s1);
  const Posterior p2 = model.predict_turn(s2);
  for (std::size_t i = 0; i < 4; ++i) CHECK(p1[i] == doctest::Approx(p2[i]).epsilon(1e-12));
}

TEST_CASE("with all embeddings frozen at zero the posterior ignores the input") {
  MemN2NScorer model(tiny_config(), vocab_of({"a", "b", "c"}));
  for (nn::Parameter* p : model.parameters())
    if (p->name.find("embedding") != std::string::npos || p->name.find("key") != std::string::npos ||
        p->name.find("value") != std::string::npos)
      std::fill(p->value.begin(), p->value.end(), 0.0);
  const Posterior p1 = model.predict_turn(sample_of({"a"}, {}, {}, 1));
  const Posterior p2 = model.predict_turn(sample_of({"b", "c"}, {{"a"}}, {{"c"}}, 1));
  for (std::size_t i = 0; i < 4; ++i) CHECK(p1[i] == doctest::Approx(p2[i]).epsilon(1e-12));
}

TEST_CASE("full-model gradient check on a tiny instance") {
  for (const bool tied : {false, true}) {
    MemN2NConfig cfg = tiny_config();
    cfg.tie_embeddings = tied;
    MemN2NScorer model(cfg, vocab_of({"a", "b", "c"}));
    const std::vector<TurnSample> samples = {
        sample_of({"a", "b"}, {{"c"}, {"a", "c"}}, {{"b"}, {"c", "c"}}, 2),
        sample_of({"c"}, {}, {{"a"}}, 4),
    };
    auto params = model.parameters();
    Prng redraw(98);
    for (nn::Parameter* p : params) normal_init(*p, 0.5, redraw);
    const nn::LossFn loss_fn = [&](bool grads) {
      nn::Tape tape;
      Prng rng(0);
      std::vector<nn::Tensor> losses;
      for (const TurnSample& s : samples) losses.push_back(model.loss(tape, s, false, rng));
      nn::Tensor total = tape.mean(tape.concat(losses));
      if (grads) tape.backward(total);
      return total.item();
    };
    nn::GradCheckOptions opts;
    opts.max_coords_per_param = 12;
    const double err = nn::grad_check(loss_fn, params, opts);
    INFO("tied=", tied);
    CHECK(err < 1e-4);
  }
}

TEST_CASE("tied embeddings shrink the parameter list") {
  MemN2NConfig untied = tiny_config();
  MemN2NConfig tied = tiny_config();
  tied.tie_embeddings = true;
  MemN2NScorer a(untied, vocab_of({"a"}));
  MemN2NScorer b(tied, vocab_of({"a"}));
  CHECK(a.parameters().size() == b.parameters().size() + 4);  // one shared A/C pair per bank
}

TEST_CASE("score_dialog equals the lower median of per-turn argmax labels") {
  Prng rng(31);
  for (int rep = 0; rep < 40; ++rep) {
    MemN2NConfig cfg = tiny_config();
    cfg.seed = 100 + static_cast<std::uint64_t>(rep);
    MemN2NScorer model(cfg, vocab_of({"reply", "number", "prompt", "0", "1", "2", "3"}));
    const Dialog d = alternating_dialog(1 + static_cast<int>(rng.below(5)));
    const auto samples = build_turn_samples(d, 1, cfg.memory_size);
    std::vector<int> turn_labels;
    for (const TurnSample& s : samples)
      turn_labels.push_back(posterior_argmax_label(model.predict_turn(s)));
    CHECK(model.score_dialog(d) == median_label(turn_labels));
  }

  Dialog no_user;
  no_user.id = "nu";
  no_user.turns.push_back({Speaker::kSystem, "only a prompt", std::nullopt});
  MemN2NScorer model(tiny_config(), vocab_of({"a"}));
  CHECK_THROWS_AS(model.score_dialog(no_user), std::invalid_argument);
}

TEST_CASE("pretrained vectors initialize the prompt-history tables") {
  const fs::path p = fs::temp_directory_path() / "ds_mem_embeddings.txt";
  {
    std::ofstream out(p);
    out << "meeting 1 2 3 4\n";
  }
  const EmbeddingTable table = load_embeddings_text(p, 4);
  MemN2NScorer model(tiny_config(), vocab_of({"meeting", "other"}));
  model.init_pretrained(table);
  const int id = model.vocab().id("meeting");
  bool prompt_table_checked = false;
  for (nn::Parameter* param : model.parameters()) {
    if (param->name.rfind("prompt_key", 0) == 0) {
      CHECK(param->value[static_cast<std::size_t>(id) * 4 + 1] == doctest::Approx(2.0));
      prompt_table_checked = true;
    }
    if (param->name == "query_embedding")
      CHECK(param->value[static_cast<std::size_t>(id) * 4 + 1] != doctest::Approx(2.0));
  }
  CHECK(prompt_table_checked);
  fs::remove(p);
}

TEST_CASE("turn-level training is deterministic for a fixed seed") {
  const auto corpus = synthesize_corpus(777, 24);
  std::vector<TurnSample> train, dev;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const int label = median_label(corpus[i].ratings.at(Construct::kRepair));
    if (label < 1) continue;
    for (TurnSample& s : build_turn_samples(corpus[i], label, 10))
      (i < 18 ? train : dev).push_back(std::move(s));
  }
  REQUIRE(train.size() > 10);
  REQUIRE(dev.size() > 3);

  const auto run = [&]() {
    MemN2NConfig cfg = tiny_config();
    cfg.max_epochs = 3;
    cfg.batch_size = 8;
    cfg.dropout = 0.2;
    cfg.seed = 55;
    std::vector<std::vector<std::string>> lists;
    for (const TurnSample& s : train) lists.push_back(s.response);
    MemN2NScorer model(cfg, Vocab::build(lists));
    const TrainHistory h = model.train(train, dev);
    return std::pair(h.epochs.back().train_loss, model.predict_turn(dev.front()));
  };
  const auto [la, pa] = run();
  const auto [lb, pb] = run();
  CHECK(la == lb);
  for (std::size_t i = 0; i < 4; ++i) CHECK(pa[i] == pb[i]);
}

TEST_CASE("snapshot round trip") {
  MemN2NScorer model(tiny_config(), vocab_of({"alpha", "beta"}));
  const TurnSample s = sample_of({"alpha"}, {{"beta"}}, {{"alpha", "beta"}}, 3);
  const Posterior before = model.predict_turn(s);
  const fs::path base = fs::temp_directory_path() / "ds_memn2n_snapshot";
  model.save_snapshot(base);
  MemN2NScorer loaded = MemN2NScorer::load_snapshot(base);
  const Posterior after = loaded.predict_turn(s);
  for (std::size_t i = 0; i < 4; ++i) CHECK(before[i] == after[i]);
  fs::remove(fs::path(base.string() + ".json"));
  fs::remove(fs::path(base.string() + ".bin"));
}
