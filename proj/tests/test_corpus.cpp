#include <doctest.h>

#include <stdexcept>

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "dialogscore/corpus.hpp"
#include "dialogscore/features.hpp"
#include "dialogscore/prng.hpp"
#include "dialogscore/synth.hpp"

using namespace dialogscore;
namespace fs = std::filesystem;

namespace {

fs::path write_temp(const std::string& name, const std::string& content) {
  const fs::path p = fs::temp_directory_path() / name;
  std::ofstream out(p);
  out << content;
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

Dialog make_dialog(std::string id, std::vector<int> overall) {
  Dialog d;
  d.id = std::move(id);
  d.turns.push_back({Speaker::kSystem, "hello there", std::nullopt});
  d.turns.push_back({Speaker::kUser, "i want a meeting", std::nullopt});
  d.ratings.emplace(Construct::kOverall, std::move(overall));
  return d;
}

}  // namespace

TEST_CASE("construct names round-trip as lowercase snake case") {
  CHECK(to_string(Construct::kTurnTaking) == "turn_taking");
  for (Construct c : kAllConstructs) CHECK(construct_from_string(to_string(c)) == c);
  CHECK_FALSE(construct_from_string("nope").has_value());
}

TEST_CASE("load_corpus parses a minimal well-formed file") {
  const auto p = write_temp("ds_corpus_min.jsonl",
                            R"({"id":"d1","turns":[{"speaker":"system","text":"hi"},)"
                            R"({"speaker":"user","text":"hello"}],"ratings":{"overall":[3,3,4]}})"
                            "\n");
  const auto dialogs = load_corpus(p);
  REQUIRE(dialogs.size() == 1);
  CHECK(dialogs[0].id == "d1");
  CHECK(dialogs[0].turns.size() == 2);
  CHECK(dialogs[0].ratings.at(Construct::kOverall) == std::vector<int>{3, 3, 4});
  fs::remove(p);
}

TEST_CASE("load_corpus rejects scores outside 0..4, naming the construct and line") {
  const auto p = write_temp("ds_corpus_bad.jsonl",
                            R"({"id":"d1","turns":[{"speaker":"user","text":"x"}],)"
                            R"("ratings":{"topic":[5,3,3]}})"
                            "\n");
  CHECK_THROWS_WITH_AS(load_corpus(p), doctest::Contains("topic"), CorpusError);
  try {
    load_corpus(p);
  } catch (const CorpusError& e) {
    CHECK(std::string(e.what()).find("line 1") != std::string::npos);
  }
  fs::remove(p);
}

TEST_CASE("load_corpus: empty file yields empty corpus; malformed JSON names the line") {
  const auto empty = write_temp("ds_corpus_empty.jsonl", "");
  CHECK(load_corpus(empty).empty());
  fs::remove(empty);

  const auto bad = write_temp("ds_corpus_broken.jsonl", "{not json\n");
  CHECK_THROWS_WITH_AS(load_corpus(bad), doctest::Contains("line 1"), CorpusError);
  fs::remove(bad);
}

TEST_CASE("load_corpus requires a user turn and known constructs") {
  const auto nouser = write_temp("ds_corpus_nouser.jsonl",
                                 R"({"id":"d","turns":[{"speaker":"system","text":"x"}],)"
                                 R"("ratings":{"overall":[3]}})"
                                 "\n");
  CHECK_THROWS_AS(load_corpus(nouser), CorpusError);
  fs::remove(nouser);

  const auto unknown = write_temp("ds_corpus_unknown.jsonl",
                                  R"({"id":"d","turns":[{"speaker":"user","text":"x"}],)"
                                  R"("ratings":{"fluency":[3]}})"
                                  "\n");
  CHECK_THROWS_WITH_AS(load_corpus(unknown), doctest::Contains("fluency"), CorpusError);
  fs::remove(unknown);
}

TEST_CASE("corpus save/load round trip preserves dependency arcs") {
  Dialog d = make_dialog("d9", {2, 3, 3});
  d.turns[1].deps = std::vector<DependencyArc>{{1, 0, "nsubj"}};
  const fs::path p = fs::temp_directory_path() / "ds_corpus_rt.jsonl";
  const std::vector<Dialog> corpus = {d};
  save_corpus(corpus, p);
  const auto back = load_corpus(p);
  REQUIRE(back.size() == 1);
  REQUIRE(back[0].turns[1].deps.has_value());
  CHECK(back[0].turns[1].deps->at(0).relation == "nsubj");
  CHECK(back[0].turns[1].deps->at(0).head == 1);
  fs::remove(p);
}

TEST_CASE("median_label: lower median, permutation invariance, errors") {
  CHECK(median_label(std::vector<int>{3, 3, 4}) == 3);
  CHECK(median_label(std::vector<int>{2, 3}) == 2);
  CHECK(median_label(std::vector<int>{4}) == 4);
  CHECK_THROWS_AS(median_label(std::vector<int>{}), std::invalid_argument);

  Prng rng(5);
  for (int rep = 0; rep < 100; ++rep) {
    std::vector<int> scores(1 + rng.below(9));
    for (int& s : scores) s = rng.range(0, 4);
    // sort-and-index oracle
    std::vector<int> sorted = scores;
    std::sort(sorted.begin(), sorted.end());
    const int expected = sorted[(sorted.size() - 1) / 2];
    std::vector<int> shuffled = scores;
    rng.shuffle(shuffled);
    CHECK(median_label(scores) == expected);
    CHECK(median_label(shuffled) == expected);
  }
}

TEST_CASE("filter_scorable drops unscorable medians and keeps labels 1..4") {
  std::vector<Dialog> dialogs;
  dialogs.push_back(make_dialog("a", {0, 0, 1}));  // median 0: excluded
  dialogs.push_back(make_dialog("b", {0, 2, 3}));  // lower median 2
  dialogs.push_back(make_dialog("c", {4, 4, 4}));  // label 4
  const auto scored = filter_scorable(dialogs, Construct::kOverall);
  REQUIRE(scored.size() == 2);
  CHECK(scored[0].dialog->id == "b");
  CHECK(scored[0].label == 2);
  CHECK(scored[1].label == 4);
  CHECK(scored.size() <= dialogs.size());
  for (const ScoredDialog& sd : scored) CHECK(sd.label >= 1);

  CHECK_THROWS_AS(filter_scorable(dialogs, Construct::kRepair), CorpusError);
}

TEST_CASE("kfold: sizes, determinism, partition") {
  std::vector<Dialog> dialogs;
  std::vector<ScoredDialog> scored;
  for (int i = 0; i < 23; ++i) dialogs.push_back(make_dialog("d" + std::to_string(i), {3, 3, 3}));
  for (const Dialog& d : dialogs) scored.push_back({&d, 3});

  const FoldAssignment fa = kfold(scored, 10, 42);
  CHECK(fa.membership.size() == 23);
  std::vector<int> sizes(10, 0);
  for (const auto& [id, fold] : fa.membership) {
    CHECK(fold >= 0);
    CHECK(fold < 10);
    ++sizes[static_cast<std::size_t>(fold)];
  }
  const auto [mn, mx] = std::minmax_element(sizes.begin(), sizes.end());
  CHECK(*mx - *mn <= 1);

  const FoldAssignment again = kfold(scored, 10, 42);
  CHECK(fa.membership == again.membership);
  const FoldAssignment other = kfold(scored, 10, 43);
  CHECK(fa.membership != other.membership);

  std::span<const ScoredDialog> ten(scored.data(), 10);
  const FoldAssignment tiny = kfold(ten, 10, 1);
  std::set<int> folds_used;
  for (const auto& [id, fold] : tiny.membership) folds_used.insert(fold);
  CHECK(folds_used.size() == 10);  // each fold has exactly one dialog

  CHECK_THROWS_AS(kfold(ten, 11, 1), std::invalid_argument);
  CHECK_THROWS_AS(kfold(ten, 1, 1), std::invalid_argument);
}

TEST_CASE("train_dev_split: rounding, determinism, partition, errors") {
  const auto [t10, d10] = train_dev_split(10, 7);
  CHECK(t10.size() == 8);
  CHECK(d10.size() == 2);
  const auto [t9, d9] = train_dev_split(9, 7);
  CHECK(t9.size() == 8);  // ceil(0.8 * 9)
  CHECK(d9.size() == 1);

  const auto [ta, da] = train_dev_split(37, 11);
  const auto [tb, db] = train_dev_split(37, 11);
  CHECK(ta == tb);
  CHECK(da == db);
  std::set<std::size_t> all(ta.begin(), ta.end());
  all.insert(da.begin(), da.end());
  CHECK(all.size() == 37);

  CHECK_THROWS_AS(train_dev_split(4, 1), std::invalid_argument);
}

TEST_CASE("synthesize_corpus: shape, determinism, rater noise bounds") {
  CHECK_THROWS_AS(synthesize_corpus(1, 0), std::invalid_argument);

  const auto one = synthesize_corpus(3, 1);
  REQUIRE(one.size() == 1);
  CHECK(one[0].ratings.size() == 9);
  for (const auto& [c, scores] : one[0].ratings) CHECK(scores.size() == 3);
  CHECK(one[0].user_turn_count() >= 1);

  const auto corpus = synthesize_corpus(17, 40);
  CHECK(corpus.size() == 40);
  std::set<std::string> ids;
  for (const Dialog& d : corpus) {
    ids.insert(d.id);
    CHECK(d.turns.size() >= 3);
    CHECK(d.turns.size() <= 8);
    CHECK(d.turns.front().speaker == Speaker::kSystem);
    for (std::size_t i = 1; i < d.turns.size(); ++i)
      CHECK(d.turns[i].speaker != d.turns[i - 1].speaker);
    // scores stay within +-1 of one planted label, so the spread is <= 2
    for (const auto& [c, scores] : d.ratings) {
      const auto [mn, mx] = std::minmax_element(scores.begin(), scores.end());
      CHECK(*mx - *mn <= 2);
      for (int s : scores) {
        CHECK(s >= 1);
        CHECK(s <= 4);
      }
    }
  }
  CHECK(ids.size() == 40);

  const fs::path p1 = fs::temp_directory_path() / "ds_synth_a.jsonl";
  const fs::path p2 = fs::temp_directory_path() / "ds_synth_b.jsonl";
  save_corpus(synthesize_corpus(99, 25), p1);
  save_corpus(synthesize_corpus(99, 25), p2);
  CHECK(slurp(p1) == slurp(p2));
  save_corpus(synthesize_corpus(100, 25), p2);
  CHECK(slurp(p1) != slurp(p2));
  fs::remove(p1);
  fs::remove(p2);
}

TEST_CASE("synthetic politeness planting matches the generator contract") {
  // Noise-free raters expose the planted label as the median.
  SignalSpec spec;
  spec.rater_noise = 0.0;
  const auto corpus = synthesize_corpus(7, 120, spec);
  int seen_low = 0, seen_high = 0;
  for (const Dialog& d : corpus) {
    const int label = median_label(d.ratings.at(Construct::kAppropriateness));
    const int flags = politeness_flags(d).count();
    if (label == 4) {
      CHECK(flags >= 3);
      ++seen_high;
    }
    if (label == 1) {
      CHECK(flags <= 1);
      ++seen_low;
    }
  }
  CHECK(seen_low > 0);
  CHECK(seen_high > 0);
}

TEST_CASE("fold CSV export/import round trip") {
  std::vector<Dialog> dialogs;
  std::vector<ScoredDialog> scored;
  for (int i = 0; i < 12; ++i) dialogs.push_back(make_dialog("d" + std::to_string(i), {2, 2, 2}));
  for (const Dialog& d : dialogs) scored.push_back({&d, 2});
  const FoldAssignment fa = kfold(scored, 4, 5);
  const fs::path p = fs::temp_directory_path() / "ds_folds.csv";
  save_folds_csv(fa, p);
  const FoldAssignment back = load_folds_csv(p);
  CHECK(back.membership == fa.membership);
  CHECK(back.k == 4);
  fs::remove(p);
}
