#include <doctest.h>

#include <stdexcept>

#include <cmath>
#include <filesystem>
#include <map>

#include "dialogscore/fusion.hpp"
#include "dialogscore/metrics.hpp"
#include "dialogscore/prng.hpp"

using namespace dialogscore;

namespace {

// Direct pairwise formulation of quadratic weighted kappa, no confusion
// matrix: an independent route for the oracle-equivalence checks.
double qwk_oracle(std::span<const int> pred, std::span<const int> gold, int K = 4) {
  const auto w = [K](int a, int b) {
    const double d = a - b;
    return d * d / static_cast<double>((K - 1) * (K - 1));
  };
  const std::size_t n = pred.size();
  double observed = 0.0;
  for (std::size_t i = 0; i < n; ++i) observed += w(pred[i], gold[i]);
  observed /= static_cast<double>(n);
  double expected = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) expected += w(pred[i], gold[j]);
  expected /= static_cast<double>(n) * static_cast<double>(n);
  if (expected == 0.0) return 1.0;
  return 1.0 - observed / expected;
}

double cohen_kappa_oracle(std::span<const int> r1, std::span<const int> r2) {
  const std::size_t n = r1.size();
  double p_o = 0.0;
  for (std::size_t i = 0; i < n; ++i) p_o += r1[i] == r2[i] ? 1.0 : 0.0;
  p_o /= static_cast<double>(n);
  std::map<int, double> m1, m2;
  for (std::size_t i = 0; i < n; ++i) {
    m1[r1[i]] += 1.0 / static_cast<double>(n);
    m2[r2[i]] += 1.0 / static_cast<double>(n);
  }
  double p_e = 0.0;
  for (const auto& [c, p] : m1)
    if (m2.count(c)) p_e += p * m2.at(c);
  if (p_e == 1.0) return 1.0;
  return (p_o - p_e) / (1.0 - p_e);
}

// Krippendorff alpha by explicit pair enumeration (no coincidence matrix).
double kripp_oracle(const std::vector<std::vector<int>>& codable_items) {
  std::map<int, double> freq;
  double n = 0.0;
  for (const auto& item : codable_items)
    for (int v : item) {
      freq[v] += 1.0;
      n += 1.0;
    }
  std::vector<int> values;
  for (const auto& [v, f] : freq) values.push_back(v);
  const auto delta_sq = [&](int a, int b) {
    if (a == b) return 0.0;
    const int lo = std::min(a, b), hi = std::max(a, b);
    double s = 0.0;
    for (int v : values)
      if (v >= lo && v <= hi) s += freq.at(v);
    s -= (freq.at(lo) + freq.at(hi)) / 2.0;
    return s * s;
  };

  double d_o = 0.0;
  for (const auto& item : codable_items) {
    double within = 0.0;
    for (std::size_t i = 0; i < item.size(); ++i)
      for (std::size_t j = 0; j < item.size(); ++j)
        if (i != j) within += delta_sq(item[i], item[j]);
    d_o += within / static_cast<double>(item.size() - 1);
  }
  d_o /= n;

  double d_e = 0.0;
  for (int a : values)
    for (int b : values) d_e += freq.at(a) * freq.at(b) * delta_sq(a, b);
  d_e /= n * (n - 1.0);
  if (d_e == 0.0) return 1.0;
  return 1.0 - d_o / d_e;
}

RatingMatrix matrix_from(const std::vector<std::vector<std::optional<int>>>& rows) {
  RatingMatrix rm(rows.size(), rows.front().size());
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t r = 0; r < rows[i].size(); ++r)
      if (rows[i][r]) rm.at(i, r) = rows[i][r];
  return rm;
}

PredictionSet make_set(std::string id, const std::map<std::string, Posterior>& posts) {
  PredictionSet s;
  s.system_id = std::move(id);
  s.posteriors = posts;
  return s;
}

}  // namespace

TEST_CASE("accuracy basics") {
  const std::vector<int> a = {1, 2, 3, 4}, b = {1, 2, 3, 3};
  CHECK(accuracy(a, a) == doctest::Approx(1.0));
  CHECK(accuracy(a, b) == doctest::Approx(0.75));
  const std::vector<int> disjoint = {4, 3, 2, 1};
  CHECK(accuracy(std::vector<int>{1, 2}, std::vector<int>{2, 1}) == doctest::Approx(0.0));
  CHECK_THROWS_AS(accuracy(a, std::vector<int>{1}), std::invalid_argument);
  (void)disjoint;
}

TEST_CASE("qwk: perfect, reversed, oracle equivalence, symmetry") {
  const std::vector<int> order = {1, 2, 3, 4};
  CHECK(qwk(order, order) == doctest::Approx(1.0));
  const std::vector<int> reversed = {4, 3, 2, 1};
  CHECK(qwk(order, reversed) == doctest::Approx(-1.0).epsilon(1e-12));

  Prng rng(1234);
  for (int rep = 0; rep < 200; ++rep) {
    const std::size_t n = 5 + rng.below(40);
    std::vector<int> pred(n), gold(n);
    for (std::size_t i = 0; i < n; ++i) {
      pred[i] = rng.range(1, 4);
      gold[i] = rng.range(1, 4);
    }
    double ours;
    try {
      ours = qwk(pred, gold);
    } catch (const std::domain_error&) {
      continue;
    }
    CHECK(std::abs(ours - qwk_oracle(pred, gold)) < 1e-12);
    CHECK(std::abs(qwk(pred, gold) - qwk(gold, pred)) < 1e-12);
    CHECK(ours <= 1.0 + 1e-12);
    CHECK(ours >= -1.0 - 1e-12);
  }

  // Everything on one diagonal cell: zero numerator over zero denominator.
  const std::vector<int> constant = {2, 2, 2};
  CHECK(qwk(constant, constant) == doctest::Approx(1.0));
}

TEST_CASE("conger kappa: perfect, two-rater Cohen reduction, degenerate, errors") {
  RatingMatrix perfect(4, 3);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t r = 0; r < 3; ++r) perfect.at(i, r) = static_cast<int>(i % 4) + 1;
  CHECK(conger_kappa(perfect) == doctest::Approx(1.0));

  Prng rng(99);
  for (int rep = 0; rep < 100; ++rep) {
    const std::size_t n = 50;
    RatingMatrix rm(n, 2);
    std::vector<int> r1(n), r2(n);
    for (std::size_t i = 0; i < n; ++i) {
      r1[i] = rng.range(1, 4);
      r2[i] = rng.chance(0.6) ? r1[i] : rng.range(1, 4);
      rm.at(i, 0) = r1[i];
      rm.at(i, 1) = r2[i];
    }
    CHECK(std::abs(conger_kappa(rm) - cohen_kappa_oracle(r1, r2)) < 1e-12);
  }

  RatingMatrix single(3, 3);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t r = 0; r < 3; ++r) single.at(i, r) = 2;
  CHECK(conger_kappa(single) == doctest::Approx(1.0));

  CHECK_THROWS_AS(conger_kappa(RatingMatrix(3, 1)), std::invalid_argument);
  RatingMatrix missing(2, 2);
  missing.at(0, 0) = 1;
  missing.at(0, 1) = 2;
  missing.at(1, 0) = 3;  // (1,1) missing
  CHECK_THROWS_AS(conger_kappa(missing), std::invalid_argument);
}

TEST_CASE("krippendorff alpha: perfect, oracle equivalence with missingness, disagreement") {
  RatingMatrix perfect(5, 3);
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t r = 0; r < 3; ++r) perfect.at(i, r) = static_cast<int>(i % 3) + 1;
  CHECK(krippendorff_alpha(perfect) == doctest::Approx(1.0));

  Prng rng(2024);
  int tested = 0;
  for (int rep = 0; rep < 200 && tested < 100; ++rep) {
    const std::size_t items = 6 + rng.below(15);
    const std::size_t raters = 2 + rng.below(4);
    RatingMatrix rm(items, raters);
    std::vector<std::vector<int>> codable;
    for (std::size_t i = 0; i < items; ++i) {
      std::vector<int> vals;
      for (std::size_t r = 0; r < raters; ++r) {
        if (rng.chance(0.1)) continue;  // missing
        const int v = rng.range(1, 4);
        rm.at(i, r) = v;
        vals.push_back(v);
      }
      if (vals.size() >= 2) codable.push_back(vals);
    }
    if (codable.empty()) continue;
    std::map<int, int> distinct;
    for (const auto& item : codable)
      for (int v : item) distinct[v] = 1;
    if (distinct.size() < 2) continue;
    CHECK(std::abs(krippendorff_alpha(rm) - kripp_oracle(codable)) < 1e-12);
    ++tested;
  }
  CHECK(tested >= 100);

  // Two raters, two items, maximal ordinal disagreement.
  const RatingMatrix cross = matrix_from({{1, 4}, {4, 1}});
  CHECK(krippendorff_alpha(cross) < 0.0);
  CHECK(krippendorff_alpha(cross) == doctest::Approx(-0.5));

  RatingMatrix empty(3, 3);
  empty.at(0, 0) = 1;
  empty.at(1, 1) = 2;  // every item has < 2 ratings
  CHECK_THROWS_AS(krippendorff_alpha(empty), std::invalid_argument);
}

TEST_CASE("posterior argmax tie breaks to the lower label") {
  CHECK(posterior_argmax_label({0.5, 0.5, 0.0, 0.0}) == 1);
  CHECK(posterior_argmax_label({0.0, 0.5, 0.0, 0.5}) == 2);
  CHECK(posterior_argmax_label({0.1, 0.2, 0.3, 0.4}) == 4);
}

TEST_CASE("fuse: averaging, idempotence, permutation invariance, coverage errors") {
  const Posterior a = {0.6, 0.4, 0.0, 0.0};
  const Posterior b = {0.2, 0.8, 0.0, 0.0};
  const auto s1 = make_set("one", {{"d1", a}});
  const auto s2 = make_set("two", {{"d1", b}});

  const std::vector<PredictionSet> both = {s1, s2};
  const PredictionSet fused = fuse(both);
  CHECK(fused.posteriors.at("d1")[0] == doctest::Approx(0.4));
  CHECK(fused.posteriors.at("d1")[1] == doctest::Approx(0.6));
  CHECK(posterior_argmax_label(fused.posteriors.at("d1")) == 2);

  const std::vector<PredictionSet> self = {s1, s1};
  const PredictionSet same = fuse(self);
  for (std::size_t i = 0; i < 4; ++i)
    CHECK(same.posteriors.at("d1")[i] == doctest::Approx(s1.posteriors.at("d1")[i]));

  const std::vector<PredictionSet> swapped = {s2, s1};
  const PredictionSet fused2 = fuse(swapped);
  for (std::size_t i = 0; i < 4; ++i)
    CHECK(fused.posteriors.at("d1")[i] == doctest::Approx(fused2.posteriors.at("d1")[i]));

  // Two one-hot posteriors on labels 2 and 4: tie resolves to label 2.
  const auto h2 = make_set("h2", {{"d", {0.0, 1.0, 0.0, 0.0}}});
  const auto h4 = make_set("h4", {{"d", {0.0, 0.0, 0.0, 1.0}}});
  const std::vector<PredictionSet> hs = {h2, h4};
  CHECK(posterior_argmax_label(fuse(hs).posteriors.at("d")) == 2);

  const auto extra = make_set("extra", {{"d1", a}, {"d2", b}});
  const std::vector<PredictionSet> bad = {s1, extra};
  CHECK_THROWS_AS(fuse(bad), std::invalid_argument);
}

TEST_CASE("best_subset: singleton, dominance, oracle re-enumeration, tie rules") {
  Prng rng(555);
  const std::size_t n_dialogs = 40;
  std::map<std::string, int> gold;
  for (std::size_t i = 0; i < n_dialogs; ++i)
    gold.emplace("d" + std::to_string(100 + i), rng.range(1, 4));

  // Three systems with complementary noise.
  const auto noisy_system = [&](std::string id, double flip, std::uint64_t seed) {
    Prng r(seed);
    PredictionSet s;
    s.system_id = std::move(id);
    for (const auto& [did, label] : gold) {
      int out = label;
      if (r.chance(flip)) out = r.range(1, 4);
      Posterior p = {0.05, 0.05, 0.05, 0.05};
      p[static_cast<std::size_t>(out - 1)] = 0.85;
      s.posteriors.emplace(did, p);
    }
    return s;
  };
  std::vector<PredictionSet> systems = {noisy_system("alpha", 0.35, 1),
                                        noisy_system("beta", 0.35, 2),
                                        noisy_system("gamma", 0.35, 3)};

  const std::vector<PredictionSet> one = {systems[0]};
  const SubsetSearchResult single = best_subset(one, gold);
  CHECK(single.system_ids == std::vector<std::string>{"alpha"});

  const SubsetSearchResult best = best_subset(systems, gold);

  // Never worse than any singleton.
  for (const PredictionSet& s : systems) {
    const std::vector<PredictionSet> solo = {s};
    CHECK(best.fused_qwk >= best_subset(solo, gold).fused_qwk - 1e-12);
  }

  // Independent re-enumeration of all subsets.
  double oracle_best = -2.0;
  std::vector<std::string> oracle_ids;
  for (unsigned mask = 1; mask < 8; ++mask) {
    std::vector<PredictionSet> members;
    std::vector<std::string> ids;
    for (unsigned i = 0; i < 3; ++i)
      if (mask & (1u << i)) {
        members.push_back(systems[i]);
        ids.push_back(systems[i].system_id);
      }
    std::sort(ids.begin(), ids.end());
    const PredictionSet f = fuse(members);
    std::vector<int> pred, truth;
    for (const auto& [did, label] : gold) {
      pred.push_back(posterior_argmax_label(f.posteriors.at(did)));
      truth.push_back(label);
    }
    const double score = qwk(pred, truth);
    if (score > oracle_best ||
        (score == oracle_best && (ids.size() < oracle_ids.size() ||
                                  (ids.size() == oracle_ids.size() && ids < oracle_ids)))) {
      oracle_best = score;
      oracle_ids = ids;
    }
  }
  CHECK(best.fused_qwk == doctest::Approx(oracle_best).epsilon(1e-12));
  CHECK(best.system_ids == oracle_ids);

  // Identical perfect systems: tie resolves to the smallest singleton id.
  PredictionSet p1, p2;
  p1.system_id = "aaa";
  p2.system_id = "bbb";
  for (const auto& [did, label] : gold) {
    Posterior p{};
    p[static_cast<std::size_t>(label - 1)] = 1.0;
    p1.posteriors.emplace(did, p);
    p2.posteriors.emplace(did, p);
  }
  const std::vector<PredictionSet> twins = {p2, p1};
  const SubsetSearchResult tie = best_subset(twins, gold);
  CHECK(tie.system_ids == std::vector<std::string>{"aaa"});
  CHECK(tie.fused_qwk == doctest::Approx(1.0));
}

TEST_CASE("prediction set validation and JSONL round trip") {
  PredictionSet bad;
  bad.system_id = "x";
  bad.posteriors.emplace("d", Posterior{0.5, 0.2, 0.2, 0.2});
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);

  PredictionSet ok;
  ok.system_id = "sys";
  Prng rng(8);
  for (int i = 0; i < 10; ++i) {
    Posterior p{};
    double total = 0.0;
    for (double& v : p) {
      v = rng.uniform(0.01, 1.0);
      total += v;
    }
    for (double& v : p) v /= total;
    ok.posteriors.emplace("d" + std::to_string(i), p);
  }
  const auto path = std::filesystem::temp_directory_path() / "ds_pred_roundtrip.jsonl";
  save_predictions_jsonl(ok, path);
  const PredictionSet back = load_predictions_jsonl(path, "sys");
  REQUIRE(back.posteriors.size() == ok.posteriors.size());
  for (const auto& [id, p] : ok.posteriors)
    for (std::size_t i = 0; i < 4; ++i)
      CHECK(back.posteriors.at(id)[i] == doctest::Approx(p[i]).epsilon(1e-12));
  std::filesystem::remove(path);
}
