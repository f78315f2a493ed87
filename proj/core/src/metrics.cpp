#include "dialogscore/metrics.hpp"

#include <cmath>
#include <map>
#include <stdexcept>
#include <string>

namespace dialogscore {

double accuracy(std::span<const int> pred, std::span<const int> gold) {
  if (pred.size() != gold.size())
    throw std::invalid_argument("accuracy: length mismatch " + std::to_string(pred.size()) +
                                " vs " + std::to_string(gold.size()));
  if (pred.empty()) throw std::invalid_argument("accuracy of empty label lists");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < pred.size(); ++i)
    if (pred[i] == gold[i]) ++hits;
  return static_cast<double>(hits) / static_cast<double>(pred.size());
}

double qwk(std::span<const int> pred, std::span<const int> gold, int categories) {
  if (pred.size() != gold.size()) throw std::invalid_argument("qwk: length mismatch");
  if (pred.empty()) throw std::invalid_argument("qwk of empty label lists");
  if (categories < 2) throw std::invalid_argument("qwk needs >= 2 categories");
  const std::size_t K = static_cast<std::size_t>(categories);

  std::vector<double> observed(K * K, 0.0);
  std::vector<double> pred_marginal(K, 0.0), gold_marginal(K, 0.0);
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const int p = pred[i], g = gold[i];
    if (p < 1 || p > categories || g < 1 || g > categories)
      throw std::invalid_argument("qwk: label outside 1.." + std::to_string(categories));
    observed[static_cast<std::size_t>(p - 1) * K + static_cast<std::size_t>(g - 1)] += 1.0;
    pred_marginal[static_cast<std::size_t>(p - 1)] += 1.0;
    gold_marginal[static_cast<std::size_t>(g - 1)] += 1.0;
  }

  const double n = static_cast<double>(pred.size());
  const double denom_scale = static_cast<double>((categories - 1) * (categories - 1));
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < K; ++i)
    for (std::size_t j = 0; j < K; ++j) {
      const double di = static_cast<double>(i) - static_cast<double>(j);
      const double w = di * di / denom_scale;
      num += w * observed[i * K + j];
      den += w * pred_marginal[i] * gold_marginal[j] / n;
    }
  if (den == 0.0) {
    if (num == 0.0) return 1.0;  // all mass on one diagonal cell
    throw std::domain_error("qwk: zero expected disagreement with nonzero observed disagreement");
  }
  return 1.0 - num / den;
}

RatingMatrix::RatingMatrix(std::size_t items, std::size_t raters)
    : items_(items), raters_(raters), cells_(items * raters) {}

std::optional<int>& RatingMatrix::at(std::size_t item, std::size_t rater) {
  return cells_.at(item * raters_ + rater);
}

const std::optional<int>& RatingMatrix::at(std::size_t item, std::size_t rater) const {
  return cells_.at(item * raters_ + rater);
}

std::vector<std::optional<int>> RatingMatrix::item_row(std::size_t item) const {
  std::vector<std::optional<int>> row(raters_);
  for (std::size_t r = 0; r < raters_; ++r) row[r] = at(item, r);
  return row;
}

double conger_kappa(const RatingMatrix& ratings) {
  const std::size_t R = ratings.raters();
  const std::size_t N = ratings.items();
  if (R < 2) throw std::invalid_argument("conger_kappa requires at least 2 raters");
  if (N == 0) throw std::invalid_argument("conger_kappa requires at least 1 item");

  std::map<int, std::size_t> category_index;
  for (std::size_t i = 0; i < N; ++i)
    for (std::size_t r = 0; r < R; ++r) {
      const auto& cell = ratings.at(i, r);
      if (!cell)
        throw std::invalid_argument(
            "conger_kappa does not handle missing ratings (use krippendorff_alpha)");
      category_index.emplace(*cell, category_index.size());
    }
  const std::size_t C = category_index.size();
  if (C == 1) return 1.0;  // single category used by everyone

  // Observed: mean over items of agreeing pairs / total pairs.
  double p_o = 0.0;
  for (std::size_t i = 0; i < N; ++i) {
    std::vector<double> counts(C, 0.0);
    for (std::size_t r = 0; r < R; ++r) counts[category_index.at(*ratings.at(i, r))] += 1.0;
    double agreeing = 0.0;
    for (double c : counts) agreeing += c * (c - 1.0);
    p_o += agreeing / (static_cast<double>(R) * (static_cast<double>(R) - 1.0));
  }
  p_o /= static_cast<double>(N);

  // Chance: mean over rater pairs of the product of per-rater marginals.
  std::vector<std::vector<double>> marginals(R, std::vector<double>(C, 0.0));
  for (std::size_t r = 0; r < R; ++r) {
    for (std::size_t i = 0; i < N; ++i) marginals[r][category_index.at(*ratings.at(i, r))] += 1.0;
    for (double& m : marginals[r]) m /= static_cast<double>(N);
  }
  double p_e = 0.0;
  for (std::size_t g = 0; g < R; ++g)
    for (std::size_t h = 0; h < R; ++h) {
      if (g == h) continue;
      for (std::size_t c = 0; c < C; ++c) p_e += marginals[g][c] * marginals[h][c];
    }
  p_e /= static_cast<double>(R) * (static_cast<double>(R) - 1.0);

  if (p_e == 1.0) return 1.0;
  return (p_o - p_e) / (1.0 - p_e);
}

double krippendorff_alpha(const RatingMatrix& ratings) {
  const std::size_t R = ratings.raters();
  const std::size_t N = ratings.items();

  // Collect codable items (>= 2 ratings) and the value set.
  std::map<int, std::size_t> value_index;
  std::vector<std::vector<int>> codable;
  for (std::size_t i = 0; i < N; ++i) {
    std::vector<int> vals;
    for (std::size_t r = 0; r < R; ++r)
      if (ratings.at(i, r)) vals.push_back(*ratings.at(i, r));
    if (vals.size() >= 2) {
      for (int v : vals) value_index.emplace(v, 0);
      codable.push_back(std::move(vals));
    }
  }
  if (codable.empty())
    throw std::invalid_argument("krippendorff_alpha: no item has two or more ratings");
  std::size_t next = 0;
  for (auto& [v, idx] : value_index) idx = next++;
  const std::size_t C = value_index.size();
  if (C == 1) return 1.0;

  // Coincidence matrix: each ordered pair of distinct ratings within an item
  // contributes 1/(m_u - 1).
  std::vector<double> coincidence(C * C, 0.0);
  for (const auto& vals : codable) {
    const double m = static_cast<double>(vals.size());
    for (std::size_t a = 0; a < vals.size(); ++a)
      for (std::size_t b = 0; b < vals.size(); ++b) {
        if (a == b) continue;
        coincidence[value_index.at(vals[a]) * C + value_index.at(vals[b])] += 1.0 / (m - 1.0);
      }
  }
  std::vector<double> marginal(C, 0.0);
  double n_total = 0.0;
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t k = 0; k < C; ++k) {
      marginal[c] += coincidence[c * C + k];
      n_total += coincidence[c * C + k];
    }

  // Ordinal difference: sum of marginals between the two values minus half
  // of each endpoint, squared. Values iterate in ascending order because
  // value_index is an ordered map.
  std::vector<int> values;
  values.reserve(C);
  for (const auto& [v, idx] : value_index) values.push_back(v);
  const auto ordinal_delta_sq = [&](std::size_t ci, std::size_t ck) {
    if (ci == ck) return 0.0;
    const std::size_t lo = std::min(ci, ck), hi = std::max(ci, ck);
    double s = 0.0;
    for (std::size_t g = lo; g <= hi; ++g) s += marginal[g];
    s -= (marginal[lo] + marginal[hi]) / 2.0;
    return s * s;
  };

  double d_o = 0.0, d_e = 0.0;
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t k = 0; k < C; ++k) {
      const double dsq = ordinal_delta_sq(c, k);
      d_o += coincidence[c * C + k] * dsq;
      d_e += marginal[c] * marginal[k] * dsq;
    }
  if (d_e == 0.0) return 1.0;
  return 1.0 - (n_total - 1.0) * d_o / d_e;
}

}  // namespace dialogscore
