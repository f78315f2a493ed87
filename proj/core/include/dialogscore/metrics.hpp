#pragma once

#include <optional>
#include <span>
#include <vector>

namespace dialogscore {

// Fraction of exact matches.
double accuracy(std::span<const int> pred, std::span<const int> gold);

// Quadratic weighted kappa over labels 1..categories:
//   1 - sum(w*O) / sum(w*E),  w_ij = (i-j)^2/(K-1)^2,
// O the observed confusion matrix, E the outer product of marginals scaled
// to N. A zero denominator with a zero numerator (everything concentrated on
// one diagonal cell) is defined as 1.0; a zero denominator otherwise throws.
double qwk(std::span<const int> pred, std::span<const int> gold, int categories = 4);

// items x raters score matrix; empty cells mark missing ratings.
class RatingMatrix {
 public:
  RatingMatrix(std::size_t items, std::size_t raters);

  std::size_t items() const { return items_; }
  std::size_t raters() const { return raters_; }
  std::optional<int>& at(std::size_t item, std::size_t rater);
  const std::optional<int>& at(std::size_t item, std::size_t rater) const;

  // All columns of one rater / all ratings of one item.
  std::vector<std::optional<int>> item_row(std::size_t item) const;

 private:
  std::size_t items_, raters_;
  std::vector<std::optional<int>> cells_;
};

// Multi-rater generalization of Cohen's kappa (Conger's exact correction):
// observed agreement averaged over all rater pairs vs chance agreement from
// per-rater marginal category proportions. Requires >= 2 raters and a
// complete matrix; the degenerate all-one-category matrix is defined as 1.0.
double conger_kappa(const RatingMatrix& ratings);

// Krippendorff's alpha with the ordinal difference function, computed via
// the coincidence matrix. Missing ratings allowed; items with fewer than two
// ratings are excluded. Degenerate single-valued data is defined as 1.0.
double krippendorff_alpha(const RatingMatrix& ratings);

}  // namespace dialogscore
