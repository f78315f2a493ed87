#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "dialogscore/features.hpp"
#include "dialogscore/fusion.hpp"

namespace dialogscore {

// Multiclass linear classifier over sparse features, trained by minimizing
//   mean softmax cross-entropy + (l2/2)*||W||_F^2
// with full-batch gradient descent and Armijo backtracking. Deterministic
// from zero init; the bias is not regularized.
struct LinearModel {
  std::size_t n_features = 0;
  std::vector<double> weights;  // 4 x n_features, row-major
  std::array<double, 4> bias{};
  std::uint64_t space_fingerprint = 0;

  void save_json(const std::filesystem::path& path) const;
  static LinearModel load_json(const std::filesystem::path& path);
};

struct LinearTrainOptions {
  double grad_tol = 1e-6;  // stop when the gradient infinity norm drops below
  int max_iters = 500;
};

struct LinearTrainResult {
  LinearModel model;
  std::vector<double> loss_trace;  // loss after each accepted step
  bool converged = false;
};

LinearTrainResult train_linear(std::span<const FeatureVector> x, std::span<const int> labels,
                               double l2, const LinearTrainOptions& opts = {});

// The training objective and (optionally) its gradient at (weights, bias);
// labels are 1..4, weights row-major 4 x n_features. Public so gradient
// checks can drive it directly.
double linear_objective(std::span<const FeatureVector> x, std::span<const int> labels,
                        std::size_t n_features, double l2, std::span<const double> weights,
                        const std::array<double, 4>& bias, std::vector<double>* grad_w = nullptr,
                        std::array<double, 4>* grad_b = nullptr);

Posterior predict_proba(const LinearModel& model, const FeatureVector& x);
int predict_label(const LinearModel& model, const FeatureVector& x);

struct GridSpec {
  std::vector<double> l2_values = {1e-3, 1e-2, 1e-1, 1.0, 10.0};
};

struct GridSearchResult {
  double best_l2 = 0.0;
  LinearModel model;                        // trained at best_l2 on the train part
  std::vector<std::pair<double, double>> dev_scores;  // (l2, dev QWK) per candidate
};

// Trains one model per grid value on (train_x, train_y), scores dev QWK, and
// returns the argmax; ties go to the smaller l2. Candidates that fail to
// train are skipped; all failing is an error.
GridSearchResult grid_search(std::span<const FeatureVector> train_x, std::span<const int> train_y,
                             std::span<const FeatureVector> dev_x, std::span<const int> dev_y,
                             const GridSpec& grid = {}, const LinearTrainOptions& opts = {});

}  // namespace dialogscore
