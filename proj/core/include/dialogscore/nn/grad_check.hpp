#pragma once

#include <functional>
#include <span>

#include "dialogscore/nn/tensor.hpp"

namespace dialogscore::nn {

// Evaluates the model loss at the current parameter values. When
// `accumulate_grads` is true the closure must also run backward() so that
// analytic gradients land in Parameter::grad. The closure must be
// deterministic (dropout off or re-seeded identically per call).
using LossFn = std::function<double(bool accumulate_grads)>;

struct GradCheckOptions {
  double eps = 1e-5;
  // Coordinates checked per parameter; all of them when the parameter is
  // smaller than this.
  std::size_t max_coords_per_param = 64;
  std::uint64_t seed = 0;
};

// Central-difference check. Returns the max over sampled coordinates of
//   |analytic - numeric| / max(1e-8, |analytic| + |numeric|).
// Throws if two forward evaluations disagree (non-deterministic closure).
double grad_check(const LossFn& loss, std::span<Parameter* const> params,
                  const GradCheckOptions& opts = {});

}  // namespace dialogscore::nn
