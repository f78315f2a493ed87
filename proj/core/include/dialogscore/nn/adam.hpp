#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "dialogscore/nn/tensor.hpp"

namespace dialogscore::nn {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Bias-corrected Adam over a fixed parameter list. Moment buffers are laid
// out per parameter in registration order; the same list (same shapes, same
// order) must be passed to every step().
class Adam {
 public:
  explicit Adam(std::span<Parameter* const> params, AdamConfig cfg = {});

  void step(std::span<Parameter* const> params);
  std::size_t step_count() const { return step_; }
  const AdamConfig& config() const { return cfg_; }

 private:
  AdamConfig cfg_;
  std::size_t step_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

}  // namespace dialogscore::nn
