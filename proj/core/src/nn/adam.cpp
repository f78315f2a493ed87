#include "dialogscore/nn/adam.hpp"

#include <cmath>
#include <stdexcept>

namespace dialogscore::nn {

Adam::Adam(std::span<Parameter* const> params, AdamConfig cfg) : cfg_(cfg) {
  m_.reserve(params.size());
  v_.reserve(params.size());
  for (const Parameter* p : params) {
    m_.emplace_back(p->size(), 0.0);
    v_.emplace_back(p->size(), 0.0);
  }
}

void Adam::step(std::span<Parameter* const> params) {
  if (params.size() != m_.size())
    throw std::invalid_argument("adam step: parameter list size changed");
  ++step_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Parameter& p = *params[pi];
    if (p.size() != m_[pi].size())
      throw std::invalid_argument("adam step: shape of parameter '" + p.name + "' changed");
    auto& m = m_[pi];
    auto& v = v_[pi];
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double g = p.grad[i];
      m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g;
      v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g * g;
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      p.value[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
  }
}

}  // namespace dialogscore::nn
