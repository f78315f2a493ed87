#include "dialogscore/nn/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "dialogscore/prng.hpp"

namespace dialogscore::nn {

double grad_check(const LossFn& loss, std::span<Parameter* const> params,
                  const GradCheckOptions& opts) {
  const double f1 = loss(false);
  const double f2 = loss(false);
  if (f1 != f2)
    throw std::logic_error("grad_check: closure is non-deterministic (" + std::to_string(f1) +
                           " vs " + std::to_string(f2) + ")");

  for (Parameter* p : params) p->zero_grad();
  loss(true);

  Prng rng(derive_seed(opts.seed, 0x67726164));
  double max_rel = 0.0;
  for (Parameter* p : params) {
    std::vector<std::size_t> coords(p->size());
    std::iota(coords.begin(), coords.end(), 0);
    if (coords.size() > opts.max_coords_per_param) {
      rng.shuffle(coords);
      coords.resize(opts.max_coords_per_param);
    }
    for (std::size_t c : coords) {
      const double saved = p->value[c];
      p->value[c] = saved + opts.eps;
      const double fp = loss(false);
      p->value[c] = saved - opts.eps;
      const double fm = loss(false);
      p->value[c] = saved;
      const double numeric = (fp - fm) / (2.0 * opts.eps);
      const double analytic = p->grad[c];
      const double rel =
          std::abs(analytic - numeric) / std::max(1e-8, std::abs(analytic) + std::abs(numeric));
      max_rel = std::max(max_rel, rel);
    }
  }
  return max_rel;
}

}  // namespace dialogscore::nn
