#pragma once

#include <cmath>
#include <cstddef>
#include <span>

#include "cmrlab/tensor.hpp"

namespace cmrlab {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Bias-corrected Adam update in place, using each parameter's own step counter.
inline void adam_step(std::span<Parameter* const> params, double lr, const AdamConfig& cfg = {}) {
  for (Parameter* p : params) {
    ++p->adam_steps;
    const double t = static_cast<double>(p->adam_steps);
    const double c1 = 1.0 - std::pow(cfg.beta1, t);
    const double c2 = 1.0 - std::pow(cfg.beta2, t);
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const double g = p->grad[i];
      double& m = p->first_moment[i];
      double& v = p->second_moment[i];
      m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
      v = cfg.beta2 * v + (1.0 - cfg.beta2) * g * g;
      const double m_hat = m / c1;
      const double v_hat = v / c2;
      p->value[i] -= lr * m_hat / (std::sqrt(v_hat) + cfg.eps);
    }
  }
}

// lr0 for the first `constant_steps` steps, then linear decay reaching exactly 0
// at step constant_steps + decay_steps (and staying there).
inline double lr_schedule(std::size_t step, std::size_t constant_steps, std::size_t decay_steps, double lr0) {
  if (step < constant_steps) return lr0;
  const std::size_t into = step - constant_steps;
  if (into >= decay_steps) return 0.0;
  return lr0 * static_cast<double>(decay_steps - into) / static_cast<double>(decay_steps);
}

}  // namespace cmrlab
