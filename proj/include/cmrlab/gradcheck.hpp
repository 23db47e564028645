#pragma once

// Central finite-difference verification of recorded gradients.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "cmrlab/autodiff.hpp"
#include "cmrlab/error.hpp"

namespace cmrlab {

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t worst_input = 0;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t coordinates = 0;
  // Perturbed evaluations whose non-smooth branch pattern differed from the base point,
  // i.e. where the central difference straddled a kink and is not a valid oracle.
  std::size_t kink_crossings = 0;
};

// Evaluates `fn` while recording the branch taken by every non-smooth op.
template <class Fn>
double evaluate_with_branches(const Fn& fn, std::vector<std::uint8_t>& pattern) {
  pattern.clear();
  auto* saved = detail::branch_log;
  detail::branch_log = &pattern;
  try {
    const double v = fn();
    detail::branch_log = saved;
    return v;
  } catch (...) {
    detail::branch_log = saved;
    throw;
  }
}

// |analytic - numeric| / max(|analytic|, |numeric|, 1e-8)
inline double gradient_rel_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-8});
}

// Compares analytic gradients against (f(x+h) - f(x-h)) / 2h, one coordinate at a time.
// `evaluate` must recompute the scalar from the current contents of `values`.
inline void accumulate_grad_check(GradCheckResult& result, std::size_t input_index, std::span<double> values,
                                  std::span<const double> analytic, const std::function<double()>& evaluate,
                                  double h = 1e-5) {
  std::vector<std::uint8_t> base, probe;
  evaluate_with_branches(evaluate, base);
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double saved = values[i];
    values[i] = saved + h;
    const double plus = evaluate_with_branches(evaluate, probe);
    bool crossed = probe != base;
    values[i] = saved - h;
    const double minus = evaluate_with_branches(evaluate, probe);
    crossed = crossed || probe != base;
    values[i] = saved;
    if (crossed) ++result.kink_crossings;
    if (!std::isfinite(plus) || !std::isfinite(minus) || !std::isfinite(analytic[i])) {
      throw NumericError("grad_check: non-finite value at input " + std::to_string(input_index) + ", coordinate " +
                         std::to_string(i));
    }
    const double numeric = (plus - minus) / (2.0 * h);
    const double err = gradient_rel_error(analytic[i], numeric);
    ++result.coordinates;
    if (err > result.max_rel_error || result.coordinates == 1) {
      result.max_rel_error = err;
      result.worst_input = input_index;
      result.worst_index = i;
      result.worst_analytic = analytic[i];
      result.worst_numeric = numeric;
    }
  }
}

using GraphFn = std::function<Var(Tape&, const std::vector<Var>&)>;

// Builds `fn` on differentiable leaves holding `inputs`, back-propagates, and checks every
// input coordinate. The optional `perturb` hook edits analytic gradients before comparison
// (used to confirm the checker notices corrupted gradients).
inline GradCheckResult grad_check(const GraphFn& fn, std::vector<Tensor> inputs, double h = 1e-5,
                                  const std::function<void(std::vector<Tensor>&)>& perturb = {}) {
  std::vector<Tensor> analytic;
  {
    Tape tape;
    std::vector<Var> vars;
    for (const auto& t : inputs) vars.push_back(tape.variable(t));
    Var out = fn(tape, vars);
    tape.backward(out);
    for (const auto& v : vars) analytic.push_back(tape.grad(v));
  }
  if (perturb) perturb(analytic);
  auto evaluate = [&]() {
    Tape tape;
    std::vector<Var> vars;
    for (const auto& t : inputs) vars.push_back(tape.constant(t));
    return fn(tape, vars).value()[0];
  };
  GradCheckResult result;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    accumulate_grad_check(result, k, inputs[k].values(), analytic[k].values(), evaluate, h);
  }
  return result;
}

}  // namespace cmrlab
