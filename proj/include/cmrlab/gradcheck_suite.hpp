#pragma once

// Per-layer finite-difference checks used by the `gradcheck` command and the tests.

#include <algorithm>
#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "cmrlab/autodiff.hpp"
#include "cmrlab/cmcn.hpp"
#include "cmrlab/gradcheck.hpp"

namespace cmrlab {

inline constexpr double kGradCheckTolerance = 1e-4;
inline constexpr double kGradCheckStep = 1e-5;

// Optional corruption of analytic gradients (scales them by 1 + factor).
struct GradCheckOptions {
  double corrupt_factor = 0.0;
  double h = kGradCheckStep;
};

struct GradCheckCase {
  std::string name;
  std::function<GradCheckResult(std::uint64_t seed, const GradCheckOptions&)> run;
};

namespace detail {

inline Tensor random_tensor(Shape s, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor t(s);
  for (double& v : t.values()) v = u(rng);
  return t;
}

// Values in [-hi, -lo] U [lo, hi].
inline Tensor random_away_from_zero(Shape s, std::mt19937_64& rng, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::bernoulli_distribution sign(0.5);
  Tensor t(s);
  for (double& v : t.values()) v = sign(rng) ? u(rng) : -u(rng);
  return t;
}

inline std::function<void(std::vector<Tensor>&)> corruption(const GradCheckOptions& opt) {
  if (opt.corrupt_factor == 0.0) return {};
  return [f = opt.corrupt_factor](std::vector<Tensor>& grads) {
    for (auto& g : grads) {
      for (double& v : g.values()) v *= 1.0 + f;
    }
  };
}

// Scalar probe of a tensor-valued op: sum_i r_i y_i with fixed weights |r_i| in [0.5, 1].
inline GradCheckResult check_tensor_op(const std::function<Var(Tape&, const std::vector<Var>&)>& op,
                                       std::vector<Tensor> inputs, std::mt19937_64& rng,
                                       const GradCheckOptions& opt) {
  Shape out_shape;
  {
    Tape tape;
    std::vector<Var> vars;
    for (const auto& t : inputs) vars.push_back(tape.constant(t));
    out_shape = op(tape, vars).shape();
  }
  const Tensor weights = random_away_from_zero(out_shape, rng, 0.5, 1.0);
  const GraphFn fn = [&](Tape& tape, const std::vector<Var>& v) { return inner_product(op(tape, v), weights); };
  return grad_check(fn, std::move(inputs), opt.h, corruption(opt));
}

// Moves a freshly initialized model to a generic point: weights and biases uniform in
// [-scale, scale], normalization gains in [0.5, 1.5].
inline void randomize(ParameterSet& params, std::mt19937_64& rng, double scale) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (auto& p : params) {
    const bool gain = p.name.ends_with(".gain");
    for (double& v : p.value.values()) v = gain ? 1.0 + 0.5 * u(rng) : scale * u(rng);
  }
}

inline Tensor random_images(Shape s, std::mt19937_64& rng) { return random_tensor(s, rng, 0.1, 0.9); }

// Gradient of a model loss with respect to (a slice of) a parameter set.
inline void check_parameters(GradCheckResult& result, ParameterSet& params, std::size_t per_tensor,
                             const std::function<Var(Tape&, bool trainable)>& loss, const GradCheckOptions& opt) {
  params.zero_grad();
  {
    Tape tape;
    Var out = loss(tape, true);
    tape.backward(out);
  }
  const auto evaluate = [&]() {
    Tape tape;
    return loss(tape, false).value()[0];
  };
  std::size_t index = 0;
  for (auto& p : params) {
    Tensor analytic = p.grad;
    for (double& v : analytic.values()) v *= 1.0 + opt.corrupt_factor;
    const std::size_t n = std::min(per_tensor, p.value.size());
    accumulate_grad_check(result, index++, p.value.values().first(n), analytic.values().first(n), evaluate, opt.h);
  }
}

}  // namespace detail

inline std::vector<GradCheckCase> gradcheck_cases() {
  using detail::check_tensor_op;
  using detail::random_tensor;
  std::vector<GradCheckCase> cases;
  auto register_case = [&](std::string name, std::function<GradCheckResult(std::uint64_t, const GradCheckOptions&)> fn) {
    cases.push_back({std::move(name), std::move(fn)});
  };

  register_case("conv2d", [](std::uint64_t seed, const GradCheckOptions& opt) {
    std::mt19937_64 rng(seed);
    std::vector<Tensor> in = {random_tensor({2, 3, 8, 8}, rng), random_tensor({4, 3, 3, 3}, rng),
                              random_tensor({1, 4, 1, 1}, rng)};
    return check_tensor_op([](Tape&, const std::vector<Var>& v) { return conv2d(v[0], v[1], v[2], 1, 1); }, in,
                           rng, opt);
  });
  register_case("conv2d_stride2", [](std::uint64_t seed, const GradCheckOptions& opt) {
    std::mt19937_64 rng(seed);
    std::vector<Tensor> in = {random_tensor({2, 2, 9, 8}, rng), random_tensor({3, 2, 3, 3}, rng),
                              random_tensor({1, 3, 1, 1}, rng)};
    return check_tensor_op([](Tape&, const std::vector<Var>& v) { return conv2d(v[0], v[1], v[2], 2, 1); }, in,
                           rng, opt);
  });
  register_case("conv_transpose2d", [](std::uint64_t seed, const GradCheckOptions& opt) {
    std::mt19937_64 rng(seed);
    std::vector<Tensor> in = {random_tensor({2, 3, 4, 5}, rng), random_tensor({3, 2, 3, 3}, rng),
                              random_tensor({1, 2, 1, 1}, rng)};
    return check_tensor_op(
        [](Tape&, const std::vector<Var>& v) { return conv_transpose2d(v[0], v[1], v[2], 2, 1, 1); }, in, rng, opt);
  });
  register_case("instance_norm", [](std::uint64_t seed, const GradCheckOptions& opt) {
    std::mt19937_64 rng(seed);
    std::vector<Tensor> in = {random_tensor({2, 3, 5, 5}, rng), random_tensor({1, 3, 1, 1}, rng, 0.5, 1.5),
                              random_tensor({1, 3, 1, 1}, rng)};
    return check_tensor_op([](Tape&, const std::vector<Var>& v) { return instance_norm(v[0], v[1], v[2]); }, in,
                           rng, opt);
  });
  register_case("relu", [](std::uint64_t seed, const GradCheckOptions& opt) {
    std::mt19937_64 rng(seed);
    std::vector<Tensor> in = {detail::random_away_from_zero({2, 2, 4, 4}, rng, 1e-3, 2.0)};
    return check_tensor_op([](Tape&, const std::vector<Var>& v) { return relu(v[0]); }, in, rng, opt);
  });
  register_case("leaky_relu", [](std::uint64_t seed, const GradCheckOptions& opt) {
    std::mt19937_64 rng(seed);
    std::vector<Tensor> in = {detail::random_away_from_zero({2, 2, 4, 4}, rng, 1e-3, 2.0)};
    return check_tensor_op([](Tape&, const std::vector<Var>& v) { return leaky_relu(v[0], 0.2); }, in, rng, opt);
  });
  register_case("tanh", [](std::uint64_t seed, const GradCheckOptions& opt) {
    std::mt19937_64 rng(seed);
    std::vector<Tensor> in = {random_tensor({2, 2, 4, 4}, rng, -3.0, 3.0)};
    return check_tensor_op([](Tape&, const std::vector<Var>& v) { return tanh(v[0]); }, in, rng, opt);
  });
  register_case("sigmoid", [](std::uint64_t seed, const GradCheckOptions& opt) {
    std::mt19937_64 rng(seed);
    std::vector<Tensor> in = {random_tensor({2, 2, 4, 4}, rng, -4.0, 4.0)};
    return check_tensor_op([](Tape&, const std::vector<Var>& v) { return sigmoid(v[0]); }, in, rng, opt);
  });
  register_case("clamp", [](std::uint64_t seed, const GradCheckOptions& opt) {
    std::mt19937_64 rng(seed);
    // Inputs kept at least 1e-3 away from the bounds 0 and 1.
    Tensor x = random_tensor({2, 2, 4, 4}, rng, -0.5, 1.5);
    for (double& v : x.values()) {
      if (std::abs(v) < 1e-3 || std::abs(v - 1.0) < 1e-3) v += 0.01;
    }
    std::vector<Tensor> in = {x};
    return check_tensor_op([](Tape&, const std::vector<Var>& v) { return clamp(v[0], 0.0, 1.0); }, in, rng, opt);
  });
  register_case("add_scale", [](std::uint64_t seed, const GradCheckOptions& opt) {
    std::mt19937_64 rng(seed);
    std::vector<Tensor> in = {random_tensor({1, 2, 3, 3}, rng), random_tensor({1, 2, 3, 3}, rng)};
    return check_tensor_op(
        [](Tape&, const std::vector<Var>& v) { return add_scalar(scale(axpy(v[0], v[1], -0.7), 1.3), 0.25); }, in,
        rng, opt);
  });
  register_case("global_avg_pool", [](std::uint64_t seed, const GradCheckOptions& opt) {
    std::mt19937_64 rng(seed);
    std::vector<Tensor> in = {random_tensor({2, 3, 4, 5}, rng)};
    return check_tensor_op([](Tape&, const std::vector<Var>& v) { return global_avg_pool(v[0]); }, in, rng, opt);
  });
  register_case("mean_abs_diff", [](std::uint64_t seed, const GradCheckOptions& opt) {
    std::mt19937_64 rng(seed);
    Tensor a = random_tensor({1, 2, 4, 4}, rng);
    Tensor d = detail::random_away_from_zero(a.shape(), rng, 0.01, 1.0);
    Tensor b = a;
    for (std::size_t i = 0; i < b.size(); ++i) b[i] += d[i];
    const GraphFn fn = [](Tape&, const std::vector<Var>& v) { return mean_abs_diff(v[0], v[1]); };
    return grad_check(fn, {a, b}, opt.h, detail::corruption(opt));
  });
  register_case("bce", [](std::uint64_t seed, const GradCheckOptions& opt) {
    std::mt19937_64 rng(seed);
    std::vector<Tensor> in = {random_tensor({4, 1, 1, 1}, rng, 0.05, 0.95), random_tensor({4, 1, 1, 1}, rng, 0.05, 0.95)};
    const GraphFn fn = [](Tape&, const std::vector<Var>& v) {
      return add(bce(v[0], 1.0), scale(bce(v[1], 0.0), 0.7));
    };
    return grad_check(fn, in, opt.h, detail::corruption(opt));
  });
  register_case("sobel_layer", [](std::uint64_t seed, const GradCheckOptions& opt) {
    std::mt19937_64 rng(seed);
    std::vector<Tensor> in = {detail::random_images({2, 1, 6, 7}, rng)};
    // sum_i w_i |sobel_layer(x)_i|; the weights keep every true gradient coordinate away
    // from an exact integer cancellation to zero.
    const Tensor w = random_tensor({2, 2, 6, 7}, rng, 0.5, 1.5);
    const GraphFn fn = [w](Tape&, const std::vector<Var>& v) { return inner_product(abs(sobel_layer(v[0])), w); };
    return grad_check(fn, in, opt.h, detail::corruption(opt));
  });
  register_case("losses", [](std::uint64_t seed, const GradCheckOptions& opt) {
    std::mt19937_64 rng(seed);
    std::vector<Tensor> in = {detail::random_images({2, 1, 6, 6}, rng), random_tensor({2, 1, 1, 1}, rng, 0.1, 0.9)};
    const Tensor target = detail::random_images({2, 1, 6, 6}, rng);
    const GraphFn fn = [target](Tape& tape, const std::vector<Var>& v) {
      Var t = tape.constant(target);
      return total_loss(content_loss(v[0], t), generator_gan_loss(v[1]), edge_loss(v[0], t), LossWeights{});
    };
    return grad_check(fn, in, opt.h, detail::corruption(opt));
  });
  register_case("discriminator_input", [](std::uint64_t seed, const GradCheckOptions& opt) {
    std::mt19937_64 rng(seed);
    DiscriminatorConfig dc;
    dc.base_channels = 4;
    auto disc = std::make_shared<Discriminator>(dc, seed);
    detail::randomize(disc->parameters(), rng, 0.5);
    std::vector<Tensor> in = {detail::random_images({2, 1, 32, 32}, rng)};
    const GraphFn fn = [disc](Tape& tape, const std::vector<Var>& v) {
      return generator_gan_loss(disc->forward(tape, v[0], false));
    };
    return grad_check(fn, in, opt.h, detail::corruption(opt));
  });
  register_case("discriminator_params", [](std::uint64_t seed, const GradCheckOptions& opt) {
    std::mt19937_64 rng(seed);
    DiscriminatorConfig dc;
    dc.base_channels = 4;
    Discriminator disc(dc, seed);
    detail::randomize(disc.parameters(), rng, 0.5);
    const Tensor real = detail::random_images({2, 1, 32, 32}, rng);
    const Tensor fake = detail::random_images({2, 1, 32, 32}, rng);
    GradCheckResult result;
    detail::check_parameters(result, disc.parameters(), 24,
                             [&](Tape& tape, bool trainable) {
                               return discriminator_loss(disc.forward(tape, tape.constant(real), trainable),
                                                         disc.forward(tape, tape.constant(fake), trainable));
                             },
                             opt);
    return result;
  });
  register_case("generator_toy_8x8", [](std::uint64_t seed, const GradCheckOptions& opt) {
    std::mt19937_64 rng(seed);
    GeneratorConfig gc;
    gc.base_channels = 4;
    gc.n_resblocks = 1;
    Generator gen(gc, seed);
    detail::randomize(gen.parameters(), rng, 0.3);
    const Tensor blurred = detail::random_images({1, 1, 8, 8}, rng);
    const Tensor sharp = detail::random_images({1, 1, 8, 8}, rng);
    LossWeights w;
    w.lambda_gan = 0.0;  // the discriminator needs at least 16 x 16 inputs
    GradCheckResult result;
    detail::check_parameters(result, gen.parameters(), 24,
                             [&](Tape& tape, bool trainable) {
                               Var out = gen.forward(tape, tape.constant(blurred), trainable);
                               Var t = tape.constant(sharp);
                               return total_loss(content_loss(out, t), tape.constant(Tensor(Shape{}, 0.0)),
                                                 edge_loss(out, t), w);
                             },
                             opt);
    return result;
  });
  register_case("generator_toy_full_loss", [](std::uint64_t seed, const GradCheckOptions& opt) {
    std::mt19937_64 rng(seed);
    GeneratorConfig gc;
    gc.base_channels = 4;
    gc.n_resblocks = 1;
    Generator gen(gc, seed);
    detail::randomize(gen.parameters(), rng, 0.3);
    DiscriminatorConfig dc;
    dc.base_channels = 4;
    Discriminator disc(dc, seed + 1);
    detail::randomize(disc.parameters(), rng, 0.5);
    const Tensor blurred = detail::random_images({1, 1, 32, 32}, rng);
    const Tensor sharp = detail::random_images({1, 1, 32, 32}, rng);
    GradCheckResult result;
    detail::check_parameters(result, gen.parameters(), 12,
                             [&](Tape& tape, bool trainable) {
                               Var out = gen.forward(tape, tape.constant(blurred), trainable);
                               Var t = tape.constant(sharp);
                               Var gan = generator_gan_loss(disc.forward(tape, out, false), true);
                               return total_loss(content_loss(out, t), gan, edge_loss(out, t), LossWeights{});
                             },
                             opt);
    return result;
  });
  return cases;
}

inline constexpr std::size_t kGradCheckAttempts = 8;

// Runs a case at `seed`; if any finite difference straddled a kink, redraws the random
// point from a derived seed (at most kGradCheckAttempts times) and reports the last run.
inline GradCheckResult run_gradcheck_case(const GradCheckCase& c, std::uint64_t seed, const GradCheckOptions& opt) {
  GradCheckResult r;
  for (std::size_t attempt = 0; attempt < kGradCheckAttempts; ++attempt) {
    r = c.run(seed + 0x9e3779b97f4a7c15ull * attempt, opt);
    if (r.kink_crossings == 0) break;
  }
  return r;
}

struct GradCheckCaseReport {
  std::string name;
  double max_rel_error = 0.0;
  std::size_t coordinates = 0;
  bool passed = false;
};

inline std::vector<GradCheckCaseReport> run_gradcheck_suite(const std::vector<std::uint64_t>& seeds,
                                                            const GradCheckOptions& opt = {}) {
  std::vector<GradCheckCaseReport> out;
  for (const auto& c : gradcheck_cases()) {
    GradCheckCaseReport rep;
    rep.name = c.name;
    for (std::uint64_t seed : seeds) {
      const GradCheckResult r = run_gradcheck_case(c, seed, opt);
      rep.max_rel_error = std::max(rep.max_rel_error, r.max_rel_error);
      rep.coordinates += r.coordinates;
    }
    rep.passed = rep.max_rel_error <= kGradCheckTolerance;
    out.push_back(rep);
  }
  return out;
}

}  // namespace cmrlab
