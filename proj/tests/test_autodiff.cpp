#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "cmrlab/autodiff.hpp"
#include "cmrlab/gradcheck.hpp"
#include "cmrlab/gradcheck_suite.hpp"
#include "cmrlab/optim.hpp"

using namespace cmrlab;

namespace {

Tensor rand_tensor(Shape s, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor t(s);
  for (double& v : t.values()) v = u(rng);
  return t;
}

double dot(const Tensor& a, const Tensor& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

// Direct nested-loop cross-correlation with zero padding.
Tensor naive_conv(const Tensor& x, const Tensor& w, const Tensor& b, std::size_t stride, std::size_t pad) {
  const Shape xs = x.shape(), ws = w.shape();
  const std::size_t oh = (xs.h + 2 * pad - ws.h) / stride + 1, ow = (xs.w + 2 * pad - ws.w) / stride + 1;
  Tensor out(Shape{xs.n, ws.n, oh, ow});
  for (std::size_t n = 0; n < xs.n; ++n)
    for (std::size_t o = 0; o < ws.n; ++o)
      for (std::size_t r = 0; r < oh; ++r)
        for (std::size_t c = 0; c < ow; ++c) {
          double acc = b[o];
          for (std::size_t i = 0; i < xs.c; ++i)
            for (std::size_t kr = 0; kr < ws.h; ++kr)
              for (std::size_t kc = 0; kc < ws.w; ++kc) {
                const long rr = long(r * stride + kr) - long(pad), cc = long(c * stride + kc) - long(pad);
                if (rr < 0 || cc < 0 || rr >= long(xs.h) || cc >= long(xs.w)) continue;
                acc += w.at(o, i, kr, kc) * x.at(n, i, rr, cc);
              }
          out.at(n, o, r, c) = acc;
        }
  return out;
}

Tensor eval(const std::function<Var(Tape&)>& f) {
  Tape t;
  return f(t).value();
}

}  // namespace

TEST(Tensor, ShapeChecks) {
  EXPECT_THROW(Tensor(Shape{1, 2, 3, 4}, std::vector<double>(5)), ShapeError);
  EXPECT_EQ(Tensor(Shape{2, 3, 4, 5}).size(), 120u);
}

TEST(Conv2d, MatchesNaiveLoops) {
  for (auto [stride, pad] : {std::pair<std::size_t, std::size_t>{1, 0}, {1, 1}, {2, 1}, {2, 3}, {3, 0}}) {
    const Tensor x = rand_tensor({2, 3, 9, 8}, stride * 10 + pad);
    const Tensor w = rand_tensor({4, 3, 3, 3}, 99);
    const Tensor b = rand_tensor({1, 4, 1, 1}, 98);
    const Tensor got = eval([&](Tape& t) { return conv2d(t.constant(x), t.constant(w), t.constant(b), stride, pad); });
    const Tensor want = naive_conv(x, w, b, stride, pad);
    ASSERT_TRUE(got.shape() == want.shape());
    for (std::size_t i = 0; i < got.size(); ++i) EXPECT_NEAR(got[i], want[i], 1e-12);
  }
}

TEST(Conv2d, IdentityKernels) {
  const Tensor x = rand_tensor({2, 1, 5, 6}, 1);
  const Tensor one = eval([&](Tape& t) {
    return conv2d(t.constant(x), t.constant(Tensor({1, 1, 1, 1}, 1.0)), t.constant(Tensor({1, 1, 1, 1}, 0.0)));
  });
  EXPECT_EQ(one.values().size(), x.size());
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_EQ(one[i], x[i]);
  Tensor delta({1, 1, 3, 3}, 0.0);
  delta.at(0, 0, 1, 1) = 1.0;
  const Tensor d = eval([&](Tape& t) { return conv2d(t.constant(x), t.constant(delta), t.constant(Tensor({1, 1, 1, 1})), 1, 1); });
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_EQ(d[i], x[i]);
}

TEST(Conv2d, ShapeErrorsNameBothShapes) {
  Tape t;
  try {
    conv2d(t.constant(Tensor({1, 2, 5, 5})), t.constant(Tensor({3, 4, 3, 3})), t.constant(Tensor({1, 3, 1, 1})));
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("(1, 2, 5, 5)"), std::string::npos) << msg;
    EXPECT_NE(msg.find("(3, 4, 3, 3)"), std::string::npos) << msg;
  }
}

TEST(Conv2d, FiniteDifferenceOnRandomInput) {
  const GraphFn fn = [](Tape&, const std::vector<Var>& v) {
    return inner_product(conv2d(v[0], v[1], v[2], 1, 1), rand_tensor({2, 4, 8, 8}, 5, 0.5, 1.0));
  };
  const auto r = grad_check(fn, {rand_tensor({2, 3, 8, 8}, 1), rand_tensor({4, 3, 3, 3}, 2), rand_tensor({1, 4, 1, 1}, 3)});
  EXPECT_LE(r.max_rel_error, 1e-4);
}

TEST(ConvTranspose2d, OutputSizeAndDeltaIdentity) {
  const Tensor x = rand_tensor({1, 2, 5, 7}, 3);
  Tensor delta({2, 2, 3, 3}, 0.0);
  delta.at(0, 0, 1, 1) = delta.at(1, 1, 1, 1) = 1.0;
  const Tensor y = eval([&](Tape& t) { return conv_transpose2d(t.constant(x), t.constant(delta), t.constant(Tensor({1, 2, 1, 1})), 1, 1); });
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_EQ(y[i], x[i]);
  const Tensor up = eval([&](Tape& t) {
    return conv_transpose2d(t.constant(x), t.constant(rand_tensor({2, 3, 3, 3}, 4)), t.constant(Tensor({1, 3, 1, 1})), 2, 1);
  });
  EXPECT_EQ(up.shape().h, (5 - 1) * 2 - 2 + 3u);
  EXPECT_EQ(up.shape().w, (7 - 1) * 2 - 2 + 3u);
  EXPECT_EQ(up.shape().c, 3u);
}

TEST(ConvTranspose2d, AdjointOfConv) {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t cin = 1 + rng() % 3, cout = 1 + rng() % 3, k = 1 + 2 * (rng() % 3);
    const std::size_t stride = 1 + rng() % 2, pad = rng() % (k / 2 + 1);
    // Choose H so the strided conv covers the input exactly and convT maps back to the same size.
    const std::size_t oh = 3 + rng() % 4, ow = 3 + rng() % 4;
    const std::size_t h = (oh - 1) * stride + k - 2 * pad, w = (ow - 1) * stride + k - 2 * pad;
    const Tensor x = rand_tensor({2, cin, h, w}, rng());
    const Tensor y = rand_tensor({2, cout, oh, ow}, rng());
    const Tensor wt = rand_tensor({cout, cin, k, k}, rng());
    const Tensor cx = eval([&](Tape& t) { return conv2d(t.constant(x), t.constant(wt), t.constant(Tensor({1, cout, 1, 1})), stride, pad); });
    const Tensor ty = eval([&](Tape& t) {
      return conv_transpose2d(t.constant(y), t.constant(wt), t.constant(Tensor({1, cin, 1, 1})), stride, pad);
    });
    ASSERT_TRUE(cx.shape() == y.shape());
    ASSERT_TRUE(ty.shape() == x.shape());
    EXPECT_NEAR(dot(cx, y), dot(x, ty), 1e-10 * (1 + std::abs(dot(cx, y))));
    // conv2d's backward-input applied to y is the same map.
    Tape tape;
    Var xv = tape.variable(x);
    Var out = conv2d(xv, tape.constant(wt), tape.constant(Tensor({1, cout, 1, 1})), stride, pad);
    tape.backward(inner_product(out, y));
    const Tensor gx = tape.grad(xv);
    for (std::size_t i = 0; i < gx.size(); ++i) EXPECT_NEAR(gx[i], ty[i], 1e-12);
  }
}

TEST(ConvTranspose2d, FiniteDifference) {
  const GraphFn fn = [](Tape&, const std::vector<Var>& v) {
    return inner_product(conv_transpose2d(v[0], v[1], v[2], 2, 1, 1), rand_tensor({2, 2, 8, 8}, 9, 0.5, 1.0));
  };
  const auto r = grad_check(fn, {rand_tensor({2, 3, 4, 4}, 1), rand_tensor({3, 2, 3, 3}, 2), rand_tensor({1, 2, 1, 1}, 3)});
  EXPECT_LE(r.max_rel_error, 1e-4);
}

TEST(InstanceNorm, ConstantChannelGivesBias) {
  const Tensor x({1, 2, 4, 4}, 3.5);
  const Tensor bias({1, 2, 1, 1}, std::vector<double>{0.25, -1.0});
  const Tensor y = eval([&](Tape& t) { return instance_norm(t.constant(x), t.constant(Tensor({1, 2, 1, 1}, 2.0)), t.constant(bias)); });
  for (std::size_t i = 0; i < 16; ++i) EXPECT_EQ(y[i], 0.25);
  for (std::size_t i = 16; i < 32; ++i) EXPECT_EQ(y[i], -1.0);
}

TEST(InstanceNorm, StandardizesEachInstance) {
  const Tensor x = rand_tensor({3, 2, 6, 5}, 4, -5.0, 9.0);
  const Tensor y = eval([&](Tape& t) { return instance_norm(t.constant(x), t.constant(Tensor({1, 2, 1, 1}, 1.0)), t.constant(Tensor({1, 2, 1, 1}))); });
  for (std::size_t nc = 0; nc < 6; ++nc) {
    double m = 0, v = 0;
    for (std::size_t i = 0; i < 30; ++i) m += y[nc * 30 + i];
    m /= 30;
    for (std::size_t i = 0; i < 30; ++i) v += (y[nc * 30 + i] - m) * (y[nc * 30 + i] - m);
    v /= 30;
    EXPECT_NEAR(m, 0.0, 1e-6);
    EXPECT_NEAR(v, 1.0, 1e-5);  // eps = 1e-5 pulls the variance just below 1
  }
}

TEST(InstanceNorm, FiniteDifference) {
  const GraphFn fn = [](Tape&, const std::vector<Var>& v) {
    return inner_product(instance_norm(v[0], v[1], v[2]), rand_tensor({2, 3, 4, 4}, 7, 0.5, 1.0));
  };
  const auto r = grad_check(fn, {rand_tensor({2, 3, 4, 4}, 1), rand_tensor({1, 3, 1, 1}, 2, 0.5, 1.5), rand_tensor({1, 3, 1, 1}, 3)});
  EXPECT_LE(r.max_rel_error, 1e-4);
}

TEST(Activations, PointValues) {
  const Tensor x({1, 1, 1, 3}, std::vector<double>{-1.0, 0.0, 2.0});
  const Tensor r = eval([&](Tape& t) { return relu(t.constant(x)); });
  EXPECT_EQ(r[0], 0.0);
  EXPECT_EQ(r[2], 2.0);
  const Tensor s = eval([&](Tape& t) { return sigmoid(t.constant(x)); });
  EXPECT_EQ(s[1], 0.5);
  const Tensor l = eval([&](Tape& t) { return leaky_relu(t.constant(x), 0.2); });
  EXPECT_DOUBLE_EQ(l[0], -0.2);
  const Tensor th = eval([&](Tape& t) { return tanh(t.constant(x)); });
  EXPECT_DOUBLE_EQ(th[2], std::tanh(2.0));
  const Tensor big({1, 1, 1, 2}, std::vector<double>{-800.0, 800.0});
  const Tensor sb = eval([&](Tape& t) { return sigmoid(t.constant(big)); });
  EXPECT_GT(sb[0], -1e-300);
  EXPECT_LE(sb[1], 1.0);
  EXPECT_TRUE(sb.all_finite());
}

TEST(Activations, FiniteDifferenceAwayFromKinks) {
  Tensor x = rand_tensor({2, 2, 3, 3}, 5, -2.0, 2.0);
  for (double& v : x.values())
    if (std::abs(v) < 1e-2) v = 0.5;
  for (const auto& op : std::vector<std::function<Var(Var)>>{[](Var v) { return relu(v); }, [](Var v) { return leaky_relu(v); },
                                                             [](Var v) { return tanh(v); }, [](Var v) { return sigmoid(v); }}) {
    const GraphFn fn = [&](Tape&, const std::vector<Var>& v) { return inner_product(op(v[0]), rand_tensor({2, 2, 3, 3}, 6, 0.5, 1.0)); };
    EXPECT_LE(grad_check(fn, {x}).max_rel_error, 1e-4);
  }
}

TEST(Reductions, MeanAbsDiffValues) {
  const Tensor x = rand_tensor({1, 2, 3, 3}, 1);
  EXPECT_EQ(eval([&](Tape& t) { return mean_abs_diff(t.constant(x), t.constant(x)); })[0], 0.0);
  EXPECT_DOUBLE_EQ(eval([&](Tape& t) { return mean_abs_diff(t.constant(Tensor({1, 1, 4, 4}, 0.5)), t.constant(Tensor({1, 1, 4, 4}, 0.25))); })[0], 0.25);
}

TEST(Reductions, MeanAbsDiffSubgradientZeroAtTies) {
  Tape t;
  Var a = t.variable(Tensor({1, 1, 1, 2}, std::vector<double>{0.3, 0.7}));
  Var b = t.constant(Tensor({1, 1, 1, 2}, std::vector<double>{0.3, 0.2}));
  t.backward(mean_abs_diff(a, b));
  const Tensor g = t.grad(a);
  EXPECT_EQ(g[0], 0.0);
  EXPECT_DOUBLE_EQ(g[1], 0.5);
}

TEST(Reductions, BceClosedFormAndDomain) {
  EXPECT_NEAR(eval([](Tape& t) { return bce(t.constant(Tensor({1, 1, 1, 1}, 0.5)), 1.0); })[0], std::log(2.0), 1e-15);
  EXPECT_NEAR(eval([](Tape& t) { return bce(t.constant(Tensor({1, 1, 1, 1}, 0.2)), 0.0); })[0], -std::log(0.8), 1e-15);
  Tape t;
  EXPECT_THROW(bce(t.constant(Tensor({1, 1, 1, 1}, 1.0)), 1.0), DomainError);
  EXPECT_THROW(bce(t.constant(Tensor({1, 1, 1, 1}, 0.0)), 0.0), DomainError);
  const double clamped = bce(t.constant(Tensor({1, 1, 1, 1}, 0.0)), 1.0, true).value()[0];
  EXPECT_NEAR(clamped, -std::log(kProbabilityFloor), 1e-9);
  EXPECT_THROW(bce(t.constant(Tensor({1, 1, 1, 1}, 0.5)), 0.5), ConfigError);
}

TEST(Reductions, AddScaleAndPoolGradients) {
  const GraphFn fn = [](Tape&, const std::vector<Var>& v) {
    Var s = add(scale(v[0], 1.5), sub(v[1], v[0]));
    return inner_product(global_avg_pool(s), rand_tensor({2, 3, 1, 1}, 4, 0.5, 1.0));
  };
  EXPECT_LE(grad_check(fn, {rand_tensor({2, 3, 4, 5}, 1), rand_tensor({2, 3, 4, 5}, 2)}).max_rel_error, 1e-8);
}

TEST(Tape, BackwardTwiceRejected) {
  Tape t;
  Var x = t.variable(Tensor({1, 1, 1, 1}, 2.0));
  Var y = scale(x, 3.0);
  t.backward(y);
  EXPECT_DOUBLE_EQ(t.grad(x)[0], 3.0);
  EXPECT_THROW(t.backward(y), TapeError);
}

TEST(Tape, NonScalarRootRejected) {
  Tape t;
  Var x = t.variable(Tensor({1, 1, 2, 2}, 1.0));
  EXPECT_THROW(t.backward(x), ShapeError);
}

TEST(Tape, ParameterGradientsAccumulate) {
  Parameter p("w", Tensor({1, 1, 1, 1}, 2.0));
  for (int i = 0; i < 2; ++i) {
    Tape t;
    t.backward(scale(t.parameter(p), 4.0));
  }
  EXPECT_DOUBLE_EQ(p.grad[0], 8.0);
  p.zero_grad();
  EXPECT_EQ(p.grad[0], 0.0);
}

TEST(Tape, ForwardIsDeterministic) {
  const Tensor x = rand_tensor({2, 3, 8, 8}, 1), w = rand_tensor({4, 3, 3, 3}, 2), b = rand_tensor({1, 4, 1, 1}, 3);
  auto run = [&] {
    return eval([&](Tape& t) { return tanh(instance_norm(conv2d(t.constant(x), t.constant(w), t.constant(b), 2, 1), t.constant(Tensor({1, 4, 1, 1}, 1.0)), t.constant(Tensor({1, 4, 1, 1})))); });
  };
  const Tensor a = run(), c = run();
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i], c[i]);
}

TEST(GradCheck, LinearFunctionIsExact) {
  const Tensor w = rand_tensor({1, 2, 3, 3}, 3);
  const GraphFn fn = [&](Tape&, const std::vector<Var>& v) { return inner_product(v[0], w); };
  EXPECT_LE(grad_check(fn, {rand_tensor({1, 2, 3, 3}, 1)}).max_rel_error, 1e-10);
}

TEST(GradCheck, DetectsCorruptedGradient) {
  const GraphFn fn = [](Tape&, const std::vector<Var>& v) { return mean(tanh(v[0])); };
  const auto r = grad_check(fn, {rand_tensor({1, 1, 4, 4}, 1)}, 1e-5, [](std::vector<Tensor>& g) {
    for (auto& t : g)
      for (double& v : t.values()) v *= 1.1;
  });
  EXPECT_GT(r.max_rel_error, 1e-2);
}

TEST(GradCheck, NonFiniteReported) {
  const GraphFn fn = [](Tape&, const std::vector<Var>& v) { return bce(v[0], 1.0, false); };
  // p = 1e-6: the minus probe leaves (0, 1) only if h is large; use h that crosses zero.
  EXPECT_THROW(grad_check(fn, {Tensor({1, 1, 1, 1}, 1e-6)}, 1e-5), DomainError);
}

TEST(GradCheckSuite, AllLayersPassOnFiveSeeds) {
  const auto reports = run_gradcheck_suite({1, 2, 3, 4, 5});
  EXPECT_GE(reports.size(), 15u);
  for (const auto& r : reports) {
    EXPECT_TRUE(r.passed) << r.name << " max rel error " << r.max_rel_error;
    EXPECT_GT(r.coordinates, 0u) << r.name;
  }
}

TEST(GradCheckSuite, CorruptionFailsEveryCase) {
  GradCheckOptions opt;
  opt.corrupt_factor = 0.1;
  for (const auto& r : run_gradcheck_suite({1}, opt)) {
    EXPECT_FALSE(r.passed) << r.name;
    EXPECT_GT(r.max_rel_error, 1e-2) << r.name;
  }
}

TEST(Adam, ZeroGradientLeavesParametersUnchanged) {
  Parameter p("w", rand_tensor({1, 1, 3, 3}, 1));
  const Tensor before = p.value;
  Parameter* ps[] = {&p};
  adam_step(ps, 1e-3);
  for (std::size_t i = 0; i < p.value.size(); ++i) EXPECT_EQ(p.value[i], before[i]);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  Parameter p("w", Tensor({1, 1, 2, 2}, 0.0));
  p.grad.fill(1.0);
  Parameter* ps[] = {&p};
  const double lr = 1e-3;
  adam_step(ps, lr);
  // m_hat = 1, v_hat = 1 -> step lr / (1 + eps)
  for (double v : p.value.values()) EXPECT_NEAR(v, -lr / (1.0 + 1e-8), 1e-18);
}

TEST(Adam, IdenticalStateUpdatesIdentically) {
  Parameter a("a", rand_tensor({1, 2, 2, 2}, 1)), b = a;
  for (int step = 0; step < 5; ++step) {
    const Tensor g = rand_tensor({1, 2, 2, 2}, 100 + step);
    a.grad = g;
    b.grad = g;
    Parameter* pa[] = {&a};
    Parameter* pb[] = {&b};
    adam_step(pa, 1e-2);
    adam_step(pb, 1e-2);
  }
  for (std::size_t i = 0; i < a.value.size(); ++i) EXPECT_EQ(a.value[i], b.value[i]);
}

TEST(LrSchedule, ConstantThenLinearToZero) {
  EXPECT_EQ(lr_schedule(0, 10, 10, 1e-4), 1e-4);
  EXPECT_EQ(lr_schedule(9, 10, 10, 1e-4), 1e-4);
  EXPECT_DOUBLE_EQ(lr_schedule(15, 10, 10, 1e-4), 0.5e-4);
  EXPECT_EQ(lr_schedule(20, 10, 10, 1e-4), 0.0);
  EXPECT_EQ(lr_schedule(50, 10, 10, 1e-4), 0.0);
  EXPECT_EQ(lr_schedule(3, 0, 0, 1e-4), 0.0);
}
