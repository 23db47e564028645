#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "cmrlab/cmcn.hpp"
#include "cmrlab/metrics.hpp"
#include "cmrlab/phantom.hpp"
#include "cmrlab/synthblur.hpp"
#include "cmrlab/train.hpp"
#include "test_util.hpp"

using namespace cmrlab;

namespace {

Tensor image_batch(std::size_t n, std::size_t h, std::size_t w, std::uint64_t seed, double lo = 0.0, double hi = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor t(Shape{n, 1, h, w});
  for (double& v : t.values()) v = u(rng);
  return t;
}

Tensor run_generator(Generator& g, const Tensor& x) {
  Tape t;
  return g.forward(t, t.constant(x), false).value();
}

Tensor run_discriminator(Discriminator& d, const Tensor& x) {
  Tape t;
  return d.forward(t, t.constant(x), false).value();
}

// Hand-written layer-by-layer count: conv weights + instance-norm gain/bias, head conv with bias.
std::size_t generator_count(std::size_t f, std::size_t r) {
  const std::size_t enc0 = 7 * 7 * 1 * f + 2 * f;
  const std::size_t down1 = 3 * 3 * f * (2 * f) + 2 * (2 * f);
  const std::size_t down2 = 3 * 3 * (2 * f) * (4 * f) + 2 * (4 * f);
  const std::size_t block = 2 * (3 * 3 * (4 * f) * (4 * f) + 2 * (4 * f));
  const std::size_t up1 = 3 * 3 * (4 * f) * (2 * f) + 2 * (2 * f);
  const std::size_t up2 = 3 * 3 * (2 * f) * f + 2 * f;
  const std::size_t head = 7 * 7 * f * 1 + 1;
  return enc0 + down1 + down2 + r * block + up1 + up2 + head;
}

std::size_t discriminator_count(std::size_t f) {
  return (9 * f + f) + (9 * f * 2 * f + 4 * f) + (9 * 2 * f * 4 * f + 8 * f) + (9 * 4 * f * 8 * f + 16 * f) + (8 * f + 1);
}

Tensor naive_sobel_zero_pad(const Tensor& x) {
  const Shape s = x.shape();
  Tensor out(Shape{s.n, 2, s.h, s.w});
  auto px = [&](std::size_t n, long r, long c) {
    return (r < 0 || c < 0 || r >= long(s.h) || c >= long(s.w)) ? 0.0 : x.at(n, 0, r, c);
  };
  for (std::size_t n = 0; n < s.n; ++n)
    for (long r = 0; r < long(s.h); ++r)
      for (long c = 0; c < long(s.w); ++c) {
        out.at(n, 0, r, c) = (px(n, r - 1, c + 1) + 2 * px(n, r, c + 1) + px(n, r + 1, c + 1)) -
                             (px(n, r - 1, c - 1) + 2 * px(n, r, c - 1) + px(n, r + 1, c - 1));
        out.at(n, 1, r, c) = (px(n, r + 1, c - 1) + 2 * px(n, r + 1, c) + px(n, r + 1, c + 1)) -
                             (px(n, r - 1, c - 1) + 2 * px(n, r - 1, c) + px(n, r - 1, c + 1));
      }
  return out;
}

double scalar(const std::function<Var(Tape&)>& f) {
  Tape t;
  return f(t).value()[0];
}

std::vector<TrainingPair> toy_pairs(std::size_t count, std::size_t size, std::uint64_t seed) {
  std::vector<TrainingPair> pairs;
  for (std::size_t i = 0; i < count; ++i) {
    const Image sharp = shapes_phantom(seed + i, size);
    pairs.push_back({apply_motion_blur(sharp, pair_psf(TrajectoryParams{}, 5, seed + i), pair_noise(0.01, seed + i)), sharp});
  }
  return pairs;
}

TrainConfig tiny_config() {
  TrainConfig cfg;
  cfg.generator.base_channels = 4;
  cfg.generator.n_resblocks = 1;
  cfg.discriminator.base_channels = 4;
  cfg.batch = 2;
  cfg.seed = 5;
  return cfg;
}

bool same_tensors(const Checkpoint& a, const Checkpoint& b) {
  if (a.tensors.size() != b.tensors.size()) return false;
  for (std::size_t i = 0; i < a.tensors.size(); ++i) {
    if (a.tensors[i].name != b.tensors[i].name || !(a.tensors[i].value.shape() == b.tensors[i].value.shape())) return false;
    for (std::size_t k = 0; k < a.tensors[i].value.size(); ++k)
      if (a.tensors[i].value[k] != b.tensors[i].value[k]) return false;
  }
  return true;
}

}  // namespace

TEST(Generator, ToyShapePreserved) {
  Generator g(GeneratorConfig{}, 1);
  const Tensor y = run_generator(g, image_batch(2, 64, 64, 1));
  EXPECT_TRUE(y.shape() == (Shape{2, 1, 64, 64}));
  for (double v : y.values()) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
}

TEST(Generator, PaperScaleShapePreserved) {
  Generator g(GeneratorConfig::paper_scale(), 1);
  EXPECT_EQ(g.config().base_channels, 64u);
  EXPECT_EQ(g.config().n_resblocks, 9u);
  const Tensor y = run_generator(g, image_batch(1, 256, 256, 2));
  EXPECT_TRUE(y.shape() == (Shape{1, 1, 256, 256}));
}

TEST(Generator, ParameterCountMatchesFormula) {
  EXPECT_EQ(generator_count(16, 2), 195937u);
  EXPECT_EQ(Generator(GeneratorConfig{}).parameters().scalar_count(), 195937u);
  for (auto [f, r] : {std::pair<std::size_t, std::size_t>{4, 0}, {8, 1}, {64, 9}}) {
    GeneratorConfig c;
    c.base_channels = f;
    c.n_resblocks = r;
    EXPECT_EQ(Generator(c).parameters().scalar_count(), generator_count(f, r)) << f << "/" << r;
  }
}

TEST(Generator, RejectsSizesNotMultipleOfFour) {
  Generator g(GeneratorConfig{}, 1);
  Tape t;
  try {
    g.forward(t, t.constant(image_batch(1, 30, 32, 1)));
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    EXPECT_NE(std::string(e.what()).find("pad"), std::string::npos);
  }
  GeneratorConfig bad;
  bad.base_channels = 0;
  EXPECT_THROW(Generator{bad}, ConfigError);
}

TEST(Generator, SkipHeadStartsNearIdentity) {
  Generator g(GeneratorConfig{}, 3);
  const Tensor x = image_batch(2, 32, 32, 4);
  const Tensor y = run_generator(g, x);
  double worst = 0;
  for (std::size_t i = 0; i < x.size(); ++i) worst = std::max(worst, std::abs(y[i] - x[i]));
  EXPECT_LE(worst, 0.5);
}

TEST(Generator, NoSkipOutputInOpenUnitInterval) {
  GeneratorConfig c;
  c.global_skip = false;
  c.base_channels = 4;
  c.n_resblocks = 1;
  Generator g(c, 3);
  for (double v : run_generator(g, image_batch(1, 16, 16, 4)).values()) {
    EXPECT_GT(v, 0.0);
    EXPECT_LT(v, 1.0);
  }
}

TEST(Generator, FiniteForExtremeInputs) {
  GeneratorConfig c;
  c.base_channels = 4;
  Generator g(c, 3);
  EXPECT_TRUE(run_generator(g, image_batch(2, 16, 16, 5, -10.0, 10.0)).all_finite());
  DiscriminatorConfig dc;
  dc.base_channels = 4;
  Discriminator d(dc, 3);
  EXPECT_TRUE(run_discriminator(d, image_batch(2, 16, 16, 5, -10.0, 10.0)).all_finite());
}

TEST(Generator, SameSeedSameInitDifferentSeedDifferent) {
  Generator a(GeneratorConfig{}, 9), b(GeneratorConfig{}, 9), c(GeneratorConfig{}, 10);
  EXPECT_TRUE(same_tensors(make_checkpoint(a, Discriminator({}), 0), make_checkpoint(b, Discriminator({}), 0)));
  EXPECT_FALSE(same_tensors(make_checkpoint(a, Discriminator({}), 0), make_checkpoint(c, Discriminator({}), 0)));
}

TEST(Discriminator, OutputShapeRangeAndDeterminism) {
  Discriminator d(DiscriminatorConfig{}, 1);
  EXPECT_EQ(d.parameters().scalar_count(), discriminator_count(16));
  Tensor x = image_batch(3, 32, 32, 2);
  for (std::size_t i = 0; i < 32 * 32; ++i) x[2 * 32 * 32 + i] = x[i];  // sample 2 duplicates sample 0
  const Tensor p = run_discriminator(d, x);
  EXPECT_TRUE(p.shape() == (Shape{3, 1, 1, 1}));
  for (double v : p.values()) {
    EXPECT_GT(v, 0.0);
    EXPECT_LT(v, 1.0);
  }
  EXPECT_EQ(p[0], p[2]);
}

TEST(Discriminator, TooSmallInputRejected) {
  Discriminator d(DiscriminatorConfig{}, 1);
  Tape t;
  EXPECT_THROW(d.forward(t, t.constant(image_batch(1, 8, 32, 1))), ShapeError);
}

TEST(SobelLayer, ConstantGivesZeroInterior) {
  Tape t;
  const Tensor y = sobel_layer(t.constant(Tensor(Shape{1, 1, 6, 6}, 0.4))).value();
  for (std::size_t ch = 0; ch < 2; ++ch)
    for (std::size_t r = 1; r < 5; ++r)
      for (std::size_t c = 1; c < 5; ++c) EXPECT_NEAR(y.at(0, ch, r, c), 0.0, 1e-15);
}

TEST(SobelLayer, MatchesMetricsSobelInterior) {
  const Image img = testutil::random_image(10, 12, 6);
  const auto g = sobel(img);
  Tape t;
  const Tensor y = sobel_layer(t.constant(images_to_tensor({&img}))).value();
  for (std::size_t r = 1; r < 9; ++r)
    for (std::size_t c = 1; c < 11; ++c) {
      EXPECT_NEAR(y.at(0, 0, r, c), g.gx(r, c), 1e-13);
      EXPECT_NEAR(y.at(0, 1, r, c), g.gy(r, c), 1e-13);
    }
  EXPECT_THROW(sobel_layer(t.constant(Tensor(Shape{1, 1, 2, 5}))), ShapeError);
}

TEST(SobelLayer, MatchesZeroPaddedOracleEverywhere) {
  const Tensor x = image_batch(2, 7, 9, 7);
  Tape t;
  const Tensor y = sobel_layer(t.constant(x)).value();
  const Tensor want = naive_sobel_zero_pad(x);
  for (std::size_t i = 0; i < y.size(); ++i) EXPECT_NEAR(y[i], want[i], 1e-13);
}

TEST(SobelLayer, GradientReachesInputOnly) {
  Tape t;
  Var x = t.variable(image_batch(1, 5, 5, 8));
  t.backward(mean(sobel_layer(x)));
  const Tensor g = t.grad(x);
  double norm = 0;
  for (double v : g.values()) norm += std::abs(v);
  EXPECT_GT(norm, 0.0);
}

TEST(Losses, ContentLossValues) {
  const Tensor a = image_batch(2, 4, 4, 1);
  EXPECT_EQ(scalar([&](Tape& t) { return content_loss(t.constant(a), t.constant(a)); }), 0.0);
  EXPECT_DOUBLE_EQ(scalar([](Tape& t) { return content_loss(t.constant(Tensor(Shape{1, 1, 4, 4}, 0.5)), t.constant(Tensor(Shape{1, 1, 4, 4}, 0.25))); }), 0.25);
  Tensor d = image_batch(2, 4, 4, 2, -1.0, 1.0), tpd = a;
  double md = 0;
  for (std::size_t i = 0; i < a.size(); ++i) tpd[i] += d[i], md += std::abs(d[i]);
  EXPECT_NEAR(scalar([&](Tape& t) { return content_loss(t.constant(tpd), t.constant(a)); }), md / a.size(), 1e-15);
  Tape t;
  EXPECT_THROW(content_loss(t.constant(Tensor(Shape{1, 1, 4, 4})), t.constant(Tensor(Shape{1, 1, 4, 5}))), ShapeError);
}

TEST(Losses, EdgeLossIgnoresConstantOffsetInInterior) {
  // Zero padding makes the frame border see the offset, so compare on a frame with a zero border of
  // its own: an offset restricted to the interior region is still invisible to every output pixel
  // whose 3x3 window lies inside it.
  const Tensor x = image_batch(1, 8, 8, 3);
  EXPECT_EQ(scalar([&](Tape& t) { return edge_loss(t.constant(x), t.constant(x)); }), 0.0);
  Tensor shifted = x;
  for (double& v : shifted.values()) v += 0.3;
  Tape t;
  const Tensor a = sobel_layer(t.constant(x)).value(), b = sobel_layer(t.constant(shifted)).value();
  for (std::size_t ch = 0; ch < 2; ++ch)
    for (std::size_t r = 1; r < 7; ++r)
      for (std::size_t c = 1; c < 7; ++c) EXPECT_NEAR(a.at(0, ch, r, c), b.at(0, ch, r, c), 1e-14);
}

TEST(Losses, EdgeLossStepVersusShiftedStep) {
  Tensor a(Shape{1, 1, 6, 8}), b(Shape{1, 1, 6, 8});
  for (std::size_t r = 0; r < 6; ++r)
    for (std::size_t c = 0; c < 8; ++c) {
      a.at(0, 0, r, c) = c >= 4 ? 1.0 : 0.0;
      b.at(0, 0, r, c) = c >= 5 ? 1.0 : 0.0;
    }
  const Tensor sa = naive_sobel_zero_pad(a), sb = naive_sobel_zero_pad(b);
  double expect = 0;
  for (std::size_t i = 0; i < sa.size(); ++i) expect += std::abs(sa[i] - sb[i]);
  expect /= sa.size();
  const double got = scalar([&](Tape& t) { return edge_loss(t.constant(a), t.constant(b)); });
  EXPECT_GT(got, 0.0);
  EXPECT_NEAR(got, expect, 1e-14);
  // Interior rows: gx columns 3,4 vs 4,5 carry 4 each -> |diff| 4 at columns 3 and 5.
  EXPECT_EQ(sa.at(0, 0, 2, 3), 4.0);
  EXPECT_EQ(sb.at(0, 0, 2, 3), 0.0);
}

TEST(Losses, GanClosedForms) {
  auto probs = [](Tape& t, double v) { return t.constant(Tensor(Shape{3, 1, 1, 1}, v)); };
  EXPECT_NEAR(scalar([&](Tape& t) { return gan_losses(probs(t, 0.5), probs(t, 0.5)).d_loss; }), 2 * std::log(2.0), 1e-15);
  EXPECT_NEAR(scalar([&](Tape& t) { return gan_losses(probs(t, 0.5), probs(t, 0.5)).g_loss; }), std::log(2.0), 1e-15);
  EXPECT_LT(scalar([&](Tape& t) { return discriminator_loss(probs(t, 1 - 1e-12), probs(t, 1e-12)); }), 1e-11);
  EXPECT_NEAR(minimax_generator_value(Tensor(Shape{2, 1, 1, 1}, 0.5)), std::log(0.5), 1e-15);
  Tape t;
  EXPECT_THROW(discriminator_loss(probs(t, 1.0), probs(t, 0.5)), DomainError);
  EXPECT_NO_THROW(discriminator_loss(probs(t, 1.0), probs(t, 0.5), true));
}

TEST(Losses, TotalLossArithmetic) {
  EXPECT_EQ(total_loss(1.0, 2.0, 3.0, LossWeights{}), 501.0);
  EXPECT_EQ(total_loss(0.7, 2.0, 3.0, LossWeights{0.0, 0.0}), 0.7);
  EXPECT_EQ(total_loss(0.0, 0.0, 0.0, LossWeights{}), 0.0);
  EXPECT_THROW(total_loss(1.0, 1.0, 1.0, LossWeights{-1.0, 0.0}), ConfigError);
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.0, 2.0);
  for (int i = 0; i < 1000; ++i) {
    const LossWeights w{u(rng) * 50, u(rng) * 50};
    const double c = u(rng), g = u(rng), e = u(rng), d = u(rng);
    EXPECT_LE(total_loss(c, g, e, w), total_loss(c + d, g, e, w));
    EXPECT_LE(total_loss(c, g, e, w), total_loss(c, g + d, e, w));
    EXPECT_LE(total_loss(c, g, e, w), total_loss(c, g, e + d, w));
  }
  const double v = scalar([](Tape& t) {
    auto s = [&](double x) { return t.constant(Tensor(Shape{1, 1, 1, 1}, x)); };
    return total_loss(s(1.0), s(2.0), s(3.0), LossWeights{});
  });
  EXPECT_EQ(v, 501.0);
}

TEST(Training, DiscriminatorStepReducesLoss) {
  DiscriminatorConfig dc;
  dc.base_channels = 8;
  Discriminator d(dc, 2);
  const Tensor real = image_batch(4, 32, 32, 1), fake = image_batch(4, 32, 32, 2);
  auto loss = [&](bool record) {
    Tape t;
    Var l = discriminator_loss(d.forward(t, t.constant(real), record), d.forward(t, t.constant(fake), record), true);
    if (record) {
      d.parameters().zero_grad();
      t.backward(l);
    }
    return l.value()[0];
  };
  const double before = loss(true);
  auto ptrs = d.parameters().pointers();
  adam_step(ptrs, 1e-5);
  EXPECT_LT(loss(false), before);
}

TEST(Training, ZeroEpochsReturnsInitialization) {
  const auto pairs = toy_pairs(4, 16, 1);
  TrainConfig cfg = tiny_config();
  cfg.epochs_constant = 0;
  const TrainResult r = train(pairs, cfg);
  EXPECT_TRUE(r.history.empty());
  EXPECT_EQ(r.checkpoint.step, 0u);
  Generator g(cfg.generator, splitmix64(cfg.seed ^ 0x6701u));
  Discriminator d(cfg.discriminator, splitmix64(cfg.seed ^ 0xd15cu));
  EXPECT_TRUE(same_tensors(r.checkpoint, make_checkpoint(g, d, 0)));
}

TEST(Training, SameSeedBitIdenticalAndHistoryRecorded) {
  const auto pairs = toy_pairs(6, 16, 2);
  TrainConfig cfg = tiny_config();
  cfg.epochs_constant = 1;
  cfg.epochs_decay = 1;
  std::size_t observed = 0;
  const TrainResult a = train(pairs, cfg, [&](const LossRecord&) { ++observed; });
  const TrainResult b = train(pairs, cfg);
  EXPECT_EQ(observed, 6u);
  ASSERT_EQ(a.history.size(), 6u);
  EXPECT_EQ(a.checkpoint.step, 6u);
  EXPECT_EQ(encode_checkpoint(a.checkpoint), encode_checkpoint(b.checkpoint));
  EXPECT_EQ(format_loss_history(a.history), format_loss_history(b.history));
  EXPECT_EQ(a.history[0].lr, 1e-4);
  EXPECT_DOUBLE_EQ(a.history[4].lr, 1e-4 * 2.0 / 3.0);
  for (const auto& rec : a.history) {
    EXPECT_GT(rec.d_loss, 0.0);
    EXPECT_GT(rec.gan_g, 0.0);
    EXPECT_NEAR(rec.total, rec.content + 100 * rec.edge + 100 * rec.gan_g, 1e-9 * rec.total);
  }
  cfg.seed = 6;
  EXPECT_NE(encode_checkpoint(train(pairs, cfg).checkpoint), encode_checkpoint(a.checkpoint));
}

TEST(Training, ContentOnlySkipsDiscriminator) {
  TrainConfig cfg = tiny_config();
  cfg.weights = {0.0, 0.0};
  const TrainResult r = train(toy_pairs(4, 16, 3), cfg);
  for (const auto& rec : r.history) {
    EXPECT_EQ(rec.d_loss, 0.0);
    EXPECT_EQ(rec.gan_g, 0.0);
    EXPECT_EQ(rec.total, rec.content);
    EXPECT_GT(rec.edge, 0.0);
  }
  Discriminator d(cfg.discriminator, splitmix64(cfg.seed ^ 0xd15cu));
  const Discriminator loaded = discriminator_from_checkpoint(r.checkpoint);
  for (std::size_t i = 0; i < d.parameters().size(); ++i)
    for (std::size_t k = 0; k < d.parameters()[i].value.size(); ++k)
      EXPECT_EQ(loaded.parameters()[i].value[k], d.parameters()[i].value[k]);
}

TEST(Training, AugmentedRunIsDeterministic) {
  TrainConfig cfg = tiny_config();
  cfg.augment = true;
  const auto pairs = toy_pairs(4, 16, 4);
  const auto a = train(pairs, cfg), b = train(pairs, cfg);
  EXPECT_EQ(encode_checkpoint(a.checkpoint), encode_checkpoint(b.checkpoint));
  cfg.augment = false;
  EXPECT_NE(format_loss_history(train(pairs, cfg).history), format_loss_history(a.history));
}

TEST(Training, InvalidInputsRejected) {
  TrainConfig cfg = tiny_config();
  EXPECT_THROW(train(std::vector<TrainingPair>{}, cfg), ConfigError);
  EXPECT_THROW(train(toy_pairs(2, 18, 1), cfg), ShapeError);
  cfg.batch = 0;
  EXPECT_THROW(train(toy_pairs(2, 16, 1), cfg), ConfigError);
}

TEST(Training, SmoothedContentAveragesTrailingWindow) {
  std::vector<LossRecord> h;
  for (std::size_t i = 0; i < 30; ++i) h.push_back({i, 1e-4, double(i), 0, 0, 0, double(i)});
  EXPECT_DOUBLE_EQ(smoothed_content(h, 29), (20 + 29) / 2.0);
  EXPECT_DOUBLE_EQ(smoothed_content(h, 3), 1.5);
}

TEST(Checkpoint, RoundTripGivesBitIdenticalForward) {
  testutil::TempDir dir("ckpt");
  GeneratorConfig gc;
  gc.base_channels = 4;
  gc.n_resblocks = 1;
  DiscriminatorConfig dc;
  dc.base_channels = 4;
  Generator g(gc, 7);
  Discriminator d(dc, 8);
  // Move weights off their initial values so the head is not near-zero.
  std::mt19937_64 rng(1);
  std::normal_distribution<double> n(0, 0.3);
  for (auto& p : g.parameters())
    for (double& v : p.value.values()) v += n(rng);
  const Checkpoint ck = make_checkpoint(g, d, 42);
  save_checkpoint(dir / "m.ckpt", ck);
  const Checkpoint back = load_checkpoint(dir / "m.ckpt");
  EXPECT_EQ(back.step, 42u);
  EXPECT_EQ(back.version, 1u);
  EXPECT_TRUE(same_tensors(ck, back));
  const Tensor x = image_batch(2, 16, 16, 3);
  Generator g2 = generator_from_checkpoint(back);
  const Tensor a = run_generator(g, x), b = run_generator(g2, x);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i], b[i]);
  Discriminator d2 = discriminator_from_checkpoint(back);
  EXPECT_EQ(run_discriminator(d, x)[1], run_discriminator(d2, x)[1]);
  EXPECT_EQ(encode_checkpoint(back), encode_checkpoint(ck));
}

TEST(Checkpoint, LayoutAndRejections) {
  GeneratorConfig gc;
  gc.base_channels = 2;
  gc.n_resblocks = 0;
  DiscriminatorConfig dc;
  dc.base_channels = 2;
  const auto bytes = encode_checkpoint(make_checkpoint(Generator(gc, 1), Discriminator(dc, 1), 3));
  ASSERT_GT(bytes.size(), 12u);
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "CMCN");
  EXPECT_EQ(bytes[4], 1);
  EXPECT_EQ(bytes[5] | bytes[6] | bytes[7], 0);
  const std::uint32_t meta = bytes[8] | (bytes[9] << 8) | (bytes[10] << 16) | (std::uint32_t(bytes[11]) << 24);
  const std::size_t scalars = Generator(gc).parameters().scalar_count() + Discriminator(dc).parameters().scalar_count();
  EXPECT_EQ(bytes.size(), 12 + meta + 8 * scalars);

  auto bad = bytes;
  bad[0] = 'X';
  EXPECT_THROW(decode_checkpoint(bad), DecodeError);
  bad = bytes;
  bad[4] = 2;
  EXPECT_THROW(decode_checkpoint(bad), UnsupportedFormatError);
  bad = bytes;
  bad.resize(bad.size() - 8);
  EXPECT_THROW(decode_checkpoint(bad), DecodeError);
  EXPECT_THROW(load_checkpoint("/nonexistent/file.ckpt"), IoError);
}

TEST(Correct, UntrainedSkipNearIdentityAndDeterministic) {
  GeneratorConfig gc;
  Generator g(gc, 11);
  const Checkpoint ck = make_checkpoint(g, Discriminator({}, 1), 0);
  const Image img = shapes_phantom(3, 32);
  const Image a = correct(img, ck), b = correct(img, ck);
  EXPECT_EQ(a, b);
  EXPECT_LE(max_abs_diff(a, img), 0.5);
  for (double v : a.pixels()) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
  EXPECT_THROW(correct(Image(30, 32), ck), ShapeError);
}
