#pragma once

// Motion-artifact correction network: residual encoder/decoder generator,
// global (whole-image) discriminator, fixed Sobel layer and the three loss terms.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "cmrlab/autodiff.hpp"
#include "cmrlab/error.hpp"
#include "cmrlab/image.hpp"
#include "cmrlab/tensor.hpp"

namespace cmrlab {

struct GeneratorConfig {
  std::size_t base_channels = 16;
  std::size_t n_resblocks = 2;
  bool global_skip = true;
  double init_std = 0.02;
  // Initial std of the last convolution when global_skip is on, so the residual starts near zero.
  double head_init_std = 1e-3;

  static GeneratorConfig paper_scale() {
    GeneratorConfig c;
    c.base_channels = 64;
    c.n_resblocks = 9;
    return c;
  }

  void validate() const {
    if (base_channels < 1) throw ConfigError("generator base_channels must be >= 1");
    if (!(init_std > 0.0) || !(head_init_std > 0.0)) throw ConfigError("initialization std must be > 0");
  }
};

struct DiscriminatorConfig {
  std::size_t base_channels = 16;  // stride-2 stack 1 -> F -> 2F -> 4F -> 8F
  double leaky_slope = 0.2;
  double init_std = 0.02;

  void validate() const {
    if (base_channels < 1) throw ConfigError("discriminator base_channels must be >= 1");
    if (!(leaky_slope >= 0.0 && leaky_slope < 1.0)) throw ConfigError("leaky slope must be in [0, 1)");
    if (!(init_std > 0.0)) throw ConfigError("initialization std must be > 0");
  }
};

struct LossWeights {
  double lambda_gan = 100.0;
  double lambda_edge = 100.0;

  void validate() const {
    if (!(lambda_gan >= 0.0) || !(lambda_edge >= 0.0)) throw ConfigError("loss weights must be >= 0");
  }
};

// Ordered parameter storage with stable addresses.
class ParameterSet {
 public:
  Parameter& add(std::string name, Shape shape) {
    params_.emplace_back(std::move(name), Tensor(shape));
    return params_.back();
  }

  std::size_t size() const noexcept { return params_.size(); }
  Parameter& operator[](std::size_t i) { return params_[i]; }
  const Parameter& operator[](std::size_t i) const { return params_[i]; }
  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  std::vector<Parameter*> pointers() {
    std::vector<Parameter*> out;
    for (auto& p : params_) out.push_back(&p);
    return out;
  }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.value.size();
    return n;
  }

  void zero_grad() {
    for (auto& p : params_) p.zero_grad();
  }

 private:
  std::deque<Parameter> params_;
};

namespace detail {

inline void fill_normal(Tensor& t, double std, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, std);
  for (double& v : t.values()) v = normal(rng);
}

// Binds parameters to a tape either as trainable leaves or as constants.
class Binder {
 public:
  Binder(Tape& tape, bool trainable) : tape_(tape), trainable_(trainable) {}
  Var operator()(Parameter& p) const { return trainable_ ? tape_.parameter(p) : tape_.constant(p.value); }
  Var zeros(Shape s) const { return tape_.constant(Tensor(s)); }
  Tape& tape() const { return tape_; }

 private:
  Tape& tape_;
  bool trainable_;
};

}  // namespace detail

class Generator {
 public:
  explicit Generator(GeneratorConfig cfg, std::uint64_t seed = 0) : cfg_(cfg) {
    cfg_.validate();
    const std::size_t f = cfg_.base_channels;
    add_conv("enc0", 1, f, 7, false);
    add_norm("enc0", f);
    add_conv("down1", f, 2 * f, 3, false);
    add_norm("down1", 2 * f);
    add_conv("down2", 2 * f, 4 * f, 3, false);
    add_norm("down2", 4 * f);
    for (std::size_t r = 0; r < cfg_.n_resblocks; ++r) {
      const std::string p = "res" + std::to_string(r);
      add_conv(p + ".a", 4 * f, 4 * f, 3, false);
      add_norm(p + ".a", 4 * f);
      add_conv(p + ".b", 4 * f, 4 * f, 3, false);
      add_norm(p + ".b", 4 * f);
    }
    add_transposed("up1", 4 * f, 2 * f, 3);
    add_norm("up1", 2 * f);
    add_transposed("up2", 2 * f, f, 3);
    add_norm("up2", f);
    add_conv("head", f, 1, 7, true);
    initialize(seed);
  }

  const GeneratorConfig& config() const noexcept { return cfg_; }
  ParameterSet& parameters() noexcept { return params_; }
  const ParameterSet& parameters() const noexcept { return params_; }

  void initialize(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    for (auto& p : params_) {
      p.first_moment.fill(0.0);
      p.second_moment.fill(0.0);
      p.adam_steps = 0;
      p.zero_grad();
      if (p.name.ends_with(".gain")) {
        p.value.fill(1.0);
      } else if (p.name.ends_with(".bias")) {
        p.value.fill(0.0);
      } else {
        const bool head = p.name == "head.weight";
        detail::fill_normal(p.value, head && cfg_.global_skip ? cfg_.head_init_std : cfg_.init_std, rng);
      }
    }
  }

  void check_input(const Shape& s) const {
    if (s.c != 1) throw ShapeError("generator expects 1 input channel, got " + s.str());
    if (s.h % 4 != 0 || s.w % 4 != 0 || s.h == 0 || s.w == 0) {
      throw ShapeError("generator input " + std::to_string(s.h) + "x" + std::to_string(s.w) +
                       " must have height and width divisible by 4; pad the image to a multiple of 4");
    }
  }

  // x: (N, 1, H, W) with H, W divisible by 4. Output in [0, 1], same shape.
  Var forward(Tape& tape, Var x, bool trainable = true) {
    check_input(x.shape());
    const detail::Binder bind(tape, trainable);
    std::size_t i = 0;
    auto next = [&]() -> Parameter& { return params_[i++]; };
    auto conv_block = [&](Var h, std::size_t stride, std::size_t pad, bool act) {
      Parameter& w = next();
      Var y = conv2d(h, bind(w), bind.zeros(Shape{1, w.value.shape().n, 1, 1}), stride, pad);
      Parameter& g = next();
      Parameter& b = next();
      y = instance_norm(y, bind(g), bind(b));
      return act ? relu(y) : y;
    };
    auto up_block = [&](Var h) {
      Parameter& w = next();
      Var y = conv_transpose2d(h, bind(w), bind.zeros(Shape{1, w.value.shape().c, 1, 1}), 2, 1, 1);
      Parameter& g = next();
      Parameter& b = next();
      return relu(instance_norm(y, bind(g), bind(b)));
    };
    Var h = conv_block(x, 1, 3, true);
    h = conv_block(h, 2, 1, true);
    h = conv_block(h, 2, 1, true);
    for (std::size_t r = 0; r < cfg_.n_resblocks; ++r) {
      Var t = conv_block(h, 1, 1, true);
      t = conv_block(t, 1, 1, false);
      h = add(h, t);
    }
    h = up_block(h);
    h = up_block(h);
    Parameter& hw = next();
    Parameter& hb = next();
    Var z = tanh(conv2d(h, bind(hw), bind(hb), 1, 3));
    if (cfg_.global_skip) return clamp(add(x, z), 0.0, 1.0);
    return scale(add_scalar(z, 1.0), 0.5);
  }

 private:
  void add_conv(const std::string& name, std::size_t in, std::size_t out, std::size_t k, bool bias) {
    params_.add(name + ".weight", Shape{out, in, k, k});
    if (bias) params_.add(name + ".bias", Shape{1, out, 1, 1});
  }
  void add_transposed(const std::string& name, std::size_t in, std::size_t out, std::size_t k) {
    params_.add(name + ".weight", Shape{in, out, k, k});
  }
  void add_norm(const std::string& name, std::size_t ch) {
    params_.add(name + ".norm.gain", Shape{1, ch, 1, 1});
    params_.add(name + ".norm.bias", Shape{1, ch, 1, 1});
  }

  GeneratorConfig cfg_;
  ParameterSet params_;
};

class Discriminator {
 public:
  explicit Discriminator(DiscriminatorConfig cfg, std::uint64_t seed = 0) : cfg_(cfg) {
    cfg_.validate();
    const std::size_t f = cfg_.base_channels;
    params_.add("d0.weight", Shape{f, 1, 3, 3});
    params_.add("d0.bias", Shape{1, f, 1, 1});
    std::size_t in = f;
    for (std::size_t layer = 1; layer < 4; ++layer) {
      const std::string p = "d" + std::to_string(layer);
      params_.add(p + ".weight", Shape{2 * in, in, 3, 3});
      params_.add(p + ".norm.gain", Shape{1, 2 * in, 1, 1});
      params_.add(p + ".norm.bias", Shape{1, 2 * in, 1, 1});
      in *= 2;
    }
    params_.add("fc.weight", Shape{1, in, 1, 1});
    params_.add("fc.bias", Shape{1, 1, 1, 1});
    initialize(seed);
  }

  const DiscriminatorConfig& config() const noexcept { return cfg_; }
  ParameterSet& parameters() noexcept { return params_; }
  const ParameterSet& parameters() const noexcept { return params_; }

  void initialize(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    for (auto& p : params_) {
      p.first_moment.fill(0.0);
      p.second_moment.fill(0.0);
      p.adam_steps = 0;
      p.zero_grad();
      if (p.name.ends_with(".gain")) {
        p.value.fill(1.0);
      } else if (p.name.ends_with(".bias")) {
        p.value.fill(0.0);
      } else {
        detail::fill_normal(p.value, cfg_.init_std, rng);
      }
    }
  }

  // x: (N, 1, H, W), H, W >= 16. Returns probabilities of shape (N, 1, 1, 1).
  Var forward(Tape& tape, Var x, bool trainable = true) {
    const Shape s = x.shape();
    if (s.c != 1 || s.h < 16 || s.w < 16) {
      throw ShapeError("discriminator expects (N, 1, H, W) with H, W >= 16, got " + s.str());
    }
    const detail::Binder bind(tape, trainable);
    const double slope = cfg_.leaky_slope;
    Var h = leaky_relu(conv2d(x, bind(params_[0]), bind(params_[1]), 2, 1), slope);
    std::size_t i = 2;
    for (std::size_t layer = 1; layer < 4; ++layer) {
      Parameter& w = params_[i++];
      Var y = conv2d(h, bind(w), bind.zeros(Shape{1, w.value.shape().n, 1, 1}), 2, 1);
      Parameter& g = params_[i++];
      Parameter& b = params_[i++];
      h = leaky_relu(instance_norm(y, bind(g), bind(b)), slope);
    }
    Var pooled = global_avg_pool(h);
    Var logit = conv2d(pooled, bind(params_[i]), bind(params_[i + 1]), 1, 0);
    return sigmoid(logit);
  }

 private:
  DiscriminatorConfig cfg_;
  ParameterSet params_;
};

// Fixed Sobel pair as a 3x3 convolution with zero padding: (N, C, H, W) -> (N, 2C, H, W),
// channel 2c = horizontal derivative of input channel c, 2c + 1 = vertical derivative.
inline Var sobel_layer(Var x) {
  const Shape s = x.shape();
  if (s.h < 3 || s.w < 3) throw ShapeError("sobel_layer needs H, W >= 3, got " + s.str());
  static constexpr double kx[3][3] = {{-1, 0, 1}, {-2, 0, 2}, {-1, 0, 1}};
  Tensor w(Shape{2 * s.c, s.c, 3, 3});
  for (std::size_t c = 0; c < s.c; ++c) {
    for (std::size_t i = 0; i < 3; ++i) {
      for (std::size_t j = 0; j < 3; ++j) {
        w.at(2 * c, c, i, j) = kx[i][j];
        w.at(2 * c + 1, c, i, j) = kx[j][i];
      }
    }
  }
  Tape& tape = *x.tape;
  return conv2d(x, tape.constant(std::move(w)), tape.constant(Tensor(Shape{1, 2 * s.c, 1, 1})), 1, 1);
}

inline Var content_loss(Var restored, Var target) { return mean_abs_diff(restored, target); }

inline Var edge_loss(Var restored, Var target) {
  return mean_abs_diff(sobel_layer(restored), sobel_layer(target));
}

// -mean[ln D(real) + ln(1 - D(fake))]
inline Var discriminator_loss(Var d_real, Var d_fake, bool clamp_probabilities = false) {
  return add(bce(d_real, 1.0, clamp_probabilities), bce(d_fake, 0.0, clamp_probabilities));
}

// Non-saturating generator objective -mean[ln D(G(x))].
inline Var generator_gan_loss(Var d_fake, bool clamp_probabilities = false) {
  return bce(d_fake, 1.0, clamp_probabilities);
}

struct GanLosses {
  Var d_loss;
  Var g_loss;
};

inline GanLosses gan_losses(Var d_real, Var d_fake, bool clamp_probabilities = false) {
  return {discriminator_loss(d_real, d_fake, clamp_probabilities), generator_gan_loss(d_fake, clamp_probabilities)};
}

// Literal minimax generator term mean[ln(1 - D(G(x)))], for reporting only.
inline double minimax_generator_value(const Tensor& d_fake) {
  double s = 0.0;
  for (double p : d_fake.values()) s += std::log1p(-p);
  return s / static_cast<double>(d_fake.size());
}

inline Var total_loss(Var content, Var gan_g, Var edge, const LossWeights& w) {
  w.validate();
  return weighted_sum({{content, 1.0}, {gan_g, w.lambda_gan}, {edge, w.lambda_edge}});
}

inline double total_loss(double content, double gan_g, double edge, const LossWeights& w) {
  w.validate();
  return content + w.lambda_gan * gan_g + w.lambda_edge * edge;
}

// Image list -> (N, 1, H, W); all images must share a shape.
inline Tensor images_to_tensor(const std::vector<const Image*>& images) {
  if (images.empty()) throw ShapeError("empty image batch");
  const std::size_t h = images.front()->height();
  const std::size_t w = images.front()->width();
  Tensor t(Shape{images.size(), 1, h, w});
  for (std::size_t n = 0; n < images.size(); ++n) {
    if (images[n]->height() != h || images[n]->width() != w) throw ShapeError("batch images differ in size");
    std::copy(images[n]->pixels().begin(), images[n]->pixels().end(), t.data() + n * h * w);
  }
  return t;
}

inline Image tensor_to_image(const Tensor& t, std::size_t n = 0, std::size_t c = 0) {
  const Shape& s = t.shape();
  Image img(s.h, s.w);
  const double* src = t.data() + (n * s.c + c) * s.plane();
  std::copy(src, src + s.plane(), img.pixels().begin());
  return img;
}

}  // namespace cmrlab
