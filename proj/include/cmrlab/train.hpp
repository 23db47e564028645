#pragma once

// Adversarial training loop, checkpoints and single-image inference.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <functional>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "cmrlab/cmcn.hpp"
#include "cmrlab/codec.hpp"
#include "cmrlab/io.hpp"
#include "cmrlab/manifest.hpp"
#include "cmrlab/optim.hpp"
#include "cmrlab/synthblur.hpp"

namespace cmrlab {

struct TrainConfig {
  std::size_t epochs_constant = 1;
  std::size_t epochs_decay = 0;
  double lr0 = 1e-4;
  std::size_t batch = 4;
  std::uint64_t seed = 0;
  LossWeights weights;
  GeneratorConfig generator;
  DiscriminatorConfig discriminator;
  AdamConfig adam;
  bool clamp_probabilities = true;
  // Same random rigid transform on both images of a pair, drawn per sample per step.
  bool augment = false;
  AugmentRanges augment_ranges;

  void validate() const {
    if (augment && !(augment_ranges.min_zoom > 0.0 && augment_ranges.min_zoom <= augment_ranges.max_zoom)) {
      throw ConfigError("augment zoom range must satisfy 0 < min <= max");
    }
    if (batch < 1) throw ConfigError("batch must be >= 1");
    if (!(lr0 >= 0.0) || !std::isfinite(lr0)) throw ConfigError("learning rate must be finite and >= 0");
    weights.validate();
    generator.validate();
    discriminator.validate();
  }
};

struct TrainingPair {
  Image blurred;
  Image sharp;
};

struct LossRecord {
  std::size_t step = 0;
  double lr = 0.0;
  double content = 0.0;
  double edge = 0.0;
  double gan_g = 0.0;   // 0 when the adversarial term is disabled
  double d_loss = 0.0;  // 0 when the adversarial term is disabled
  double total = 0.0;
};

struct NamedTensor {
  std::string name;
  Tensor value;
  friend bool operator==(const NamedTensor&, const NamedTensor&) = default;
};

struct Checkpoint {
  static constexpr std::uint32_t kVersion = 1;

  std::uint32_t version = kVersion;
  GeneratorConfig generator;
  DiscriminatorConfig discriminator;
  std::uint64_t step = 0;
  std::vector<NamedTensor> tensors;  // "G." then "D." parameters, declared order
};

inline Checkpoint make_checkpoint(const Generator& g, const Discriminator& d, std::uint64_t step) {
  Checkpoint ck;
  ck.generator = g.config();
  ck.discriminator = d.config();
  ck.step = step;
  for (const auto& p : g.parameters()) ck.tensors.push_back({"G." + p.name, p.value});
  for (const auto& p : d.parameters()) ck.tensors.push_back({"D." + p.name, p.value});
  return ck;
}

namespace detail {

inline void load_into(ParameterSet& params, const std::vector<NamedTensor>& tensors, const std::string& prefix) {
  std::size_t i = 0;
  for (const auto& t : tensors) {
    if (!t.name.starts_with(prefix)) continue;
    if (i >= params.size()) throw ConfigError("checkpoint has extra tensor " + t.name);
    Parameter& p = params[i++];
    if (t.name != prefix + p.name || !(t.value.shape() == p.value.shape())) {
      throw ConfigError("checkpoint tensor " + t.name + " " + t.value.shape().str() + " does not match model " +
                        prefix + p.name + " " + p.value.shape().str());
    }
    p.value = t.value;
  }
  if (i != params.size()) throw ConfigError("checkpoint is missing " + prefix + " tensors");
}

inline nlohmann::ordered_json generator_json(const GeneratorConfig& c) {
  return {{"base_channels", c.base_channels},
          {"n_resblocks", c.n_resblocks},
          {"global_skip", c.global_skip},
          {"init_std", c.init_std},
          {"head_init_std", c.head_init_std}};
}

inline nlohmann::ordered_json discriminator_json(const DiscriminatorConfig& c) {
  return {{"base_channels", c.base_channels}, {"leaky_slope", c.leaky_slope}, {"init_std", c.init_std}};
}

inline void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

inline std::uint32_t get_u32(std::span<const std::uint8_t> in, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(in[at + i]) << (8 * i);
  return v;
}

}  // namespace detail

inline Generator generator_from_checkpoint(const Checkpoint& ck) {
  Generator g(ck.generator);
  detail::load_into(g.parameters(), ck.tensors, "G.");
  return g;
}

inline Discriminator discriminator_from_checkpoint(const Checkpoint& ck) {
  Discriminator d(ck.discriminator);
  detail::load_into(d.parameters(), ck.tensors, "D.");
  return d;
}

// "CMCN" | u32 version | u32 metadata length | metadata JSON | float64 LE data
inline std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ck) {
  nlohmann::ordered_json meta;
  meta["generator"] = detail::generator_json(ck.generator);
  meta["discriminator"] = detail::discriminator_json(ck.discriminator);
  meta["step"] = ck.step;
  auto table = nlohmann::ordered_json::array();
  for (const auto& t : ck.tensors) {
    const Shape& s = t.value.shape();
    table.push_back({{"name", t.name}, {"shape", {s.n, s.c, s.h, s.w}}});
  }
  meta["tensors"] = table;
  const std::string text = meta.dump();

  std::vector<std::uint8_t> out = {'C', 'M', 'C', 'N'};
  detail::put_u32(out, ck.version);
  detail::put_u32(out, static_cast<std::uint32_t>(text.size()));
  out.insert(out.end(), text.begin(), text.end());
  for (const auto& t : ck.tensors) {
    for (double v : t.value.values()) {
      std::uint64_t bits = std::bit_cast<std::uint64_t>(v);
      for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
    }
  }
  return out;
}

inline Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "CMCN", 4) != 0) {
    throw DecodeError("not a checkpoint (bad magic)", 0);
  }
  Checkpoint ck;
  ck.version = detail::get_u32(bytes, 4);
  if (ck.version != Checkpoint::kVersion) {
    throw UnsupportedFormatError("unsupported checkpoint version " + std::to_string(ck.version));
  }
  const std::size_t meta_len = detail::get_u32(bytes, 8);
  if (bytes.size() < 12 + meta_len) throw DecodeError("truncated checkpoint metadata", bytes.size());
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(bytes.begin() + 12, bytes.begin() + 12 + static_cast<std::ptrdiff_t>(meta_len));
    const auto& g = meta.at("generator");
    ck.generator.base_channels = g.at("base_channels").get<std::size_t>();
    ck.generator.n_resblocks = g.at("n_resblocks").get<std::size_t>();
    ck.generator.global_skip = g.at("global_skip").get<bool>();
    ck.generator.init_std = g.at("init_std").get<double>();
    ck.generator.head_init_std = g.at("head_init_std").get<double>();
    const auto& d = meta.at("discriminator");
    ck.discriminator.base_channels = d.at("base_channels").get<std::size_t>();
    ck.discriminator.leaky_slope = d.at("leaky_slope").get<double>();
    ck.discriminator.init_std = d.at("init_std").get<double>();
    ck.step = meta.at("step").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw DecodeError(std::string("bad checkpoint metadata: ") + e.what(), 12);
  }
  std::size_t at = 12 + meta_len;
  for (const auto& entry : meta.at("tensors")) {
    const auto dims = entry.at("shape").get<std::vector<std::size_t>>();
    if (dims.size() != 4) throw DecodeError("tensor shape must have 4 extents", at);
    Tensor t(Shape{dims[0], dims[1], dims[2], dims[3]});
    if (bytes.size() < at + 8 * t.size()) throw DecodeError("truncated checkpoint data", bytes.size());
    for (double& v : t.values()) {
      std::uint64_t bits = 0;
      for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(bytes[at + i]) << (8 * i);
      v = std::bit_cast<double>(bits);
      at += 8;
    }
    ck.tensors.push_back({entry.at("name").get<std::string>(), std::move(t)});
  }
  if (at != bytes.size()) throw DecodeError("trailing bytes after checkpoint data", at);
  // Validates names and shapes against the declared architecture.
  generator_from_checkpoint(ck);
  discriminator_from_checkpoint(ck);
  return ck;
}

inline void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
  write_file_atomic(path, encode_checkpoint(ck));
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  return decode_checkpoint(bytes);
}

using TrainObserver = std::function<void(const LossRecord&)>;

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<LossRecord> history;
};

inline std::size_t steps_per_epoch(std::size_t pairs, std::size_t batch) { return (pairs + batch - 1) / batch; }

// Deterministic for a fixed seed: initialization, data order and every update derive from it.
inline TrainResult train(const std::vector<TrainingPair>& pairs, const TrainConfig& cfg,
                         const TrainObserver& observer = {}) {
  cfg.validate();
  if (pairs.empty()) throw ConfigError("training set is empty");
  for (const auto& p : pairs) {
    require_same_shape(p.blurred, p.sharp, "training pair");
    if (!p.blurred.same_shape(pairs.front().blurred)) throw ShapeError("training images must share one size");
  }

  Generator gen(cfg.generator, splitmix64(cfg.seed ^ 0x6701u));
  Discriminator disc(cfg.discriminator, splitmix64(cfg.seed ^ 0xd15cu));
  gen.check_input(Shape{1, 1, pairs.front().sharp.height(), pairs.front().sharp.width()});
  std::mt19937_64 order_rng(splitmix64(cfg.seed ^ 0x0de7u));
  std::mt19937_64 augment_rng(splitmix64(cfg.seed ^ 0xa067u));
  const bool use_gan = cfg.weights.lambda_gan > 0.0;
  const bool clampp = cfg.clamp_probabilities;

  const std::size_t per_epoch = steps_per_epoch(pairs.size(), cfg.batch);
  const std::size_t constant_steps = cfg.epochs_constant * per_epoch;
  const std::size_t decay_steps = cfg.epochs_decay * per_epoch;
  auto g_params = gen.parameters().pointers();
  auto d_params = disc.parameters().pointers();

  TrainResult result;
  std::vector<std::size_t> order(pairs.size());
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < cfg.epochs_constant + cfg.epochs_decay; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), order_rng);
    for (std::size_t start = 0; start < order.size(); start += cfg.batch, ++step) {
      const double lr = lr_schedule(step, constant_steps, decay_steps, cfg.lr0);
      std::vector<const Image*> blur_batch;
      std::vector<const Image*> sharp_batch;
      std::vector<TrainingPair> augmented;
      augmented.reserve(cfg.batch);
      for (std::size_t k = start; k < std::min(order.size(), start + cfg.batch); ++k) {
        const TrainingPair& p = pairs[order[k]];
        if (cfg.augment) {
          const RigidParams rp = sample_rigid_params(cfg.augment_ranges, augment_rng);
          augmented.push_back({rigid_augment(p.blurred, rp), rigid_augment(p.sharp, rp)});
          blur_batch.push_back(&augmented.back().blurred);
          sharp_batch.push_back(&augmented.back().sharp);
        } else {
          blur_batch.push_back(&p.blurred);
          sharp_batch.push_back(&p.sharp);
        }
      }
      const Tensor blur_t = images_to_tensor(blur_batch);
      const Tensor sharp_t = images_to_tensor(sharp_batch);

      LossRecord rec;
      rec.step = step;
      rec.lr = lr;

      Tape g_tape;
      Var x = g_tape.constant(blur_t);
      Var target = g_tape.constant(sharp_t);
      Var fake = gen.forward(g_tape, x);

      if (use_gan) {
        Tape d_tape;
        Var d_real = disc.forward(d_tape, d_tape.constant(sharp_t));
        Var d_fake = disc.forward(d_tape, d_tape.constant(fake.value()));
        Var d_loss = discriminator_loss(d_real, d_fake, clampp);
        rec.d_loss = d_loss.value()[0];
        if (!std::isfinite(rec.d_loss)) {
          throw NumericError("non-finite discriminator loss at step " + std::to_string(step));
        }
        disc.parameters().zero_grad();
        d_tape.backward(d_loss);
        adam_step(d_params, lr, cfg.adam);
      }

      Var content = content_loss(fake, target);
      Var edge = edge_loss(fake, target);
      std::vector<std::pair<Var, double>> terms = {{content, 1.0}};
      if (cfg.weights.lambda_edge > 0.0) terms.emplace_back(edge, cfg.weights.lambda_edge);
      if (use_gan) {
        Var gan_g = generator_gan_loss(disc.forward(g_tape, fake, false), clampp);
        rec.gan_g = gan_g.value()[0];
        terms.emplace_back(gan_g, cfg.weights.lambda_gan);
      }
      Var total = weighted_sum(terms);
      rec.content = content.value()[0];
      rec.edge = edge.value()[0];
      rec.total = total.value()[0];
      if (!std::isfinite(rec.total) || !std::isfinite(rec.content) || !std::isfinite(rec.edge) ||
          !std::isfinite(rec.gan_g)) {
        std::ostringstream msg;
        msg << "non-finite loss at step " << step << ": content=" << rec.content << " edge=" << rec.edge
            << " gan_g=" << rec.gan_g << " d_loss=" << rec.d_loss;
        throw NumericError(msg.str());
      }
      gen.parameters().zero_grad();
      g_tape.backward(total);
      adam_step(g_params, lr, cfg.adam);

      result.history.push_back(rec);
      if (observer) observer(rec);
    }
  }
  result.checkpoint = make_checkpoint(gen, disc, step);
  return result;
}

inline std::vector<TrainingPair> load_training_pairs(const RunManifest& manifest) {
  std::vector<TrainingPair> pairs;
  for (const auto& rec : manifest.records) {
    pairs.push_back({read_image(manifest.resolve(rec.blur_path)), read_image(manifest.resolve(rec.sharp_path))});
  }
  return pairs;
}

inline TrainResult train(const RunManifest& manifest, const TrainConfig& cfg, const TrainObserver& observer = {}) {
  if (manifest.records.empty()) throw ConfigError("manifest has no records");
  return train(load_training_pairs(manifest), cfg, observer);
}

// Trailing mean of the content loss over `window` steps ending at `step`.
inline double smoothed_content(const std::vector<LossRecord>& history, std::size_t step, std::size_t window = 10) {
  if (history.empty()) throw ConfigError("empty loss history");
  step = std::min(step, history.size() - 1);
  const std::size_t first = step + 1 >= window ? step + 1 - window : 0;
  double s = 0.0;
  for (std::size_t i = first; i <= step; ++i) s += history[i].content;
  return s / static_cast<double>(step + 1 - first);
}

inline std::string format_loss_history(const std::vector<LossRecord>& history) {
  std::string out = "step,lr,content,edge,gan_g,d_loss,total\n";
  char buf[512];
  for (const auto& r : history) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", r.step, r.lr, r.content, r.edge,
                  r.gan_g, r.d_loss, r.total);
    out += buf;
  }
  return out;
}

inline Image correct(Generator& gen, const Image& img) {
  gen.check_input(Shape{1, 1, img.height(), img.width()});
  Tape tape;
  const Image* one[] = {&img};
  Var out = gen.forward(tape, tape.constant(images_to_tensor({one[0]})), false);
  return tensor_to_image(out.value());
}

inline Image correct(const Image& img, const Checkpoint& ck) {
  Generator gen = generator_from_checkpoint(ck);
  return correct(gen, img);
}

}  // namespace cmrlab
