#pragma once

// Image-space motion artifact synthesis: autoregressive (Markov) camera-style
// trajectories, PSF rasterization and the blur-plus-Gaussian-noise model.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "cmrlab/codec.hpp"
#include "cmrlab/error.hpp"
#include "cmrlab/image.hpp"
#include "cmrlab/manifest.hpp"
#include "cmrlab/parallel.hpp"
#include "cmrlab/psf.hpp"

namespace cmrlab {

struct Point2 {
  double x = 0.0;
  double y = 0.0;
  friend bool operator==(const Point2&, const Point2&) = default;
};

struct TrajectoryParams {
  std::size_t steps = 16;
  Point2 drift_axis{0.0, 1.0};
  double step_sigma_along = 0.6;
  double step_sigma_perp = 0.15;
  double momentum = 0.7;
  double max_step = 1.0;

  void validate() const {
    if (steps < 1) throw ConfigError("trajectory needs at least one step");
    if (!(step_sigma_along >= 0.0) || !(step_sigma_perp >= 0.0)) throw ConfigError("step sigmas must be >= 0");
    if (std::abs(std::hypot(drift_axis.x, drift_axis.y) - 1.0) > 1e-9) throw ConfigError("drift axis must be a unit vector");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must be in [0, 1)");
    if (!(max_step > 0.0) || !std::isfinite(max_step)) throw ConfigError("max step must be > 0");
  }
};

struct Trajectory {
  std::vector<Point2> points;
  friend bool operator==(const Trajectory&, const Trajectory&) = default;
};

struct NoiseParams {
  double sigma = 0.0;
  std::uint64_t seed = 0;
};

// First-order autoregressive velocity walk starting at the origin.
inline Trajectory generate_trajectory(const TrajectoryParams& params, std::uint64_t seed) {
  params.validate();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const Point2 along = params.drift_axis;
  const Point2 perp{-along.y, along.x};
  Trajectory t;
  t.points.reserve(params.steps);
  t.points.push_back({0.0, 0.0});
  Point2 vel{0.0, 0.0};
  for (std::size_t i = 1; i < params.steps; ++i) {
    const double a = params.step_sigma_along * normal(rng);
    const double b = params.step_sigma_perp * normal(rng);
    vel.x = params.momentum * vel.x + a * along.x + b * perp.x;
    vel.y = params.momentum * vel.y + a * along.y + b * perp.y;
    const double speed = std::hypot(vel.x, vel.y);
    if (speed > params.max_step) {
      vel.x *= params.max_step / speed;
      vel.y *= params.max_step / speed;
    }
    const Point2& last = t.points.back();
    t.points.push_back({last.x + vel.x, last.y + vel.y});
  }
  return t;
}

// Recentres the path on its bounding-box centre and, if it still overflows the
// K x K window, shrinks it uniformly to fit. The result no longer starts at the origin.
inline Trajectory center_in_kernel(const Trajectory& traj, std::size_t kernel_size) {
  if (traj.points.empty()) return traj;
  double min_x = traj.points[0].x, max_x = min_x, min_y = traj.points[0].y, max_y = min_y;
  for (const auto& p : traj.points) {
    min_x = std::min(min_x, p.x);
    max_x = std::max(max_x, p.x);
    min_y = std::min(min_y, p.y);
    max_y = std::max(max_y, p.y);
  }
  const double cx = 0.5 * (min_x + max_x);
  const double cy = 0.5 * (min_y + max_y);
  const double half = (static_cast<double>(kernel_size) - 1.0) / 2.0;
  const double extent = std::max(0.5 * (max_x - min_x), 0.5 * (max_y - min_y));
  const double scale = extent > half ? half / extent * (1.0 - 1e-12) : 1.0;
  Trajectory out;
  out.points.reserve(traj.points.size());
  for (const auto& p : traj.points) out.points.push_back({(p.x - cx) * scale, (p.y - cy) * scale});
  return out;
}

// Bilinear splat of every trajectory point onto a K x K grid centred at the origin.
inline PSF rasterize_psf(const Trajectory& traj, std::size_t kernel_size) {
  if (kernel_size == 0 || kernel_size % 2 == 0) throw ConfigError("kernel size must be odd");
  if (traj.points.empty()) throw ConfigError("cannot rasterize an empty trajectory");
  PSF psf{Image(kernel_size, kernel_size, 0.0)};
  const double c = static_cast<double>(psf.center());
  const double limit = static_cast<double>(kernel_size) - 1.0;
  const double w = 1.0 / static_cast<double>(traj.points.size());
  for (std::size_t k = 0; k < traj.points.size(); ++k) {
    const double gx = c + traj.points[k].x;
    const double gy = c + traj.points[k].y;
    if (!(gx >= 0.0 && gx <= limit && gy >= 0.0 && gy <= limit)) {
      throw KernelError("trajectory point " + std::to_string(k) + " (" + std::to_string(traj.points[k].x) + ", " +
                        std::to_string(traj.points[k].y) + ") falls outside the " + std::to_string(kernel_size) +
                        "x" + std::to_string(kernel_size) + " kernel");
    }
    const auto x0 = static_cast<std::size_t>(std::floor(gx));
    const auto y0 = static_cast<std::size_t>(std::floor(gy));
    const double fx = gx - static_cast<double>(x0);
    const double fy = gy - static_cast<double>(y0);
    psf.weights(y0, x0) += w * (1.0 - fx) * (1.0 - fy);
    if (fx > 0.0) psf.weights(y0, x0 + 1) += w * fx * (1.0 - fy);
    if (fy > 0.0) psf.weights(y0 + 1, x0) += w * (1.0 - fx) * fy;
    if (fx > 0.0 && fy > 0.0) psf.weights(y0 + 1, x0 + 1) += w * fx * fy;
  }
  const double total = psf.sum();
  for (double& v : psf.weights.pixels()) v /= total;
  return psf;
}

namespace detail {

inline std::size_t wrap_index(long long i, std::size_t n) {
  const auto m = static_cast<long long>(n);
  return static_cast<std::size_t>(((i % m) + m) % m);
}

inline std::size_t clamp_index(long long i, std::size_t n) {
  return static_cast<std::size_t>(std::clamp<long long>(i, 0, static_cast<long long>(n) - 1));
}

}  // namespace detail

// Direct spatial convolution (not correlation), without clamping.
inline Image convolve(const Image& img, const PSF& psf, Boundary boundary = Boundary::circular) {
  if (psf.size() > img.height() || psf.size() > img.width()) {
    throw DimensionError("kernel of size " + std::to_string(psf.size()) + " larger than image " +
                         std::to_string(img.height()) + "x" + std::to_string(img.width()));
  }
  const auto c = static_cast<long long>(psf.center());
  const std::size_t k = psf.size();
  Image out(img.height(), img.width());
  for (std::size_t r = 0; r < img.height(); ++r) {
    for (std::size_t col = 0; col < img.width(); ++col) {
      double acc = 0.0;
      for (std::size_t i = 0; i < k; ++i) {
        const long long sr = static_cast<long long>(r) - (static_cast<long long>(i) - c);
        const std::size_t rr = boundary == Boundary::circular ? detail::wrap_index(sr, img.height())
                                                              : detail::clamp_index(sr, img.height());
        for (std::size_t j = 0; j < k; ++j) {
          const double w = psf(i, j);
          if (w == 0.0) continue;
          const long long sc = static_cast<long long>(col) - (static_cast<long long>(j) - c);
          const std::size_t cc = boundary == Boundary::circular ? detail::wrap_index(sc, img.width())
                                                                : detail::clamp_index(sc, img.width());
          acc += w * img(rr, cc);
        }
      }
      out(r, col) = acc;
    }
  }
  return out;
}

inline Image add_gaussian_noise(Image img, const NoiseParams& noise) {
  if (!(noise.sigma >= 0.0)) throw ConfigError("noise sigma must be >= 0");
  if (noise.sigma == 0.0) return img;
  std::mt19937_64 rng(noise.seed);
  std::normal_distribution<double> normal(0.0, noise.sigma);
  for (double& v : img.pixels()) v += normal(rng);
  return img;
}

// PSF * image + N(0, sigma^2), clamped to [0,1].
inline Image apply_motion_blur(const Image& img, const PSF& psf, const NoiseParams& noise,
                               Boundary boundary = Boundary::circular) {
  return clamp01(add_gaussian_noise(convolve(img, psf, boundary), noise));
}

// Mean of circularly shifted copies, one per trajectory point (bilinear for fractional offsets).
inline Image blur_by_frame_average(const Image& img, const Trajectory& traj) {
  if (traj.points.empty()) throw ConfigError("empty trajectory");
  const double reach = (static_cast<double>(std::min(img.height(), img.width())) - 1.0) / 2.0;
  for (const auto& p : traj.points) {
    if (std::abs(p.x) > std::floor(reach) || std::abs(p.y) > std::floor(reach)) {
      throw DimensionError("trajectory offset exceeds the largest kernel that fits the image");
    }
  }
  Image out(img.height(), img.width(), 0.0);
  const double w = 1.0 / static_cast<double>(traj.points.size());
  for (const auto& p : traj.points) {
    const double fx0 = std::floor(p.x);
    const double fy0 = std::floor(p.y);
    const double fx = p.x - fx0;
    const double fy = p.y - fy0;
    const auto ix = static_cast<long long>(fx0);
    const auto iy = static_cast<long long>(fy0);
    for (std::size_t r = 0; r < img.height(); ++r) {
      const auto r0 = detail::wrap_index(static_cast<long long>(r) - iy, img.height());
      const auto r1 = detail::wrap_index(static_cast<long long>(r) - iy - 1, img.height());
      for (std::size_t c = 0; c < img.width(); ++c) {
        const auto c0 = detail::wrap_index(static_cast<long long>(c) - ix, img.width());
        const auto c1 = detail::wrap_index(static_cast<long long>(c) - ix - 1, img.width());
        const double v = (1.0 - fx) * (1.0 - fy) * img(r0, c0) + fx * (1.0 - fy) * img(r0, c1) +
                         (1.0 - fx) * fy * img(r1, c0) + fx * fy * img(r1, c1);
        out(r, c) += w * v;
      }
    }
  }
  return out;
}

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

// PSF for one synthesized pair: the trajectory is seeded with pair_seed and fitted to the kernel.
inline PSF pair_psf(const TrajectoryParams& params, std::size_t kernel_size, std::uint64_t pair_seed) {
  return rasterize_psf(center_in_kernel(generate_trajectory(params, pair_seed), kernel_size), kernel_size);
}

inline NoiseParams pair_noise(double sigma, std::uint64_t pair_seed) { return {sigma, splitmix64(pair_seed)}; }

struct SynthOptions {
  TrajectoryParams trajectory;
  std::size_t kernel_size = 9;
  double noise_sigma = 0.0;
  std::size_t count_per_image = 1;
  std::uint64_t base_seed = 0;
  Boundary boundary = Boundary::circular;
  ImageFormat output_format = ImageFormat::pgm;
};

struct SynthResult {
  std::filesystem::path manifest_path;
  std::vector<ManifestRecord> records;
  std::vector<std::string> warnings;
};

inline bool has_image_extension(const std::filesystem::path& p) {
  try {
    format_from_path(p);
    return true;
  } catch (const Error&) {
    return false;
  }
}

// Blurs count_per_image copies of every decodable image in input_dir and writes
// blur files plus manifest.jsonl into output_dir. Pair k uses seed base_seed ^ k.
inline SynthResult synth_dataset(const std::filesystem::path& input_dir, const std::filesystem::path& output_dir,
                                 const SynthOptions& opt) {
  opt.trajectory.validate();
  if (opt.kernel_size == 0 || opt.kernel_size % 2 == 0) throw ConfigError("kernel size must be odd");
  if (opt.count_per_image == 0) throw ConfigError("count per image must be >= 1");
  if (!(opt.noise_sigma >= 0.0)) throw ConfigError("noise sigma must be >= 0");
  std::error_code ec;
  if (!std::filesystem::is_directory(input_dir, ec)) throw ConfigError("input directory not found: " + input_dir.string());

  std::vector<std::filesystem::path> candidates;
  for (const auto& entry : std::filesystem::directory_iterator(input_dir)) {
    if (entry.is_regular_file() && has_image_extension(entry.path())) candidates.push_back(entry.path());
  }
  std::sort(candidates.begin(), candidates.end());

  SynthResult result;
  std::vector<std::filesystem::path> sources;
  std::vector<Image> images;
  for (const auto& path : candidates) {
    try {
      images.push_back(read_image(path));
      sources.push_back(path);
    } catch (const Error& e) {
      result.warnings.push_back("skipping " + path.string() + ": " + e.what());
    }
  }
  if (images.empty()) throw ConfigError("no decodable images in " + input_dir.string());

  std::filesystem::create_directories(output_dir);
  const std::string ext = opt.output_format == ImageFormat::pgm ? ".pgm" : ".png";
  const std::size_t total = images.size() * opt.count_per_image;
  result.records.resize(total);
  parallel_for(total, [&](std::size_t pair) {
    const std::size_t src = pair / opt.count_per_image;
    const std::uint64_t seed = opt.base_seed ^ static_cast<std::uint64_t>(pair);
    const PSF psf = pair_psf(opt.trajectory, opt.kernel_size, seed);
    const Image blurred = apply_motion_blur(images[src], psf, pair_noise(opt.noise_sigma, seed), opt.boundary);
    char name[32];
    std::snprintf(name, sizeof name, "blur_%06zu", pair);
    const auto blur_path = output_dir / (std::string(name) + ext);
    write_image(blur_path, blurred);
    ManifestRecord rec;
    rec.sharp_path = std::filesystem::relative(sources[src], output_dir).generic_string();
    rec.blur_path = blur_path.filename().generic_string();
    rec.seed = seed;
    result.records[pair] = std::move(rec);
  });
  result.manifest_path = output_dir / "manifest.jsonl";
  save_manifest(result.manifest_path, result.records);
  return result;
}

}  // namespace cmrlab
