#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "cmrlab/error.hpp"

namespace cmrlab {

enum class Boundary { circular, replicate };

// Single-channel grayscale image, row-major, nominally in [0,1].
class Image {
 public:
  Image() = default;
  Image(std::size_t height, std::size_t width, double fill = 0.0)
      : height_(height), width_(width), data_(height * width, fill) {}
  Image(std::size_t height, std::size_t width, std::vector<double> data)
      : height_(height), width_(width), data_(std::move(data)) {
    if (data_.size() != height_ * width_) {
      throw DimensionError("image data length " + std::to_string(data_.size()) + " != " +
                           std::to_string(height_) + "x" + std::to_string(width_));
    }
  }

  std::size_t height() const noexcept { return height_; }
  std::size_t width() const noexcept { return width_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t row, std::size_t col) noexcept { return data_[row * width_ + col]; }
  double operator()(std::size_t row, std::size_t col) const noexcept { return data_[row * width_ + col]; }

  std::span<double> pixels() noexcept { return data_; }
  std::span<const double> pixels() const noexcept { return data_; }
  const std::vector<double>& vector() const noexcept { return data_; }

  bool same_shape(const Image& other) const noexcept {
    return height_ == other.height_ && width_ == other.width_;
  }

  friend bool operator==(const Image&, const Image&) = default;

 private:
  std::size_t height_ = 0;
  std::size_t width_ = 0;
  std::vector<double> data_;
};

inline void require_same_shape(const Image& a, const Image& b, const char* what) {
  if (!a.same_shape(b)) {
    throw DimensionError(std::string(what) + ": shape mismatch " + std::to_string(a.height()) + "x" +
                         std::to_string(a.width()) + " vs " + std::to_string(b.height()) + "x" +
                         std::to_string(b.width()));
  }
}

inline Image clamp01(Image img) {
  for (double& v : img.pixels()) v = std::clamp(v, 0.0, 1.0);
  return img;
}

inline double max_abs_diff(const Image& a, const Image& b) {
  require_same_shape(a, b, "max_abs_diff");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.pixels()[i] - b.pixels()[i]));
  return m;
}

// Rigid augmentation: rotation about the geometric centre, then zoom, then translation.
struct RigidParams {
  double rotation_deg = 0.0;
  double translate_x = 0.0;
  double translate_y = 0.0;
  double zoom = 1.0;

  void validate() const {
    if (!(zoom > 0.0) || !std::isfinite(zoom)) throw ConfigError("rigid zoom must be > 0");
    if (!std::isfinite(rotation_deg) || !std::isfinite(translate_x) || !std::isfinite(translate_y)) {
      throw ConfigError("rigid parameters must be finite");
    }
  }
};

// Sampling ranges for random rigid augmentation. Defaults are configuration, not measured values.
struct AugmentRanges {
  double max_rotation_deg = 10.0;
  double max_translate = 8.0;
  double min_zoom = 0.9;
  double max_zoom = 1.1;
};

template <class Rng>
RigidParams sample_rigid_params(const AugmentRanges& ranges, Rng& rng) {
  std::uniform_real_distribution<double> rot(-ranges.max_rotation_deg, ranges.max_rotation_deg);
  std::uniform_real_distribution<double> shift(-ranges.max_translate, ranges.max_translate);
  std::uniform_real_distribution<double> zoom(ranges.min_zoom, ranges.max_zoom);
  RigidParams p;
  p.rotation_deg = rot(rng);
  p.translate_x = shift(rng);
  p.translate_y = shift(rng);
  p.zoom = zoom(rng);
  return p;
}

struct CropMode {
  bool random = false;
  std::uint64_t seed = 0;

  static CropMode center() { return {}; }
  static CropMode randomized(std::uint64_t seed) { return {true, seed}; }
};

// Crop to crop_size x crop_size and clamp into [0,1].
inline Image preprocess(const Image& img, std::size_t crop_size, CropMode mode = CropMode::center()) {
  if (crop_size == 0 || crop_size > std::min(img.height(), img.width())) {
    throw DimensionError("crop size " + std::to_string(crop_size) + " does not fit image " +
                         std::to_string(img.height()) + "x" + std::to_string(img.width()));
  }
  std::size_t top = (img.height() - crop_size) / 2;
  std::size_t left = (img.width() - crop_size) / 2;
  if (mode.random) {
    std::mt19937_64 rng(mode.seed);
    top = std::uniform_int_distribution<std::size_t>(0, img.height() - crop_size)(rng);
    left = std::uniform_int_distribution<std::size_t>(0, img.width() - crop_size)(rng);
  }
  Image out(crop_size, crop_size);
  for (std::size_t r = 0; r < crop_size; ++r) {
    for (std::size_t c = 0; c < crop_size; ++c) {
      out(r, c) = std::clamp(img(top + r, left + c), 0.0, 1.0);
    }
  }
  return out;
}

namespace detail {

// Bilinear sample at continuous (x, y); `fill` outside [0, W-1] x [0, H-1].
inline double bilinear_or_fill(const Image& img, double x, double y, double fill) {
  constexpr double snap = 1e-9;
  const double max_x = static_cast<double>(img.width()) - 1.0;
  const double max_y = static_cast<double>(img.height()) - 1.0;
  if (x < -snap || y < -snap || x > max_x + snap || y > max_y + snap) return fill;
  x = std::clamp(x, 0.0, max_x);
  y = std::clamp(y, 0.0, max_y);
  // Snap coordinates that are integral up to rounding noise so exact permutations stay exact.
  if (std::abs(x - std::round(x)) < snap) x = std::round(x);
  if (std::abs(y - std::round(y)) < snap) y = std::round(y);
  const auto x0 = static_cast<std::size_t>(std::floor(x));
  const auto y0 = static_cast<std::size_t>(std::floor(y));
  const double fx = x - static_cast<double>(x0);
  const double fy = y - static_cast<double>(y0);
  const std::size_t x1 = std::min(x0 + 1, img.width() - 1);
  const std::size_t y1 = std::min(y0 + 1, img.height() - 1);
  double v = (1.0 - fx) * (1.0 - fy) * img(y0, x0);
  if (fx > 0.0) v += fx * (1.0 - fy) * img(y0, x1);
  if (fy > 0.0) v += (1.0 - fx) * fy * img(y1, x0);
  if (fx > 0.0 && fy > 0.0) v += fx * fy * img(y1, x1);
  return v;
}

}  // namespace detail

// Inverse-mapped bilinear resampling. The forward map sends p to
// c + zoom * R(theta) * (p - c) + t with c = ((W-1)/2, (H-1)/2), x right and y down.
inline Image rigid_augment(const Image& img, const RigidParams& params, double fill = 0.0) {
  params.validate();
  if (params.rotation_deg == 0.0 && params.translate_x == 0.0 && params.translate_y == 0.0 &&
      params.zoom == 1.0) {
    return img;
  }
  const double theta = params.rotation_deg * std::numbers::pi / 180.0;
  const double cs = std::cos(theta);
  const double sn = std::sin(theta);
  const double cx = (static_cast<double>(img.width()) - 1.0) / 2.0;
  const double cy = (static_cast<double>(img.height()) - 1.0) / 2.0;
  Image out(img.height(), img.width());
  for (std::size_t r = 0; r < img.height(); ++r) {
    for (std::size_t c = 0; c < img.width(); ++c) {
      const double dx = (static_cast<double>(c) - cx - params.translate_x) / params.zoom;
      const double dy = (static_cast<double>(r) - cy - params.translate_y) / params.zoom;
      // R(-theta) applied to (dx, dy).
      const double sx = cx + cs * dx + sn * dy;
      const double sy = cy - sn * dx + cs * dy;
      out(r, c) = detail::bilinear_or_fill(img, sx, sy, fill);
    }
  }
  return out;
}

}  // namespace cmrlab
