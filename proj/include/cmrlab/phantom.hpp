#pragma once

// Synthetic test images: disks, rings and rectangles on a flat background.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>

#include "cmrlab/error.hpp"
#include "cmrlab/image.hpp"

namespace cmrlab {

namespace detail {

// Sets pixels whose centre lies in the annulus inner <= d <= outer to max(current, value).
inline void paint_annulus(Image& img, double cx, double cy, double inner, double outer, double value) {
  for (std::size_t r = 0; r < img.height(); ++r) {
    for (std::size_t c = 0; c < img.width(); ++c) {
      const double d = std::hypot(static_cast<double>(c) - cx, static_cast<double>(r) - cy);
      if (d <= outer && d >= inner) img(r, c) = std::max(img(r, c), value);
    }
  }
}

inline void paint_rect(Image& img, double x0, double y0, double x1, double y1, double value) {
  for (std::size_t r = 0; r < img.height(); ++r) {
    for (std::size_t c = 0; c < img.width(); ++c) {
      const double x = static_cast<double>(c);
      const double y = static_cast<double>(r);
      if (x >= x0 && x <= x1 && y >= y0 && y <= y1) img(r, c) = std::max(img(r, c), value);
    }
  }
}

}  // namespace detail

// Single bright disk centred in the frame.
inline Image disk_phantom(std::size_t size = 64, double radius = 16.0, double background = 0.1,
                          double foreground = 0.9) {
  if (size < 3) throw DimensionError("phantom size must be >= 3");
  Image img(size, size, background);
  const double c = (static_cast<double>(size) - 1.0) / 2.0;
  detail::paint_annulus(img, c, c, 0.0, radius, foreground);
  return img;
}

inline Image ring_phantom(std::size_t size = 64, double radius = 18.0, double thickness = 4.0,
                          double background = 0.1, double foreground = 0.9) {
  if (size < 3) throw DimensionError("phantom size must be >= 3");
  Image img(size, size, background);
  const double c = (static_cast<double>(size) - 1.0) / 2.0;
  detail::paint_annulus(img, c, c, radius - thickness, radius, foreground);
  return img;
}

// One high-contrast disk or ring plus `faint_objects` low-contrast ones. The faint
// contrasts sit just above the default edge threshold relative to the bright object.
inline Image disk_ring_phantom(std::uint64_t seed, std::size_t size = 64, std::size_t faint_objects = 3) {
  if (size < 32) throw DimensionError("disk/ring phantom needs size >= 32");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };
  const double background = 0.1;
  const double s = static_cast<double>(size);
  Image img(size, size, background);
  for (std::size_t k = 0; k <= faint_objects; ++k) {
    const double contrast = k == 0 ? 0.8 : uniform(0.22, 0.3);
    const double cx = uniform(0.1875 * s, 0.8125 * s);
    const double cy = uniform(0.1875 * s, 0.8125 * s);
    const double radius = uniform(5.0, 12.0) * s / 64.0;
    const bool ring = unit(rng) < 0.5;
    const double width = uniform(2.0, 4.0);
    detail::paint_annulus(img, cx, cy, ring ? radius - width : 0.0, radius, background + contrast);
  }
  return img;
}

// Training-set scenes: 3 to 6 disks, rings and rectangles of random intensity.
inline Image shapes_phantom(std::uint64_t seed, std::size_t size = 64) {
  if (size < 16) throw DimensionError("shapes phantom needs size >= 16");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };
  const double s = static_cast<double>(size);
  Image img(size, size, uniform(0.2, 0.35));
  const int objects = 3 + static_cast<int>(unit(rng) * 4.0);
  for (int k = 0; k < objects; ++k) {
    const double value = uniform(0.45, 0.85);
    const double cx = uniform(0.15 * s, 0.85 * s);
    const double cy = uniform(0.15 * s, 0.85 * s);
    const double u = unit(rng);
    if (u < 0.35) {
      detail::paint_annulus(img, cx, cy, 0.0, uniform(0.06, 0.2) * s, value);
    } else if (u < 0.7) {
      const double outer = uniform(0.1, 0.22) * s;
      detail::paint_annulus(img, cx, cy, outer - uniform(2.0, 4.0), outer, value);
    } else {
      const double hw = uniform(0.05, 0.18) * s;
      const double hh = uniform(0.05, 0.18) * s;
      detail::paint_rect(img, cx - hw, cy - hh, cx + hw, cy + hh, value);
    }
  }
  return img;
}

}  // namespace cmrlab
