#pragma once

// Full-reference (PSNR, mean SSIM) and no-reference (Sobel edge connectivity) image scores.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "cmrlab/error.hpp"
#include "cmrlab/image.hpp"

namespace cmrlab {

// Returned by psnr() when the images are identical.
inline constexpr double kPsnrIdentical = std::numeric_limits<double>::infinity();

inline double psnr(const Image& a, const Image& b, double peak = 1.0) {
  require_same_shape(a, b, "psnr");
  if (a.empty()) throw DimensionError("psnr: empty images");
  double sse = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a.pixels()[i] - b.pixels()[i];
    sse += d * d;
  }
  const double mse = sse / static_cast<double>(a.size());
  if (mse == 0.0) return kPsnrIdentical;
  return 10.0 * std::log10(peak * peak / mse);
}

struct SsimOptions {
  std::size_t window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  double peak = 1.0;
};

namespace detail {

inline std::vector<double> gaussian_taps(std::size_t size, double sigma) {
  std::vector<double> taps(size);
  const double c = (static_cast<double>(size) - 1.0) / 2.0;
  for (std::size_t i = 0; i < size; ++i) {
    const double d = static_cast<double>(i) - c;
    taps[i] = std::exp(-d * d / (2.0 * sigma * sigma));
  }
  const double s = std::accumulate(taps.begin(), taps.end(), 0.0);
  for (double& t : taps) t /= s;
  return taps;
}

// Separable 'valid' filtering: output is (H - k + 1) x (W - k + 1).
inline Image filter_valid(const Image& img, const std::vector<double>& taps) {
  const std::size_t k = taps.size();
  const std::size_t oh = img.height() - k + 1;
  const std::size_t ow = img.width() - k + 1;
  Image tmp(img.height(), ow);
  for (std::size_t r = 0; r < img.height(); ++r) {
    for (std::size_t c = 0; c < ow; ++c) {
      double acc = 0.0;
      for (std::size_t j = 0; j < k; ++j) acc += taps[j] * img(r, c + j);
      tmp(r, c) = acc;
    }
  }
  Image out(oh, ow);
  for (std::size_t r = 0; r < oh; ++r) {
    for (std::size_t c = 0; c < ow; ++c) {
      double acc = 0.0;
      for (std::size_t i = 0; i < k; ++i) acc += taps[i] * tmp(r + i, c);
      out(r, c) = acc;
    }
  }
  return out;
}

}  // namespace detail

// Mean of the local SSIM map over every fully contained Gaussian window.
inline double mssim(const Image& a, const Image& b, const SsimOptions& opt = {}) {
  require_same_shape(a, b, "mssim");
  if (opt.window == 0 || a.height() < opt.window || a.width() < opt.window) {
    throw DimensionError("mssim: image " + std::to_string(a.height()) + "x" + std::to_string(a.width()) +
                         " smaller than the " + std::to_string(opt.window) + "-pixel window");
  }
  const auto taps = detail::gaussian_taps(opt.window, opt.sigma);
  Image aa(a.height(), a.width()), bb(a.height(), a.width()), ab(a.height(), a.width());
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double x = a.pixels()[i];
    const double y = b.pixels()[i];
    aa.pixels()[i] = x * x;
    bb.pixels()[i] = y * y;
    ab.pixels()[i] = x * y;
  }
  const Image mu_a = detail::filter_valid(a, taps);
  const Image mu_b = detail::filter_valid(b, taps);
  const Image e_aa = detail::filter_valid(aa, taps);
  const Image e_bb = detail::filter_valid(bb, taps);
  const Image e_ab = detail::filter_valid(ab, taps);
  const double c1 = (opt.k1 * opt.peak) * (opt.k1 * opt.peak);
  const double c2 = (opt.k2 * opt.peak) * (opt.k2 * opt.peak);
  double total = 0.0;
  for (std::size_t i = 0; i < mu_a.size(); ++i) {
    const double ma = mu_a.pixels()[i];
    const double mb = mu_b.pixels()[i];
    const double va = e_aa.pixels()[i] - ma * ma;
    const double vb = e_bb.pixels()[i] - mb * mb;
    const double cov = e_ab.pixels()[i] - ma * mb;
    total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
  }
  return total / static_cast<double>(mu_a.size());
}

struct GradientMap {
  Image gx;
  Image gy;
  Image magnitude;

  std::size_t height() const noexcept { return magnitude.height(); }
  std::size_t width() const noexcept { return magnitude.width(); }
};

// 3x3 Sobel cross-correlation: gx = right - left, gy = bottom - top.
inline GradientMap sobel(const Image& img, Boundary boundary = Boundary::replicate) {
  if (img.height() < 3 || img.width() < 3) {
    throw DimensionError("sobel needs at least 3x3 pixels, got " + std::to_string(img.height()) + "x" +
                         std::to_string(img.width()));
  }
  const std::size_t h = img.height();
  const std::size_t w = img.width();
  auto at = [&](long long r, long long c) {
    const auto hh = static_cast<long long>(h);
    const auto ww = static_cast<long long>(w);
    if (boundary == Boundary::circular) {
      r = ((r % hh) + hh) % hh;
      c = ((c % ww) + ww) % ww;
    } else {
      r = std::clamp<long long>(r, 0, hh - 1);
      c = std::clamp<long long>(c, 0, ww - 1);
    }
    return img(static_cast<std::size_t>(r), static_cast<std::size_t>(c));
  };
  GradientMap g{Image(h, w), Image(h, w), Image(h, w)};
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t c = 0; c < w; ++c) {
      const auto y = static_cast<long long>(r);
      const auto x = static_cast<long long>(c);
      const double gx = (at(y - 1, x + 1) + 2.0 * at(y, x + 1) + at(y + 1, x + 1)) -
                        (at(y - 1, x - 1) + 2.0 * at(y, x - 1) + at(y + 1, x - 1));
      const double gy = (at(y + 1, x - 1) + 2.0 * at(y + 1, x) + at(y + 1, x + 1)) -
                        (at(y - 1, x - 1) + 2.0 * at(y - 1, x) + at(y - 1, x + 1));
      g.gx(r, c) = gx;
      g.gy(r, c) = gy;
      g.magnitude(r, c) = std::sqrt(gx * gx + gy * gy);
    }
  }
  return g;
}

struct BinaryEdgeMap {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> bits;

  BinaryEdgeMap() = default;
  BinaryEdgeMap(std::size_t h, std::size_t w) : height(h), width(w), bits(h * w, 0) {}

  std::uint8_t operator()(std::size_t r, std::size_t c) const noexcept { return bits[r * width + c]; }
  std::uint8_t& operator()(std::size_t r, std::size_t c) noexcept { return bits[r * width + c]; }

  std::size_t count() const noexcept { return static_cast<std::size_t>(std::count(bits.begin(), bits.end(), 1)); }
};

// Pixel is an edge iff its magnitude reaches fraction * (max magnitude); empty when max is 0.
inline BinaryEdgeMap threshold_edges(const GradientMap& g, double fraction = 0.25) {
  if (!(fraction > 0.0 && fraction <= 1.0)) throw ConfigError("edge threshold fraction must be in (0, 1]");
  BinaryEdgeMap e(g.height(), g.width());
  double peak = 0.0;
  for (double m : g.magnitude.pixels()) peak = std::max(peak, m);
  if (peak == 0.0) return e;
  const double cut = fraction * peak;
  for (std::size_t i = 0; i < e.bits.size(); ++i) e.bits[i] = g.magnitude.pixels()[i] >= cut ? 1 : 0;
  return e;
}

namespace detail {

class DisjointSet {
 public:
  explicit DisjointSet(std::size_t n) : parent_(n) { std::iota(parent_.begin(), parent_.end(), std::size_t{0}); }

  std::size_t find(std::size_t x) {
    while (parent_[x] != x) {
      parent_[x] = parent_[parent_[x]];
      x = parent_[x];
    }
    return x;
  }

  void unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a == b) return;
    if (a < b) std::swap(a, b);
    parent_[a] = b;
  }

 private:
  std::vector<std::size_t> parent_;
};

}  // namespace detail

// Number of maximal foreground regions under 4- or 8-adjacency (single raster pass with union-find).
inline std::size_t connected_components(const BinaryEdgeMap& map, int connectivity) {
  if (connectivity != 4 && connectivity != 8) throw ConfigError("connectivity must be 4 or 8");
  const std::size_t h = map.height;
  const std::size_t w = map.width;
  detail::DisjointSet sets(h * w);
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t c = 0; c < w; ++c) {
      if (!map(r, c)) continue;
      const std::size_t here = r * w + c;
      if (c > 0 && map(r, c - 1)) sets.unite(here, here - 1);
      if (r > 0) {
        if (map(r - 1, c)) sets.unite(here, here - w);
        if (connectivity == 8) {
          if (c > 0 && map(r - 1, c - 1)) sets.unite(here, here - w - 1);
          if (c + 1 < w && map(r - 1, c + 1)) sets.unite(here, here - w + 1);
        }
      }
    }
  }
  std::size_t roots = 0;
  for (std::size_t i = 0; i < h * w; ++i) {
    if (map.bits[i] && sets.find(i) == i) ++roots;
  }
  return roots;
}

// A: edge pixels, B: 4-connected components, C: 8-connected components. Lower ratios mean
// better linked edges.
struct EdgeConnectivityReport {
  std::size_t a = 0;
  std::size_t b = 0;
  std::size_t c = 0;
  double c_over_b = 0.0;
  double c_over_a = 0.0;
};

inline EdgeConnectivityReport edge_connectivity(const BinaryEdgeMap& edges) {
  EdgeConnectivityReport rep;
  rep.a = edges.count();
  rep.b = connected_components(edges, 4);
  rep.c = connected_components(edges, 8);
  if (rep.a == 0 || rep.b == 0) throw NoEdgesError("edge map has no edge pixels; connectivity ratios undefined");
  rep.c_over_b = static_cast<double>(rep.c) / static_cast<double>(rep.b);
  rep.c_over_a = static_cast<double>(rep.c) / static_cast<double>(rep.a);
  return rep;
}

inline EdgeConnectivityReport edge_connectivity(const Image& img, double fraction = 0.25) {
  return edge_connectivity(threshold_edges(sobel(img), fraction));
}

}  // namespace cmrlab
