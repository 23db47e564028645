#pragma once

// Fourier-domain machinery and the segmented (multi-cycle) acquisition simulator.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "cmrlab/error.hpp"
#include "cmrlab/fft.hpp"
#include "cmrlab/image.hpp"
#include "cmrlab/psf.hpp"

namespace cmrlab {

class KSpaceGrid {
 public:
  KSpaceGrid() = default;
  KSpaceGrid(std::size_t height, std::size_t width) : height_(height), width_(width), data_(height * width) {}

  std::size_t height() const noexcept { return height_; }
  std::size_t width() const noexcept { return width_; }
  std::size_t size() const noexcept { return data_.size(); }

  cplx& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * width_ + c]; }
  const cplx& operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * width_ + c]; }

  std::span<cplx> values() noexcept { return data_; }
  std::span<const cplx> values() const noexcept { return data_; }

 private:
  std::size_t height_ = 0;
  std::size_t width_ = 0;
  std::vector<cplx> data_;
};

inline KSpaceGrid fft2(const KSpaceGrid& grid) {
  KSpaceGrid out = grid;
  fft2_inplace(out.values(), out.height(), out.width(), false);
  return out;
}

inline KSpaceGrid fft2(const Image& img) {
  KSpaceGrid out(img.height(), img.width());
  for (std::size_t i = 0; i < img.size(); ++i) out.values()[i] = img.pixels()[i];
  fft2_inplace(out.values(), out.height(), out.width(), false);
  return out;
}

inline KSpaceGrid ifft2(const KSpaceGrid& grid) {
  KSpaceGrid out = grid;
  fft2_inplace(out.values(), out.height(), out.width(), true);
  return out;
}

inline Image magnitude(const KSpaceGrid& grid) {
  Image out(grid.height(), grid.width());
  for (std::size_t i = 0; i < grid.size(); ++i) out.pixels()[i] = std::abs(grid.values()[i]);
  return out;
}

inline Image real_part(const KSpaceGrid& grid) {
  Image out(grid.height(), grid.width());
  for (std::size_t i = 0; i < grid.size(); ++i) out.pixels()[i] = grid.values()[i].real();
  return out;
}

namespace detail {

// Signed frequency index in [-(n/2), (n-1)/2].
inline double signed_frequency(std::size_t k, std::size_t n) {
  return k < (n + 1) / 2 ? static_cast<double>(k) : static_cast<double>(k) - static_cast<double>(n);
}

inline cplx shift_phase(std::size_t u, std::size_t v, std::size_t width, std::size_t height, double dx, double dy) {
  const double angle = -2.0 * std::numbers::pi *
                       (signed_frequency(u, width) * dx / static_cast<double>(width) +
                        signed_frequency(v, height) * dy / static_cast<double>(height));
  return std::polar(1.0, angle);
}

}  // namespace detail

// Fourier shift theorem: the inverse transform of the result is the input
// circularly translated by (dx, dy) pixels (x along columns, y along rows).
inline KSpaceGrid phase_ramp(KSpaceGrid grid, double dx, double dy) {
  if (dx == 0.0 && dy == 0.0) return grid;
  for (std::size_t v = 0; v < grid.height(); ++v) {
    for (std::size_t u = 0; u < grid.width(); ++u) {
      grid(v, u) *= detail::shift_phase(u, v, grid.width(), grid.height(), dx, dy);
    }
  }
  return grid;
}

struct Displacement {
  double dx = 0.0;
  double dy = 0.0;
  friend bool operator==(const Displacement&, const Displacement&) = default;
};

// Which cardiac cycle fills each k-space row, and how far the anatomy had moved in that cycle.
struct AcquisitionSchedule {
  static constexpr std::size_t kUnassigned = std::numeric_limits<std::size_t>::max();

  std::size_t n_cycles = 1;
  std::size_t m_segments = 1;
  std::vector<std::size_t> row_assignment;
  std::vector<Displacement> displacements;

  void validate(std::size_t height) const {
    if (n_cycles == 0) throw ScheduleError("schedule needs at least one cycle");
    if (m_segments == 0) throw ScheduleError("schedule needs at least one segment per cycle");
    if (displacements.size() != n_cycles) {
      throw ScheduleError("schedule has " + std::to_string(displacements.size()) + " displacements for " +
                          std::to_string(n_cycles) + " cycles");
    }
    for (std::size_t r = 0; r < height; ++r) {
      if (r >= row_assignment.size() || row_assignment[r] == kUnassigned) {
        throw ScheduleError("k-space row " + std::to_string(r) + " is not covered by any cycle");
      }
      if (row_assignment[r] >= n_cycles) {
        throw ScheduleError("k-space row " + std::to_string(r) + " assigned to cycle " +
                            std::to_string(row_assignment[r]) + " outside [0, " + std::to_string(n_cycles) + ")");
      }
    }
    if (row_assignment.size() > height) {
      throw ScheduleError("schedule assigns " + std::to_string(row_assignment.size()) + " rows to a " +
                          std::to_string(height) + "-row grid");
    }
    for (const auto& d : displacements) {
      if (!std::isfinite(d.dx) || !std::isfinite(d.dy)) throw ScheduleError("displacements must be finite");
    }
  }
};

// Each k-space row is taken from the spectrum of the image displaced by its cycle's
// offset; the reconstruction is the clamped magnitude of the inverse transform.
inline Image simulate_segmented_acquisition(const Image& img, const AcquisitionSchedule& schedule) {
  schedule.validate(img.height());
  const KSpaceGrid spectrum = fft2(img);
  KSpaceGrid composite(img.height(), img.width());
  for (std::size_t v = 0; v < img.height(); ++v) {
    const Displacement& d = schedule.displacements[schedule.row_assignment[v]];
    for (std::size_t u = 0; u < img.width(); ++u) {
      composite(v, u) = spectrum(v, u);
      if (d.dx != 0.0 || d.dy != 0.0) composite(v, u) *= detail::shift_phase(u, v, img.width(), img.height(), d.dx, d.dy);
    }
  }
  return clamp01(magnitude(ifft2(composite)));
}

// Round-robin row ownership (row r -> cycle r mod N). Per-cycle displacement is an
// integer number of pixels drawn uniformly from [-max_shift, max_shift] along drift_axis.
inline AcquisitionSchedule make_interleaved_schedule(std::size_t height, std::size_t n_cycles, double max_shift,
                                                     std::uint64_t seed, Displacement drift_axis = {0.0, 1.0},
                                                     std::size_t m_segments = 1) {
  if (n_cycles == 0 || n_cycles > height) {
    throw ScheduleError("cycle count " + std::to_string(n_cycles) + " must be in [1, " + std::to_string(height) + "]");
  }
  if (!(max_shift >= 0.0) || !std::isfinite(max_shift)) throw ScheduleError("max shift must be finite and >= 0");
  const double norm = std::hypot(drift_axis.dx, drift_axis.dy);
  if (!(norm > 0.0)) throw ScheduleError("drift axis must be nonzero");
  AcquisitionSchedule s;
  s.n_cycles = n_cycles;
  s.m_segments = m_segments;
  s.row_assignment.resize(height);
  for (std::size_t r = 0; r < height; ++r) s.row_assignment[r] = r % n_cycles;
  const auto bound = static_cast<long long>(std::floor(max_shift));
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<long long> dist(-bound, bound);
  for (std::size_t n = 0; n < n_cycles; ++n) {
    const auto amount = static_cast<double>(dist(rng));
    s.displacements.push_back({amount * drift_axis.dx / norm, amount * drift_axis.dy / norm});
  }
  return s;
}

// Kernel embedded in an height x width grid with its centre at (0, 0), wrapping negative offsets.
inline Image pad_kernel(const PSF& psf, std::size_t height, std::size_t width) {
  if (psf.size() > height || psf.size() > width) {
    throw DimensionError("kernel of size " + std::to_string(psf.size()) + " larger than image " +
                         std::to_string(height) + "x" + std::to_string(width));
  }
  Image out(height, width);
  const auto c = static_cast<long long>(psf.center());
  const auto h = static_cast<long long>(height);
  const auto w = static_cast<long long>(width);
  for (std::size_t i = 0; i < psf.size(); ++i) {
    for (std::size_t j = 0; j < psf.size(); ++j) {
      const auto r = ((static_cast<long long>(i) - c) % h + h) % h;
      const auto col = ((static_cast<long long>(j) - c) % w + w) % w;
      out(static_cast<std::size_t>(r), static_cast<std::size_t>(col)) += psf(i, j);
    }
  }
  return out;
}

// Circular convolution via the convolution theorem (unitary convention needs the sqrt(HW) factor).
inline Image fft_convolve(const Image& img, const KSpaceGrid& kernel_spectrum) {
  KSpaceGrid spec = fft2(img);
  const double scale = std::sqrt(static_cast<double>(img.size()));
  for (std::size_t i = 0; i < spec.size(); ++i) spec.values()[i] *= kernel_spectrum.values()[i] * scale;
  return real_part(ifft2(spec));
}

inline Image fft_convolve(const Image& img, const PSF& psf) {
  return fft_convolve(img, fft2(pad_kernel(psf, img.height(), img.width())));
}

}  // namespace cmrlab
