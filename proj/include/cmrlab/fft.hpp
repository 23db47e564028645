#pragma once

// Complex FFT for any length: iterative radix-2 for powers of two,
// Bluestein's chirp-z reduction onto a power-of-two convolution otherwise.

#include <cmath>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <span>
#include <vector>

namespace cmrlab {

using cplx = std::complex<double>;

namespace detail {

inline bool is_pow2(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

inline std::size_t next_pow2(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

class Radix2 {
 public:
  Radix2() = default;
  explicit Radix2(std::size_t n) : n_(n), twiddle_(n / 2), rev_(n) {
    for (std::size_t k = 0; k < n / 2; ++k) {
      const double a = -2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(n);
      twiddle_[k] = {std::cos(a), std::sin(a)};
    }
    std::size_t bits = 0;
    while ((std::size_t{1} << bits) < n) ++bits;
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t r = 0;
      for (std::size_t b = 0; b < bits; ++b) r |= ((i >> b) & 1u) << (bits - 1 - b);
      rev_[i] = r;
    }
  }

  // Unnormalized forward transform, exp(-2 pi i jk / n).
  void forward(std::span<cplx> x) const {
    for (std::size_t i = 0; i < n_; ++i) {
      if (i < rev_[i]) std::swap(x[i], x[rev_[i]]);
    }
    for (std::size_t len = 2; len <= n_; len <<= 1) {
      const std::size_t half = len / 2;
      const std::size_t step = n_ / len;
      for (std::size_t start = 0; start < n_; start += len) {
        for (std::size_t k = 0; k < half; ++k) {
          const cplx t = twiddle_[k * step] * x[start + k + half];
          x[start + k + half] = x[start + k] - t;
          x[start + k] += t;
        }
      }
    }
  }

  void inverse(std::span<cplx> x) const {
    for (auto& v : x) v = std::conj(v);
    forward(x);
    for (auto& v : x) v = std::conj(v);
  }

 private:
  std::size_t n_ = 0;
  std::vector<cplx> twiddle_;
  std::vector<std::size_t> rev_;
};

}  // namespace detail

class Fft1d {
 public:
  explicit Fft1d(std::size_t n) : n_(n) {
    if (n <= 1) return;
    if (detail::is_pow2(n)) {
      radix2_ = detail::Radix2(n);
      return;
    }
    bluestein_ = true;
    m_ = detail::next_pow2(2 * n - 1);
    radix2_ = detail::Radix2(m_);
    chirp_.resize(n);
    const std::uint64_t two_n = 2 * static_cast<std::uint64_t>(n);
    for (std::size_t k = 0; k < n; ++k) {
      // k^2 mod 2n keeps the angle argument small and exact.
      const std::uint64_t k2 = (static_cast<std::uint64_t>(k) * k) % two_n;
      const double a = -std::numbers::pi * static_cast<double>(k2) / static_cast<double>(n);
      chirp_[k] = {std::cos(a), std::sin(a)};
    }
    kernel_.assign(m_, cplx{});
    kernel_[0] = std::conj(chirp_[0]);
    for (std::size_t k = 1; k < n; ++k) {
      kernel_[k] = std::conj(chirp_[k]);
      kernel_[m_ - k] = std::conj(chirp_[k]);
    }
    radix2_.forward(kernel_);
  }

  std::size_t size() const noexcept { return n_; }

  // Unnormalized forward DFT in place.
  void forward(std::span<cplx> x) const {
    if (n_ <= 1) return;
    if (!bluestein_) {
      radix2_.forward(x);
      return;
    }
    std::vector<cplx> a(m_, cplx{});
    for (std::size_t k = 0; k < n_; ++k) a[k] = x[k] * chirp_[k];
    radix2_.forward(a);
    for (std::size_t k = 0; k < m_; ++k) a[k] *= kernel_[k];
    radix2_.inverse(a);
    const double inv_m = 1.0 / static_cast<double>(m_);
    for (std::size_t k = 0; k < n_; ++k) x[k] = a[k] * chirp_[k] * inv_m;
  }

  // Unnormalized inverse DFT in place.
  void inverse(std::span<cplx> x) const {
    for (auto& v : x) v = std::conj(v);
    forward(x);
    for (auto& v : x) v = std::conj(v);
  }

 private:
  std::size_t n_ = 0;
  bool bluestein_ = false;
  std::size_t m_ = 0;
  detail::Radix2 radix2_;
  std::vector<cplx> chirp_;
  std::vector<cplx> kernel_;
};

// In-place unitary 2-D transform of a row-major height x width grid.
inline void fft2_inplace(std::span<cplx> data, std::size_t height, std::size_t width, bool inverse) {
  const Fft1d rows(width);
  const Fft1d cols(height);
  for (std::size_t r = 0; r < height; ++r) {
    auto row = data.subspan(r * width, width);
    inverse ? rows.inverse(row) : rows.forward(row);
  }
  std::vector<cplx> col(height);
  for (std::size_t c = 0; c < width; ++c) {
    for (std::size_t r = 0; r < height; ++r) col[r] = data[r * width + c];
    inverse ? cols.inverse(col) : cols.forward(col);
    for (std::size_t r = 0; r < height; ++r) data[r * width + c] = col[r];
  }
  const double scale = 1.0 / std::sqrt(static_cast<double>(height * width));
  for (auto& v : data) v *= scale;
}

}  // namespace cmrlab
