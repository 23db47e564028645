#pragma once

#include <cmath>
#include <cstddef>
#include <filesystem>
#include <sstream>
#include <string>
#include <vector>

#include "cmrlab/error.hpp"
#include "cmrlab/image.hpp"
#include "cmrlab/io.hpp"

namespace cmrlab {

// Square, odd-sized, nonnegative blur kernel. Index (i, j) holds the weight for
// offset (x = j - c, y = i - c) with c = (size - 1) / 2.
struct PSF {
  Image weights;

  std::size_t size() const noexcept { return weights.width(); }
  std::size_t center() const noexcept { return (size() - 1) / 2; }
  double operator()(std::size_t i, std::size_t j) const noexcept { return weights(i, j); }

  double sum() const {
    double s = 0.0;
    for (double w : weights.pixels()) s += w;
    return s;
  }

  static PSF delta(std::size_t size = 1) {
    PSF p{Image(size, size, 0.0)};
    p.weights(p.center(), p.center()) = 1.0;
    return p;
  }

  // Throws KernelError unless square, odd, nonnegative and summing to one within tol.
  void validate(double tol = 1e-9) const {
    if (weights.empty() || weights.height() != weights.width() || weights.width() % 2 == 0) {
      throw KernelError("PSF must be square with odd size, got " + std::to_string(weights.height()) + "x" +
                        std::to_string(weights.width()));
    }
    for (double w : weights.pixels()) {
      if (!(w >= 0.0) || !std::isfinite(w)) throw KernelError("PSF weights must be finite and nonnegative");
    }
    const double s = sum();
    if (std::abs(s - 1.0) > tol) throw KernelError("PSF weights sum to " + std::to_string(s) + ", expected 1");
  }
};

// Text format: first token K, then K*K weights in row-major order.
inline std::string format_psf(const PSF& psf) {
  std::ostringstream os;
  os.precision(17);
  os << psf.size() << "\n";
  for (std::size_t i = 0; i < psf.size(); ++i) {
    for (std::size_t j = 0; j < psf.size(); ++j) os << (j ? " " : "") << psf(i, j);
    os << "\n";
  }
  return os.str();
}

inline PSF parse_psf(const std::string& text) {
  std::istringstream is(text);
  std::size_t k = 0;
  if (!(is >> k) || k == 0 || k % 2 == 0) throw KernelError("PSF file must start with an odd kernel size");
  PSF psf{Image(k, k)};
  for (double& w : psf.weights.pixels()) {
    if (!(is >> w)) throw KernelError("PSF file truncated");
  }
  psf.validate();
  return psf;
}

inline PSF read_psf(const std::filesystem::path& path) { return parse_psf(read_file_text(path)); }

inline void write_psf(const std::filesystem::path& path, const PSF& psf) { write_file_atomic(path, format_psf(psf)); }

}  // namespace cmrlab
