#pragma once

#include <algorithm>
#include <complex>
#include <cstddef>
#include <functional>

#include "cmrlab/error.hpp"
#include "cmrlab/image.hpp"
#include "cmrlab/kspace.hpp"
#include "cmrlab/psf.hpp"

namespace cmrlab {

struct RLConfig {
  std::size_t iterations = 30;
  double epsilon = 1e-12;
};

// Called with (k, u_k) for every estimate before clamping, k = 0..iterations.
using RLObserver = std::function<void(std::size_t, const Image&)>;

// Richardson-Lucy deconvolution with a known PSF under circular boundary:
//   u_{k+1} = u_k * (psf_flipped (*) (blurred / (psf (*) u_k + eps))),  u_0 = blurred.
inline Image richardson_lucy(const Image& blurred, const PSF& psf, const RLConfig& cfg = {},
                             const RLObserver& observer = {}) {
  psf.validate();
  if (!(cfg.epsilon > 0.0)) throw ConfigError("Richardson-Lucy epsilon must be > 0");
  for (std::size_t r = 0; r < blurred.height(); ++r) {
    for (std::size_t c = 0; c < blurred.width(); ++c) {
      if (!(blurred(r, c) >= 0.0)) throw RangeError("Richardson-Lucy input must be nonnegative", r, c);
    }
  }
  Image u = blurred;
  if (observer) observer(0, u);
  if (cfg.iterations == 0) return clamp01(u);

  const KSpaceGrid forward = fft2(pad_kernel(psf, blurred.height(), blurred.width()));
  KSpaceGrid adjoint = forward;
  for (auto& v : adjoint.values()) v = std::conj(v);  // spectrum of the 180-degree flipped kernel

  for (std::size_t k = 1; k <= cfg.iterations; ++k) {
    const Image estimate = fft_convolve(u, forward);
    Image ratio(blurred.height(), blurred.width());
    for (std::size_t i = 0; i < ratio.size(); ++i) {
      ratio.pixels()[i] = blurred.pixels()[i] / (std::max(estimate.pixels()[i], 0.0) + cfg.epsilon);
    }
    const Image correction = fft_convolve(ratio, adjoint);
    for (std::size_t i = 0; i < u.size(); ++i) u.pixels()[i] *= std::max(correction.pixels()[i], 0.0);
    if (observer) observer(k, u);
  }
  return clamp01(std::move(u));
}

}  // namespace cmrlab
