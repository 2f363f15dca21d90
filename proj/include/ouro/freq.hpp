#pragma once

#include <cmath>
#include <complex>
#include <vector>

#include <unsupported/Eigen/FFT>

#include "ouro/grid.hpp"
#include "ouro/schedule.hpp"
#include "ouro/queue.hpp"

namespace ouro {

// Ideal circular mask in centered (DC-at-center) layout. A bin is inside when
// its normalized radius sqrt((u/(h/2))^2 + (v/(w/2))^2) is at most r.
struct FreqMask {
  int h = 0;
  int w = 0;
  double r = 0.0;
  Mask mask;

  // Mask value for an unshifted DFT bin (ky, kx).
  unsigned char at_unshifted(int ky, int kx) const {
    return mask((ky + h / 2) % h, (kx + w / 2) % w);
  }
};

inline FreqMask freq_mask(int h, int w, double r) {
  if (h < 1 || w < 1) throw DimensionError("freq_mask: dimensions must be positive");
  if (!(r >= 0.0) || !std::isfinite(r)) throw ConfigError("tail.low_pass_threshold", "must be >= 0");
  FreqMask m{h, w, r, Mask(h, w)};
  const double half_h = h / 2.0;
  const double half_w = w / 2.0;
  for (int y = 0; y < h; ++y) {
    const double u = (y - h / 2) / half_h;
    for (int x = 0; x < w; ++x) {
      const double v = (x - w / 2) / half_w;
      m.mask(y, x) = (u * u + v * v <= r * r) ? 1 : 0;
    }
  }
  return m;
}

namespace detail {

using Spectrum = std::vector<std::complex<double>>;

// Row-major 2D DFT of one real plane.
inline Spectrum fft2(std::span<const double> plane, int h, int w) {
  Eigen::FFT<double> fft;
  Spectrum spec(static_cast<std::size_t>(h) * w);
  std::vector<std::complex<double>> in(static_cast<std::size_t>(w)), out;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) in[static_cast<std::size_t>(x)] = plane[static_cast<std::size_t>(y) * w + x];
    fft.fwd(out, in);
    std::copy(out.begin(), out.end(), spec.begin() + static_cast<std::ptrdiff_t>(y) * w);
  }
  std::vector<std::complex<double>> col(static_cast<std::size_t>(h));
  for (int x = 0; x < w; ++x) {
    for (int y = 0; y < h; ++y) col[static_cast<std::size_t>(y)] = spec[static_cast<std::size_t>(y) * w + x];
    fft.fwd(out, col);
    for (int y = 0; y < h; ++y) spec[static_cast<std::size_t>(y) * w + x] = out[static_cast<std::size_t>(y)];
  }
  return spec;
}

// Inverse of fft2 (normalized), keeping the complex result.
inline Spectrum ifft2(Spectrum spec, int h, int w) {
  Eigen::FFT<double> fft;
  std::vector<std::complex<double>> col(static_cast<std::size_t>(h)), out;
  for (int x = 0; x < w; ++x) {
    for (int y = 0; y < h; ++y) col[static_cast<std::size_t>(y)] = spec[static_cast<std::size_t>(y) * w + x];
    fft.inv(out, col);
    for (int y = 0; y < h; ++y) spec[static_cast<std::size_t>(y) * w + x] = out[static_cast<std::size_t>(y)];
  }
  std::vector<std::complex<double>> row(static_cast<std::size_t>(w));
  for (int y = 0; y < h; ++y) {
    std::copy(spec.begin() + static_cast<std::ptrdiff_t>(y) * w,
              spec.begin() + static_cast<std::ptrdiff_t>(y + 1) * w, row.begin());
    fft.inv(out, row);
    std::copy(out.begin(), out.end(), spec.begin() + static_cast<std::ptrdiff_t>(y) * w);
  }
  return spec;
}

struct FilterResult {
  Grid out;
  double max_imag = 0.0;  // imaginary residue discarded by the real cast
};

inline FilterResult apply_mask(const Grid& x, const FreqMask& m, bool keep_inside) {
  if (!x.all_finite()) throw NumericalError(-1, "spectral filter received non-finite input");
  if (m.h != x.height() || m.w != x.width()) throw DimensionError("frequency mask does not match grid");
  FilterResult res{Grid(x.shape())};
  const int h = x.height();
  const int w = x.width();
  for (int ch = 0; ch < x.channels(); ++ch) {
    Spectrum spec = fft2(x.channel(ch), h, w);
    for (int ky = 0; ky < h; ++ky) {
      for (int kx = 0; kx < w; ++kx) {
        const bool inside = m.at_unshifted(ky, kx) != 0;
        if (inside != keep_inside) spec[static_cast<std::size_t>(ky) * w + kx] = 0.0;
      }
    }
    const Spectrum back = ifft2(std::move(spec), h, w);
    auto dst = res.out.channel(ch);
    for (std::size_t i = 0; i < back.size(); ++i) {
      dst[i] = back[i].real();
      res.max_imag = std::max(res.max_imag, std::abs(back[i].imag()));
    }
  }
  return res;
}

}  // namespace detail

inline Grid low_pass(const Grid& x, double r) {
  return detail::apply_mask(x, freq_mask(x.height(), x.width(), r), true).out;
}

inline Grid high_pass(const Grid& x, double r) {
  return detail::apply_mask(x, freq_mask(x.height(), x.width(), r), false).out;
}

// New tail latent at level T: low band of the re-noised second-to-last latent
// plus the high band of fresh noise eta.
inline FrameLatent coherent_tail_sample(const FrameLatent& second_to_last, const NoiseSchedule& sched,
                                        const Grid& renoise_eps, const Grid& eta, double r) {
  const int T = sched.steps();
  if (second_to_last.noise_level != T - 1) {
    throw QueueInvariantError("coherent tail sampling needs a level-" + std::to_string(T - 1) +
                              " latent, got level " + std::to_string(second_to_last.noise_level));
  }
  const Grid renoised = renoise(second_to_last.data, T, renoise_eps, sched);
  Grid data = low_pass(renoised, r) + high_pass(eta, r);
  return FrameLatent{std::move(data), T, second_to_last.frame_index + 1};
}

}  // namespace ouro
