#pragma once

// Spectral oracle used by the synthetic-data tests: an independent FFT-based
// peak extractor. Hann window + zero-padded radix-2 FFT + parabolic
// interpolation of local maxima. Nothing here touches the generator code
// beyond reading the produced samples.

#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

namespace freqtrain::testing {

inline void fft_radix2(std::vector<std::complex<double>>& a) {
  const size_t n = a.size();
  for (size_t i = 1, j = 0; i < n; ++i) {
    size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (size_t len = 2; len <= n; len <<= 1) {
    const double ang = -2.0 * std::numbers::pi / static_cast<double>(len);
    const std::complex<double> wlen(std::cos(ang), std::sin(ang));
    for (size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (size_t k = 0; k < len / 2; ++k) {
        const auto u = a[i + k];
        const auto v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
        w *= wlen;
      }
    }
  }
}

struct SpectralPeak {
  double freq_hz;
  double magnitude;
};

// Local maxima of the windowed magnitude spectrum above
// threshold_frac * (global max), with parabolic frequency interpolation.
inline std::vector<SpectralPeak> spectral_peaks(const double* samples, int n,
                                                double sample_rate,
                                                double threshold_frac = 0.1,
                                                int nfft = 16384) {
  std::vector<std::complex<double>> buf(static_cast<size_t>(nfft), {0.0, 0.0});
  for (int i = 0; i < n; ++i) {
    const double w =
        0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / static_cast<double>(n - 1));
    buf[static_cast<size_t>(i)] = samples[i] * w;
  }
  fft_radix2(buf);
  const int half = nfft / 2;
  std::vector<double> mag(static_cast<size_t>(half));
  double max_mag = 0.0;
  for (int i = 0; i < half; ++i) {
    mag[static_cast<size_t>(i)] = std::abs(buf[static_cast<size_t>(i)]);
    max_mag = std::max(max_mag, mag[static_cast<size_t>(i)]);
  }
  std::vector<SpectralPeak> peaks;
  const double thresh = threshold_frac * max_mag;
  const double df = sample_rate / nfft;
  for (int i = 1; i + 1 < half; ++i) {
    const double m = mag[static_cast<size_t>(i)];
    if (m <= thresh) continue;
    if (m > mag[static_cast<size_t>(i) - 1] && m >= mag[static_cast<size_t>(i) + 1]) {
      // Parabolic interpolation on log magnitude.
      const double l0 = std::log(mag[static_cast<size_t>(i) - 1] + 1e-300);
      const double l1 = std::log(m + 1e-300);
      const double l2 = std::log(mag[static_cast<size_t>(i) + 1] + 1e-300);
      const double denom = l0 - 2.0 * l1 + l2;
      double delta = 0.0;
      if (std::fabs(denom) > 1e-12) delta = 0.5 * (l0 - l2) / denom;
      if (delta > 0.5) delta = 0.5;
      if (delta < -0.5) delta = -0.5;
      peaks.push_back({(i + delta) * df, m});
    }
  }
  return peaks;
}

}  // namespace freqtrain::testing
