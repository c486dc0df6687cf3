#include "freqtrain/dsp.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <numeric>

namespace freqtrain {

namespace {

using cplx = std::complex<double>;

// Evaluates the cascade response at z = e^{i w} (w in rad/sample).
cplx sos_response(const std::vector<Biquad>& sos, double w) {
  const cplx z1 = std::exp(cplx(0.0, -w));
  const cplx z2 = z1 * z1;
  cplx h(1.0, 0.0);
  for (const auto& s : sos) {
    h *= (s.b0 + s.b1 * z1 + s.b2 * z2) / (1.0 + s.a1 * z1 + s.a2 * z2);
  }
  return h;
}

// Steady-state DF2T state for constant input u (per section), matching the
// convention y = b0*x + z1; z1' = b1*x - a1*y + z2; z2' = b2*x - a2*y.
void steady_state(const Biquad& s, double u, double& z1, double& z2) {
  const double dc = (s.b0 + s.b1 + s.b2) / (1.0 + s.a1 + s.a2);
  const double y = dc * u;
  z2 = s.b2 * u - s.a2 * y;
  z1 = s.b1 * u - s.a1 * y + z2;
}

void sosfilt_inplace(const std::vector<Biquad>& sos, std::vector<double>& x) {
  for (const auto& s : sos) {
    double z1, z2;
    steady_state(s, x.empty() ? 0.0 : x.front(), z1, z2);
    for (double& v : x) {
      const double in = v;
      const double out = s.b0 * in + z1;
      z1 = s.b1 * in - s.a1 * out + z2;
      z2 = s.b2 * in - s.a2 * out;
      v = out;
    }
  }
}

double kaiser_i0(double x) {
  // Series expansion of the zeroth-order modified Bessel function.
  double sum = 1.0, term = 1.0;
  const double half = x / 2.0;
  for (int k = 1; k < 80; ++k) {
    term *= (half / k) * (half / k);
    sum += term;
    if (term < sum * 1e-17) break;
  }
  return sum;
}

double sinc(double x) {
  if (x == 0.0) return 1.0;
  const double px = std::numbers::pi * x;
  return std::sin(px) / px;
}

}  // namespace

std::vector<Biquad> butter_bandpass_sos(int order, double lo_hz, double hi_hz,
                                        double sample_rate) {
  if (order < 2 || order % 2 != 0) {
    throw DspError("butter_bandpass: order must be even and >= 2");
  }
  if (!(0.0 < lo_hz && lo_hz < hi_hz && hi_hz < sample_rate / 2.0)) {
    throw DspError("butter_bandpass: band edges must satisfy 0 < lo < hi < rate/2");
  }
  const int m = order / 2;  // analog prototype order
  const double fs2 = 2.0 * sample_rate;
  const double wlo = fs2 * std::tan(std::numbers::pi * lo_hz / sample_rate);
  const double whi = fs2 * std::tan(std::numbers::pi * hi_hz / sample_rate);
  const double bw = whi - wlo;
  const double w0sq = wlo * whi;

  // Lowpass prototype poles on the unit circle (left half-plane), then the
  // bandpass substitution s_lp = (s^2 + w0^2) / (bw * s).
  std::vector<cplx> bp_poles;
  for (int k = 0; k < m; ++k) {
    const double theta = std::numbers::pi * (2.0 * k + m + 1.0) / (2.0 * m);
    const cplx p(std::cos(theta), std::sin(theta));
    const cplx bp = bw * p;
    const cplx disc = std::sqrt(bp * bp - 4.0 * w0sq);
    bp_poles.push_back((bp + disc) / 2.0);
    bp_poles.push_back((bp - disc) / 2.0);
  }

  // Bilinear transform of poles; bandpass zeros land on z = +1 (order m) and
  // z = -1 (order m), one pair per section.
  std::vector<cplx> z_poles;
  z_poles.reserve(bp_poles.size());
  for (const auto& s : bp_poles) z_poles.push_back((fs2 + s) / (fs2 - s));

  // Pair each pole with its conjugate partner to get real coefficients. The
  // list holds conjugates because prototype poles come in conjugate pairs.
  std::vector<cplx> upper;
  for (const auto& p : z_poles) {
    if (p.imag() > 1e-14) {
      upper.push_back(p);
    } else if (std::abs(p.imag()) <= 1e-14) {
      upper.push_back(cplx(p.real(), std::abs(p.imag())));  // treat as real
    }
  }
  // Real poles (possible only in degenerate designs) are paired greedily.
  std::vector<cplx> reals, cplxs;
  for (const auto& p : upper) {
    (std::abs(p.imag()) <= 1e-14 ? reals : cplxs).push_back(p);
  }
  std::vector<Biquad> sos;
  for (const auto& p : cplxs) {
    Biquad s{};
    s.b0 = 1.0;
    s.b1 = 0.0;
    s.b2 = -1.0;  // zeros at +1 and -1
    s.a1 = -2.0 * p.real();
    s.a2 = std::norm(p);
    sos.push_back(s);
  }
  for (size_t i = 0; i + 1 < reals.size(); i += 2) {
    Biquad s{};
    s.b0 = 1.0;
    s.b1 = 0.0;
    s.b2 = -1.0;
    s.a1 = -(reals[i].real() + reals[i + 1].real());
    s.a2 = reals[i].real() * reals[i + 1].real();
    sos.push_back(s);
  }
  if (static_cast<int>(sos.size()) != m) {
    throw DspError("butter_bandpass: internal pole pairing failure");
  }

  // Normalize so the digital gain at the (warped) center frequency is 1.
  const double w_center = 2.0 * std::atan(std::sqrt(w0sq) / fs2);
  const double mag = std::abs(sos_response(sos, w_center));
  const double g = std::pow(1.0 / mag, 1.0 / static_cast<double>(m));
  for (auto& s : sos) {
    s.b0 *= g;
    s.b1 *= g;
    s.b2 *= g;
  }
  return sos;
}

std::vector<double> filtfilt(const std::vector<Biquad>& sos, const std::vector<double>& x,
                             int pad_len) {
  if (x.empty()) return {};
  const int n = static_cast<int>(x.size());
  const int pad = std::min(pad_len, n - 1);
  std::vector<double> ext;
  ext.reserve(x.size() + 2 * static_cast<size_t>(pad));
  // Odd (point) reflection about the end samples keeps level and slope
  // continuous at the seams.
  for (int i = pad; i >= 1; --i) ext.push_back(2.0 * x.front() - x[static_cast<size_t>(i)]);
  ext.insert(ext.end(), x.begin(), x.end());
  for (int i = 1; i <= pad; ++i) {
    ext.push_back(2.0 * x.back() - x[static_cast<size_t>(n - 1 - i)]);
  }

  sosfilt_inplace(sos, ext);
  std::reverse(ext.begin(), ext.end());
  sosfilt_inplace(sos, ext);
  std::reverse(ext.begin(), ext.end());

  return std::vector<double>(ext.begin() + pad, ext.begin() + pad + n);
}

ChannelSignal butter_bandpass_zero_phase(const ChannelSignal& signal, double lo_hz,
                                         double hi_hz, int order) {
  auto sos = butter_bandpass_sos(order, lo_hz, hi_hz, signal.sample_rate);
  ChannelSignal out;
  out.sample_rate = signal.sample_rate;
  out.label = signal.label;
  out.samples = filtfilt(sos, signal.samples, 3 * order);
  return out;
}

namespace {
// Reduces target/source to p/q in lowest terms with a bounded search.
bool rational_ratio(double source, double target, int max_den, int& p, int& q) {
  for (int den = 1; den <= max_den; ++den) {
    const double num = target * den / source;
    const double rounded = std::round(num);
    if (rounded < 1.0) continue;
    if (std::abs(num - rounded) < 1e-9 * std::max(1.0, num)) {
      int pp = static_cast<int>(rounded), qq = den;
      const int g = std::gcd(pp, qq);
      p = pp / g;
      q = qq / g;
      return true;
    }
  }
  return false;
}
}  // namespace

ChannelSignal polyphase_resample(const ChannelSignal& signal, double target_rate) {
  if (signal.sample_rate <= 0.0 || target_rate <= 0.0) {
    throw DspError("polyphase_resample: rates must be positive");
  }
  int p = 0, q = 0;
  if (!rational_ratio(signal.sample_rate, target_rate, 10000, p, q) || p > 10000 ||
      q > 10000) {
    throw DspError("polyphase_resample: rate ratio is not a small rational");
  }
  ChannelSignal out;
  out.label = signal.label;
  out.sample_rate = target_rate;
  if (p == 1 && q == 1) {
    out.samples = signal.samples;
    return out;
  }

  const int64_t len = static_cast<int64_t>(signal.samples.size());
  const int64_t out_len = (len * p + q - 1) / q;  // ceil(len*p/q)
  const int taps = 10 * std::max(p, q) + 1;
  const int half = (taps - 1) / 2;
  const double up_rate = signal.sample_rate * p;
  const double cutoff_hz = std::min(signal.sample_rate, target_rate) / 2.0;
  const double fcn = cutoff_hz / up_rate;  // cycles per upsampled sample

  std::vector<double> h(static_cast<size_t>(taps));
  const double i0b = kaiser_i0(5.0);
  for (int k = 0; k < taps; ++k) {
    const double t = static_cast<double>(k - half);
    const double r = 2.0 * t / (taps - 1);
    const double win = kaiser_i0(5.0 * std::sqrt(std::max(0.0, 1.0 - r * r))) / i0b;
    h[static_cast<size_t>(k)] = p * 2.0 * fcn * sinc(2.0 * fcn * t) * win;
  }

  out.samples.assign(static_cast<size_t>(out_len), 0.0);
  for (int64_t m = 0; m < out_len; ++m) {
    // Output m sits at upsampled position m*q; only every p-th upsampled
    // sample is nonzero, so walk the contributing input samples directly.
    const int64_t pos = m * q + half;
    const int64_t a = pos - taps + 1;
    const int64_t j_lo = a <= 0 ? 0 : (a + p - 1) / p;
    const int64_t j_hi = std::min<int64_t>(pos / p, len - 1);
    double acc = 0.0;
    for (int64_t j = j_lo; j <= j_hi; ++j) {
      acc += signal.samples[static_cast<size_t>(j)] * h[static_cast<size_t>(pos - j * p)];
    }
    out.samples[static_cast<size_t>(m)] = acc;
  }
  return out;
}

double quantile(std::vector<double> values, double qv) {
  if (values.empty()) throw DspError("quantile: empty input");
  std::sort(values.begin(), values.end());
  const double pos = qv * static_cast<double>(values.size() - 1);
  const size_t lo = static_cast<size_t>(std::floor(pos));
  const size_t hi = static_cast<size_t>(std::ceil(pos));
  const double frac = pos - static_cast<double>(lo);
  return values[lo] * (1.0 - frac) + values[hi] * frac;
}

std::vector<double> epoch_normalize(const std::vector<double>& epoch) {
  if (epoch.size() < 4) throw DspError("epoch_normalize: need at least 4 samples");
  const double med = quantile(epoch, 0.5);
  const double iqr = quantile(epoch, 0.75) - quantile(epoch, 0.25);
  std::vector<double> out(epoch.size());
  if (iqr < 1e-12) {
    return out;  // degenerate spread: all zeros
  }
  for (size_t i = 0; i < epoch.size(); ++i) out[i] = (epoch[i] - med) / iqr;
  return out;
}

std::vector<double> clip(const std::vector<double>& epoch, double limit) {
  std::vector<double> out(epoch);
  clip_inplace(out, limit);
  return out;
}

void clip_inplace(std::vector<double>& epoch, double limit) {
  for (double& v : epoch) v = std::min(std::max(v, -limit), limit);
}

}  // namespace freqtrain
