#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>

#include "freqtrain/dsp.hpp"
#include "freqtrain/rng.hpp"

using namespace freqtrain;

namespace {

ChannelSignal make_sine(double freq, double rate, double seconds, double phase = 0.0) {
  ChannelSignal s;
  s.sample_rate = rate;
  const int n = static_cast<int>(seconds * rate);
  s.samples.resize(n);
  for (int i = 0; i < n; ++i) {
    s.samples[i] = std::sin(2.0 * std::numbers::pi * freq * i / rate + phase);
  }
  return s;
}

double correlation(const std::vector<double>& a, const std::vector<double>& b, size_t skip) {
  double ma = 0, mb = 0;
  size_t n = 0;
  for (size_t i = skip; i + skip < a.size(); ++i, ++n) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  double num = 0, da = 0, db = 0;
  for (size_t i = skip; i + skip < a.size(); ++i) {
    num += (a[i] - ma) * (b[i] - mb);
    da += (a[i] - ma) * (a[i] - ma);
    db += (b[i] - mb) * (b[i] - mb);
  }
  return num / std::sqrt(da * db);
}

double rms(const std::vector<double>& x, size_t skip) {
  double s = 0;
  size_t n = 0;
  for (size_t i = skip; i + skip < x.size(); ++i, ++n) s += x[i] * x[i];
  return std::sqrt(s / n);
}

}  // namespace

TEST_CASE("passband sinusoid passes nearly unchanged") {
  const auto in = make_sine(10.0, 250.0, 20.0);
  const auto out = butter_bandpass_zero_phase(in);
  const size_t edge = static_cast<size_t>(2.0 * 250.0);
  CHECK(correlation(in.samples, out.samples, edge) > 0.999);
}

TEST_CASE("60 Hz is crushed by the squared stopband response") {
  // The squared 8th-order response at 60 Hz is ~0.4%. The 0.3 Hz poles ring
  // for seconds, so the discard must outlast that transient.
  const auto in = make_sine(60.0, 250.0, 30.0);
  const auto out = butter_bandpass_zero_phase(in);
  const size_t edge = static_cast<size_t>(6.0 * 250.0);
  CHECK(rms(out.samples, edge) < 0.01 * rms(in.samples, edge));
}

TEST_CASE("zero signal stays zero") {
  ChannelSignal z;
  z.sample_rate = 250.0;
  z.samples.assign(5000, 0.0);
  const auto out = butter_bandpass_zero_phase(z);
  for (double v : out.samples) CHECK(v == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(out.samples.size() == z.samples.size());
}

TEST_CASE("band edges must respect Nyquist") {
  ChannelSignal s = make_sine(1.0, 60.0, 5.0);
  CHECK_THROWS_AS(butter_bandpass_zero_phase(s, 0.3, 35.0, 8), DspError);  // 35 > 30
  CHECK_THROWS_AS(butter_bandpass_zero_phase(s, 0.0, 20.0, 8), DspError);
  CHECK_THROWS_AS(butter_bandpass_zero_phase(s, 0.3, 20.0, 7), DspError);  // odd order
}

TEST_CASE("zero-phase: cross-correlation peak lag is exactly zero") {
  const auto in = make_sine(8.0, 250.0, 12.0);
  const auto out = butter_bandpass_zero_phase(in);
  const int edge = 2 * 250;
  double best = -1e300;
  int best_lag = -99;
  for (int lag = -10; lag <= 10; ++lag) {
    double acc = 0;
    for (size_t i = edge; i + edge < in.samples.size(); ++i) {
      acc += in.samples[i] * out.samples[i + lag];
    }
    if (acc > best) {
      best = acc;
      best_lag = lag;
    }
  }
  CHECK(best_lag == 0);
}

TEST_CASE("filter and resampler are linear") {
  Rng rng(31);
  const int n = 2000;
  ChannelSignal x, y;
  x.sample_rate = y.sample_rate = 200.0;
  for (int i = 0; i < n; ++i) {
    x.samples.push_back(rng.uniform(-1, 1));
    y.samples.push_back(rng.uniform(-1, 1));
  }
  const double a = 1.7, b = -0.6;

  SUBCASE("filter") {
    ChannelSignal mix = x;
    for (int i = 0; i < n; ++i) mix.samples[i] = a * x.samples[i] + b * y.samples[i];
    const auto fx = butter_bandpass_zero_phase(x);
    const auto fy = butter_bandpass_zero_phase(y);
    const auto fmix = butter_bandpass_zero_phase(mix);
    for (int i = 0; i < n; ++i) {
      CHECK(fmix.samples[i] ==
            doctest::Approx(a * fx.samples[i] + b * fy.samples[i]).epsilon(1e-9));
    }
  }
  SUBCASE("resampler") {
    ChannelSignal mix = x;
    for (int i = 0; i < n; ++i) mix.samples[i] = a * x.samples[i] + b * y.samples[i];
    const auto rx = polyphase_resample(x, 100.0);
    const auto ry = polyphase_resample(y, 100.0);
    const auto rmix = polyphase_resample(mix, 100.0);
    for (size_t i = 0; i < rx.samples.size(); ++i) {
      CHECK(rmix.samples[i] ==
            doctest::Approx(a * rx.samples[i] + b * ry.samples[i]).epsilon(1e-9));
    }
  }
}

TEST_CASE("resampler length formula and passthrough") {
  ChannelSignal s = make_sine(5.0, 250.0, 30.0);
  REQUIRE(s.samples.size() == 7500);
  const auto out = polyphase_resample(s, 100.0);
  CHECK(out.samples.size() == 3000);  // ceil(7500 * 2/5)
  CHECK(out.sample_rate == 100.0);

  ChannelSignal same = make_sine(5.0, 100.0, 1.0);
  const auto id = polyphase_resample(same, 100.0);
  CHECK(id.samples == same.samples);
}

TEST_CASE("resampled sinusoid matches the ideal low-rate sinusoid") {
  const auto in = make_sine(5.0, 200.0, 10.0, 0.35);
  const auto out = polyphase_resample(in, 100.0);
  const auto ideal = make_sine(5.0, 100.0, 10.0, 0.35);
  REQUIRE(out.samples.size() == ideal.samples.size());
  CHECK(correlation(out.samples, ideal.samples, 50) > 0.999);
}

TEST_CASE("irrational rate ratios are rejected") {
  ChannelSignal s = make_sine(1.0, 100.0, 1.0);
  CHECK_THROWS_AS(polyphase_resample(s, 100.0 * std::numbers::sqrt2), DspError);
}

TEST_CASE("epoch_normalize hand example") {
  const std::vector<double> x{1, 2, 3, 4, 5};
  const auto y = epoch_normalize(x);
  const std::vector<double> want{-1.0, -0.5, 0.0, 0.5, 1.0};
  for (size_t i = 0; i < y.size(); ++i) CHECK(y[i] == doctest::Approx(want[i]));
}

TEST_CASE("epoch_normalize degenerate and affine-invariance cases") {
  const std::vector<double> c{2.5, 2.5, 2.5, 2.5};
  for (double v : epoch_normalize(c)) CHECK(v == 0.0);

  Rng rng(8);
  std::vector<double> x(101);
  for (auto& v : x) v = rng.uniform(-4, 4);
  const auto base = epoch_normalize(x);
  std::vector<double> scaled(x.size());
  for (size_t i = 0; i < x.size(); ++i) scaled[i] = 3.7 * x[i] - 11.0;
  const auto same = epoch_normalize(scaled);
  for (size_t i = 0; i < x.size(); ++i) CHECK(same[i] == doctest::Approx(base[i]).epsilon(1e-9));

  // median 0 / IQR 1 of the output
  const auto med = quantile(base, 0.5);
  const auto iqr = quantile(base, 0.75) - quantile(base, 0.25);
  CHECK(std::fabs(med) < 1e-9);
  CHECK(std::fabs(iqr - 1.0) < 1e-9);
}

TEST_CASE("clip clamps and is idempotent") {
  CHECK(clip({25.0})[0] == 20.0);
  CHECK(clip({-25.0})[0] == -20.0);
  CHECK(clip({3.7})[0] == 3.7);
  Rng rng(3);
  std::vector<double> x(64);
  for (auto& v : x) v = rng.uniform(-50, 50);
  const auto once = clip(x);
  CHECK(clip(once) == once);
}
