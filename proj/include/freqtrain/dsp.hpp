#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace freqtrain {

class DspError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ChannelSignal {
  std::vector<double> samples;
  double sample_rate = 0.0;
  std::string label;
};

// One second-order section, direct form II transposed, a0 normalized to 1.
struct Biquad {
  double b0, b1, b2;
  double a1, a2;
};

// Butterworth bandpass of the given (even) overall order as a cascade of
// order/2 biquads; bilinear transform with pre-warped edges.
std::vector<Biquad> butter_bandpass_sos(int order, double lo_hz, double hi_hz,
                                        double sample_rate);

// Forward-backward (zero-phase) filtering. Ends are extended by an odd
// reflection of 3*order samples and each pass starts from steady-state
// initial conditions, so transients stay small even near the 0.3 Hz edge.
std::vector<double> filtfilt(const std::vector<Biquad>& sos, const std::vector<double>& x,
                             int pad_len);

// 8th-order zero-phase Butterworth bandpass, defaults 0.3-35 Hz.
ChannelSignal butter_bandpass_zero_phase(const ChannelSignal& signal, double lo_hz = 0.3,
                                         double hi_hz = 35.0, int order = 8);

// Rational-ratio resampling: upsample by p, windowed-sinc low-pass
// (Kaiser beta=5, 10*max(p,q)+1 taps, cutoff min(in,out)/2), downsample by q.
// Output length = ceil(len * p / q). Equal rates pass through untouched.
ChannelSignal polyphase_resample(const ChannelSignal& signal, double target_rate);

// (x - median) / IQR per call; quantiles use linear interpolation (type 7).
// A degenerate IQR (< 1e-12) yields all zeros.
std::vector<double> epoch_normalize(const std::vector<double>& epoch);

// Elementwise clamp to [-limit, limit].
std::vector<double> clip(const std::vector<double>& epoch, double limit = 20.0);
void clip_inplace(std::vector<double>& epoch, double limit = 20.0);

// Linear-interpolation quantile of a sorted copy, q in [0, 1].
double quantile(std::vector<double> values, double q);

}  // namespace freqtrain
