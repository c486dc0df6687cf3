#include "freqtrain/synthgen.hpp"

#include <cmath>
#include <numbers>

namespace freqtrain {

namespace {
constexpr uint64_t kSampleStreamTag = 0x53594e5448u;  // "SYNTH"
}

BinScheme bin_edges(int n_bins, double f_min, double f_max) {
  if (f_min <= 0.0) throw SynthError("bin_edges: f_min must be positive");
  if (f_max <= f_min) throw SynthError("bin_edges: f_max must exceed f_min");
  if (n_bins < 1) throw SynthError("bin_edges: need at least one bin");
  BinScheme s;
  s.n_bins = n_bins;
  s.f_min = f_min;
  s.f_max = f_max;
  s.edges.resize(static_cast<size_t>(n_bins) + 1);
  const double span = std::log2(f_max / f_min);
  for (int j = 0; j <= n_bins; ++j) {
    s.edges[static_cast<size_t>(j)] = f_min * std::exp2(span * j / n_bins);
  }
  s.edges.front() = f_min;  // pin the ends exactly
  s.edges.back() = f_max;
  for (int j = 0; j < n_bins; ++j) {
    if (!(s.edges[j] < s.edges[j + 1])) throw SynthError("bin_edges: edges not increasing");
  }
  return s;
}

int BinScheme::bin_of(double f) const {
  if (f < f_min || f > f_max) return -1;
  if (f == f_max) return n_bins - 1;
  int lo = 0, hi = n_bins;
  while (hi - lo > 1) {
    const int mid = (lo + hi) / 2;
    if (f >= edges[static_cast<size_t>(mid)]) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return lo;
}

std::vector<uint8_t> draw_label(Rng& rng, int n_bins) {
  std::vector<uint8_t> label(static_cast<size_t>(n_bins));
  for (;;) {
    bool any = false;
    for (auto& bit : label) {
      bit = rng.bernoulli(0.5) ? 1 : 0;
      any = any || bit;
    }
    if (any) return label;
    // All-empty labels (probability 2^-n_bins) are redrawn: the z-score of a
    // silent signal is undefined.
  }
}

SyntheticSample generate_sample(const std::vector<uint8_t>& label, const BinScheme& scheme,
                                Rng& rng, SampleDraw* draw) {
  if (static_cast<int>(label.size()) != scheme.n_bins) {
    throw SynthError("generate_sample: label length does not match bin count");
  }
  std::vector<int> selected;
  for (int i = 0; i < scheme.n_bins; ++i) {
    if (label[static_cast<size_t>(i)]) selected.push_back(i);
  }
  if (selected.empty()) throw SynthError("generate_sample: label selects no bins");

  // Draw order is part of the determinism contract: phases first (ascending
  // bins, shared across channels), then frequencies channel-major.
  std::vector<double> phases(selected.size());
  for (auto& p : phases) p = rng.uniform(0.0, 2.0 * std::numbers::pi);
  std::vector<std::vector<double>> freqs(kSynthChannels,
                                         std::vector<double>(selected.size()));
  for (int c = 0; c < kSynthChannels; ++c) {
    for (size_t s = 0; s < selected.size(); ++s) {
      const int bin = selected[s];
      freqs[static_cast<size_t>(c)][s] =
          rng.uniform(scheme.edges[static_cast<size_t>(bin)],
                      scheme.edges[static_cast<size_t>(bin) + 1]);
    }
  }

  SyntheticSample out;
  out.label = label;
  out.signal.assign(static_cast<size_t>(kSynthChannels) * kEpochSamples, 0.0);
  for (int c = 0; c < kSynthChannels; ++c) {
    double* ch = out.signal.data() + static_cast<size_t>(c) * kEpochSamples;
    for (size_t s = 0; s < selected.size(); ++s) {
      // sin(2*pi*f*t + phi) on the uniform grid via the rotation recurrence;
      // drift over 3000 steps is ~1e-13, far below the normalization checks.
      const double step = 2.0 * std::numbers::pi * freqs[static_cast<size_t>(c)][s] /
                          kSampleRateHz;
      const double cs = std::cos(step), sn = std::sin(step);
      double s_cur = std::sin(phases[s]);
      double c_cur = std::cos(phases[s]);
      for (int t = 0; t < kEpochSamples; ++t) {
        ch[t] += s_cur;
        const double s_next = s_cur * cs + c_cur * sn;
        c_cur = c_cur * cs - s_cur * sn;
        s_cur = s_next;
      }
    }
    double mean = 0.0;
    for (int t = 0; t < kEpochSamples; ++t) mean += ch[t];
    mean /= kEpochSamples;
    double var = 0.0;
    for (int t = 0; t < kEpochSamples; ++t) {
      const double d = ch[t] - mean;
      var += d * d;
    }
    const double sd = std::sqrt(var / kEpochSamples);
    if (!(sd > 1e-12)) throw SynthError("generate_sample: degenerate channel variance");
    for (int t = 0; t < kEpochSamples; ++t) ch[t] = (ch[t] - mean) / sd;
  }

  if (draw) {
    draw->selected_bins = std::move(selected);
    draw->phases = std::move(phases);
    draw->freqs = std::move(freqs);
  }
  return out;
}

SyntheticDataset::SyntheticDataset(uint64_t master_seed, uint64_t n_samples, BinScheme scheme)
    : master_seed_(master_seed), n_samples_(n_samples), scheme_(std::move(scheme)) {
  if (n_samples_ < 1) throw SynthError("generate_dataset: need at least one sample");
}

SyntheticSample SyntheticDataset::at(uint64_t index, SampleDraw* draw) const {
  Rng rng = Rng::derive(master_seed_, {kSampleStreamTag, index});
  auto label = draw_label(rng, scheme_.n_bins);
  SyntheticSample s = generate_sample(label, scheme_, rng, draw);
  s.seed_trace = index;
  return s;
}

std::vector<SyntheticSample> SyntheticDataset::materialize() const {
  std::vector<SyntheticSample> out(n_samples_);
  for (uint64_t k = 0; k < n_samples_; ++k) out[k] = at(k);
  return out;
}

std::vector<size_t> resample_indices(size_t source_count, size_t target_count) {
  if (source_count == 0) throw SynthError("resample_to_count: empty dataset");
  if (target_count < 1) throw SynthError("resample_to_count: target must be >= 1");
  std::vector<size_t> idx(target_count);
  for (size_t j = 0; j < target_count; ++j) idx[j] = j % source_count;
  return idx;
}

std::vector<SyntheticSample> resample_to_count(const std::vector<SyntheticSample>& dataset,
                                               size_t target_count) {
  auto idx = resample_indices(dataset.size(), target_count);
  std::vector<SyntheticSample> out;
  out.reserve(target_count);
  for (size_t j : idx) out.push_back(dataset[j]);
  return out;
}

}  // namespace freqtrain
