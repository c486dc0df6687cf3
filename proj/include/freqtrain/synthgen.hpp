#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

#include "freqtrain/rng.hpp"

namespace freqtrain {

class SynthError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr int kSynthChannels = 3;
inline constexpr int kEpochSamples = 3000;
inline constexpr double kSampleRateHz = 100.0;

// Frequency bins spanning [f_min, f_max] with edges equally spaced in log2.
struct BinScheme {
  int n_bins = 20;
  double f_min = 0.3;
  double f_max = 35.0;
  std::vector<double> edges;  // n_bins + 1, ascending, ends exact

  // Index of the half-open bin [lo, hi) containing f; the last bin is closed
  // at f_max. Returns -1 outside the band.
  int bin_of(double f) const;
};

BinScheme bin_edges(int n_bins = 20, double f_min = 0.3, double f_max = 35.0);

// Per-sample randomness, exposed for inspection: one shared phase per
// selected bin, one frequency per (channel, selected bin).
struct SampleDraw {
  std::vector<int> selected_bins;
  std::vector<double> phases;               // per selected bin, in [0, 2*pi)
  std::vector<std::vector<double>> freqs;   // [channel][selected-bin position]
};

struct SyntheticSample {
  std::vector<double> signal;  // kSynthChannels * kEpochSamples, channel-major, z-scored
  std::vector<uint8_t> label;  // n_bins entries in {0,1}, at least one 1
  uint64_t seed_trace = 0;     // id of the RNG stream that produced this sample
};

// Each bin selected independently with probability 1/2; an all-zero vector is
// redrawn so the signal is never empty.
std::vector<uint8_t> draw_label(Rng& rng, int n_bins);

SyntheticSample generate_sample(const std::vector<uint8_t>& label, const BinScheme& scheme,
                                Rng& rng, SampleDraw* draw = nullptr);

// Deterministic random-access dataset: sample k is a pure function of
// (master_seed, k), so generation parallelizes and never depends on order.
class SyntheticDataset {
 public:
  SyntheticDataset(uint64_t master_seed, uint64_t n_samples, BinScheme scheme);

  uint64_t size() const { return n_samples_; }
  const BinScheme& scheme() const { return scheme_; }
  uint64_t master_seed() const { return master_seed_; }

  SyntheticSample at(uint64_t index, SampleDraw* draw = nullptr) const;

  std::vector<SyntheticSample> materialize() const;

 private:
  uint64_t master_seed_;
  uint64_t n_samples_;
  BinScheme scheme_;
};

inline SyntheticDataset generate_dataset(uint64_t n_samples, const BinScheme& scheme,
                                         uint64_t master_seed) {
  return SyntheticDataset(master_seed, n_samples, scheme);
}

// Deterministic under-/oversampling to exactly target_count: position j maps
// to source j % size (prefix truncation when shrinking, cyclic repetition
// when growing).
std::vector<size_t> resample_indices(size_t source_count, size_t target_count);
std::vector<SyntheticSample> resample_to_count(const std::vector<SyntheticSample>& dataset,
                                               size_t target_count);

}  // namespace freqtrain
