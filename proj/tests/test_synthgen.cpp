#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <future>

#include "freqtrain/synthgen.hpp"
#include "support/spectral_check.hpp"

using namespace freqtrain;

TEST_CASE("bin edges hit the band limits exactly") {
  const auto s = bin_edges();
  CHECK(s.edges.front() == 0.3);
  CHECK(s.edges.back() == 35.0);
  CHECK(s.edges.size() == 21);
  for (int j = 0; j < 20; ++j) CHECK(s.edges[j] < s.edges[j + 1]);
}

TEST_CASE("middle edge equals the geometric mean of the band") {
  const auto s = bin_edges();
  CHECK(std::fabs(s.edges[10] - std::sqrt(0.3 * 35.0)) < 1e-12);
  CHECK(s.edges[10] == doctest::Approx(3.24037).epsilon(1e-5));
}

TEST_CASE("single-bin scheme") {
  const auto s = bin_edges(1);
  CHECK(s.edges == std::vector<double>{0.3, 35.0});
}

TEST_CASE("invalid scheme parameters rejected") {
  CHECK_THROWS_AS(bin_edges(20, 0.0, 35.0), SynthError);
  CHECK_THROWS_AS(bin_edges(20, -1.0, 35.0), SynthError);
  CHECK_THROWS_AS(bin_edges(0), SynthError);
  CHECK_THROWS_AS(bin_edges(20, 35.0, 0.3), SynthError);
}

TEST_CASE("bin_of respects half-open intervals with closed top") {
  const auto s = bin_edges();
  CHECK(s.bin_of(0.3) == 0);
  CHECK(s.bin_of(s.edges[1]) == 1);
  CHECK(s.bin_of(35.0) == 19);
  CHECK(s.bin_of(0.29) == -1);
  CHECK(s.bin_of(35.01) == -1);
}

TEST_CASE("label marginals approach one half") {
  const int draws = 100000, n_bins = 20;
  std::vector<int> counts(n_bins, 0);
  Rng rng(42);
  for (int d = 0; d < draws; ++d) {
    const auto label = draw_label(rng, n_bins);
    bool any = false;
    for (int j = 0; j < n_bins; ++j) {
      counts[j] += label[j];
      any = any || label[j];
    }
    CHECK(any);  // redraw guarantee
  }
  const double sigma = std::sqrt(0.25 / draws);
  for (int j = 0; j < n_bins; ++j) {
    CHECK(std::fabs(counts[j] / static_cast<double>(draws) - 0.5) < 3.0 * sigma);
  }
}

TEST_CASE("seeded label draws repeat exactly") {
  Rng a(7), b(7);
  CHECK(draw_label(a, 20) == draw_label(b, 20));
}

TEST_CASE("generated channels are z-scored to machine precision") {
  const auto scheme = bin_edges();
  SyntheticDataset ds(99, 16, scheme);
  for (uint64_t k = 0; k < ds.size(); ++k) {
    const auto s = ds.at(k);
    for (int c = 0; c < kSynthChannels; ++c) {
      const double* ch = s.signal.data() + static_cast<size_t>(c) * kEpochSamples;
      double mean = 0.0;
      for (int t = 0; t < kEpochSamples; ++t) mean += ch[t];
      mean /= kEpochSamples;
      double var = 0.0;
      for (int t = 0; t < kEpochSamples; ++t) var += (ch[t] - mean) * (ch[t] - mean);
      const double sd = std::sqrt(var / kEpochSamples);
      CHECK(std::fabs(mean) < 1e-9);
      CHECK(std::fabs(sd - 1.0) < 1e-9);
    }
  }
}

TEST_CASE("phases are shared across channels, frequencies are not") {
  const auto scheme = bin_edges();
  SyntheticDataset ds(1234, 8, scheme);
  for (uint64_t k = 0; k < ds.size(); ++k) {
    SampleDraw draw;
    (void)ds.at(k, &draw);
    REQUIRE(draw.freqs.size() == kSynthChannels);
    for (size_t s = 0; s < draw.selected_bins.size(); ++s) {
      const int bin = draw.selected_bins[s];
      for (int c = 0; c < kSynthChannels; ++c) {
        const double f = draw.freqs[c][s];
        CHECK(f >= scheme.edges[bin]);
        CHECK(f < scheme.edges[bin + 1]);
      }
    }
    // Phase sharing holds by construction: one phase per selected bin.
    CHECK(draw.phases.size() == draw.selected_bins.size());
    // Frequencies generally differ across channels for a shared bin.
    if (!draw.selected_bins.empty()) {
      bool any_diff = false;
      for (size_t s = 0; s < draw.selected_bins.size(); ++s) {
        if (draw.freqs[0][s] != draw.freqs[1][s]) any_diff = true;
      }
      CHECK(any_diff);
    }
  }
}

TEST_CASE("single selected bin puts the spectral peak inside that bin") {
  const auto scheme = bin_edges();
  Rng rng(5150);
  for (int rep = 0; rep < 10; ++rep) {
    std::vector<uint8_t> label(20, 0);
    label[rep * 2] = 1;
    auto s = generate_sample(label, scheme, rng);
    s.label = label;
    const auto res = freqtrain::testing::check_sample_spectrum(s, scheme);
    CHECK_MESSAGE(res.ok, res.detail);
  }
}

TEST_CASE("spectral oracle holds over many random samples") {
  const auto scheme = bin_edges();
  SyntheticDataset ds(20260808, 300, scheme);
  int failures = 0;
  std::string first_detail;
  for (uint64_t k = 0; k < ds.size(); ++k) {
    const auto s = ds.at(k);
    const auto res = freqtrain::testing::check_sample_spectrum(s, scheme);
    if (!res.ok) {
      ++failures;
      if (first_detail.empty()) first_detail = "sample " + std::to_string(k) + ": " + res.detail;
    }
  }
  CHECK_MESSAGE(failures == 0, first_detail);
}

TEST_CASE("dataset generation is deterministic and order-independent") {
  const auto scheme = bin_edges();
  SyntheticDataset a(77, 10, scheme), b(77, 10, scheme);
  for (uint64_t k = 0; k < 10; ++k) {
    CHECK(a.at(k).signal == b.at(k).signal);
    CHECK(a.at(k).label == b.at(k).label);
  }

  // Parallel generation equals serial generation.
  std::vector<std::future<SyntheticSample>> futs;
  for (uint64_t k = 0; k < 10; ++k) {
    futs.push_back(std::async(std::launch::async, [&a, k] { return a.at(k); }));
  }
  const auto serial = a.materialize();
  for (uint64_t k = 0; k < 10; ++k) {
    const auto s = futs[k].get();
    CHECK(s.signal == serial[k].signal);
    CHECK(s.label == serial[k].label);
  }

  SyntheticDataset c(78, 10, scheme);
  bool all_same = true;
  for (uint64_t k = 0; k < 10; ++k) all_same = all_same && (a.at(k).label == c.at(k).label);
  CHECK_FALSE(all_same);
}

TEST_CASE("resample_to_count repeats cyclically and truncates") {
  SUBCASE("oversampling spreads copies evenly") {
    const auto idx = resample_indices(10, 1000);
    std::vector<int> counts(10, 0);
    for (size_t j : idx) counts[j]++;
    for (int c : counts) CHECK(c == 100);
  }
  SUBCASE("identity when counts match") {
    const auto idx = resample_indices(100, 100);
    for (size_t j = 0; j < 100; ++j) CHECK(idx[j] == j);
  }
  SUBCASE("undersampling keeps the prefix") {
    const auto idx = resample_indices(1000, 100);
    for (size_t j = 0; j < 100; ++j) CHECK(idx[j] == j);
  }
}

TEST_CASE("default split sizes follow the train/validation convention") {
  // 101,000 samples split as 100,000 train + 1,000 validation; indices only,
  // nothing is materialized here.
  const uint64_t n = 101000, n_train = 100000;
  CHECK(n - n_train == 1000);
  const auto scheme = bin_edges();
  SyntheticDataset ds(1, n, scheme);
  CHECK(ds.size() == n);
}
