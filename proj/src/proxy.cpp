#include "freqtrain/proxy.hpp"

namespace freqtrain {

namespace {
constexpr int kSlowEnd = 8;   // bins 0..7
constexpr int kMidEnd = 14;   // bins 8..13; 14..19 are fast
}  // namespace

int proxy_stage_for_label(const std::vector<uint8_t>& label) {
  if (label.size() != 20) {
    throw HarnessError("proxy_stage_for_label expects the default 20-bin scheme");
  }
  int c_slow = 0, c_mid = 0, c_fast = 0;
  for (int b = 0; b < 20; ++b) {
    if (!label[static_cast<size_t>(b)]) continue;
    if (b < kSlowEnd) {
      ++c_slow;
    } else if (b < kMidEnd) {
      ++c_mid;
    } else {
      ++c_fast;
    }
  }
  const bool slow_heavy = c_slow >= 5;
  const bool fast_heavy = c_fast >= 4;
  if (slow_heavy && fast_heavy) return 4;  // REM-like: mixed slow+fast
  if (slow_heavy) return 3;                // N3-like: slow-dominant
  if (fast_heavy) return 0;                // W-like: fast-dominant
  if (c_mid >= 4) return 2;                // N2-like: mid-dominant
  return 1;                                // N1-like: everything else
}

namespace {
// Labels conditioned on a pseudo-stage by rejection from the Bernoulli(1/2)
// prior; every stage has probability >= 0.12, so this terminates quickly.
std::vector<uint8_t> draw_label_for_stage(Rng& rng, int stage) {
  for (;;) {
    auto label = draw_label(rng, 20);
    if (proxy_stage_for_label(label) == stage) return label;
  }
}
}  // namespace

FinetunePools make_proxy_pools(uint64_t seed, const ProxyConfig& cfg) {
  const BinScheme scheme = bin_edges(cfg.n_bins, cfg.f_min, cfg.f_max);

  // Pseudo-recordings mimic hypnogram structure: stages persist in bouts of
  // several epochs, so sequence context carries information as it does in
  // real recordings.
  auto make_recordings = [&](const char* split_tag, int n_recordings,
                             uint64_t split_word) {
    std::vector<EpochRecord> out;
    out.reserve(static_cast<size_t>(n_recordings) * cfg.epochs_per_recording);
    for (int r = 0; r < n_recordings; ++r) {
      Rng rng = Rng::derive(seed, {0x70726f78u /* "prox" */, split_word,
                                   static_cast<uint64_t>(r)});
      const std::string rec_id =
          std::string("proxy-") + split_tag + "-r" + std::to_string(r);
      int e = 0;
      while (e < cfg.epochs_per_recording) {
        const int stage = static_cast<int>(rng.next_below(kNumStages));
        int bout = 4;  // geometric tail on top of a 4-epoch minimum
        while (bout < 40 && rng.uniform() < 0.85) ++bout;
        for (int k = 0; k < bout && e < cfg.epochs_per_recording; ++k, ++e) {
          const auto label = draw_label_for_stage(rng, stage);
          SyntheticSample s = generate_sample(label, scheme, rng);
          EpochRecord rec;
          rec.signal = std::move(s.signal);
          rec.stage = stage;
          rec.subject_id = rec_id;  // one pseudo-subject per recording
          rec.recording_id = rec_id;
          rec.index = e;
          out.push_back(std::move(rec));
        }
      }
    }
    return out;
  };

  FinetunePools pools;
  pools.train = make_recordings("train", cfg.train_recordings, 1);
  pools.validation = make_recordings("val", cfg.val_recordings, 2);
  pools.test = make_recordings("test", cfg.test_recordings, 3);
  return pools;
}

}  // namespace freqtrain
