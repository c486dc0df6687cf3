#pragma once

#include <cstdint>

#include "freqtrain/harness.hpp"

namespace freqtrain {

// Synthetic staging proxy: pseudo-stages assigned to synthetic epochs by
// dominant-band rules over the selected-bin pattern, so the full fine-tuning
// pipeline runs without clinical data. Deliberately non-physiological.
//
// Band groups over the default 20-bin scheme (0.3-35 Hz, log2 edges):
//   slow = bins 0..7 (~0.3-2 Hz), mid = bins 8..13 (~2-8.4 Hz),
//   fast = bins 14..19 (~8.4-35 Hz).
// With counts c_s/c_m/c_f of selected bins per group:
//   N3  when c_s >= 5 and c_f <= 3      (slow-dominant)
//   W   when c_f >= 4 and c_s <= 4      (fast-dominant)
//   REM when c_s >= 5 and c_f >= 4      (mixed slow+fast)
//   N2  otherwise when c_m >= 4         (mid-dominant)
//   N1  otherwise
// All five pseudo-stages occur with probability >= 0.12 under the
// Bernoulli(1/2) label distribution.
int proxy_stage_for_label(const std::vector<uint8_t>& label);

// Deterministic per seed; every recording belongs to its own pseudo-subject.
FinetunePools make_proxy_pools(uint64_t seed, const ProxyConfig& cfg = {});

}  // namespace freqtrain
