#pragma once

#include <string>
#include <vector>

#include "freqtrain/edf.hpp"
#include "freqtrain/synthgen.hpp"

namespace freqtrain {

// Shard layout: one JSON header line, then little-endian float32 signals
// (count * 3 * 3000), then for synthetic shards one byte per label bit
// (count * n_bins). Epoch shards carry stages/subject ids in the header.

struct SyntheticShard {
  uint64_t seed = 0;
  BinScheme scheme;
  size_t count = 0;
  std::vector<float> signals;   // count * 3 * 3000
  std::vector<uint8_t> labels;  // count * n_bins
};

void write_synthetic_shard(const std::string& path,
                           const std::vector<SyntheticSample>& samples,
                           const BinScheme& scheme, uint64_t seed);
SyntheticShard read_synthetic_shard(const std::string& path);

void write_epoch_shard(const std::string& path, const std::vector<EpochRecord>& epochs);
std::vector<EpochRecord> read_epoch_shard(const std::string& path);

}  // namespace freqtrain
