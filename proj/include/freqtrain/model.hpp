#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "freqtrain/nn.hpp"
#include "freqtrain/params.hpp"
#include "freqtrain/rng.hpp"

namespace freqtrain {

// Convolutional feature extractor: four conv blocks (kernalong 50,8,8,8 /
// strides 25,1,1,1, same-padded, each batchnorm+ReLU), maxpool 8 after block
// 1 and maxpool 4 after block 4, dropout 0.5 after each pool. Input epochs
// are [batch, 3, 3000]; the flattened feature is filters * 3 wide.
struct ModelConfig {
  int filters = 128;
  int lstm_hidden = 128;
  double dropout = 0.5;
  int n_bins = 20;
  int n_stages = 5;
  int pretrain_hidden = 80;
  int seq_len = 11;
  int in_channels = 3;
  int input_len = 3000;

  static constexpr int kernels[4] = {50, 8, 8, 8};
  static constexpr int strides[4] = {25, 1, 1, 1};
  static constexpr int pool_after_first = 8;
  static constexpr int pool_after_last = 4;
};

// Temporal length after the conv/pool stack (same-padded convs preserve
// length at stride 1).
constexpr int feature_map_len(int input_len) {
  const int after_conv1 = (input_len + ModelConfig::strides[0] - 1) / ModelConfig::strides[0];
  const int after_pool1 = after_conv1 / ModelConfig::pool_after_first;
  return after_pool1 / ModelConfig::pool_after_last;
}
static_assert(feature_map_len(3000) == 3);

constexpr int feature_dim(int filters, int input_len = 3000) {
  return filters * feature_map_len(input_len);
}
static_assert(feature_dim(128) == 384);

// ---- parameter construction (Kaiming normal, seed-deterministic) ----

void init_feature_extractor(ParamStore& store, const ModelConfig& cfg, Rng& rng);
void init_pretrain_head(ParamStore& store, const ModelConfig& cfg, Rng& rng);
void init_staging_head(ParamStore& store, const ModelConfig& cfg, Rng& rng);

ParamStore init_params(const ModelConfig& cfg, uint64_t seed, bool with_pretrain_head,
                       bool with_staging_head);

// Replaces dst's component tensors with copies from src (shapes must match).
void copy_component(ParamStore& dst, const ParamStore& src, const std::string& component);

// ---- forward passes ----

// [batch, 3, 3000] -> [batch, feature_dim]. Train mode applies dropout and
// batch statistics; eval mode is deterministic.
Tensor extract_features(ParamStore& store, const Tensor& epochs, const ModelConfig& cfg,
                        bool train, Rng* dropout_rng);

// Pretraining head on extracted features: probabilities in (0,1)^n_bins.
Tensor predict_bin_probs(ParamStore& store, const Tensor& features, const ModelConfig& cfg);

// Strict threshold: predicted present iff probability > 0.5.
std::vector<uint8_t> threshold_bins(const Tensor& probs);

// Staging head over exactly seq_len feature steps ([batch, feature] each):
// BiLSTM, center-step readout, dropout, dense, softmax -> [batch, n_stages].
Tensor predict_stage_probs(ParamStore& store, const std::vector<Tensor>& feature_steps,
                           const ModelConfig& cfg, bool train, Rng* dropout_rng);

// ---- checkpoints ----
// Single file: one JSON manifest line (names, shapes, components, dtype,
// format version), then raw little-endian float64 payloads in manifest order.

void save_checkpoint(const std::string& path, const ParamStore& store);
ParamStore load_checkpoint(const std::string& path);

}  // namespace freqtrain
