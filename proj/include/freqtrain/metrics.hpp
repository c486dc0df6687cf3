#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "freqtrain/tensor.hpp"

namespace freqtrain {

// Probabilities are clamped to [kProbClamp, 1 - kProbClamp] before any log.
inline constexpr double kProbClamp = 1e-7;

// Mean binary cross-entropy over all (sample, bin) entries. y holds 0/1
// targets shaped like y_hat_prob; differentiable w.r.t. y_hat_prob.
Tensor bce_loss(const Tensor& y, const Tensor& y_hat_prob);

// Mean -log p(true class) over the batch; probs is [batch, n_classes].
Tensor categorical_ce(const Tensor& probs, const std::vector<int>& true_classes);

// Fraction of matching entries between two equally-shaped binary matrices.
double hamming_metric(const std::vector<uint8_t>& y, const std::vector<uint8_t>& y_hat);

// Column-wise accuracy of an N x n_bins binary matrix pair.
std::vector<double> per_bin_accuracy(const std::vector<uint8_t>& y,
                                     const std::vector<uint8_t>& y_hat, int n_bins);

struct ConfusionMatrix {
  int k = 5;
  std::vector<int64_t> counts;  // k*k, rows = true, cols = predicted

  explicit ConfusionMatrix(int classes = 5)
      : k(classes), counts(static_cast<size_t>(classes) * classes, 0) {}
  int64_t& at(int true_c, int pred_c) { return counts[static_cast<size_t>(true_c) * k + pred_c]; }
  int64_t at(int true_c, int pred_c) const {
    return counts[static_cast<size_t>(true_c) * k + pred_c];
  }
  int64_t total() const;
  void add(int true_c, int pred_c) { ++at(true_c, pred_c); }
};

// F1 from raw counts; 0 when precision + recall is 0.
double f1_score(int64_t tp, int64_t fp, int64_t fn);

struct ClassCounts {
  int64_t tp = 0, fp = 0, fn = 0;
};

// Unweighted mean of per-class F1. A class with no true and no predicted
// instances (or zero precision+recall) contributes F1 = 0.
double macro_f1(const std::vector<ClassCounts>& per_class);
double macro_f1(const ConfusionMatrix& cm);

// Resamples the 15 (or however many) paired differences with replacement
// n_boot times; returns mean and standard deviation of the resample averages.
std::pair<double, double> paired_bootstrap_diff(const std::vector<double>& scores_a,
                                                const std::vector<double>& scores_b,
                                                int n_boot, uint64_t seed);

}  // namespace freqtrain
