#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "freqtrain/params.hpp"

namespace freqtrain {

// Adam with bias correction. Weight decay is applied through the gradient
// (g <- g + wd * w) before the moment updates.
struct AdamState {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 0.0;
  int64_t step = 0;
  std::unordered_map<std::string, std::vector<double>> m;
  std::unordered_map<std::string, std::vector<double>> v;
};

// One update over every trainable parameter that currently holds a gradient.
// Parameters that never received gradients are left untouched. Throws on a
// non-finite gradient, naming the parameter.
void adam_step(ParamStore& params, AdamState& state);

// Global-L2-norm gradient clipping over all present gradients. Returns the
// pre-clip norm.
double clip_grad_norm(ParamStore& params, double max_norm);

}  // namespace freqtrain
