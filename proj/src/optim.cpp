#include "freqtrain/optim.hpp"

#include <cmath>

namespace freqtrain {

void adam_step(ParamStore& params, AdamState& state) {
  state.step += 1;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (auto& e : params.entries()) {
    if (e.kind != ParamEntry::Kind::Param || !e.tensor.requires_grad()) continue;
    if (!e.tensor.has_grad()) continue;
    auto& w = e.tensor.values();
    const auto& g = e.tensor.grad();
    auto& m = state.m[e.name];
    auto& v = state.v[e.name];
    if (m.size() != w.size()) m.assign(w.size(), 0.0);
    if (v.size() != w.size()) v.assign(w.size(), 0.0);
    for (size_t i = 0; i < w.size(); ++i) {
      if (!std::isfinite(g[i])) {
        throw TensorError("adam_step: non-finite gradient in parameter '" + e.name + "'");
      }
      const double gi = g[i] + state.weight_decay * w[i];
      m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * gi;
      v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * gi * gi;
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      w[i] -= state.learning_rate * mhat / (std::sqrt(vhat) + state.epsilon);
    }
  }
}

double clip_grad_norm(ParamStore& params, double max_norm) {
  if (max_norm <= 0.0) throw TensorError("clip_grad_norm: max_norm must be positive");
  double sq = 0.0;
  for (auto& e : params.entries()) {
    if (e.kind != ParamEntry::Kind::Param || !e.tensor.requires_grad()) continue;
    if (!e.tensor.has_grad()) continue;
    for (double g : e.tensor.grad()) sq += g * g;
  }
  const double norm = std::sqrt(sq);
  if (norm > max_norm) {
    const double s = max_norm / norm;
    for (auto& e : params.entries()) {
      if (e.kind != ParamEntry::Kind::Param || !e.tensor.requires_grad()) continue;
      if (!e.tensor.has_grad()) continue;
      for (double& g : e.tensor.grad()) g *= s;
    }
  }
  return norm;
}

}  // namespace freqtrain
