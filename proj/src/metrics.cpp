#include "freqtrain/metrics.hpp"

#include <cmath>
#include <numeric>

#include "freqtrain/rng.hpp"

namespace freqtrain {

namespace {
double clamp_prob(double p) {
  return std::min(std::max(p, kProbClamp), 1.0 - kProbClamp);
}
}  // namespace

Tensor bce_loss(const Tensor& y, const Tensor& y_hat_prob) {
  if (y.shape() != y_hat_prob.shape()) {
    throw TensorError("bce_loss: shape mismatch " + shape_str(y.shape()) + " vs " +
                      shape_str(y_hat_prob.shape()));
  }
  const size_t n = y.values().size();
  const double* ty = y.values().data();
  const double* tp = y_hat_prob.values().data();
  double sum = 0.0;
  for (size_t i = 0; i < n; ++i) {
    const double p = clamp_prob(tp[i]);
    sum -= ty[i] * std::log(p) + (1.0 - ty[i]) * std::log(1.0 - p);
  }
  const double inv_n = 1.0 / static_cast<double>(n);
  return make_op_output({1}, {sum * inv_n}, {y, y_hat_prob}, [inv_n](TensorNode& self) {
    TensorNode& py = *self.parents[0];
    TensorNode& pp = *self.parents[1];
    if (!pp.requires_grad) return;
    pp.ensure_grad();
    const double g = self.grad[0] * inv_n;
    for (size_t i = 0; i < pp.values.size(); ++i) {
      const double raw = pp.values[i];
      if (raw <= kProbClamp || raw >= 1.0 - kProbClamp) continue;  // clamped: flat
      pp.grad[i] += g * (-py.values[i] / raw + (1.0 - py.values[i]) / (1.0 - raw));
    }
  });
}

Tensor categorical_ce(const Tensor& probs, const std::vector<int>& true_classes) {
  if (probs.ndim() != 2 || static_cast<size_t>(probs.dim(0)) != true_classes.size()) {
    throw TensorError("categorical_ce: probs must be [batch, classes] with one label per row");
  }
  const int batch = probs.dim(0), k = probs.dim(1);
  for (int c : true_classes) {
    if (c < 0 || c >= k) {
      throw TensorError("categorical_ce: class index " + std::to_string(c) +
                        " outside [0," + std::to_string(k) + ")");
    }
  }
  double sum = 0.0;
  const double* pv = probs.values().data();
  for (int i = 0; i < batch; ++i) {
    sum -= std::log(clamp_prob(pv[static_cast<size_t>(i) * k + true_classes[static_cast<size_t>(i)]]));
  }
  const double inv_b = 1.0 / static_cast<double>(batch);
  return make_op_output(
      {1}, {sum * inv_b}, {probs},
      [inv_b, k, true_classes](TensorNode& self) {
        TensorNode& pp = *self.parents[0];
        if (!pp.requires_grad) return;
        pp.ensure_grad();
        const double g = self.grad[0] * inv_b;
        for (size_t i = 0; i < true_classes.size(); ++i) {
          const size_t idx = i * static_cast<size_t>(k) +
                             static_cast<size_t>(true_classes[i]);
          const double raw = pp.values[idx];
          if (raw <= kProbClamp || raw >= 1.0 - kProbClamp) continue;
          pp.grad[idx] += g * (-1.0 / raw);
        }
      });
}

double hamming_metric(const std::vector<uint8_t>& y, const std::vector<uint8_t>& y_hat) {
  if (y.size() != y_hat.size() || y.empty()) {
    throw TensorError("hamming_metric: size mismatch or empty input");
  }
  size_t match = 0;
  for (size_t i = 0; i < y.size(); ++i) match += (y[i] == y_hat[i]) ? 1 : 0;
  return static_cast<double>(match) / static_cast<double>(y.size());
}

std::vector<double> per_bin_accuracy(const std::vector<uint8_t>& y,
                                     const std::vector<uint8_t>& y_hat, int n_bins) {
  if (y.size() != y_hat.size() || n_bins <= 0 || y.size() % static_cast<size_t>(n_bins) != 0) {
    throw TensorError("per_bin_accuracy: inputs must be N x n_bins");
  }
  const size_t rows = y.size() / static_cast<size_t>(n_bins);
  std::vector<double> acc(static_cast<size_t>(n_bins), 0.0);
  for (size_t r = 0; r < rows; ++r) {
    for (int j = 0; j < n_bins; ++j) {
      const size_t idx = r * static_cast<size_t>(n_bins) + static_cast<size_t>(j);
      if (y[idx] == y_hat[idx]) acc[static_cast<size_t>(j)] += 1.0;
    }
  }
  for (auto& a : acc) a /= static_cast<double>(rows);
  return acc;
}

int64_t ConfusionMatrix::total() const {
  return std::accumulate(counts.begin(), counts.end(), int64_t{0});
}

double f1_score(int64_t tp, int64_t fp, int64_t fn) {
  const double p = (tp + fp) > 0 ? static_cast<double>(tp) / (tp + fp) : 0.0;
  const double r = (tp + fn) > 0 ? static_cast<double>(tp) / (tp + fn) : 0.0;
  return (p + r) > 0.0 ? 2.0 * p * r / (p + r) : 0.0;
}

double macro_f1(const std::vector<ClassCounts>& per_class) {
  if (per_class.empty()) throw TensorError("macro_f1: no classes");
  double sum = 0.0;
  for (const auto& c : per_class) sum += f1_score(c.tp, c.fp, c.fn);
  return sum / static_cast<double>(per_class.size());
}

double macro_f1(const ConfusionMatrix& cm) {
  if (cm.total() == 0) throw TensorError("macro_f1: empty confusion matrix");
  std::vector<ClassCounts> per_class(static_cast<size_t>(cm.k));
  for (int c = 0; c < cm.k; ++c) {
    auto& cc = per_class[static_cast<size_t>(c)];
    cc.tp = cm.at(c, c);
    for (int o = 0; o < cm.k; ++o) {
      if (o == c) continue;
      cc.fp += cm.at(o, c);
      cc.fn += cm.at(c, o);
    }
  }
  return macro_f1(per_class);
}

std::pair<double, double> paired_bootstrap_diff(const std::vector<double>& scores_a,
                                                const std::vector<double>& scores_b,
                                                int n_boot, uint64_t seed) {
  if (scores_a.size() != scores_b.size() || scores_a.empty()) {
    throw TensorError("paired_bootstrap_diff: score vectors must be paired and non-empty");
  }
  const size_t n = scores_a.size();
  std::vector<double> diffs(n);
  for (size_t i = 0; i < n; ++i) diffs[i] = scores_a[i] - scores_b[i];

  Rng rng = Rng::derive(seed, {0x424f4f54u});  // "BOOT"
  std::vector<double> means(static_cast<size_t>(n_boot));
  for (int b = 0; b < n_boot; ++b) {
    double s = 0.0;
    for (size_t i = 0; i < n; ++i) s += diffs[rng.next_below(n)];
    means[static_cast<size_t>(b)] = s / static_cast<double>(n);
  }
  double mean = 0.0;
  for (double m : means) mean += m;
  mean /= static_cast<double>(n_boot);
  double var = 0.0;
  for (double m : means) var += (m - mean) * (m - mean);
  var /= static_cast<double>(n_boot);
  return {mean, std::sqrt(var)};
}

}  // namespace freqtrain
