#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "freqtrain/metrics.hpp"
#include "freqtrain/rng.hpp"

using namespace freqtrain;

TEST_CASE("bce closed forms") {
  Tensor y1 = Tensor::from_values({1, 1}, {1.0});
  Tensor p1 = Tensor::from_values({1, 1}, {0.5});
  CHECK(bce_loss(y1, p1).item() == doctest::Approx(std::log(2.0)).epsilon(1e-9));

  Tensor y2 = Tensor::from_values({1, 2}, {1.0, 0.0});
  Tensor p2 = Tensor::from_values({1, 2}, {0.9, 0.1});
  CHECK(bce_loss(y2, p2).item() == doctest::Approx(-std::log(0.9)).epsilon(1e-9));

  Tensor p_exact = Tensor::from_values({1, 2}, {1.0, 0.0});
  CHECK(bce_loss(y2, p_exact).item() < 1e-6);
  CHECK(bce_loss(y2, p_exact).item() >= 0.0);
}

TEST_CASE("hamming metric examples") {
  CHECK(hamming_metric({1, 0, 1, 0}, {1, 0, 1, 0}) == 1.0);
  CHECK(hamming_metric({1, 0, 1, 0}, {1, 1, 1, 0}) == 0.75);
  CHECK(hamming_metric({1, 0, 1, 0}, {0, 1, 0, 1}) == 0.0);
}

TEST_CASE("per-bin accuracy and its mean identity") {
  Rng rng(21);
  const int n = 40, bins = 5;
  std::vector<uint8_t> y(n * bins), yh(n * bins);
  for (auto& v : y) v = rng.bernoulli(0.5);
  for (auto& v : yh) v = rng.bernoulli(0.5);
  const auto acc = per_bin_accuracy(y, yh, bins);

  // Brute-force column counts.
  for (int j = 0; j < bins; ++j) {
    int match = 0;
    for (int r = 0; r < n; ++r) match += y[r * bins + j] == yh[r * bins + j];
    CHECK(acc[j] == doctest::Approx(match / static_cast<double>(n)));
  }
  double mean = 0;
  for (double a : acc) mean += a;
  mean /= bins;
  CHECK(mean == doctest::Approx(hamming_metric(y, yh)).epsilon(1e-12));
}

TEST_CASE("macro F1 closed forms") {
  SUBCASE("diagonal is perfect") {
    ConfusionMatrix cm(5);
    for (int c = 0; c < 5; ++c) cm.at(c, c) = 3 + c;
    CHECK(macro_f1(cm) == doctest::Approx(1.0));
  }
  SUBCASE("two-stage hand computation gives 5/6") {
    // Stage A perfect (p=r=1 -> F1=1); stage B p=0.5, r=1 -> F1=2/3.
    std::vector<ClassCounts> counts{{4, 0, 0}, {2, 2, 0}};
    CHECK(f1_score(2, 2, 0) == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
    CHECK(macro_f1(counts) == doctest::Approx(5.0 / 6.0).epsilon(1e-9));
  }
  SUBCASE("absent stage contributes zero") {
    ConfusionMatrix cm(5);
    cm.at(0, 0) = 10;  // only stage 0 present and predicted
    CHECK(macro_f1(cm) == doctest::Approx(0.2));
  }
  SUBCASE("empty matrix is an error") {
    ConfusionMatrix cm(5);
    CHECK_THROWS_AS(macro_f1(cm), TensorError);
  }
}

TEST_CASE("macro F1 invariant under simultaneous row/col permutation") {
  Rng rng(17);
  ConfusionMatrix cm(5);
  for (auto& c : cm.counts) c = static_cast<int64_t>(rng.next_below(9));
  cm.at(2, 2) += 3;
  const double base = macro_f1(cm);
  const std::vector<int> perm{3, 0, 4, 2, 1};
  ConfusionMatrix pm(5);
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 5; ++j) pm.at(perm[i], perm[j]) = cm.at(i, j);
  CHECK(macro_f1(pm) == doctest::Approx(base).epsilon(1e-12));
}

TEST_CASE("categorical cross-entropy closed forms") {
  Tensor uniform = Tensor::from_values({1, 5}, {0.2, 0.2, 0.2, 0.2, 0.2});
  CHECK(categorical_ce(uniform, {2}).item() == doctest::Approx(std::log(5.0)).epsilon(1e-9));

  Tensor onehot = Tensor::from_values({1, 5}, {0.0, 1.0, 0.0, 0.0, 0.0});
  CHECK(categorical_ce(onehot, {1}).item() < 1e-6);

  Tensor quarter = Tensor::from_values({1, 4}, {0.25, 0.25, 0.25, 0.25});
  CHECK(categorical_ce(quarter, {0}).item() == doctest::Approx(std::log(4.0)).epsilon(1e-9));

  CHECK_THROWS_AS(categorical_ce(uniform, {7}), TensorError);
}

TEST_CASE("metrics match brute-force recomputation on random instances") {
  Rng rng(2024);
  for (int rep = 0; rep < 1000; ++rep) {
    const int n = 1 + static_cast<int>(rng.next_below(6));
    const int bins = 1 + static_cast<int>(rng.next_below(6));
    std::vector<uint8_t> y(n * bins), yh(n * bins);
    std::vector<double> probs(n * bins);
    for (auto& v : y) v = rng.bernoulli(0.5);
    for (auto& v : yh) v = rng.bernoulli(0.5);
    for (auto& v : probs) v = rng.uniform(0.01, 0.99);

    // Hamming by direct loop.
    double match = 0;
    for (int i = 0; i < n * bins; ++i) match += y[i] == yh[i];
    CHECK(std::fabs(hamming_metric(y, yh) - match / (n * bins)) < 1e-12);

    // BCE by direct loop.
    double bce = 0;
    for (int i = 0; i < n * bins; ++i) {
      bce -= y[i] * std::log(probs[i]) + (1 - y[i]) * std::log(1 - probs[i]);
    }
    bce /= n * bins;
    std::vector<double> yd(y.begin(), y.end());
    Tensor ty = Tensor::from_values({n, bins}, yd);
    Tensor tp = Tensor::from_values({n, bins}, probs);
    CHECK(std::fabs(bce_loss(ty, tp).item() - bce) < 1e-12);

    // Macro F1 from random confusion counts vs per-class oracle.
    ConfusionMatrix cm(5);
    for (auto& c : cm.counts) c = static_cast<int64_t>(rng.next_below(7));
    if (cm.total() == 0) cm.at(0, 0) = 1;
    double sum = 0;
    for (int c = 0; c < 5; ++c) {
      double tp_ = cm.at(c, c), fp = 0, fn = 0;
      for (int o = 0; o < 5; ++o) {
        if (o != c) {
          fp += cm.at(o, c);
          fn += cm.at(c, o);
        }
      }
      const double p = tp_ + fp > 0 ? tp_ / (tp_ + fp) : 0.0;
      const double r = tp_ + fn > 0 ? tp_ / (tp_ + fn) : 0.0;
      sum += p + r > 0 ? 2 * p * r / (p + r) : 0.0;
    }
    CHECK(std::fabs(macro_f1(cm) - sum / 5) < 1e-12);
  }
}

TEST_CASE("paired bootstrap differences") {
  SUBCASE("identical scores give zero mean and spread") {
    std::vector<double> a{0.7, 0.8, 0.75, 0.72, 0.81};
    const auto [mean, sd] = paired_bootstrap_diff(a, a, 1000, 5);
    CHECK(mean == 0.0);
    CHECK(sd == 0.0);
  }
  SUBCASE("constant difference is recovered exactly") {
    std::vector<double> a{0.7, 0.8, 0.75}, b{0.6, 0.7, 0.65};
    const auto [mean, sd] = paired_bootstrap_diff(a, b, 2000, 5);
    CHECK(mean == doctest::Approx(0.1).epsilon(1e-12));
    CHECK(sd == doctest::Approx(0.0));
  }
  SUBCASE("bootstrap mean stays near the plain mean difference") {
    Rng rng(9);
    std::vector<double> a(15), b(15);
    for (int i = 0; i < 15; ++i) {
      a[i] = rng.uniform(0.5, 0.9);
      b[i] = rng.uniform(0.4, 0.8);
    }
    double plain = 0;
    for (int i = 0; i < 15; ++i) plain += a[i] - b[i];
    plain /= 15;
    const int n_boot = 10000;
    const auto [mean, sd] = paired_bootstrap_diff(a, b, n_boot, 77);
    CHECK(std::fabs(mean - plain) < 3.0 * sd / std::sqrt(static_cast<double>(n_boot)) + 1e-9);
  }
  SUBCASE("length mismatch rejected") {
    CHECK_THROWS_AS(paired_bootstrap_diff({1.0}, {1.0, 2.0}, 10, 1), TensorError);
  }
}
