#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "freqtrain/metrics.hpp"
#include "freqtrain/nn.hpp"
#include "freqtrain/rng.hpp"
#include "support/gradcheck.hpp"

using namespace freqtrain;
using freqtrain::testing::gradcheck;

namespace {

Tensor rnd(Rng& rng, std::vector<int> shape, double lo = -1.0, double hi = 1.0,
           bool requires_grad = true) {
  std::vector<double> v(static_cast<size_t>(shape_numel(shape)));
  for (auto& x : v) x = rng.uniform(lo, hi);
  return Tensor::from_values(std::move(shape), std::move(v), requires_grad);
}

constexpr double kTol = 1e-4;

}  // namespace

TEST_CASE("conv1d gradients match finite differences") {
  for (int rep = 0; rep < 4; ++rep) {
    Rng rng(100 + static_cast<uint64_t>(rep));
    Tensor x = rnd(rng, {2, 3, 14});
    Tensor w = rnd(rng, {4, 3, 5});
    Tensor b = rnd(rng, {4});
    const int stride = 1 + rep % 3;
    const auto out_shape = conv1d_padlr(x, w, b, stride, 2, 1).shape();
    Tensor pw = rnd(rng, out_shape, -1, 1, false);
    std::vector<Tensor> leaves{x, w, b};
    auto res = gradcheck(leaves, [&] {
      return sum_all(mul(conv1d_padlr(x, w, b, stride, 2, 1), pw));
    });
    CHECK(res.max_rel_err < kTol);
  }
}

TEST_CASE("maxpool1d gradients match finite differences") {
  for (int rep = 0; rep < 4; ++rep) {
    Rng rng(300 + static_cast<uint64_t>(rep));
    Tensor x = rnd(rng, {2, 2, 13});
    Tensor pw = rnd(rng, {2, 2, 13 / (2 + rep % 2)}, -1, 1, false);
    const int window = 2 + rep % 2;
    std::vector<Tensor> leaves{x};
    auto res = gradcheck(leaves, [&] { return sum_all(mul(maxpool1d(x, window), pw)); });
    CHECK(res.max_rel_err < kTol);
  }
}

TEST_CASE("batchnorm1d train-mode gradients match finite differences") {
  for (int rep = 0; rep < 4; ++rep) {
    Rng rng(400 + static_cast<uint64_t>(rep));
    Tensor x = rnd(rng, {3, 2, 7});
    Tensor gamma = rnd(rng, {2}, 0.5, 1.5);
    Tensor beta = rnd(rng, {2}, -0.5, 0.5);
    Tensor pw = rnd(rng, {3, 2, 7}, -1, 1, false);
    std::vector<Tensor> leaves{x, gamma, beta};
    auto res = gradcheck(leaves, [&] {
      Tensor rm = Tensor::zeros({2});  // fresh buffers: FD reruns must not drift stats
      Tensor rv = Tensor::full({2}, 1.0);
      return sum_all(mul(batchnorm1d(x, gamma, beta, rm, rv, true), pw));
    });
    CHECK(res.max_rel_err < kTol);
  }
}

TEST_CASE("dense and activation gradients match finite differences") {
  for (int rep = 0; rep < 4; ++rep) {
    Rng rng(500 + static_cast<uint64_t>(rep));
    Tensor x = rnd(rng, {3, 4});
    Tensor w = rnd(rng, {4, 5});
    Tensor b = rnd(rng, {5});
    Tensor pw = rnd(rng, {3, 5}, -1, 1, false);
    std::vector<Tensor> leaves{x, w, b};

    auto res_relu = gradcheck(leaves, [&] { return sum_all(mul(relu(dense(x, w, b)), pw)); });
    CHECK(res_relu.max_rel_err < kTol);
    auto res_sig = gradcheck(leaves, [&] { return sum_all(mul(sigmoid(dense(x, w, b)), pw)); });
    CHECK(res_sig.max_rel_err < kTol);
    auto res_soft = gradcheck(leaves, [&] {
      return sum_all(mul(softmax_lastdim(dense(x, w, b)), pw));
    });
    CHECK(res_soft.max_rel_err < kTol);
  }
}

TEST_CASE("dropout gradient matches finite differences with a fixed mask") {
  Rng rng(600);
  Tensor x = rnd(rng, {4, 6});
  Tensor pw = rnd(rng, {4, 6}, -1, 1, false);
  std::vector<Tensor> leaves{x};
  auto res = gradcheck(leaves, [&] {
    Rng mask_rng(777);  // same mask on every rerun
    return sum_all(mul(dropout(x, 0.4, true, mask_rng), pw));
  });
  CHECK(res.max_rel_err < kTol);
}

TEST_CASE("bilstm gradients through 3 time steps match finite differences") {
  Rng rng(700);
  const int hidden = 3, feat = 4, batch = 2, steps = 3;
  LstmCellParams fwd{rnd(rng, {feat, 4 * hidden}, -0.7, 0.7),
                     rnd(rng, {hidden, 4 * hidden}, -0.7, 0.7),
                     rnd(rng, {4 * hidden}, -0.3, 0.3)};
  LstmCellParams bwd{rnd(rng, {feat, 4 * hidden}, -0.7, 0.7),
                     rnd(rng, {hidden, 4 * hidden}, -0.7, 0.7),
                     rnd(rng, {4 * hidden}, -0.3, 0.3)};
  std::vector<Tensor> xs;
  for (int t = 0; t < steps; ++t) xs.push_back(rnd(rng, {batch, feat}));
  std::vector<Tensor> pws;
  for (int t = 0; t < steps; ++t) pws.push_back(rnd(rng, {batch, 2 * hidden}, -1, 1, false));

  std::vector<Tensor> leaves{fwd.w_ih, fwd.w_hh, fwd.bias, bwd.w_ih, bwd.w_hh, bwd.bias};
  for (auto& x : xs) leaves.push_back(x);

  auto res = gradcheck(leaves, [&] {
    auto outs = bilstm(xs, fwd, bwd);
    Tensor loss = sum_all(mul(outs[0], pws[0]));
    for (int t = 1; t < steps; ++t) loss = add(loss, sum_all(mul(outs[static_cast<size_t>(t)], pws[static_cast<size_t>(t)])));
    return loss;
  });
  CHECK(res.max_rel_err < kTol);
}

TEST_CASE("loss gradients match finite differences") {
  Rng rng(800);
  Tensor probs = rnd(rng, {3, 4}, 0.05, 0.95);
  Tensor targets = Tensor::from_values({3, 4}, {1, 0, 0, 1, 0, 1, 1, 0, 1, 1, 0, 0});
  std::vector<Tensor> leaves{probs};
  auto res = gradcheck(leaves, [&] { return bce_loss(targets, probs); });
  CHECK(res.max_rel_err < kTol);

  Tensor logits = rnd(rng, {3, 5});
  std::vector<int> cls{0, 3, 2};
  std::vector<Tensor> leaves2{logits};
  auto res2 = gradcheck(leaves2, [&] { return categorical_ce(softmax_lastdim(logits), cls); });
  CHECK(res2.max_rel_err < kTol);
}
