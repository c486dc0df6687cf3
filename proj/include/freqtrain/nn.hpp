#pragma once

#include <utility>
#include <vector>

#include "freqtrain/rng.hpp"
#include "freqtrain/tensor.hpp"

namespace freqtrain {

// ---- elementwise / linear algebra ----

Tensor add(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);
// x[m,n] + row vector b[n], broadcast over rows.
Tensor add_rowvec(const Tensor& x, const Tensor& b);
Tensor matmul(const Tensor& a, const Tensor& b);
// x[m,k] * w[k,n] + b[n]
Tensor dense(const Tensor& x, const Tensor& w, const Tensor& b);

Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor tanh_act(const Tensor& x);
Tensor softmax_lastdim(const Tensor& x);

// Inverted-scaling dropout: train mode zeroes elements with probability p and
// scales survivors by 1/(1-p); eval mode returns the input unchanged.
Tensor dropout(const Tensor& x, double p, bool train, Rng& rng);

Tensor reshape(const Tensor& x, std::vector<int> shape);
Tensor slice_rows(const Tensor& x, int r0, int r1);
Tensor slice_cols(const Tensor& x, int c0, int c1);
Tensor concat_cols(const Tensor& a, const Tensor& b);
Tensor sum_all(const Tensor& x);
Tensor mean_all(const Tensor& x);

// ---- structured layers ----

// x[B,Cin,L] conv w[Cout,Cin,K] + b[Cout]; explicit left/right zero padding.
Tensor conv1d_padlr(const Tensor& x, const Tensor& w, const Tensor& b, int stride,
                    int pad_left, int pad_right);
// Symmetric padding on both sides; out_len = floor((L + 2*padding - K)/stride) + 1.
Tensor conv1d(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int padding);
// Same-style padding: out_len = ceil(L/stride); odd totals put the extra zero
// on the right.
Tensor conv1d_same(const Tensor& x, const Tensor& w, const Tensor& b, int stride);
int conv1d_out_len(int length, int kernel, int stride, int pad_left, int pad_right);

// Non-overlapping max pooling; out_len = floor(L/window), trailing samples
// dropped. Gradient routes to the first maximal element of each window.
Tensor maxpool1d(const Tensor& x, int window);

// Batch normalization over (batch, len) per channel, x[B,C,L].
// Train mode normalizes with batch statistics and updates the running
// buffers in place (momentum convention: new = (1-m)*old + m*batch).
Tensor batchnorm1d(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                   Tensor& running_mean, Tensor& running_var, bool train,
                   double momentum = 0.1, double eps = 1e-5);

// ---- LSTM ----

struct LstmCellParams {
  Tensor w_ih;  // [input, 4*hidden], gate order i,f,g,o
  Tensor w_hh;  // [hidden, 4*hidden]
  Tensor bias;  // [4*hidden]
};

// One step; returns (h, c).
std::pair<Tensor, Tensor> lstm_cell(const Tensor& x, const Tensor& h_prev,
                                    const Tensor& c_prev, const LstmCellParams& p);

// Per-step outputs of a unidirectional pass (in input order even when
// processed back-to-front).
std::vector<Tensor> lstm_run(const std::vector<Tensor>& xs, const LstmCellParams& p,
                             bool reverse);

// Bidirectional pass; step outputs concatenate forward and backward halves.
std::vector<Tensor> bilstm(const std::vector<Tensor>& xs, const LstmCellParams& fwd,
                           const LstmCellParams& bwd);

}  // namespace freqtrain
