#include "freqtrain/nn.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "freqtrain/parallel.hpp"

namespace freqtrain {

namespace {

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw TensorError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                      " vs " + shape_str(b.shape()));
  }
}

void accumulate(TensorNode& parent, const std::vector<double>& contrib) {
  parent.ensure_grad();
  double* g = parent.grad.data();
  const double* c = contrib.data();
  const size_t n = contrib.size();
  for (size_t i = 0; i < n; ++i) g[i] += c[i];
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "add");
  const size_t n = a.values().size();
  std::vector<double> out(n);
  const double* pa = a.values().data();
  const double* pb = b.values().data();
  for (size_t i = 0; i < n; ++i) out[i] = pa[i] + pb[i];
  return make_op_output(a.shape(), std::move(out), {a, b}, [](TensorNode& self) {
    for (int k = 0; k < 2; ++k) {
      TensorNode& p = *self.parents[k];
      if (p.requires_grad) accumulate(p, self.grad);
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "mul");
  const size_t n = a.values().size();
  std::vector<double> out(n);
  const double* pa = a.values().data();
  const double* pb = b.values().data();
  for (size_t i = 0; i < n; ++i) out[i] = pa[i] * pb[i];
  return make_op_output(a.shape(), std::move(out), {a, b}, [](TensorNode& self) {
    TensorNode& pa = *self.parents[0];
    TensorNode& pb = *self.parents[1];
    const size_t n = self.grad.size();
    if (pa.requires_grad) {
      pa.ensure_grad();
      for (size_t i = 0; i < n; ++i) pa.grad[i] += self.grad[i] * pb.values[i];
    }
    if (pb.requires_grad) {
      pb.ensure_grad();
      for (size_t i = 0; i < n; ++i) pb.grad[i] += self.grad[i] * pa.values[i];
    }
  });
}

Tensor scale(const Tensor& a, double c) {
  const size_t n = a.values().size();
  std::vector<double> out(n);
  const double* pa = a.values().data();
  for (size_t i = 0; i < n; ++i) out[i] = pa[i] * c;
  return make_op_output(a.shape(), std::move(out), {a}, [c](TensorNode& self) {
    TensorNode& p = *self.parents[0];
    if (!p.requires_grad) return;
    p.ensure_grad();
    for (size_t i = 0; i < self.grad.size(); ++i) p.grad[i] += self.grad[i] * c;
  });
}

Tensor add_rowvec(const Tensor& x, const Tensor& b) {
  if (x.ndim() != 2 || b.ndim() != 1 || x.dim(1) != b.dim(0)) {
    throw TensorError("add_rowvec: incompatible shapes " + shape_str(x.shape()) + " and " +
                      shape_str(b.shape()));
  }
  const int m = x.dim(0), n = x.dim(1);
  std::vector<double> out(x.values());
  for (int i = 0; i < m; ++i) {
    double* row = out.data() + static_cast<size_t>(i) * n;
    const double* pb = b.values().data();
    for (int j = 0; j < n; ++j) row[j] += pb[j];
  }
  return make_op_output(x.shape(), std::move(out), {x, b}, [m, n](TensorNode& self) {
    TensorNode& px = *self.parents[0];
    TensorNode& pb = *self.parents[1];
    if (px.requires_grad) accumulate(px, self.grad);
    if (pb.requires_grad) {
      pb.ensure_grad();
      for (int i = 0; i < m; ++i) {
        const double* g = self.grad.data() + static_cast<size_t>(i) * n;
        for (int j = 0; j < n; ++j) pb.grad[j] += g[j];
      }
    }
  });
}

namespace {
// Fixed-order eight-lane dot product. The lane split is part of the numeric
// contract (bitwise reproducible within a build); it exists because strict FP
// blocks the compiler from reassociating a plain reduction loop.
inline double dot8(const double* a, const double* b, int n) {
  double s0 = 0, s1 = 0, s2 = 0, s3 = 0, s4 = 0, s5 = 0, s6 = 0, s7 = 0;
  int j = 0;
  for (; j + 8 <= n; j += 8) {
    s0 += a[j] * b[j];
    s1 += a[j + 1] * b[j + 1];
    s2 += a[j + 2] * b[j + 2];
    s3 += a[j + 3] * b[j + 3];
    s4 += a[j + 4] * b[j + 4];
    s5 += a[j + 5] * b[j + 5];
    s6 += a[j + 6] * b[j + 6];
    s7 += a[j + 7] * b[j + 7];
  }
  double tail = 0;
  for (; j < n; ++j) tail += a[j] * b[j];
  return (((s0 + s1) + (s2 + s3)) + ((s4 + s5) + (s6 + s7))) + tail;
}

// out[m,n] (+)= a[m,k] * b[k,n]; rows of out are owned by single chunks, so
// results do not depend on the thread count.
void matmul_into(double* out, const double* a, const double* b, int m, int k, int n,
                 bool accumulate_out) {
  parallel_for(m, [&](int64_t i0, int64_t i1) {
    for (int64_t i = i0; i < i1; ++i) {
      double* orow = out + i * n;
      if (!accumulate_out) std::memset(orow, 0, sizeof(double) * static_cast<size_t>(n));
      const double* arow = a + i * k;
      for (int kk = 0; kk < k; ++kk) {
        const double av = arow[kk];
        if (av == 0.0) continue;
        const double* brow = b + static_cast<size_t>(kk) * n;
        for (int j = 0; j < n; ++j) orow[j] += av * brow[j];
      }
    }
  });
}

// out[m,k] += g[m,n] * b[k,n]^T
void matmul_bt_into(double* out, const double* g, const double* b, int m, int n, int k) {
  parallel_for(m, [&](int64_t i0, int64_t i1) {
    for (int64_t i = i0; i < i1; ++i) {
      const double* grow = g + i * n;
      double* orow = out + i * k;
      for (int kk = 0; kk < k; ++kk) {
        orow[kk] += dot8(grow, b + static_cast<size_t>(kk) * n, n);
      }
    }
  });
}

// out[k,n] += a[m,k]^T * g[m,n]
void matmul_at_into(double* out, const double* a, const double* g, int m, int k, int n) {
  parallel_for(k, [&](int64_t k0, int64_t k1) {
    for (int64_t kk = k0; kk < k1; ++kk) {
      double* orow = out + kk * n;
      for (int i = 0; i < m; ++i) {
        const double av = a[static_cast<size_t>(i) * k + kk];
        if (av == 0.0) continue;
        const double* grow = g + static_cast<size_t>(i) * n;
        for (int j = 0; j < n; ++j) orow[j] += av * grow[j];
      }
    }
  });
}
}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.ndim() != 2 || b.ndim() != 2 || a.dim(1) != b.dim(0)) {
    throw TensorError("matmul: incompatible shapes " + shape_str(a.shape()) + " and " +
                      shape_str(b.shape()));
  }
  const int m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<double> out(static_cast<size_t>(m) * n);
  matmul_into(out.data(), a.values().data(), b.values().data(), m, k, n, true);
  return make_op_output({m, n}, std::move(out), {a, b}, [m, k, n](TensorNode& self) {
    TensorNode& pa = *self.parents[0];
    TensorNode& pb = *self.parents[1];
    if (pa.requires_grad) {
      pa.ensure_grad();
      matmul_bt_into(pa.grad.data(), self.grad.data(), pb.values.data(), m, n, k);
    }
    if (pb.requires_grad) {
      pb.ensure_grad();
      matmul_at_into(pb.grad.data(), pa.values.data(), self.grad.data(), m, k, n);
    }
  });
}

Tensor dense(const Tensor& x, const Tensor& w, const Tensor& b) {
  if (x.ndim() != 2 || w.ndim() != 2 || b.ndim() != 1 || x.dim(1) != w.dim(0) ||
      w.dim(1) != b.dim(0)) {
    throw TensorError("dense: incompatible shapes x=" + shape_str(x.shape()) +
                      " w=" + shape_str(w.shape()) + " b=" + shape_str(b.shape()));
  }
  const int m = x.dim(0), k = x.dim(1), n = w.dim(1);
  std::vector<double> out(static_cast<size_t>(m) * n);
  for (int i = 0; i < m; ++i) {
    std::memcpy(out.data() + static_cast<size_t>(i) * n, b.values().data(),
                sizeof(double) * static_cast<size_t>(n));
  }
  matmul_into(out.data(), x.values().data(), w.values().data(), m, k, n, true);
  return make_op_output({m, n}, std::move(out), {x, w, b}, [m, k, n](TensorNode& self) {
    TensorNode& px = *self.parents[0];
    TensorNode& pw = *self.parents[1];
    TensorNode& pb = *self.parents[2];
    if (px.requires_grad) {
      px.ensure_grad();
      matmul_bt_into(px.grad.data(), self.grad.data(), pw.values.data(), m, n, k);
    }
    if (pw.requires_grad) {
      pw.ensure_grad();
      matmul_at_into(pw.grad.data(), px.values.data(), self.grad.data(), m, k, n);
    }
    if (pb.requires_grad) {
      pb.ensure_grad();
      for (int i = 0; i < m; ++i) {
        const double* g = self.grad.data() + static_cast<size_t>(i) * n;
        for (int j = 0; j < n; ++j) pb.grad[j] += g[j];
      }
    }
  });
}

namespace {
template <typename Fwd, typename Bwd>
Tensor unary_op(const Tensor& x, Fwd fwd, Bwd bwd_from_out_and_in) {
  const size_t n = x.values().size();
  std::vector<double> out(n);
  const double* px = x.values().data();
  for (size_t i = 0; i < n; ++i) out[i] = fwd(px[i]);
  return make_op_output(x.shape(), std::move(out), {x},
                        [bwd_from_out_and_in](TensorNode& self) {
                          TensorNode& p = *self.parents[0];
                          if (!p.requires_grad) return;
                          p.ensure_grad();
                          const size_t n = self.grad.size();
                          for (size_t i = 0; i < n; ++i) {
                            p.grad[i] += self.grad[i] *
                                         bwd_from_out_and_in(self.values[i], p.values[i]);
                          }
                        });
}
}  // namespace

Tensor relu(const Tensor& x) {
  return unary_op(
      x, [](double v) { return v > 0.0 ? v : 0.0; },
      [](double, double in) { return in > 0.0 ? 1.0 : 0.0; });
}

Tensor sigmoid(const Tensor& x) {
  return unary_op(
      x, [](double v) { return 1.0 / (1.0 + std::exp(-v)); },
      [](double out, double) { return out * (1.0 - out); });
}

Tensor tanh_act(const Tensor& x) {
  return unary_op(
      x, [](double v) { return std::tanh(v); },
      [](double out, double) { return 1.0 - out * out; });
}

Tensor softmax_lastdim(const Tensor& x) {
  if (x.ndim() < 1) throw TensorError("softmax: rank-0 input");
  const int n = x.dim(x.ndim() - 1);
  const int64_t rows = x.size() / n;
  std::vector<double> out(x.values().size());
  const double* px = x.values().data();
  for (int64_t r = 0; r < rows; ++r) {
    const double* in = px + r * n;
    double* o = out.data() + r * n;
    double mx = in[0];
    for (int j = 1; j < n; ++j) mx = std::max(mx, in[j]);
    double sum = 0.0;
    for (int j = 0; j < n; ++j) {
      o[j] = std::exp(in[j] - mx);
      sum += o[j];
    }
    for (int j = 0; j < n; ++j) o[j] /= sum;
  }
  return make_op_output(x.shape(), std::move(out), {x}, [n, rows](TensorNode& self) {
    TensorNode& p = *self.parents[0];
    if (!p.requires_grad) return;
    p.ensure_grad();
    for (int64_t r = 0; r < rows; ++r) {
      const double* y = self.values.data() + r * n;
      const double* dy = self.grad.data() + r * n;
      double* dx = p.grad.data() + r * n;
      double dot = 0.0;
      for (int j = 0; j < n; ++j) dot += dy[j] * y[j];
      for (int j = 0; j < n; ++j) dx[j] += y[j] * (dy[j] - dot);
    }
  });
}

Tensor dropout(const Tensor& x, double p, bool train, Rng& rng) {
  if (p < 0.0 || p >= 1.0) throw TensorError("dropout: rate must be in [0,1)");
  if (!train || p == 0.0) return x;
  const size_t n = x.values().size();
  const double inv_keep = 1.0 / (1.0 - p);
  std::vector<uint8_t> mask(n);
  std::vector<double> out(n);
  const double* px = x.values().data();
  for (size_t i = 0; i < n; ++i) {
    mask[i] = rng.uniform() >= p ? 1 : 0;
    out[i] = mask[i] ? px[i] * inv_keep : 0.0;
  }
  return make_op_output(x.shape(), std::move(out), {x},
                        [mask = std::move(mask), inv_keep](TensorNode& self) {
                          TensorNode& par = *self.parents[0];
                          if (!par.requires_grad) return;
                          par.ensure_grad();
                          for (size_t i = 0; i < mask.size(); ++i) {
                            if (mask[i]) par.grad[i] += self.grad[i] * inv_keep;
                          }
                        });
}

Tensor reshape(const Tensor& x, std::vector<int> shape) {
  if (shape_numel(shape) != x.size()) {
    throw TensorError("reshape: cannot view " + shape_str(x.shape()) + " as " +
                      shape_str(shape));
  }
  std::vector<double> out(x.values());
  return make_op_output(std::move(shape), std::move(out), {x}, [](TensorNode& self) {
    TensorNode& p = *self.parents[0];
    if (p.requires_grad) accumulate(p, self.grad);
  });
}

Tensor slice_rows(const Tensor& x, int r0, int r1) {
  if (x.ndim() != 2 || r0 < 0 || r1 > x.dim(0) || r0 >= r1) {
    throw TensorError("slice_rows: bad range [" + std::to_string(r0) + "," +
                      std::to_string(r1) + ") for " + shape_str(x.shape()));
  }
  const int n = x.dim(1);
  std::vector<double> out(x.values().begin() + static_cast<size_t>(r0) * n,
                          x.values().begin() + static_cast<size_t>(r1) * n);
  return make_op_output({r1 - r0, n}, std::move(out), {x}, [r0, n](TensorNode& self) {
    TensorNode& p = *self.parents[0];
    if (!p.requires_grad) return;
    p.ensure_grad();
    double* dst = p.grad.data() + static_cast<size_t>(r0) * n;
    for (size_t i = 0; i < self.grad.size(); ++i) dst[i] += self.grad[i];
  });
}

Tensor slice_cols(const Tensor& x, int c0, int c1) {
  if (x.ndim() != 2 || c0 < 0 || c1 > x.dim(1) || c0 >= c1) {
    throw TensorError("slice_cols: bad range [" + std::to_string(c0) + "," +
                      std::to_string(c1) + ") for " + shape_str(x.shape()));
  }
  const int m = x.dim(0), n = x.dim(1), w = c1 - c0;
  std::vector<double> out(static_cast<size_t>(m) * w);
  const double* px = x.values().data();
  for (int i = 0; i < m; ++i) {
    std::memcpy(out.data() + static_cast<size_t>(i) * w,
                px + static_cast<size_t>(i) * n + c0, sizeof(double) * static_cast<size_t>(w));
  }
  return make_op_output({m, w}, std::move(out), {x}, [m, n, c0, w](TensorNode& self) {
    TensorNode& p = *self.parents[0];
    if (!p.requires_grad) return;
    p.ensure_grad();
    for (int i = 0; i < m; ++i) {
      const double* g = self.grad.data() + static_cast<size_t>(i) * w;
      double* dst = p.grad.data() + static_cast<size_t>(i) * n + c0;
      for (int j = 0; j < w; ++j) dst[j] += g[j];
    }
  });
}

Tensor concat_cols(const Tensor& a, const Tensor& b) {
  if (a.ndim() != 2 || b.ndim() != 2 || a.dim(0) != b.dim(0)) {
    throw TensorError("concat_cols: incompatible shapes " + shape_str(a.shape()) + " and " +
                      shape_str(b.shape()));
  }
  const int m = a.dim(0), na = a.dim(1), nb = b.dim(1);
  std::vector<double> out(static_cast<size_t>(m) * (na + nb));
  for (int i = 0; i < m; ++i) {
    std::memcpy(out.data() + static_cast<size_t>(i) * (na + nb),
                a.values().data() + static_cast<size_t>(i) * na,
                sizeof(double) * static_cast<size_t>(na));
    std::memcpy(out.data() + static_cast<size_t>(i) * (na + nb) + na,
                b.values().data() + static_cast<size_t>(i) * nb,
                sizeof(double) * static_cast<size_t>(nb));
  }
  return make_op_output({m, na + nb}, std::move(out), {a, b}, [m, na, nb](TensorNode& self) {
    TensorNode& pa = *self.parents[0];
    TensorNode& pb = *self.parents[1];
    for (int i = 0; i < m; ++i) {
      const double* g = self.grad.data() + static_cast<size_t>(i) * (na + nb);
      if (pa.requires_grad) {
        pa.ensure_grad();
        double* da = pa.grad.data() + static_cast<size_t>(i) * na;
        for (int j = 0; j < na; ++j) da[j] += g[j];
      }
      if (pb.requires_grad) {
        pb.ensure_grad();
        double* db = pb.grad.data() + static_cast<size_t>(i) * nb;
        for (int j = 0; j < nb; ++j) db[j] += g[na + j];
      }
    }
  });
}

Tensor sum_all(const Tensor& x) {
  double s = 0.0;
  for (double v : x.values()) s += v;
  return make_op_output({1}, {s}, {x}, [](TensorNode& self) {
    TensorNode& p = *self.parents[0];
    if (!p.requires_grad) return;
    p.ensure_grad();
    const double g = self.grad[0];
    for (double& pg : p.grad) pg += g;
  });
}

Tensor mean_all(const Tensor& x) {
  double s = 0.0;
  for (double v : x.values()) s += v;
  const double inv = 1.0 / static_cast<double>(x.size());
  return make_op_output({1}, {s * inv}, {x}, [inv](TensorNode& self) {
    TensorNode& p = *self.parents[0];
    if (!p.requires_grad) return;
    p.ensure_grad();
    const double g = self.grad[0] * inv;
    for (double& pg : p.grad) pg += g;
  });
}

// ---- conv1d ----

int conv1d_out_len(int length, int kernel, int stride, int pad_left, int pad_right) {
  const int padded = length + pad_left + pad_right;
  if (padded < kernel) {
    throw TensorError("conv1d: padded length " + std::to_string(padded) +
                      " shorter than kernel " + std::to_string(kernel));
  }
  return (padded - kernel) / stride + 1;
}

namespace {
// col[Lout, Cin*K] for one batch item.
void im2col(const double* x, int cin, int len, int kernel, int stride, int pad_left,
            int lout, double* col) {
  for (int o = 0; o < lout; ++o) {
    double* row = col + static_cast<size_t>(o) * cin * kernel;
    const int start = o * stride - pad_left;
    for (int c = 0; c < cin; ++c) {
      const double* xc = x + static_cast<size_t>(c) * len;
      double* rc = row + static_cast<size_t>(c) * kernel;
      for (int k = 0; k < kernel; ++k) {
        const int idx = start + k;
        rc[k] = (idx >= 0 && idx < len) ? xc[idx] : 0.0;
      }
    }
  }
}
}  // namespace

Tensor conv1d_padlr(const Tensor& x, const Tensor& w, const Tensor& b, int stride,
                    int pad_left, int pad_right) {
  if (x.ndim() != 3) {
    throw TensorError("conv1d: input must be [batch, channels, length], got " +
                      shape_str(x.shape()));
  }
  if (w.ndim() != 3) {
    throw TensorError("conv1d: weight must be [out_ch, in_ch, kernel], got " +
                      shape_str(w.shape()));
  }
  if (w.dim(1) != x.dim(1)) {
    throw TensorError("conv1d: in_ch mismatch, input has " + std::to_string(x.dim(1)) +
                      " channels but weight expects " + std::to_string(w.dim(1)));
  }
  if (b.ndim() != 1 || b.dim(0) != w.dim(0)) {
    throw TensorError("conv1d: bias must be [out_ch=" + std::to_string(w.dim(0)) +
                      "], got " + shape_str(b.shape()));
  }
  if (stride < 1 || pad_left < 0 || pad_right < 0) {
    throw TensorError("conv1d: stride must be >= 1 and padding non-negative");
  }
  const int batch = x.dim(0), cin = x.dim(1), len = x.dim(2);
  const int cout = w.dim(0), kernel = w.dim(2);
  const int lout = conv1d_out_len(len, kernel, stride, pad_left, pad_right);
  const int ck = cin * kernel;

  std::vector<double> out(static_cast<size_t>(batch) * cout * lout);
  const double* px = x.values().data();
  const double* pw = w.values().data();
  const double* pb = b.values().data();
  parallel_for(batch, [&](int64_t b0, int64_t b1) {
    std::vector<double> col(static_cast<size_t>(lout) * ck);
    for (int64_t bi = b0; bi < b1; ++bi) {
      im2col(px + bi * cin * len, cin, len, kernel, stride, pad_left, lout, col.data());
      double* yb = out.data() + bi * cout * lout;
      for (int o = 0; o < lout; ++o) {
        const double* crow = col.data() + static_cast<size_t>(o) * ck;
        for (int co = 0; co < cout; ++co) {
          yb[static_cast<size_t>(co) * lout + o] =
              pb[co] + dot8(pw + static_cast<size_t>(co) * ck, crow, ck);
        }
      }
    }
  });

  auto bwd = [batch, cin, len, cout, kernel, stride, pad_left, lout, ck](TensorNode& self) {
    TensorNode& px = *self.parents[0];
    TensorNode& pw = *self.parents[1];
    TensorNode& pb = *self.parents[2];
    const double* dy = self.grad.data();

    if (pb.requires_grad) {
      pb.ensure_grad();
      for (int bi = 0; bi < batch; ++bi) {
        const double* dyb = dy + static_cast<size_t>(bi) * cout * lout;
        for (int co = 0; co < cout; ++co) {
          double s = 0.0;
          const double* row = dyb + static_cast<size_t>(co) * lout;
          for (int o = 0; o < lout; ++o) s += row[o];
          pb.grad[co] += s;
        }
      }
    }

    if (pw.requires_grad) {
      pw.ensure_grad();
      // Rebuild all column matrices once, then reduce over batch in fixed order.
      std::vector<double> cols(static_cast<size_t>(batch) * lout * ck);
      parallel_for(batch, [&](int64_t b0, int64_t b1) {
        for (int64_t bi = b0; bi < b1; ++bi) {
          im2col(px.values.data() + bi * cin * len, cin, len, kernel, stride, pad_left, lout,
                 cols.data() + bi * lout * ck);
        }
      });
      parallel_for(cout, [&](int64_t c0, int64_t c1) {
        for (int64_t co = c0; co < c1; ++co) {
          double* dwrow = pw.grad.data() + co * ck;
          for (int bi = 0; bi < batch; ++bi) {
            const double* dyb = dy + (static_cast<size_t>(bi) * cout + co) * lout;
            const double* colb = cols.data() + static_cast<size_t>(bi) * lout * ck;
            for (int o = 0; o < lout; ++o) {
              const double g = dyb[o];
              if (g == 0.0) continue;
              const double* crow = colb + static_cast<size_t>(o) * ck;
              for (int j = 0; j < ck; ++j) dwrow[j] += g * crow[j];
            }
          }
        }
      });
    }

    if (px.requires_grad) {
      px.ensure_grad();
      parallel_for(batch, [&](int64_t b0, int64_t b1) {
        for (int64_t bi = b0; bi < b1; ++bi) {
          double* dxb = px.grad.data() + bi * cin * len;
          const double* dyb = dy + bi * cout * lout;
          for (int co = 0; co < cout; ++co) {
            const double* wrow = pw.values.data() + static_cast<size_t>(co) * ck;
            const double* dyrow = dyb + static_cast<size_t>(co) * lout;
            for (int o = 0; o < lout; ++o) {
              const double g = dyrow[o];
              if (g == 0.0) continue;
              const int start = o * stride - pad_left;
              for (int c = 0; c < cin; ++c) {
                const double* wc = wrow + static_cast<size_t>(c) * kernel;
                double* dxc = dxb + static_cast<size_t>(c) * len;
                const int k0 = std::max(0, -start);
                const int k1 = std::min(kernel, len - start);
                for (int k = k0; k < k1; ++k) dxc[start + k] += g * wc[k];
              }
            }
          }
        }
      });
    }
  };
  return make_op_output({batch, cout, lout}, std::move(out), {x, w, b}, std::move(bwd));
}

Tensor conv1d(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int padding) {
  return conv1d_padlr(x, w, b, stride, padding, padding);
}

Tensor conv1d_same(const Tensor& x, const Tensor& w, const Tensor& b, int stride) {
  const int len = x.dim(2), kernel = w.dim(2);
  const int out = (len + stride - 1) / stride;
  const int total = std::max(0, (out - 1) * stride + kernel - len);
  const int pad_left = total / 2;
  return conv1d_padlr(x, w, b, stride, pad_left, total - pad_left);
}

Tensor maxpool1d(const Tensor& x, int window) {
  if (x.ndim() != 3) {
    throw TensorError("maxpool1d: input must be [batch, channels, length], got " +
                      shape_str(x.shape()));
  }
  if (window < 1) throw TensorError("maxpool1d: window must be >= 1");
  const int batch = x.dim(0), ch = x.dim(1), len = x.dim(2);
  if (len < window) {
    throw TensorError("maxpool1d: length " + std::to_string(len) + " shorter than window " +
                      std::to_string(window));
  }
  const int lout = len / window;
  std::vector<double> out(static_cast<size_t>(batch) * ch * lout);
  std::vector<int32_t> argmax(out.size());
  const double* px = x.values().data();
  const int64_t rows = static_cast<int64_t>(batch) * ch;
  for (int64_t r = 0; r < rows; ++r) {
    const double* xr = px + r * len;
    double* yr = out.data() + r * lout;
    int32_t* ar = argmax.data() + r * lout;
    for (int o = 0; o < lout; ++o) {
      const int base = o * window;
      double best = xr[base];
      int bi = base;
      for (int k = 1; k < window; ++k) {
        if (xr[base + k] > best) {  // strict: first maximum wins ties
          best = xr[base + k];
          bi = base + k;
        }
      }
      yr[o] = best;
      ar[o] = bi;
    }
  }
  return make_op_output({batch, ch, lout}, std::move(out), {x},
                        [argmax = std::move(argmax), len, lout, rows](TensorNode& self) {
                          TensorNode& p = *self.parents[0];
                          if (!p.requires_grad) return;
                          p.ensure_grad();
                          for (int64_t r = 0; r < rows; ++r) {
                            const double* g = self.grad.data() + r * lout;
                            const int32_t* ar = argmax.data() + r * lout;
                            double* dx = p.grad.data() + r * len;
                            for (int o = 0; o < lout; ++o) dx[ar[o]] += g[o];
                          }
                        });
}

Tensor batchnorm1d(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                   Tensor& running_mean, Tensor& running_var, bool train, double momentum,
                   double eps) {
  if (x.ndim() != 3) {
    throw TensorError("batchnorm1d: input must be [batch, channels, length], got " +
                      shape_str(x.shape()));
  }
  const int batch = x.dim(0), ch = x.dim(1), len = x.dim(2);
  if (gamma.size() != ch || beta.size() != ch || running_mean.size() != ch ||
      running_var.size() != ch) {
    throw TensorError("batchnorm1d: per-channel parameter size mismatch for " +
                      std::to_string(ch) + " channels");
  }
  const int64_t n = static_cast<int64_t>(batch) * len;
  if (train && n < 2) throw TensorError("batchnorm1d: train mode needs batch*len >= 2");

  std::vector<double> mean(ch), invstd(ch);
  const double* px = x.values().data();
  if (train) {
    for (int c = 0; c < ch; ++c) {
      double s = 0.0;
      for (int b = 0; b < batch; ++b) {
        const double* row = px + (static_cast<size_t>(b) * ch + c) * len;
        for (int i = 0; i < len; ++i) s += row[i];
      }
      const double mu = s / static_cast<double>(n);
      double v = 0.0;
      for (int b = 0; b < batch; ++b) {
        const double* row = px + (static_cast<size_t>(b) * ch + c) * len;
        for (int i = 0; i < len; ++i) {
          const double d = row[i] - mu;
          v += d * d;
        }
      }
      const double var = v / static_cast<double>(n);
      mean[c] = mu;
      invstd[c] = 1.0 / std::sqrt(var + eps);
      // Running buffers track the unbiased variance.
      const double var_unbiased = n > 1 ? v / static_cast<double>(n - 1) : var;
      running_mean.values()[c] = (1.0 - momentum) * running_mean.values()[c] + momentum * mu;
      running_var.values()[c] =
          (1.0 - momentum) * running_var.values()[c] + momentum * var_unbiased;
    }
  } else {
    for (int c = 0; c < ch; ++c) {
      mean[c] = running_mean.values()[c];
      invstd[c] = 1.0 / std::sqrt(running_var.values()[c] + eps);
    }
  }

  std::vector<double> out(x.values().size());
  const double* pg = gamma.values().data();
  const double* pbet = beta.values().data();
  parallel_for(batch, [&](int64_t b0, int64_t b1) {
    for (int64_t b = b0; b < b1; ++b) {
      for (int c = 0; c < ch; ++c) {
        const double* row = px + (static_cast<size_t>(b) * ch + c) * len;
        double* orow = out.data() + (static_cast<size_t>(b) * ch + c) * len;
        const double mu = mean[c], is = invstd[c], g = pg[c], bt = pbet[c];
        for (int i = 0; i < len; ++i) orow[i] = (row[i] - mu) * is * g + bt;
      }
    }
  });

  auto bwd = [batch, ch, len, n, train, mean = std::move(mean),
              invstd = std::move(invstd)](TensorNode& self) {
    TensorNode& px = *self.parents[0];
    TensorNode& pgamma = *self.parents[1];
    TensorNode& pbeta = *self.parents[2];
    const double* dy = self.grad.data();
    const double* xv = px.values.data();
    const double* gv = pgamma.values.data();

    std::vector<double> sum_dy(ch, 0.0), sum_dy_xhat(ch, 0.0);
    for (int b = 0; b < batch; ++b) {
      for (int c = 0; c < ch; ++c) {
        const size_t off = (static_cast<size_t>(b) * ch + c) * len;
        const double mu = mean[c], is = invstd[c];
        double s1 = 0.0, s2 = 0.0;
        for (int i = 0; i < len; ++i) {
          const double g = dy[off + i];
          s1 += g;
          s2 += g * (xv[off + i] - mu) * is;
        }
        sum_dy[c] += s1;
        sum_dy_xhat[c] += s2;
      }
    }
    if (pbeta.requires_grad) {
      pbeta.ensure_grad();
      for (int c = 0; c < ch; ++c) pbeta.grad[c] += sum_dy[c];
    }
    if (pgamma.requires_grad) {
      pgamma.ensure_grad();
      for (int c = 0; c < ch; ++c) pgamma.grad[c] += sum_dy_xhat[c];
    }
    if (px.requires_grad) {
      px.ensure_grad();
      const double invn = 1.0 / static_cast<double>(n);
      parallel_for(batch, [&](int64_t b0, int64_t b1) {
        for (int64_t b = b0; b < b1; ++b) {
          for (int c = 0; c < ch; ++c) {
            const size_t off = (static_cast<size_t>(b) * ch + c) * len;
            const double mu = mean[c], is = invstd[c], g = gv[c];
            if (train) {
              const double m1 = sum_dy[c] * invn, m2 = sum_dy_xhat[c] * invn;
              for (int i = 0; i < len; ++i) {
                const double xhat = (xv[off + i] - mu) * is;
                px.grad[off + i] += g * is * (dy[off + i] - m1 - xhat * m2);
              }
            } else {
              for (int i = 0; i < len; ++i) px.grad[off + i] += dy[off + i] * g * is;
            }
          }
        }
      });
    }
  };
  return make_op_output(x.shape(), std::move(out), {x, gamma, beta}, std::move(bwd));
}

// ---- LSTM ----

std::pair<Tensor, Tensor> lstm_cell(const Tensor& x, const Tensor& h_prev,
                                    const Tensor& c_prev, const LstmCellParams& p) {
  const int hidden = h_prev.dim(1);
  Tensor gates = add_rowvec(add(matmul(x, p.w_ih), matmul(h_prev, p.w_hh)), p.bias);
  Tensor i = sigmoid(slice_cols(gates, 0, hidden));
  Tensor f = sigmoid(slice_cols(gates, hidden, 2 * hidden));
  Tensor g = tanh_act(slice_cols(gates, 2 * hidden, 3 * hidden));
  Tensor o = sigmoid(slice_cols(gates, 3 * hidden, 4 * hidden));
  Tensor c = add(mul(f, c_prev), mul(i, g));
  Tensor h = mul(o, tanh_act(c));
  return {h, c};
}

std::vector<Tensor> lstm_run(const std::vector<Tensor>& xs, const LstmCellParams& p,
                             bool reverse) {
  if (xs.empty()) throw TensorError("lstm_run: empty sequence");
  const int batch = xs[0].dim(0);
  const int feat = xs[0].dim(1);
  for (const auto& x : xs) {
    if (x.dim(0) != batch || x.dim(1) != feat) {
      throw TensorError("lstm_run: inconsistent step shapes");
    }
  }
  if (p.w_ih.dim(0) != feat) {
    throw TensorError("lstm_run: input size " + std::to_string(feat) +
                      " does not match w_ih rows " + std::to_string(p.w_ih.dim(0)));
  }
  const int hidden = p.w_hh.dim(0);
  Tensor h = Tensor::zeros({batch, hidden});
  Tensor c = Tensor::zeros({batch, hidden});
  std::vector<Tensor> outs(xs.size());
  const int t_count = static_cast<int>(xs.size());
  for (int step = 0; step < t_count; ++step) {
    const int t = reverse ? t_count - 1 - step : step;
    auto hc = lstm_cell(xs[static_cast<size_t>(t)], h, c, p);
    h = hc.first;
    c = hc.second;
    outs[static_cast<size_t>(t)] = h;
  }
  return outs;
}

std::vector<Tensor> bilstm(const std::vector<Tensor>& xs, const LstmCellParams& fwd,
                           const LstmCellParams& bwd) {
  auto f = lstm_run(xs, fwd, false);
  auto b = lstm_run(xs, bwd, true);
  std::vector<Tensor> outs(xs.size());
  for (size_t t = 0; t < xs.size(); ++t) outs[t] = concat_cols(f[t], b[t]);
  return outs;
}

}  // namespace freqtrain
