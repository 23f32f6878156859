// SPDX-License-Identifier: Apache-2.0
#include "teenas/nn/ops.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <memory>
#include <stdexcept>

namespace teenas::nn {
namespace {

using RMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapM = Eigen::Map<RMat>;
using CMapM = Eigen::Map<const RMat>;
using Eigen::Index;

CMapM view(const Tensor& t, Index rows, Index cols) { return CMapM(t.data.data(), rows, cols); }
MapM view(Tensor& t, Index rows, Index cols) { return MapM(t.data.data(), rows, cols); }

void require(bool ok, const char* what) {
  if (!ok) throw std::invalid_argument(what);
}

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

Id add(Graph& g, Id a, Id b) {
  const Tensor& A = g.value(a);
  const Tensor& B = g.value(b);
  require(A.shape == B.shape, "add: shape mismatch");
  Tensor out(A.shape);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = A[i] + B[i];
  return g.node(std::move(out), {a, b}, [a, b](Graph& g, Id self) {
    const Tensor dy = g.grad(self);
    for (Id p : {a, b}) {
      if (!g.requires_grad(p)) continue;
      Tensor& d = g.grad(p);
      for (std::size_t i = 0; i < dy.size(); ++i) d[i] += dy[i];
    }
  });
}

Id scale(Graph& g, Id a, double s) {
  const Tensor& A = g.value(a);
  Tensor out(A.shape);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = s * A[i];
  return g.node(std::move(out), {a}, [a, s](Graph& g, Id self) {
    const Tensor& dy = g.grad(self);
    Tensor& d = g.grad(a);
    for (std::size_t i = 0; i < dy.size(); ++i) d[i] += s * dy[i];
  });
}

Id weighted_sum(Graph& g, std::span<const Id> terms, std::span<const double> coeffs) {
  require(terms.size() == coeffs.size() && !terms.empty(), "weighted_sum: mismatched inputs");
  double total = 0.0;
  for (std::size_t i = 0; i < terms.size(); ++i) {
    require(g.value(terms[i]).size() == 1, "weighted_sum: terms must be scalars");
    total += coeffs[i] * g.value(terms[i])[0];
  }
  std::vector<Id> ts(terms.begin(), terms.end());
  std::vector<double> cs(coeffs.begin(), coeffs.end());
  return g.node(Tensor({1}, {total}), ts, [ts, cs](Graph& g, Id self) {
    const double dy = g.grad(self)[0];
    for (std::size_t i = 0; i < ts.size(); ++i) {
      if (g.requires_grad(ts[i])) g.grad(ts[i])[0] += cs[i] * dy;
    }
  });
}

Id reshape(Graph& g, Id a, std::vector<int> shape) {
  require(shape_size(shape) == g.value(a).size(), "reshape: element count changes");
  Tensor out(std::move(shape), g.value(a).data);
  return g.node(std::move(out), {a}, [a](Graph& g, Id self) {
    const Tensor& dy = g.grad(self);
    Tensor& d = g.grad(a);
    for (std::size_t i = 0; i < dy.size(); ++i) d[i] += dy[i];
  });
}

Id linear_last(Graph& g, Id x, Id w) {
  const Tensor& X = g.value(x);
  const Tensor& W = g.value(w);
  require(W.rank() == 2 && X.rank() >= 1 && X.shape.back() == W.dim(0), "linear_last: shape mismatch");
  const Index C = W.dim(0), M = W.dim(1), R = static_cast<Index>(X.size()) / std::max<Index>(C, 1);
  std::vector<int> shape = X.shape;
  shape.back() = static_cast<int>(M);
  Tensor out(shape);
  view(out, R, M).noalias() = view(X, R, C) * view(W, C, M);
  return g.node(std::move(out), {x, w}, [x, w, R, C, M](Graph& g, Id self) {
    const Tensor& dY = g.grad(self);
    if (g.requires_grad(x)) view(g.grad(x), R, C).noalias() += view(dY, R, M) * view(g.value(w), C, M).transpose();
    if (g.requires_grad(w)) view(g.grad(w), C, M).noalias() += view(g.value(x), R, C).transpose() * view(dY, R, M);
  });
}

Id add_bias_last(Graph& g, Id x, Id b) {
  const Tensor& X = g.value(x);
  const Tensor& B = g.value(b);
  require(B.rank() == 1 && X.rank() >= 1 && X.shape.back() == B.dim(0), "add_bias_last: shape mismatch");
  const std::size_t C = B.size();
  Tensor out = X;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += B[i % C];
  return g.node(std::move(out), {x, b}, [x, b, C](Graph& g, Id self) {
    const Tensor dy = g.grad(self);
    if (g.requires_grad(x)) {
      Tensor& d = g.grad(x);
      for (std::size_t i = 0; i < dy.size(); ++i) d[i] += dy[i];
    }
    if (g.requires_grad(b)) {
      Tensor& d = g.grad(b);
      for (std::size_t i = 0; i < dy.size(); ++i) d[i % C] += dy[i];
    }
  });
}

Id left_matmul(Graph& g, Id a, Id x) {
  const Tensor& A = g.value(a);
  const Tensor& X = g.value(x);
  require(A.rank() == 2 && X.rank() == 3 && X.dim(1) == A.dim(1), "left_matmul: shape mismatch");
  const Index M = A.dim(0), P = A.dim(1), N = X.dim(0), C = X.dim(2);
  Tensor out({static_cast<int>(N), static_cast<int>(M), static_cast<int>(C)});
  const CMapM Am = view(A, M, P);
  for (Index n = 0; n < N; ++n) {
    MapM(out.data.data() + n * M * C, M, C).noalias() = Am * CMapM(X.data.data() + n * P * C, P, C);
  }
  return g.node(std::move(out), {a, x}, [a, x, M, P, N, C](Graph& g, Id self) {
    const Tensor& dY = g.grad(self);
    const Tensor& Av = g.value(a);
    const Tensor& Xv = g.value(x);
    if (g.requires_grad(a)) {
      MapM dA = view(g.grad(a), M, P);
      for (Index n = 0; n < N; ++n) {
        dA.noalias() += CMapM(dY.data.data() + n * M * C, M, C) * CMapM(Xv.data.data() + n * P * C, P, C).transpose();
      }
    }
    if (g.requires_grad(x)) {
      Tensor& dX = g.grad(x);
      const CMapM Am = view(Av, M, P);
      for (Index n = 0; n < N; ++n) {
        MapM(dX.data.data() + n * P * C, P, C).noalias() += Am.transpose() * CMapM(dY.data.data() + n * M * C, M, C);
      }
    }
  });
}

Id add_bias_mid(Graph& g, Id x, Id b) {
  const Tensor& X = g.value(x);
  const Tensor& B = g.value(b);
  require(X.rank() == 3 && B.rank() == 1 && X.dim(1) == B.dim(0), "add_bias_mid: shape mismatch");
  const std::size_t N = static_cast<std::size_t>(X.dim(0)), M = static_cast<std::size_t>(X.dim(1)),
                    C = static_cast<std::size_t>(X.dim(2));
  Tensor out = X;
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t m = 0; m < M; ++m)
      for (std::size_t c = 0; c < C; ++c) out[(n * M + m) * C + c] += B[m];
  return g.node(std::move(out), {x, b}, [x, b, N, M, C](Graph& g, Id self) {
    const Tensor dy = g.grad(self);
    if (g.requires_grad(x)) {
      Tensor& d = g.grad(x);
      for (std::size_t i = 0; i < dy.size(); ++i) d[i] += dy[i];
    }
    if (g.requires_grad(b)) {
      Tensor& d = g.grad(b);
      for (std::size_t n = 0; n < N; ++n)
        for (std::size_t m = 0; m < M; ++m)
          for (std::size_t c = 0; c < C; ++c) d[m] += dy[(n * M + m) * C + c];
    }
  });
}

Id mean_mid(Graph& g, Id x) {
  const Tensor& X = g.value(x);
  require(X.rank() == 3 && X.dim(1) > 0, "mean_mid: expects [N, P, C]");
  const std::size_t N = static_cast<std::size_t>(X.dim(0)), P = static_cast<std::size_t>(X.dim(1)),
                    C = static_cast<std::size_t>(X.dim(2));
  Tensor out({X.dim(0), X.dim(2)});
  const double inv = 1.0 / static_cast<double>(P);
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t p = 0; p < P; ++p)
      for (std::size_t c = 0; c < C; ++c) out[n * C + c] += X[(n * P + p) * C + c] * inv;
  return g.node(std::move(out), {x}, [x, N, P, C, inv](Graph& g, Id self) {
    const Tensor dy = g.grad(self);
    Tensor& d = g.grad(x);
    for (std::size_t n = 0; n < N; ++n)
      for (std::size_t p = 0; p < P; ++p)
        for (std::size_t c = 0; c < C; ++c) d[(n * P + p) * C + c] += dy[n * C + c] * inv;
  });
}

Id silu(Graph& g, Id x) {
  const Tensor& X = g.value(x);
  Tensor out(X.shape);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = X[i] * sigmoid(X[i]);
  return g.node(std::move(out), {x}, [x](Graph& g, Id self) {
    const Tensor dy = g.grad(self);
    const Tensor& Xv = g.value(x);
    Tensor& d = g.grad(x);
    for (std::size_t i = 0; i < dy.size(); ++i) {
      const double s = sigmoid(Xv[i]);
      d[i] += dy[i] * s * (1.0 + Xv[i] * (1.0 - s));
    }
  });
}

Id conv3x3(Graph& g, Id x, Id w, Id b) {
  const Tensor& X = g.value(x);
  const Tensor& W = g.value(w);
  const Tensor& B = g.value(b);
  require(X.rank() == 4 && W.rank() == 2 && W.dim(0) == 9 * X.dim(3) && B.rank() == 1 && B.dim(0) == W.dim(1),
          "conv3x3: shape mismatch");
  const int N = X.dim(0), H = X.dim(1), Wd = X.dim(2), Cin = X.dim(3), Cout = W.dim(1);
  const Index rows = static_cast<Index>(N) * H * Wd, K = 9 * Cin;
  auto cols = std::make_shared<std::vector<double>>(static_cast<std::size_t>(rows * K), 0.0);
  for (int n = 0; n < N; ++n)
    for (int i = 0; i < H; ++i)
      for (int j = 0; j < Wd; ++j) {
        double* row = cols->data() + ((static_cast<Index>(n) * H + i) * Wd + j) * K;
        for (int ky = 0; ky < 3; ++ky) {
          const int si = i + ky - 1;
          if (si < 0 || si >= H) continue;
          for (int kx = 0; kx < 3; ++kx) {
            const int sj = j + kx - 1;
            if (sj < 0 || sj >= Wd) continue;
            const double* src = X.data.data() + ((static_cast<std::size_t>(n) * H + si) * Wd + sj) * Cin;
            std::copy(src, src + Cin, row + (ky * 3 + kx) * Cin);
          }
        }
      }
  Tensor out({N, H, Wd, Cout});
  MapM Y = view(out, rows, Cout);
  Y.noalias() = CMapM(cols->data(), rows, K) * view(W, K, Cout);
  Y.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(B.data.data(), Cout);
  return g.node(std::move(out), {x, w, b}, [x, w, b, cols, N, H, Wd, Cin, Cout, rows, K](Graph& g, Id self) {
    const Tensor& dYt = g.grad(self);
    const CMapM dY = view(dYt, rows, Cout);
    if (g.requires_grad(w)) view(g.grad(w), K, Cout).noalias() += CMapM(cols->data(), rows, K).transpose() * dY;
    if (g.requires_grad(b)) Eigen::Map<Eigen::RowVectorXd>(g.grad(b).data.data(), Cout) += dY.colwise().sum();
    if (g.requires_grad(x)) {
      RMat dcols = dY * view(g.value(w), K, Cout).transpose();
      Tensor& dX = g.grad(x);
      for (int n = 0; n < N; ++n)
        for (int i = 0; i < H; ++i)
          for (int j = 0; j < Wd; ++j) {
            const double* row = dcols.data() + ((static_cast<Index>(n) * H + i) * Wd + j) * K;
            for (int ky = 0; ky < 3; ++ky) {
              const int si = i + ky - 1;
              if (si < 0 || si >= H) continue;
              for (int kx = 0; kx < 3; ++kx) {
                const int sj = j + kx - 1;
                if (sj < 0 || sj >= Wd) continue;
                double* dst = dX.data.data() + ((static_cast<std::size_t>(n) * H + si) * Wd + sj) * Cin;
                const double* src = row + (ky * 3 + kx) * Cin;
                for (int c = 0; c < Cin; ++c) dst[c] += src[c];
              }
            }
          }
    }
  });
}

Id avgpool2(Graph& g, Id x) {
  const Tensor& X = g.value(x);
  require(X.rank() == 4 && X.dim(1) % 2 == 0 && X.dim(2) % 2 == 0, "avgpool2: expects even [N,H,W,C]");
  const int N = X.dim(0), H = X.dim(1), W = X.dim(2), C = X.dim(3), Ho = H / 2, Wo = W / 2;
  Tensor out({N, Ho, Wo, C});
  auto at = [](int n, int i, int j, int H, int W, int C) {
    return ((static_cast<std::size_t>(n) * H + i) * W + j) * C;
  };
  for (int n = 0; n < N; ++n)
    for (int i = 0; i < Ho; ++i)
      for (int j = 0; j < Wo; ++j)
        for (int c = 0; c < C; ++c) {
          out[at(n, i, j, Ho, Wo, C) + c] =
              0.25 * (X[at(n, 2 * i, 2 * j, H, W, C) + c] + X[at(n, 2 * i, 2 * j + 1, H, W, C) + c] +
                      X[at(n, 2 * i + 1, 2 * j, H, W, C) + c] + X[at(n, 2 * i + 1, 2 * j + 1, H, W, C) + c]);
        }
  return g.node(std::move(out), {x}, [x, N, H, W, C, Ho, Wo, at](Graph& g, Id self) {
    const Tensor dy = g.grad(self);
    Tensor& d = g.grad(x);
    for (int n = 0; n < N; ++n)
      for (int i = 0; i < Ho; ++i)
        for (int j = 0; j < Wo; ++j)
          for (int c = 0; c < C; ++c) {
            const double v = 0.25 * dy[at(n, i, j, Ho, Wo, C) + c];
            d[at(n, 2 * i, 2 * j, H, W, C) + c] += v;
            d[at(n, 2 * i, 2 * j + 1, H, W, C) + c] += v;
            d[at(n, 2 * i + 1, 2 * j, H, W, C) + c] += v;
            d[at(n, 2 * i + 1, 2 * j + 1, H, W, C) + c] += v;
          }
  });
}

Tensor softmax_rows(const Tensor& logits, double tau) {
  require(logits.rank() == 2, "softmax_rows: expects [N, K]");
  const std::size_t N = static_cast<std::size_t>(logits.dim(0)), K = static_cast<std::size_t>(logits.dim(1));
  Tensor out(logits.shape);
  for (std::size_t n = 0; n < N; ++n) {
    double mx = -INFINITY;
    for (std::size_t k = 0; k < K; ++k) mx = std::max(mx, logits[n * K + k] / tau);
    double z = 0.0;
    for (std::size_t k = 0; k < K; ++k) z += (out[n * K + k] = std::exp(logits[n * K + k] / tau - mx));
    for (std::size_t k = 0; k < K; ++k) out[n * K + k] /= z;
  }
  return out;
}

std::vector<int> argmax_rows(const Tensor& logits) {
  require(logits.rank() == 2, "argmax_rows: expects [N, K]");
  const std::size_t N = static_cast<std::size_t>(logits.dim(0)), K = static_cast<std::size_t>(logits.dim(1));
  std::vector<int> out(N, 0);
  for (std::size_t n = 0; n < N; ++n) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < K; ++k) {
      if (logits[n * K + k] > logits[n * K + best]) best = k;
    }
    out[n] = static_cast<int>(best);
  }
  return out;
}

Id cross_entropy(Graph& g, Id logits, std::span<const int> labels) {
  const Tensor& Z = g.value(logits);
  require(Z.rank() == 2 && static_cast<std::size_t>(Z.dim(0)) == labels.size() && !labels.empty(),
          "cross_entropy: label count must match the batch");
  const std::size_t N = labels.size(), K = static_cast<std::size_t>(Z.dim(1));
  Tensor p = softmax_rows(Z);
  double loss = 0.0;
  for (std::size_t n = 0; n < N; ++n) {
    const int y = labels[n];
    require(y >= 0 && static_cast<std::size_t>(y) < K, "cross_entropy: label out of range");
    double mx = -INFINITY;
    for (std::size_t k = 0; k < K; ++k) mx = std::max(mx, Z[n * K + k]);
    double s = 0.0;
    for (std::size_t k = 0; k < K; ++k) s += std::exp(Z[n * K + k] - mx);
    loss += mx + std::log(s) - Z[n * K + static_cast<std::size_t>(y)];
  }
  loss /= static_cast<double>(N);
  std::vector<int> ys(labels.begin(), labels.end());
  return g.node(Tensor({1}, {loss}), {logits}, [logits, p = std::move(p), ys, N, K](Graph& g, Id self) {
    const double dy = g.grad(self)[0] / static_cast<double>(N);
    Tensor& d = g.grad(logits);
    for (std::size_t n = 0; n < N; ++n) {
      for (std::size_t k = 0; k < K; ++k) d[n * K + k] += dy * p[n * K + k];
      d[n * K + static_cast<std::size_t>(ys[n])] -= dy;
    }
  });
}

Id distillation_loss(Graph& g, Id student_logits, const Tensor& teacher_logits, double tau) {
  const Tensor& S = g.value(student_logits);
  require(tau > 0.0, "distillation_loss: tau must be > 0");
  require(S.shape == teacher_logits.shape && S.rank() == 2, "distillation_loss: shape mismatch");
  const std::size_t N = static_cast<std::size_t>(S.dim(0)), K = static_cast<std::size_t>(S.dim(1));
  const Tensor pt = softmax_rows(teacher_logits, tau);
  Tensor q = softmax_rows(S, tau);
  double kl = 0.0;
  for (std::size_t n = 0; n < N; ++n) {
    // log-softmax in closed form keeps tiny probabilities exact
    double ms = -INFINITY, mt = -INFINITY;
    for (std::size_t k = 0; k < K; ++k) {
      ms = std::max(ms, S[n * K + k] / tau);
      mt = std::max(mt, teacher_logits[n * K + k] / tau);
    }
    double zs = 0.0, zt = 0.0;
    for (std::size_t k = 0; k < K; ++k) {
      zs += std::exp(S[n * K + k] / tau - ms);
      zt += std::exp(teacher_logits[n * K + k] / tau - mt);
    }
    const double ls = ms + std::log(zs), lt = mt + std::log(zt);
    for (std::size_t k = 0; k < K; ++k) {
      const double p = pt[n * K + k];
      if (p > 0.0) kl += p * ((teacher_logits[n * K + k] / tau - lt) - (S[n * K + k] / tau - ls));
    }
  }
  const double loss = std::max(0.0, tau * tau * kl / static_cast<double>(N));
  return g.node(Tensor({1}, {loss}), {student_logits},
                [student_logits, pt, q = std::move(q), N, K, tau](Graph& g, Id self) {
                  const double c = g.grad(self)[0] * tau / static_cast<double>(N);
                  Tensor& d = g.grad(student_logits);
                  for (std::size_t i = 0; i < N * K; ++i) d[i] += c * (q[i] - pt[i]);
                });
}

Tensor bilinear_matrix(int in_res, int out_res) {
  require(in_res > 0 && out_res > 0, "bilinear_matrix: resolutions must be positive");
  const std::size_t in = static_cast<std::size_t>(in_res), out = static_cast<std::size_t>(out_res);
  // 1-D weights, then the separable outer product.
  std::vector<double> w1(out * in, 0.0);
  const double scale = static_cast<double>(in_res) / static_cast<double>(out_res);
  for (std::size_t i = 0; i < out; ++i) {
    double src = (static_cast<double>(i) + 0.5) * scale - 0.5;
    if (src < 0.0) src = 0.0;
    std::size_t i0 = static_cast<std::size_t>(std::floor(src));
    if (i0 > in - 1) i0 = in - 1;
    const std::size_t i1 = std::min(i0 + 1, in - 1);
    const double f = src - static_cast<double>(i0);
    w1[i * in + i0] += 1.0 - f;
    w1[i * in + i1] += f;
  }
  Tensor m({out_res * out_res, in_res * in_res});
  for (std::size_t oy = 0; oy < out; ++oy)
    for (std::size_t ox = 0; ox < out; ++ox)
      for (std::size_t iy = 0; iy < in; ++iy) {
        const double wy = w1[oy * in + iy];
        if (wy == 0.0) continue;
        for (std::size_t ix = 0; ix < in; ++ix) {
          m[(oy * out + ox) * in * in + iy * in + ix] = wy * w1[ox * in + ix];
        }
      }
  return m;
}

Tensor channel_pool_matrix(int in_channels, int out_channels) {
  require(in_channels > 0 && out_channels > 0, "channel_pool_matrix: channel counts must be positive");
  Tensor m({in_channels, out_channels});
  for (int j = 0; j < out_channels; ++j) {
    const int start = (j * in_channels) / out_channels;
    const int end = ((j + 1) * in_channels + out_channels - 1) / out_channels;
    for (int c = start; c < end; ++c) {
      m[static_cast<std::size_t>(c) * static_cast<std::size_t>(out_channels) + static_cast<std::size_t>(j)] =
          1.0 / static_cast<double>(end - start);
    }
  }
  return m;
}

}  // namespace teenas::nn
