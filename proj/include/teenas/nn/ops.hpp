// SPDX-License-Identifier: Apache-2.0
//
// Differentiable operations. Feature maps are channels-last: [N, H, W, C]
// images, or [N, P, C] with the P = H*W positions flattened.
#pragma once

#include <span>
#include <vector>

#include "teenas/nn/tensor.hpp"

namespace teenas::nn {

using Id = Graph::Id;

Id add(Graph& g, Id a, Id b);
Id scale(Graph& g, Id a, double s);
/// sum_i coeffs[i] * terms[i] over scalars.
Id weighted_sum(Graph& g, std::span<const Id> terms, std::span<const double> coeffs);
Id reshape(Graph& g, Id a, std::vector<int> shape);

/// X[..., C] @ W[C, M] -> [..., M].
Id linear_last(Graph& g, Id x, Id w);
/// Adds b[C] along the last axis.
Id add_bias_last(Graph& g, Id x, Id b);
/// Per-sample A[M, P] @ X_n[P, C] -> [N, M, C].
Id left_matmul(Graph& g, Id a, Id x);
/// Adds b[M] along the middle axis of X[N, M, C].
Id add_bias_mid(Graph& g, Id x, Id b);
/// Mean over the middle axis of X[N, P, C] -> [N, C].
Id mean_mid(Graph& g, Id x);

Id silu(Graph& g, Id x);
/// 3x3 convolution, stride 1, zero padding 1: X[N,H,W,Cin], W[9*Cin, Cout], b[Cout].
Id conv3x3(Graph& g, Id x, Id w, Id b);
/// 2x2 average pooling, stride 2 (H, W even).
Id avgpool2(Graph& g, Id x);

/// Mean softmax cross-entropy over the batch of logits[N, K].
Id cross_entropy(Graph& g, Id logits, std::span<const int> labels);
/// tau^2 * mean_n KL(softmax(teacher/tau) || softmax(student/tau)); teacher is a constant.
Id distillation_loss(Graph& g, Id student_logits, const Tensor& teacher_logits, double tau);

// --- plain helpers ---------------------------------------------------------

/// Row-wise softmax of logits[N, K] (optionally tempered).
Tensor softmax_rows(const Tensor& logits, double tau = 1.0);
std::vector<int> argmax_rows(const Tensor& logits);

/// Bilinear resampling matrix [out*out, in*in] for square maps (half-pixel
/// centres, edge clamped). Identity when out == in.
Tensor bilinear_matrix(int in_res, int out_res);
/// Adaptive average pooling of `in` channels down to `out` bins: matrix [in, out].
Tensor channel_pool_matrix(int in_channels, int out_channels);

}  // namespace teenas::nn
