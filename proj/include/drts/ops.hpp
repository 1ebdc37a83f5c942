// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The DenseRTSleep Authors
//
// Differentiable primitives. Every op computes its forward value eagerly and,
// when the tape records and an input requires a gradient, registers an exact
// backward rule.

#ifndef DRTS_OPS_HPP
#define DRTS_OPS_HPP

#include <cstddef>
#include <span>
#include <vector>

#include "drts/tensor.hpp"

namespace drts {

enum class Mode { Train, Infer };

/// Running statistics owned by a batch-norm layer.
struct BatchNormState {
  std::vector<double> running_mean;
  std::vector<double> running_var;

  explicit BatchNormState(std::size_t channels = 0)
      : running_mean(channels, 0.0), running_var(channels, 1.0) {}
};

namespace ops {

// Elementwise arithmetic on identically shaped tensors.
Tensor add(Tape& tape, const Tensor& a, const Tensor& b);
Tensor mul(Tape& tape, const Tensor& a, const Tensor& b);
Tensor scale(Tape& tape, const Tensor& a, double factor);

// Reductions to a scalar of shape [1].
Tensor sum(Tape& tape, const Tensor& a);
Tensor weighted_sum(Tape& tape, const Tensor& a, std::span<const double> weights);
// sum_i weights[i] * scalars[i], evaluated left to right.
Tensor combine_scalars(Tape& tape, std::span<const Tensor> scalars,
                       std::span<const double> weights);

// Activations. relu'(0) is 0.
Tensor relu(Tape& tape, const Tensor& x);
Tensor sigmoid(Tape& tape, const Tensor& x);
Tensor tanh_op(Tape& tape, const Tensor& x);

/// Cross-correlation over [batch, channels_in, length] with kernel
/// [channels_out, channels_in, k]. `bias` may be undefined.
Tensor conv1d(Tape& tape, const Tensor& input, const Tensor& kernel,
              const Tensor& bias, std::size_t stride, std::size_t padding);

/// Per-channel normalisation over (batch, length). Train mode normalises with
/// the batch statistics and folds them into `state` with `momentum`; infer
/// mode uses `state` only.
Tensor batchnorm1d(Tape& tape, const Tensor& input, const Tensor& gamma,
                   const Tensor& beta, BatchNormState& state, Mode mode,
                   double momentum = 0.1, double epsilon = 1e-5);

// Pooling over the last axis of [batch, channels, length]. Max-pool routes
// the gradient to the first maximum of each window.
Tensor max_pool1d(Tape& tape, const Tensor& input, std::size_t window,
                  std::size_t stride);
Tensor avg_pool1d(Tape& tape, const Tensor& input, std::size_t window,
                  std::size_t stride);

/// y = x W^T + b over the last axis; leading axes are treated as batch.
/// `bias` may be undefined.
Tensor linear(Tape& tape, const Tensor& input, const Tensor& weight,
              const Tensor& bias);

/// Row-wise softmax over the last axis.
Tensor softmax(Tape& tape, const Tensor& input);

/// softmax(X X^T / sqrt(d)) X for X of shape [n, d].
Tensor scaled_self_attention(Tape& tape, const Tensor& x_hat);

/// Splits [batch, C, L] into `heads` channel groups, runs scaled self
/// attention per group with sequence positions as rows, and writes the heads
/// back in channel order. When `capture` is non-null the attention matrices
/// are appended to it, ordered (batch, head, row, column).
Tensor multi_head_self_attention(Tape& tape, const Tensor& input,
                                 std::size_t heads,
                                 std::vector<double>* capture = nullptr);

Tensor concat(Tape& tape, std::span<const Tensor> parts, std::size_t axis);
Tensor slice(Tape& tape, const Tensor& x, std::size_t axis, std::size_t begin,
             std::size_t end);
Tensor reshape(Tape& tape, const Tensor& x, Shape shape);
// [A, B, C] -> [A, C, B]
Tensor swap_last_axes(Tape& tape, const Tensor& x);

}  // namespace ops
}  // namespace drts

#endif  // DRTS_OPS_HPP
