// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The DenseRTSleep Authors
//
// Loss terms over one-hot (or soft) targets y_true [batch, K] and predicted
// probabilities y_pred [batch, K], averaged over the batch. Gradients flow
// into y_pred only; targets are constants.

#ifndef DRTS_LOSSES_HPP
#define DRTS_LOSSES_HPP

#include "drts/network.hpp"
#include "drts/tensor.hpp"

namespace drts {

inline constexpr double kProbClamp = 1e-12;

struct LossWeights {
  double alpha = 0.1;  // contrastive
  double beta = 0.9;   // KL
  double mu = 1.0;     // contrastive margin

  void validate() const;
};

/// alpha and beta forced to 0 unless the variant trains with the multi-loss.
LossWeights effective_weights(ModelVariant variant, LossWeights w);

struct LossBreakdown {
  double cross_entropy = 0.0;
  double kl = 0.0;
  double contrastive = 0.0;
  double total = 0.0;
};

/// -sum_c t_c log(max(p_c, 1e-12)), batch mean.
Tensor cross_entropy(Tape& tape, const Tensor& y_true, const Tensor& y_pred);
/// sum_c t_c log(t_c / max(p_c, 1e-12)) with 0 log 0 = 0, batch mean.
Tensor kl_divergence(Tape& tape, const Tensor& y_true, const Tensor& y_pred);
/// With D = ||t - p||: sum_c [t_c D^2 + (1 - t_c) max(mu - D, 0)], batch mean.
Tensor contrastive_loss(Tape& tape, const Tensor& y_true, const Tensor& y_pred, double mu);

struct TotalLoss {
  Tensor total;
  LossBreakdown parts;
};

/// total = cross_entropy + alpha * contrastive + beta * kl, with the weights
/// taken as given (see effective_weights).
TotalLoss total_loss(Tape& tape, const Tensor& y_true, const Tensor& y_pred,
                     const LossWeights& weights);

/// One-hot rows for integer labels.
Tensor one_hot(const std::vector<std::size_t>& labels, std::size_t classes);

}  // namespace drts

#endif  // DRTS_LOSSES_HPP
