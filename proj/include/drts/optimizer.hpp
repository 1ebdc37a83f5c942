// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The DenseRTSleep Authors
//
// First-order optimizers over a fixed list of parameters.

#ifndef DRTS_OPTIMIZER_HPP
#define DRTS_OPTIMIZER_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "drts/tensor.hpp"

namespace drts {

enum class OptimizerKind { Adam, Sgd };

const char* optimizer_name(OptimizerKind k);
OptimizerKind optimizer_from_name(const std::string& name);

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::Adam;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double momentum = 0.0;  // sgd only

  void validate() const;
};

/// Moment buffers, one slot per parameter in registration order. Adam uses
/// both; sgd keeps its velocity in `first`.
struct OptimizerState {
  std::uint64_t steps = 0;
  std::vector<std::vector<double>> first;
  std::vector<std::vector<double>> second;
};

class Optimizer {
 public:
  Optimizer(OptimizerConfig cfg, std::vector<Parameter> params);

  // Applies one update from the accumulated gradients. Parameters without a
  // gradient are treated as having a zero gradient.
  void step();
  void zero_grad();

  const OptimizerConfig& config() const noexcept { return cfg_; }
  const OptimizerState& state() const noexcept { return state_; }
  // Throws std::invalid_argument when slot sizes do not match the parameters.
  void restore(OptimizerState state);

 private:
  OptimizerConfig cfg_;
  std::vector<Parameter> params_;
  OptimizerState state_;
};

}  // namespace drts

#endif  // DRTS_OPTIMIZER_HPP
