// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The DenseRTSleep Authors

#ifndef DRTS_GRADCHECK_HPP
#define DRTS_GRADCHECK_HPP

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "drts/tensor.hpp"

namespace drts {

inline constexpr std::size_t kNoIndex = static_cast<std::size_t>(-1);
inline constexpr double kResolutionUlps = 4.0;

struct GradCheckEntry {
  std::string name;
  std::size_t coordinates = 0;
  double max_rel_error = 0.0;
  std::size_t worst_index = kNoIndex;
  double analytic_at_worst = 0.0;
  double numeric_at_worst = 0.0;
  // Coordinates whose +-h evaluations took a different branch (relu sign,
  // pool argmax, clamp, hinge) than the base point. Finite differences are
  // not valid across such a kink, so these are left out of max_rel_error.
  std::size_t kinks = 0;
  // Coordinates over tolerance whose |analytic - numeric| is within the
  // rounding resolution of the difference quotient,
  // kResolutionUlps * eps * max(1, |loss|) / h. Reported, not failed.
  std::size_t below_resolution = 0;
  // Worst relative error over every non-kink coordinate, resolution-limited
  // ones included.
  double raw_max_rel_error = 0.0;
};

struct GradCheckReport {
  double tolerance = 0.0;
  std::vector<GradCheckEntry> entries;

  double max_rel_error() const;
  std::size_t coordinates() const;
  std::size_t kinks() const;
  std::size_t below_resolution() const;
  double raw_max_rel_error() const;
  bool passed() const { return max_rel_error() < tolerance; }
};

/// Builds a scalar loss from the inputs on the given tape. Must be a pure
/// function of the input values.
using LossGraph = std::function<Tensor(Tape&)>;

/// Compares reverse-mode gradients with central differences
/// (step h = step * max(1, |v|)) for every coordinate of every input.
/// Relative error per coordinate is |a - n| / max(1e-8, |a| + |n|).
GradCheckReport grad_check(const LossGraph& graph,
                           const std::vector<Parameter>& inputs,
                           double tolerance, double step = 1e-5);

}  // namespace drts

#endif  // DRTS_GRADCHECK_HPP
