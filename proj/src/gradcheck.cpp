// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The DenseRTSleep Authors

#include "drts/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <utility>

namespace drts {

double GradCheckReport::max_rel_error() const {
  double worst = 0.0;
  for (const auto& e : entries) worst = std::max(worst, e.max_rel_error);
  return worst;
}

std::size_t GradCheckReport::coordinates() const {
  std::size_t n = 0;
  for (const auto& e : entries) n += e.coordinates;
  return n;
}

std::size_t GradCheckReport::kinks() const {
  std::size_t n = 0;
  for (const auto& e : entries) n += e.kinks;
  return n;
}

std::size_t GradCheckReport::below_resolution() const {
  std::size_t n = 0;
  for (const auto& e : entries) n += e.below_resolution;
  return n;
}

double GradCheckReport::raw_max_rel_error() const {
  double worst = 0.0;
  for (const auto& e : entries) worst = std::max(worst, e.raw_max_rel_error);
  return worst;
}

GradCheckReport grad_check(const LossGraph& graph,
                           const std::vector<Parameter>& inputs,
                           double tolerance, double step) {
  GradCheckReport report;
  report.tolerance = tolerance;

  std::vector<bool> saved_flags;
  for (const auto& p : inputs) {
    saved_flags.push_back(p.tensor.requires_grad());
    Tensor t = p.tensor;
    t.set_requires_grad(true);
    t.zero_grad();
  }
  {
    Tape tape;
    Tensor loss = graph(tape);
    tape.backward(loss);
  }

  auto evaluate = [&] {
    Tape tape(false);
    tape.track_branches(true);
    const double value = graph(tape).item();
    return std::pair{value, tape.branch_fingerprint()};
  };
  const auto [base_value, base] = evaluate();
  const double loss_scale = std::max(1.0, std::abs(base_value));

  for (const auto& p : inputs) {
    Tensor t = p.tensor;
    const std::vector<double> analytic = t.grad();
    GradCheckEntry entry;
    entry.name = p.name;
    entry.coordinates = t.numel();
    auto values = t.values();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double v = values[i];
      const double h = step * std::max(1.0, std::abs(v));
      values[i] = v + h;
      const auto [up, up_branches] = evaluate();
      values[i] = v - h;
      const auto [down, down_branches] = evaluate();
      values[i] = v;
      if (up_branches != base || down_branches != base) {
        ++entry.kinks;
        continue;
      }
      const double numeric = (up - down) / (2.0 * h);
      const double diff = std::abs(analytic[i] - numeric);
      const double err = diff / std::max(1e-8, std::abs(analytic[i]) + std::abs(numeric));
      entry.raw_max_rel_error = std::max(entry.raw_max_rel_error, err);
      // A few ulps of the loss, divided by the step, is all the difference
      // quotient can resolve.
      const double resolution = kResolutionUlps * std::numeric_limits<double>::epsilon() *
                                loss_scale / h;
      if (err >= tolerance && diff <= resolution) {
        ++entry.below_resolution;
        continue;
      }
      if (err > entry.max_rel_error || entry.worst_index == kNoIndex) {
        entry.max_rel_error = std::max(entry.max_rel_error, err);
        entry.worst_index = i;
        entry.analytic_at_worst = analytic[i];
        entry.numeric_at_worst = numeric;
      }
    }
    report.entries.push_back(entry);
  }

  for (std::size_t i = 0; i < inputs.size(); ++i) {
    Tensor t = inputs[i].tensor;
    t.zero_grad();
    t.set_requires_grad(saved_flags[i]);
  }
  return report;
}

}  // namespace drts
