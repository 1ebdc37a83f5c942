// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The DenseRTSleep Authors
//
// Named gradient-check cases: one per primitive, one per model variant, each
// repeated over several random seeds and shapes.

#ifndef DRTS_GRADCHECK_SUITE_HPP
#define DRTS_GRADCHECK_SUITE_HPP

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "drts/gradcheck.hpp"

namespace drts {

struct SuiteCase {
  std::string scope;      // op name, or "model"
  std::string name;       // unique
  double tolerance = 1e-4;
  std::function<GradCheckReport(std::uint64_t seed, double tolerance)> run;
  bool in_all = true;     // false for the negative control
};

const std::vector<SuiteCase>& gradcheck_cases();
/// Scopes accepted by run_gradcheck_suite besides "all", in registry order.
std::vector<std::string> gradcheck_scopes();

struct SuiteResult {
  std::string scope;
  std::string name;
  std::size_t seeds = 0;
  double tolerance = 0.0;
  double max_rel_error = 0.0;
  std::size_t coordinates = 0;
  std::size_t kinks = 0;
  std::size_t below_resolution = 0;
  bool passed = false;
};

/// Runs the cases of `scope` ("all", an op scope, "model", a case name, or
/// "negative-control") for seeds 0..seeds-1. `tolerance_cap`, when positive,
/// caps every case tolerance. Throws ConfigError for an unknown scope.
std::vector<SuiteResult> run_gradcheck_suite(const std::string& scope, std::size_t seeds,
                                             double tolerance_cap = 0.0);

std::string render_suite(const std::vector<SuiteResult>& results);
bool suite_passed(const std::vector<SuiteResult>& results);

}  // namespace drts

#endif  // DRTS_GRADCHECK_SUITE_HPP
