// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The DenseRTSleep Authors
//
// Confusion matrix (rows actual, columns predicted) and the precision,
// recall, F1 and accuracy derived from it.

#ifndef DRTS_METRICS_HPP
#define DRTS_METRICS_HPP

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>

#include "drts/ingest.hpp"

namespace drts {

enum class TrainEvalErrc {
  EmptyMatrix,
  EmptyDataset,
  NonFiniteLoss,
  UnorderedInput,
  VersionMismatch,
  CorruptFile,
  MalformedCsv,
};

class TrainEvalError : public std::runtime_error {
 public:
  TrainEvalError(TrainEvalErrc code, const std::string& what)
      : std::runtime_error(what), code_(code) {}
  TrainEvalErrc code() const noexcept { return code_; }

 private:
  TrainEvalErrc code_;
};

/// Index of the largest probability; ties go to the lowest index.
std::size_t argmax_class(std::span<const double> probs);

struct ConfusionMatrix {
  std::array<std::array<std::uint64_t, kStageCount>, kStageCount> counts{};

  void add(std::size_t actual, std::size_t predicted, std::uint64_t n = 1);
  std::uint64_t total() const;
  std::uint64_t trace() const;
  ConfusionMatrix& merge(const ConfusionMatrix& other);
  bool operator==(const ConfusionMatrix&) const = default;
};

struct ClassMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

using PerClassMetrics = std::array<ClassMetrics, kStageCount>;

/// One-vs-rest per class. Zero denominators give 0.
PerClassMetrics per_class_metrics(const ConfusionMatrix& cm);

struct MetricsReport {
  PerClassMetrics per_class{};
  double macro_precision = 0.0;
  double macro_recall = 0.0;
  double macro_f1 = 0.0;
  double accuracy = 0.0;
  std::uint64_t total = 0;
};

/// Throws TrainEvalError(EmptyMatrix) when the matrix has no counts.
MetricsReport overall_metrics(const ConfusionMatrix& cm);

std::string render_confusion(const ConfusionMatrix& cm);
std::string render_metrics(const MetricsReport& report);
/// JSON object with per_class, macro, accuracy and (optionally) the matrix.
std::string metrics_json(const MetricsReport& report, const ConfusionMatrix* cm = nullptr);

}  // namespace drts

#endif  // DRTS_METRICS_HPP
