// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The DenseRTSleep Authors
//
// Mini-batch training loop, evaluation and hypnogram export.

#ifndef DRTS_TRAINER_HPP
#define DRTS_TRAINER_HPP

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "drts/checkpoint.hpp"
#include "drts/config.hpp"
#include "drts/ingest.hpp"
#include "drts/metrics.hpp"
#include "drts/network.hpp"
#include "drts/optimizer.hpp"

namespace drts {

/// Epoch samples laid out [n, length] with integer labels.
struct PreparedSet {
  std::size_t n = 0;
  std::size_t length = 0;
  std::vector<double> x;
  std::vector<std::size_t> labels;
};

/// z-score over one epoch (population deviation). A flat epoch is only
/// centred.
void standardize_epoch(std::span<double> samples);

/// Throws AutogradError(ShapeMismatch) when an epoch length differs from
/// `length`, TrainEvalError(EmptyDataset) when there are no epochs.
PreparedSet prepare_set(const EpochDataset& data, std::size_t length, bool standardize);

std::string history_csv(const std::vector<HistoryRow>& rows);

class Trainer {
 public:
  Trainer(Model& model, TrainConfig cfg, PreparedSet train,
          std::optional<PreparedSet> validation = std::nullopt);

  /// One optimizer step on the next mini-batch. Throws
  /// TrainEvalError(NonFiniteLoss) naming the step.
  HistoryRow step();
  bool done() const;
  /// Steps until done or until `on_step` returns false.
  void run(const std::function<bool(const HistoryRow&)>& on_step = {});

  const TrainProgress& progress() const noexcept { return progress_; }
  const TrainConfig& config() const noexcept { return cfg_; }
  Optimizer& optimizer() noexcept { return optimizer_; }

  /// Loads the best-validation weights into the model if there are any.
  bool restore_best();

  Checkpoint checkpoint() const;
  /// Restores weights, optimizer and loop position from a checkpoint of a
  /// run with the same configuration and data.
  void resume(const Checkpoint& ck);

 private:
  void validate_pass(HistoryRow& row);

  Model& model_;
  TrainConfig cfg_;
  PreparedSet train_;
  std::optional<PreparedSet> val_;
  Optimizer optimizer_;
  Rng shuffle_;
  TrainProgress progress_;
};

/// Class probabilities [n, 5] in inference mode, in chunks of `batch`.
std::vector<double> predict_probabilities(Model& model, const PreparedSet& data,
                                          std::size_t batch = 64);

/// Argmax predictions (lowest index wins ties) against the labels.
ConfusionMatrix evaluate(Model& model, const PreparedSet& data, std::size_t batch = 64);

struct HypnogramRow {
  std::size_t epoch_index = 0;
  SleepStage stage = SleepStage::W;
  std::array<double, kStageCount> probabilities{};
};

/// Staged sequence for the time-ordered epochs of one patient. Throws
/// TrainEvalError(UnorderedInput) when epochs are out of order or mix
/// patients.
std::vector<HypnogramRow> predict_hypnogram(Model& model, const EpochDataset& epochs,
                                            bool standardize);
/// CSV header "epoch_index,stage,p_W,p_N1,p_N2,p_N3,p_REM".
std::string hypnogram_csv(const std::vector<HypnogramRow>& rows);
std::string export_hypnogram(Model& model, const EpochDataset& epochs, bool standardize);
/// Throws TrainEvalError(MalformedCsv).
std::vector<HypnogramRow> parse_hypnogram_csv(std::string_view text);

}  // namespace drts

#endif  // DRTS_TRAINER_HPP
