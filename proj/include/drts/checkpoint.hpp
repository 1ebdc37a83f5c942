// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The DenseRTSleep Authors
//
// Checkpoint container:
//   "DRTS" | u16 version | u32 manifest length | manifest (JSON)
//   | float64 little-endian tensors in manifest order | u32 CRC32
// The CRC covers every byte before it.

#ifndef DRTS_CHECKPOINT_HPP
#define DRTS_CHECKPOINT_HPP

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <string>
#include <string_view>
#include <vector>

#include "drts/config.hpp"
#include "drts/network.hpp"
#include "drts/optimizer.hpp"

namespace drts {

inline constexpr std::uint16_t kCheckpointVersion = 1;

struct NamedValues {
  std::string name;
  std::vector<double> values;
  bool operator==(const NamedValues&) const = default;
};

struct HistoryRow {
  std::uint64_t step = 0;
  std::uint64_t epoch = 0;  // training passes completed after this step
  double ce = 0.0;
  double kl = 0.0;
  double contrastive = 0.0;
  double total = 0.0;
  // Set on the step that completes a pass when a validation set is present.
  double val_accuracy = std::numeric_limits<double>::quiet_NaN();
};

struct TrainProgress {
  std::uint64_t step = 0;
  std::uint64_t epoch = 0;
  std::uint64_t cursor = 0;          // position within `order`
  std::vector<std::uint64_t> order;  // current pass permutation
  std::string rng_state;             // shuffle stream after drawing `order`
  bool has_best = false;
  double best_val_accuracy = 0.0;
  std::uint64_t best_step = 0;
  std::vector<NamedValues> best_params;
  std::vector<NamedValues> best_buffers;
  std::vector<HistoryRow> history;
};

struct Checkpoint {
  ModelConfig model;
  TrainConfig train;
  std::vector<NamedValues> params;
  std::vector<NamedValues> buffers;  // batch-norm running statistics
  OptimizerState optimizer;
  TrainProgress progress;
};

std::vector<NamedValues> snapshot_params(const Model& model);
std::vector<NamedValues> snapshot_buffers(Model& model);
/// Copies values into the model. Throws std::invalid_argument on a name or
/// size mismatch.
void apply_snapshot(Model& model, const std::vector<NamedValues>& params,
                    const std::vector<NamedValues>& buffers);

std::string encode_checkpoint(const Checkpoint& ck);
/// Throws TrainEvalError: VersionMismatch for another format version,
/// CorruptFile for bad magic, truncation, checksum or manifest errors.
Checkpoint decode_checkpoint(std::string_view bytes);

void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Rebuilds the model a checkpoint describes. With `best` set and a best
/// snapshot present, the best-validation weights are loaded instead of the
/// latest ones.
Model model_from_checkpoint(const Checkpoint& ck, bool best = true);

}  // namespace drts

#endif  // DRTS_CHECKPOINT_HPP
