// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The DenseRTSleep Authors
//
// Flat dotted key=value configuration. Resolution order is defaults, then
// file, then command-line overrides; unknown keys are errors.

#ifndef DRTS_CONFIG_HPP
#define DRTS_CONFIG_HPP

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>

#include "drts/losses.hpp"
#include "drts/network.hpp"
#include "drts/optimizer.hpp"
#include "drts/synth.hpp"

namespace drts {

using KeyValues = std::map<std::string, std::string>;

struct TrainConfig {
  OptimizerConfig optimizer;
  std::size_t batch_size = 128;
  std::size_t max_epochs = 30;
  std::size_t max_steps = 0;  // 0: limited by max_epochs only
  std::uint64_t seed = 0;
  bool standardize = true;
  ModelVariant variant = ModelVariant::DenseRTSleepII;
  LossWeights loss_weights;

  void validate() const;
};

struct RunConfig {
  std::uint64_t seed = 0;
  std::size_t threads = 1;
  std::string preset = "default";
  ModelConfig model = ModelConfig::full_size();
  TrainConfig train;
  std::string channel = kDefaultChannel;
  SynthOptions synth;
  std::size_t gradcheck_seeds = 10;
  double gradcheck_tolerance = 1e-4;
};

/// Parses "key = value" lines. Blank lines and lines starting with '#' are
/// skipped. Throws ConfigError naming `origin` and the line on bad syntax.
KeyValues parse_key_values(std::string_view text, const std::string& origin = "<text>");
KeyValues read_key_values(const std::filesystem::path& path);
std::string format_key_values(const KeyValues& kv);

/// Every key with its default value.
KeyValues default_key_values();

/// Applies `overrides` on top of the defaults. model.preset is applied first
/// and the remaining model keys adjust it. Throws ConfigError on unknown keys
/// or unparsable values, then validates the result.
RunConfig resolve_config(const KeyValues& overrides);

/// Fully resolved key/value form; resolve_config(to_key_values(c)) == c.
KeyValues to_key_values(const RunConfig& cfg);

// Subsets used inside checkpoints.
KeyValues model_key_values(const ModelConfig& cfg);
ModelConfig model_from_key_values(const KeyValues& kv);
KeyValues train_key_values(const TrainConfig& cfg);
TrainConfig train_from_key_values(const KeyValues& kv);

}  // namespace drts

#endif  // DRTS_CONFIG_HPP
