// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The DenseRTSleep Authors
//
// Command implementations behind the drts executable. Each returns the
// process exit code: 0 success, 1 runtime failure, 2 usage or config error.
// ConfigError escaping a command also maps to 2, anything else to 1.

#ifndef DRTS_COMMANDS_HPP
#define DRTS_COMMANDS_HPP

#include <filesystem>
#include <functional>
#include <ostream>
#include <string>
#include <vector>

#include "drts/config.hpp"
#include "drts/metrics.hpp"

namespace drts {

enum ExitCode : int { kExitOk = 0, kExitFailure = 1, kExitUsage = 2 };

/// Writes the resolved configuration to `dir`/config.txt.
void echo_config(const RunConfig& cfg, const std::filesystem::path& dir);

int cmd_synth(const RunConfig& cfg, const std::filesystem::path& out_dir, std::ostream& os);
int cmd_ingest(const RunConfig& cfg, const std::filesystem::path& edf_dir,
               const std::filesystem::path& out_dir, std::ostream& os);
/// With `resume` set, continues the run saved in that checkpoint.
int cmd_train(const RunConfig& cfg, const std::filesystem::path& archive,
              const std::filesystem::path& out_dir, std::ostream& os,
              const std::filesystem::path& resume = {});
/// `split` is one of train, validation, test, all.
int cmd_eval(const std::filesystem::path& archive,
             const std::filesystem::path& checkpoint, const std::string& split,
             const std::filesystem::path& out_dir, std::ostream& os);

struct AblationRow {
  std::string variant;
  MetricsReport metrics;
};

int cmd_ablate(const RunConfig& cfg, const std::filesystem::path& archive,
               const std::filesystem::path& out_dir, std::ostream& os);
std::string render_ablation(const std::vector<AblationRow>& rows);

int cmd_gradcheck(const RunConfig& cfg, const std::string& scope, std::ostream& os);
/// Re-renders a metrics.json written by eval.
int cmd_report(const std::filesystem::path& metrics_json, std::ostream& os);

/// Runs `fn` and maps escaping exceptions to exit codes, printing the
/// message to `err`.
int guarded(std::ostream& err, const std::function<int()>& fn);

}  // namespace drts

#endif  // DRTS_COMMANDS_HPP
