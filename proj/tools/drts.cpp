// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The DenseRTSleep Authors
//
// drts: synth, ingest, train, eval, ablate, gradcheck, report.

#include <omp.h>

#include <CLI11.hpp>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "drts/commands.hpp"
#include "drts/config.hpp"
#include "drts/gradcheck_suite.hpp"

namespace {

struct GlobalOptions {
  std::string config_file;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> threads;
  std::string out;
  std::vector<std::string> sets;
};

drts::RunConfig resolve(const GlobalOptions& g, drts::KeyValues extra) {
  drts::KeyValues kv;
  if (!g.config_file.empty()) kv = drts::read_key_values(g.config_file);
  for (const auto& s : g.sets) {
    for (auto& [k, v] : drts::parse_key_values(s, "--set")) kv[k] = v;
  }
  for (auto& [k, v] : extra) kv[k] = v;
  if (g.seed) kv["seed"] = std::to_string(*g.seed);
  if (g.threads) kv["threads"] = std::to_string(*g.threads);
  drts::RunConfig cfg = drts::resolve_config(kv);
  omp_set_num_threads(static_cast<int>(cfg.threads));
  return cfg;
}

std::string require_out(const GlobalOptions& g, const char* cmd) {
  if (g.out.empty()) throw drts::ConfigError(std::string(cmd) + " needs --out");
  return g.out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Single-channel EEG sleep staging: data, training and evaluation"};
  app.fallthrough();
  app.require_subcommand(1);
  GlobalOptions g;
  app.add_option("--config", g.config_file, "key = value configuration file")->check(CLI::ExistingFile);
  app.add_option("--seed", g.seed, "root seed");
  app.add_option("--threads", g.threads, "worker threads");
  app.add_option("--out", g.out, "output directory");
  app.add_option("--set", g.sets, "override one key, e.g. --set model.preset=tiny");

  auto* synth = app.add_subcommand("synth", "write a synthetic PSG/hypnogram corpus");
  std::optional<std::size_t> patients, per_class;
  synth->add_option("--patients", patients, "number of patients");
  synth->add_option("--epochs-per-class", per_class, "epochs per stage per patient");

  auto* ingest = app.add_subcommand("ingest", "segment EDF pairs into an epoch archive");
  std::string edf_dir;
  ingest->add_option("edf_dir", edf_dir, "directory of PSG and hypnogram files")->required();

  auto* train = app.add_subcommand("train", "train a model on an epoch archive");
  std::string archive, resume;
  train->add_option("archive", archive, "epoch archive directory")->required();
  train->add_option("--resume", resume, "checkpoint to continue from")->check(CLI::ExistingFile);

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  std::string checkpoint, split = "test";
  eval->add_option("archive", archive, "epoch archive directory")->required();
  eval->add_option("checkpoint", checkpoint, "checkpoint file")->required()->check(CLI::ExistingFile);
  eval->add_option("--split", split, "train, validation, test or all");

  auto* ablate = app.add_subcommand("ablate", "train and compare all four variants");
  ablate->add_option("archive", archive, "epoch archive directory")->required();

  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient checks");
  std::string scope = "all";
  gradcheck->add_option("scope", scope, "op name, 'model', a variant name or 'all'");
  bool list_scopes = false;
  gradcheck->add_flag("--list", list_scopes, "list scopes and exit");

  auto* report = app.add_subcommand("report", "render a metrics.json as tables");
  std::string metrics;
  report->add_option("metrics", metrics, "metrics.json from eval")->required()->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? drts::kExitOk : drts::kExitUsage;
  }

  return drts::guarded(std::cerr, [&]() -> int {
    if (*synth) {
      drts::KeyValues extra;
      if (patients) extra["synth.patients"] = std::to_string(*patients);
      if (per_class) extra["synth.epochs_per_class"] = std::to_string(*per_class);
      return drts::cmd_synth(resolve(g, extra), require_out(g, "synth"), std::cout);
    }
    if (*ingest) return drts::cmd_ingest(resolve(g, {}), edf_dir, require_out(g, "ingest"), std::cout);
    if (*train) return drts::cmd_train(resolve(g, {}), archive, require_out(g, "train"), std::cout, resume);
    if (*eval) {
      resolve(g, {});
      return drts::cmd_eval(archive, checkpoint, split, g.out, std::cout);
    }
    if (*ablate) return drts::cmd_ablate(resolve(g, {}), archive, require_out(g, "ablate"), std::cout);
    if (*gradcheck) {
      if (list_scopes) {
        for (const auto& s : drts::gradcheck_scopes()) std::cout << s << "\n";
        return drts::kExitOk;
      }
      return drts::cmd_gradcheck(resolve(g, {}), scope, std::cout);
    }
    if (*report) return drts::cmd_report(metrics, std::cout);
    return drts::kExitUsage;
  });
}
