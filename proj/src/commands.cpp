// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The DenseRTSleep Authors

#include "drts/commands.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <json.hpp>
#include <optional>
#include <sstream>

#include "drts/archive.hpp"
#include "drts/checkpoint.hpp"
#include "drts/gradcheck_suite.hpp"
#include "drts/ingest.hpp"
#include "drts/synth.hpp"
#include "drts/trainer.hpp"

namespace drts {
namespace fs = std::filesystem;

namespace {

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void print_distribution(std::ostream& os, const ClassCounts& counts) {
  std::size_t total = 0;
  for (auto c : counts) total += c;
  char buf[96];
  for (std::size_t s = 0; s < kStageCount; ++s) {
    std::snprintf(buf, sizeof buf, "  %-4s %8zu  %6.2f%%\n", stage_name(static_cast<SleepStage>(s)), counts[s],
                  total ? 100.0 * static_cast<double>(counts[s]) / static_cast<double>(total) : 0.0);
    os << buf;
  }
  os << "  total " << total << "\n";
}

PatientSplit split_for(const EpochDataset& data, std::uint64_t seed) {
  return split_by_patient(data.patient_ids(), RngStreams(seed).seed_for("split"));
}

std::vector<std::string> split_patients(const PatientSplit& split, const std::string& which,
                                        const EpochDataset& data) {
  if (which == "train") return split.train;
  if (which == "validation") return split.validation;
  if (which == "test") return split.test;
  if (which == "all") return data.patient_ids();
  throw ConfigError("split must be train, validation, test or all, got '" + which + "'");
}

struct TrainedRun {
  Model model;
  TrainProgress progress;
};

TrainedRun train_variant(const RunConfig& cfg, const EpochDataset& data, const PatientSplit& split,
                         std::ostream& os, const Checkpoint* resume = nullptr,
                         const fs::path& checkpoint_out = {}) {
  const std::size_t len = cfg.model.input_length;
  PreparedSet train = prepare_set(data.subset(split.train), len, cfg.train.standardize);
  PreparedSet val = prepare_set(data.subset(split.validation), len, cfg.train.standardize);
  TrainedRun run{Model(cfg.model, cfg.seed), {}};
  Trainer trainer(run.model, cfg.train, std::move(train), std::move(val));
  if (resume) trainer.resume(*resume);
  trainer.run([&](const HistoryRow& r) {
    if (!std::isnan(r.val_accuracy)) {
      char buf[160];
      std::snprintf(buf, sizeof buf, "step %6llu  pass %4llu  loss %.5f  val_acc %.4f\n",
                    static_cast<unsigned long long>(r.step), static_cast<unsigned long long>(r.epoch),
                    r.total, r.val_accuracy);
      os << buf << std::flush;
    }
    return true;
  });
  if (!checkpoint_out.empty()) save_checkpoint(trainer.checkpoint(), checkpoint_out);
  run.progress = trainer.progress();
  trainer.restore_best();
  return run;
}

}  // namespace

void echo_config(const RunConfig& cfg, const fs::path& dir) {
  fs::create_directories(dir);
  write_text(dir / "config.txt", format_key_values(to_key_values(cfg)));
}

int cmd_synth(const RunConfig& cfg, const fs::path& out_dir, std::ostream& os) {
  SynthOptions opt = cfg.synth;
  opt.seed = cfg.seed;
  if (opt.patients < 1 || opt.epochs_per_class < 1) {
    throw ConfigError("synth.patients and synth.epochs_per_class must be >= 1");
  }
  const auto written = write_synthetic_corpus(opt, out_dir);
  echo_config(cfg, out_dir);
  os << "wrote " << written.size() << " PSG/hypnogram pairs to " << out_dir.string() << "\n";
  return kExitOk;
}

int cmd_ingest(const RunConfig& cfg, const fs::path& edf_dir, const fs::path& out_dir, std::ostream& os) {
  if (!fs::is_directory(edf_dir)) throw ConfigError("not a directory: " + edf_dir.string());
  const PairingResult pairing = pair_recordings(edf_dir);
  for (const auto& w : pairing.warnings) os << "warning: " << w << "\n";
  if (pairing.pairs.empty()) throw ConfigError("no PSG/hypnogram pairs found in " + edf_dir.string());
  EpochDataset all;
  for (const auto& pair : pairing.pairs) {
    EpochDataset one = load_recording(pair, cfg.channel);
    os << pair.recording_id << ": " << one.epochs.size() << " epochs\n";
    all.append(std::move(one));
  }
  write_epoch_archive(all, out_dir);
  echo_config(cfg, out_dir);
  os << "patients " << all.patient_ids().size() << ", recordings " << pairing.pairs.size() << "\n";
  os << "class distribution:\n";
  print_distribution(os, class_distribution(all));
  return kExitOk;
}

int cmd_train(const RunConfig& cfg, const fs::path& archive, const fs::path& out_dir, std::ostream& os,
              const fs::path& resume) {
  const EpochDataset data = read_epoch_archive(archive);
  const PatientSplit split = split_for(data, cfg.seed);
  fs::create_directories(out_dir);
  echo_config(cfg, out_dir);
  nlohmann::ordered_json sj = {{"train", split.train}, {"validation", split.validation}, {"test", split.test}};
  write_text(out_dir / "split.json", sj.dump(2) + "\n");
  os << "model " << variant_name(cfg.model.variant) << ", " << Model(cfg.model, cfg.seed).param_count()
     << " parameters\n";
  std::optional<Checkpoint> from;
  if (!resume.empty()) {
    from = load_checkpoint(resume);
    os << "resuming at step " << from->progress.step << "\n";
  }
  const TrainedRun run = train_variant(cfg, data, split, os, from ? &*from : nullptr, out_dir / "checkpoint.drts");
  write_text(out_dir / "history.csv", history_csv(run.progress.history));
  os << "steps " << run.progress.step << ", passes " << run.progress.epoch;
  if (run.progress.has_best) {
    os << ", best validation accuracy " << run.progress.best_val_accuracy << " at step " << run.progress.best_step;
  }
  os << "\ncheckpoint " << (out_dir / "checkpoint.drts").string() << "\n";
  return kExitOk;
}

int cmd_eval(const fs::path& archive, const fs::path& checkpoint, const std::string& split_name,
             const fs::path& out_dir, std::ostream& os) {
  const Checkpoint ck = load_checkpoint(checkpoint);
  Model model = model_from_checkpoint(ck, true);
  const EpochDataset data = read_epoch_archive(archive);
  const PatientSplit split = split_for(data, ck.train.seed);
  const auto patients = split_patients(split, split_name, data);
  const EpochDataset subset = data.subset(patients);
  const PreparedSet prepared = prepare_set(subset, model.config().input_length, ck.train.standardize);
  const ConfusionMatrix cm = evaluate(model, prepared);
  const MetricsReport report = overall_metrics(cm);
  os << "split " << split_name << " (" << patients.size() << " patients)\n";
  os << render_confusion(cm) << "\n" << render_metrics(report);
  if (!out_dir.empty()) {
    fs::create_directories(out_dir / "hypnograms");
    write_text(out_dir / "metrics.json", metrics_json(report, &cm));
    for (const auto& p : patients) {
      write_text(out_dir / "hypnograms" / (p + ".csv"),
                 export_hypnogram(model, data.subset({p}), ck.train.standardize));
    }
  }
  return kExitOk;
}

std::string render_ablation(const std::vector<AblationRow>& rows) {
  std::ostringstream os;
  char buf[160];
  std::snprintf(buf, sizeof buf, "%-18s%10s%11s%11s%11s\n", "variant", "accuracy", "macro_p", "macro_r",
                "macro_f1");
  os << buf;
  for (const auto& r : rows) {
    const auto& m = r.metrics;
    std::snprintf(buf, sizeof buf, "%-18s%10.4f%11.4f%11.4f%11.4f\n", r.variant.c_str(), m.accuracy,
                  m.macro_precision, m.macro_recall, m.macro_f1);
    os << buf;
  }
  return os.str();
}

int cmd_ablate(const RunConfig& cfg, const fs::path& archive, const fs::path& out_dir, std::ostream& os) {
  const EpochDataset data = read_epoch_archive(archive);
  const PatientSplit split = split_for(data, cfg.seed);
  fs::create_directories(out_dir);
  echo_config(cfg, out_dir);
  std::vector<AblationRow> rows;
  nlohmann::ordered_json out = nlohmann::ordered_json::array();
  for (ModelVariant v : kAllVariants) {
    RunConfig c = cfg;
    c.model.variant = v;
    c.train.variant = v;
    os << "== " << variant_name(v) << "\n";
    TrainedRun run = train_variant(c, data, split, os);
    const PreparedSet test = prepare_set(data.subset(split.test), c.model.input_length, c.train.standardize);
    const ConfusionMatrix cm = evaluate(run.model, test);
    rows.push_back({variant_name(v), overall_metrics(cm)});
    const auto& m = rows.back().metrics;
    out.push_back({{"variant", rows.back().variant},
                   {"accuracy", m.accuracy},
                   {"macro_precision", m.macro_precision},
                   {"macro_recall", m.macro_recall},
                   {"macro_f1", m.macro_f1},
                   {"confusion", cm.counts}});
    fs::create_directories(out_dir / variant_name(v));
    write_text(out_dir / variant_name(v) / "history.csv", history_csv(run.progress.history));
  }
  const std::string table = render_ablation(rows);
  write_text(out_dir / "ablation.txt", table);
  write_text(out_dir / "ablation.json", out.dump(2) + "\n");
  os << table;
  return kExitOk;
}

int cmd_gradcheck(const RunConfig& cfg, const std::string& scope, std::ostream& os) {
  const auto results = run_gradcheck_suite(scope, cfg.gradcheck_seeds, cfg.gradcheck_tolerance);
  os << render_suite(results);
  const bool ok = suite_passed(results);
  os << (ok ? "all cases passed\n" : "gradient check FAILED\n");
  return ok ? kExitOk : kExitFailure;
}

int cmd_report(const fs::path& metrics_path, std::ostream& os) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_text(metrics_path));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(metrics_path.string() + ": " + e.what());
  }
  if (!j.contains("confusion")) throw ConfigError(metrics_path.string() + ": no confusion matrix");
  ConfusionMatrix cm;
  try {
    cm.counts = j.at("confusion").get<decltype(cm.counts)>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(metrics_path.string() + ": bad confusion matrix: " + e.what());
  }
  os << render_confusion(cm) << "\n" << render_metrics(overall_metrics(cm));
  return kExitOk;
}

int guarded(std::ostream& err, const std::function<int()>& fn) {
  try {
    return fn();
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
}

}  // namespace drts
