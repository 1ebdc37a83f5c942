// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The DenseRTSleep Authors

#include "drts/trainer.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <tuple>

#include "drts/losses.hpp"

namespace drts {
namespace {

std::string g17(double v) {
  if (std::isnan(v)) return "";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

Tensor gather(const PreparedSet& data, std::span<const std::uint64_t> idx) {
  std::vector<double> x(idx.size() * data.length);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    const double* src = data.x.data() + idx[i] * data.length;
    std::copy(src, src + data.length, x.begin() + static_cast<std::ptrdiff_t>(i * data.length));
  }
  return Tensor::from({idx.size(), 1, data.length}, std::move(x));
}

[[noreturn]] void malformed(std::size_t line, const std::string& what) {
  throw TrainEvalError(TrainEvalErrc::MalformedCsv,
                       "hypnogram csv line " + std::to_string(line) + ": " + what);
}

}  // namespace

void standardize_epoch(std::span<double> samples) {
  if (samples.empty()) return;
  const double n = static_cast<double>(samples.size());
  double mean = 0.0;
  for (double v : samples) mean += v;
  mean /= n;
  double var = 0.0;
  for (double v : samples) var += (v - mean) * (v - mean);
  const double sd = std::sqrt(var / n);
  const double inv = sd > 0.0 ? 1.0 / sd : 1.0;
  for (double& v : samples) v = (v - mean) * inv;
}

PreparedSet prepare_set(const EpochDataset& data, std::size_t length, bool standardize) {
  if (data.epochs.empty()) throw TrainEvalError(TrainEvalErrc::EmptyDataset, "dataset has no epochs");
  PreparedSet out;
  out.n = data.epochs.size();
  out.length = length;
  out.x.reserve(out.n * length);
  for (const auto& e : data.epochs) {
    if (e.samples.size() != length) {
      throw AutogradError(AutogradErrc::ShapeMismatch,
                          "epoch of " + std::to_string(e.samples.size()) +
                              " samples, model expects " + std::to_string(length));
    }
    const std::size_t at = out.x.size();
    out.x.insert(out.x.end(), e.samples.begin(), e.samples.end());
    if (standardize) standardize_epoch(std::span<double>(out.x).subspan(at, length));
    out.labels.push_back(stage_index(e.stage));
  }
  return out;
}

std::string history_csv(const std::vector<HistoryRow>& rows) {
  std::string out = "step,epoch,ce,kl,contrastive,total,val_accuracy\n";
  for (const auto& r : rows) {
    out += std::to_string(r.step) + "," + std::to_string(r.epoch) + "," + g17(r.ce) + "," +
           g17(r.kl) + "," + g17(r.contrastive) + "," + g17(r.total) + "," + g17(r.val_accuracy) +
           "\n";
  }
  return out;
}

Trainer::Trainer(Model& model, TrainConfig cfg, PreparedSet train, std::optional<PreparedSet> validation)
    : model_(model),
      cfg_(std::move(cfg)),
      train_(std::move(train)),
      val_(std::move(validation)),
      optimizer_(cfg_.optimizer, model.parameters()),
      shuffle_(RngStreams(cfg_.seed).stream("shuffle")) {
  cfg_.validate();
  if (cfg_.variant != model.config().variant) {
    throw ConfigError(std::string("train variant ") + variant_name(cfg_.variant) +
                      " does not match model variant " + variant_name(model.config().variant));
  }
  for (const PreparedSet* s : {&train_, val_ ? &*val_ : nullptr}) {
    if (!s) continue;
    if (s->n == 0) throw TrainEvalError(TrainEvalErrc::EmptyDataset, "dataset has no epochs");
    if (s->length != model.config().input_length) {
      throw AutogradError(AutogradErrc::ShapeMismatch,
                          "epochs of " + std::to_string(s->length) + " samples, model expects " +
                              std::to_string(model.config().input_length));
    }
  }
}

bool Trainer::done() const {
  if (cfg_.max_steps > 0 && progress_.step >= cfg_.max_steps) return true;
  return cfg_.max_epochs > 0 && progress_.epoch >= cfg_.max_epochs;
}

HistoryRow Trainer::step() {
  auto& pr = progress_;
  if (pr.cursor == 0) {
    pr.order.resize(train_.n);
    std::iota(pr.order.begin(), pr.order.end(), std::uint64_t{0});
    shuffle_.shuffle(pr.order);
    pr.rng_state = shuffle_.state();
  }
  const std::size_t take = std::min<std::size_t>(cfg_.batch_size, train_.n - pr.cursor);
  const std::span<const std::uint64_t> idx(pr.order.data() + pr.cursor, take);
  const Tensor x = gather(train_, idx);
  std::vector<std::size_t> labels(take);
  for (std::size_t i = 0; i < take; ++i) labels[i] = train_.labels[idx[i]];

  Tape tape;
  const Tensor probs = model_.forward(tape, x, Mode::Train);
  auto non_finite = [&] {
    return TrainEvalError(TrainEvalErrc::NonFiniteLoss,
                          "non-finite loss at step " + std::to_string(pr.step + 1));
  };
  for (double p : probs.values()) {
    if (!std::isfinite(p)) throw non_finite();
  }
  const auto loss = total_loss(tape, one_hot(labels, kStageCount), probs,
                               effective_weights(cfg_.variant, cfg_.loss_weights));
  if (!std::isfinite(loss.parts.total)) throw non_finite();
  optimizer_.zero_grad();
  tape.backward(loss.total);
  optimizer_.step();

  ++pr.step;
  pr.cursor += take;
  HistoryRow row{pr.step, pr.epoch, loss.parts.cross_entropy, loss.parts.kl, loss.parts.contrastive,
                 loss.parts.total};
  if (pr.cursor == train_.n) {
    pr.cursor = 0;
    ++pr.epoch;
    row.epoch = pr.epoch;
    validate_pass(row);
  }
  pr.history.push_back(row);
  return row;
}

void Trainer::validate_pass(HistoryRow& row) {
  if (!val_) return;
  const ConfusionMatrix cm = evaluate(model_, *val_);
  row.val_accuracy = static_cast<double>(cm.trace()) / static_cast<double>(cm.total());
  auto& pr = progress_;
  if (!pr.has_best || row.val_accuracy > pr.best_val_accuracy) {
    pr.has_best = true;
    pr.best_val_accuracy = row.val_accuracy;
    pr.best_step = pr.step;
    pr.best_params = snapshot_params(model_);
    pr.best_buffers = snapshot_buffers(model_);
  }
}

void Trainer::run(const std::function<bool(const HistoryRow&)>& on_step) {
  while (!done()) {
    const HistoryRow row = step();
    if (on_step && !on_step(row)) break;
  }
}

bool Trainer::restore_best() {
  if (!progress_.has_best) return false;
  apply_snapshot(model_, progress_.best_params, progress_.best_buffers);
  return true;
}

Checkpoint Trainer::checkpoint() const {
  Checkpoint ck;
  ck.model = model_.config();
  ck.train = cfg_;
  ck.params = snapshot_params(model_);
  ck.buffers = snapshot_buffers(model_);
  ck.optimizer = optimizer_.state();
  ck.progress = progress_;
  return ck;
}

void Trainer::resume(const Checkpoint& ck) {
  if (model_key_values(ck.model) != model_key_values(model_.config())) {
    throw ConfigError("checkpoint model configuration differs from the current model");
  }
  const auto& order = ck.progress.order;
  if ((!order.empty() && order.size() != train_.n) || ck.progress.cursor >= std::max<std::size_t>(train_.n, 1)) {
    throw ConfigError("checkpoint was taken on a training set of a different size");
  }
  apply_snapshot(model_, ck.params, ck.buffers);
  optimizer_.restore(ck.optimizer);
  progress_ = ck.progress;
  if (!progress_.rng_state.empty()) shuffle_.restore(progress_.rng_state);
}

std::vector<double> predict_probabilities(Model& model, const PreparedSet& data, std::size_t batch) {
  if (data.length != model.config().input_length) {
    throw AutogradError(AutogradErrc::ShapeMismatch,
                        "epochs of " + std::to_string(data.length) + " samples, model expects " +
                            std::to_string(model.config().input_length));
  }
  std::vector<double> out;
  out.reserve(data.n * kStageCount);
  std::vector<std::uint64_t> idx;
  for (std::size_t at = 0; at < data.n; at += batch) {
    const std::size_t take = std::min(batch, data.n - at);
    idx.resize(take);
    std::iota(idx.begin(), idx.end(), at);
    const auto p = model.predict(gather(data, idx));
    out.insert(out.end(), p.begin(), p.end());
  }
  return out;
}

ConfusionMatrix evaluate(Model& model, const PreparedSet& data, std::size_t batch) {
  const auto probs = predict_probabilities(model, data, batch);
  ConfusionMatrix cm;
  for (std::size_t i = 0; i < data.n; ++i) {
    cm.add(data.labels[i],
           argmax_class(std::span<const double>(probs).subspan(i * kStageCount, kStageCount)));
  }
  return cm;
}

std::vector<HypnogramRow> predict_hypnogram(Model& model, const EpochDataset& epochs, bool standardize) {
  const auto& ev = epochs.epochs;
  for (std::size_t i = 1; i < ev.size(); ++i) {
    if (ev[i].patient_id != ev[0].patient_id) {
      throw TrainEvalError(TrainEvalErrc::UnorderedInput,
                           "epochs of more than one patient: " + ev[0].patient_id + ", " +
                               ev[i].patient_id);
    }
    const auto& a = ev[i - 1];
    const auto& b = ev[i];
    if (std::tie(a.recording_id, a.epoch_index) >= std::tie(b.recording_id, b.epoch_index)) {
      throw TrainEvalError(TrainEvalErrc::UnorderedInput,
                           "epoch " + std::to_string(i) + " is not after its predecessor");
    }
  }
  const PreparedSet data = prepare_set(epochs, model.config().input_length, standardize);
  const auto probs = predict_probabilities(model, data);
  std::vector<HypnogramRow> rows(data.n);
  for (std::size_t i = 0; i < data.n; ++i) {
    auto& r = rows[i];
    r.epoch_index = ev[i].epoch_index;
    std::copy_n(probs.begin() + static_cast<std::ptrdiff_t>(i * kStageCount), kStageCount,
                r.probabilities.begin());
    r.stage = static_cast<SleepStage>(argmax_class(r.probabilities));
  }
  return rows;
}

std::string hypnogram_csv(const std::vector<HypnogramRow>& rows) {
  std::string out = "epoch_index,stage,p_W,p_N1,p_N2,p_N3,p_REM\n";
  for (const auto& r : rows) {
    out += std::to_string(r.epoch_index) + "," + stage_name(r.stage);
    for (double p : r.probabilities) out += "," + g17(p);
    out += "\n";
  }
  return out;
}

std::string export_hypnogram(Model& model, const EpochDataset& epochs, bool standardize) {
  return hypnogram_csv(predict_hypnogram(model, epochs, standardize));
}

std::vector<HypnogramRow> parse_hypnogram_csv(std::string_view text) {
  std::vector<HypnogramRow> rows;
  std::size_t line_no = 0;
  bool header = true;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;
    if (header) {
      if (line != "epoch_index,stage,p_W,p_N1,p_N2,p_N3,p_REM") malformed(line_no, "unexpected header");
      header = false;
      continue;
    }
    std::vector<std::string_view> cells;
    for (std::size_t start = 0;;) {
      const auto comma = line.find(',', start);
      cells.push_back(line.substr(start, comma - start));
      if (comma == std::string_view::npos) break;
      start = comma + 1;
    }
    if (cells.size() != 2 + kStageCount) malformed(line_no, "expected 7 fields");
    HypnogramRow r;
    auto num = [&](std::string_view s, auto& out) {
      const auto res = std::from_chars(s.data(), s.data() + s.size(), out);
      if (res.ec != std::errc() || res.ptr != s.data() + s.size()) malformed(line_no, "bad number");
    };
    num(cells[0], r.epoch_index);
    const auto stage = stage_from_name(cells[1]);
    if (!stage) malformed(line_no, "unknown stage");
    r.stage = *stage;
    for (std::size_t c = 0; c < kStageCount; ++c) num(cells[2 + c], r.probabilities[c]);
    rows.push_back(r);
  }
  if (header) malformed(line_no, "missing header");
  return rows;
}

}  // namespace drts
