// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The DenseRTSleep Authors

#include "drts/metrics.hpp"

#include <cstdio>
#include <json.hpp>
#include <sstream>

namespace drts {
namespace {

double ratio(std::uint64_t num, std::uint64_t den) {
  return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

std::string fixed(double v, int digits) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

}  // namespace

std::size_t argmax_class(std::span<const double> probs) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < probs.size(); ++i) {
    if (probs[i] > probs[best]) best = i;
  }
  return best;
}

void ConfusionMatrix::add(std::size_t actual, std::size_t predicted, std::uint64_t n) {
  counts.at(actual).at(predicted) += n;
}

std::uint64_t ConfusionMatrix::total() const {
  std::uint64_t n = 0;
  for (const auto& row : counts)
    for (auto c : row) n += c;
  return n;
}

std::uint64_t ConfusionMatrix::trace() const {
  std::uint64_t n = 0;
  for (std::size_t i = 0; i < kStageCount; ++i) n += counts[i][i];
  return n;
}

ConfusionMatrix& ConfusionMatrix::merge(const ConfusionMatrix& other) {
  for (std::size_t i = 0; i < kStageCount; ++i)
    for (std::size_t j = 0; j < kStageCount; ++j) counts[i][j] += other.counts[i][j];
  return *this;
}

PerClassMetrics per_class_metrics(const ConfusionMatrix& cm) {
  PerClassMetrics out{};
  for (std::size_t c = 0; c < kStageCount; ++c) {
    const std::uint64_t tp = cm.counts[c][c];
    std::uint64_t fp = 0, fn = 0;
    for (std::size_t o = 0; o < kStageCount; ++o) {
      if (o == c) continue;
      fp += cm.counts[o][c];
      fn += cm.counts[c][o];
    }
    auto& m = out[c];
    m.precision = ratio(tp, tp + fp);
    m.recall = ratio(tp, tp + fn);
    const double s = m.precision + m.recall;
    m.f1 = s > 0.0 ? 2.0 * m.precision * m.recall / s : 0.0;
  }
  return out;
}

MetricsReport overall_metrics(const ConfusionMatrix& cm) {
  MetricsReport r;
  r.total = cm.total();
  if (r.total == 0) throw TrainEvalError(TrainEvalErrc::EmptyMatrix, "confusion matrix is empty");
  r.per_class = per_class_metrics(cm);
  for (const auto& m : r.per_class) {
    r.macro_precision += m.precision;
    r.macro_recall += m.recall;
    r.macro_f1 += m.f1;
  }
  const double k = static_cast<double>(kStageCount);
  r.macro_precision /= k;
  r.macro_recall /= k;
  r.macro_f1 /= k;
  r.accuracy = ratio(cm.trace(), r.total);
  return r;
}

std::string render_confusion(const ConfusionMatrix& cm) {
  std::ostringstream os;
  char buf[128];
  std::snprintf(buf, sizeof buf, "%-8s", "actual");
  os << buf;
  for (std::size_t j = 0; j < kStageCount; ++j) {
    std::snprintf(buf, sizeof buf, "%8s", stage_name(static_cast<SleepStage>(j)));
    os << buf;
  }
  os << "\n";
  for (std::size_t i = 0; i < kStageCount; ++i) {
    std::snprintf(buf, sizeof buf, "%-8s", stage_name(static_cast<SleepStage>(i)));
    os << buf;
    for (std::size_t j = 0; j < kStageCount; ++j) {
      std::snprintf(buf, sizeof buf, "%8llu", static_cast<unsigned long long>(cm.counts[i][j]));
      os << buf;
    }
    os << "\n";
  }
  return os.str();
}

std::string render_metrics(const MetricsReport& r) {
  std::ostringstream os;
  char buf[128];
  std::snprintf(buf, sizeof buf, "%-8s%11s%11s%11s\n", "class", "precision", "recall", "f1");
  os << buf;
  for (std::size_t c = 0; c < kStageCount; ++c) {
    const auto& m = r.per_class[c];
    std::snprintf(buf, sizeof buf, "%-8s%11.4f%11.4f%11.4f\n", stage_name(static_cast<SleepStage>(c)),
                  m.precision, m.recall, m.f1);
    os << buf;
  }
  std::snprintf(buf, sizeof buf, "%-8s%10.2f%%%10.2f%%%10.2f%%\n", "macro", 100.0 * r.macro_precision,
                100.0 * r.macro_recall, 100.0 * r.macro_f1);
  os << buf;
  os << "accuracy " << fixed(100.0 * r.accuracy, 2) << "% over " << r.total << " epochs\n";
  return os.str();
}

std::string metrics_json(const MetricsReport& r, const ConfusionMatrix* cm) {
  nlohmann::ordered_json j;
  auto& per = j["per_class"];
  for (std::size_t c = 0; c < kStageCount; ++c) {
    const auto& m = r.per_class[c];
    per[stage_name(static_cast<SleepStage>(c))] = {
        {"precision", m.precision}, {"recall", m.recall}, {"f1", m.f1}};
  }
  j["macro"] = {{"precision", r.macro_precision}, {"recall", r.macro_recall}, {"f1", r.macro_f1}};
  j["accuracy"] = r.accuracy;
  j["total"] = r.total;
  if (cm) j["confusion"] = cm->counts;
  return j.dump(2) + "\n";
}

}  // namespace drts
