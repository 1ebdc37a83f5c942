// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The DenseRTSleep Authors

#include "drts/ingest.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <set>

#include "drts/rng.hpp"

namespace drts {

const char* stage_name(SleepStage s) {
  switch (s) {
    case SleepStage::W: return "W";
    case SleepStage::N1: return "N1";
    case SleepStage::N2: return "N2";
    case SleepStage::N3: return "N3";
    case SleepStage::REM: return "REM";
  }
  return "?";
}

std::optional<SleepStage> stage_from_name(std::string_view name) {
  for (std::size_t i = 0; i < kStageCount; ++i) {
    const auto s = static_cast<SleepStage>(i);
    if (name == stage_name(s)) return s;
  }
  return std::nullopt;
}

const std::array<std::string_view, 8>& raw_stage_labels() {
  static const std::array<std::string_view, 8> labels = {
      "Sleep stage W", "Sleep stage 1", "Sleep stage 2", "Sleep stage 3",
      "Sleep stage 4", "Sleep stage R", "Movement time", "Sleep stage ?"};
  return labels;
}

std::optional<SleepStage> map_stage(std::string_view raw_label) {
  static const std::map<std::string_view, std::optional<SleepStage>> table = {
      {"Sleep stage W", SleepStage::W},  {"Sleep stage 1", SleepStage::N1},
      {"Sleep stage 2", SleepStage::N2}, {"Sleep stage 3", SleepStage::N3},
      {"Sleep stage 4", SleepStage::N3}, {"Sleep stage R", SleepStage::REM},
      {"Movement time", std::nullopt},   {"Sleep stage ?", std::nullopt},
  };
  auto it = table.find(raw_label);
  if (it == table.end()) {
    throw IngestError(IngestErrc::UnrecognizedLabel, "'" + std::string(raw_label) + "'");
  }
  return it->second;
}

std::size_t EpochDataset::samples_per_epoch() const {
  return epochs.empty() ? static_cast<std::size_t>(std::llround(sampling_rate * kEpochSeconds))
                        : epochs.front().samples.size();
}

std::vector<std::string> EpochDataset::patient_ids() const {
  std::set<std::string> ids;
  for (const auto& e : epochs) ids.insert(e.patient_id);
  return {ids.begin(), ids.end()};
}

EpochDataset EpochDataset::subset(const std::vector<std::string>& patients) const {
  const std::set<std::string> keep(patients.begin(), patients.end());
  EpochDataset out;
  out.sampling_rate = sampling_rate;
  out.channel_label = channel_label;
  for (const auto& e : epochs) {
    if (keep.count(e.patient_id)) out.epochs.push_back(e);
  }
  return out;
}

void EpochDataset::append(EpochDataset other) {
  if (epochs.empty() && sampling_rate == 0.0) {
    sampling_rate = other.sampling_rate;
    channel_label = other.channel_label;
  } else if (!other.epochs.empty() &&
             (other.sampling_rate != sampling_rate || other.channel_label != channel_label)) {
    throw IngestError(IngestErrc::RateMismatch,
                      "cannot merge epochs at " + std::to_string(other.sampling_rate) +
                          " Hz into a dataset at " + std::to_string(sampling_rate) + " Hz");
  }
  epochs.insert(epochs.end(), std::make_move_iterator(other.epochs.begin()),
                std::make_move_iterator(other.epochs.end()));
}

EpochDataset segment_epochs(const std::vector<double>& signal, double rate,
                            const std::vector<AnnotationEvent>& events,
                            const std::string& patient_id,
                            const std::string& recording_id) {
  const double per_epoch = rate * kEpochSeconds;
  if (!(rate > 0.0) || std::abs(per_epoch - std::round(per_epoch)) > 1e-9) {
    throw IngestError(IngestErrc::RateMismatch,
                      std::to_string(rate) + " Hz does not give a whole number of samples per epoch");
  }
  const auto epoch_len = static_cast<std::size_t>(std::llround(per_epoch));
  EpochDataset ds;
  ds.sampling_rate = rate;
  for (const auto& ev : events) {
    const auto stage = map_stage(ev.label);
    if (!stage) continue;
    const double windows = ev.duration / kEpochSeconds;
    if (ev.duration <= 0.0 || std::abs(windows - std::round(windows)) > 1e-9) {
      throw IngestError(IngestErrc::MisalignedEvent,
                        "event '" + ev.label + "' at " + std::to_string(ev.onset) +
                            " s lasts " + std::to_string(ev.duration) +
                            " s, not a positive multiple of 30 s");
    }
    const double first = ev.onset * rate;
    if (std::abs(first - std::round(first)) > 1e-6) {
      throw IngestError(IngestErrc::MisalignedEvent,
                        "event onset " + std::to_string(ev.onset) + " s falls between samples");
    }
    const auto start = static_cast<std::size_t>(std::llround(first));
    const auto count = static_cast<std::size_t>(std::llround(windows));
    if (start + count * epoch_len > signal.size()) {
      throw IngestError(IngestErrc::CoverageGap,
                        "event '" + ev.label + "' ends at " +
                            std::to_string(ev.onset + ev.duration) + " s, signal ends at " +
                            std::to_string(static_cast<double>(signal.size()) / rate) + " s");
    }
    const auto first_index = static_cast<std::size_t>(std::llround(ev.onset / kEpochSeconds));
    for (std::size_t k = 0; k < count; ++k) {
      LabeledEpoch e;
      e.patient_id = patient_id;
      e.recording_id = recording_id;
      e.epoch_index = first_index + k;
      e.stage = *stage;
      const auto begin = signal.begin() + static_cast<std::ptrdiff_t>(start + k * epoch_len);
      e.samples.assign(begin, begin + static_cast<std::ptrdiff_t>(epoch_len));
      for (double v : e.samples) {
        if (!std::isfinite(v)) {
          throw IngestError(IngestErrc::MalformedField, "non-finite sample in epoch " +
                                                            std::to_string(e.epoch_index));
        }
      }
      ds.epochs.push_back(std::move(e));
    }
  }
  return ds;
}

ClassCounts class_distribution(const EpochDataset& dataset) {
  ClassCounts counts{};
  for (const auto& e : dataset.epochs) ++counts[stage_index(e.stage)];
  return counts;
}

PatientSplit split_by_patient(std::vector<std::string> patient_ids, std::uint64_t seed) {
  std::sort(patient_ids.begin(), patient_ids.end());
  patient_ids.erase(std::unique(patient_ids.begin(), patient_ids.end()), patient_ids.end());
  const std::size_t n = patient_ids.size();
  if (n < 3) {
    throw IngestError(IngestErrc::TooFewPatients,
                      "need at least 3 patients for a train/validation/test split, have " +
                          std::to_string(n));
  }
  Rng rng(RngStreams(seed).seed_for("split"));
  rng.shuffle(patient_ids);
  // 12:4:4, rounded half up, at least one patient per partition.
  const std::size_t held = std::max<std::size_t>(1, (n * 4 + 10) / 20);
  const std::size_t test = std::min(held, (n - 1) / 2);
  const std::size_t val = test;
  PatientSplit split;
  auto it = patient_ids.begin();
  split.train.assign(it, it + static_cast<std::ptrdiff_t>(n - val - test));
  it += static_cast<std::ptrdiff_t>(n - val - test);
  split.validation.assign(it, it + static_cast<std::ptrdiff_t>(val));
  it += static_cast<std::ptrdiff_t>(val);
  split.test.assign(it, patient_ids.end());
  return split;
}

namespace {

bool ends_with_ci(const std::string& s, std::string_view suffix) {
  if (s.size() < suffix.size()) return false;
  for (std::size_t i = 0; i < suffix.size(); ++i) {
    if (std::tolower(static_cast<unsigned char>(s[s.size() - suffix.size() + i])) !=
        std::tolower(static_cast<unsigned char>(suffix[i]))) {
      return false;
    }
  }
  return true;
}

// Sleep-EDF style names "SC4ssN..": subject ss, night N.
bool sleep_edf_style(const std::string& stem) {
  return stem.size() >= 7 && std::isalpha(static_cast<unsigned char>(stem[0])) &&
         std::isalpha(static_cast<unsigned char>(stem[1])) &&
         std::all_of(stem.begin() + 2, stem.begin() + 6,
                     [](unsigned char c) { return std::isdigit(c); });
}

}  // namespace

PairingResult pair_recordings(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) {
    throw IngestError(IngestErrc::Io, dir.string() + " is not a directory");
  }
  std::map<std::string, fs::path> psg, hyp;
  std::map<std::string, std::string> patient_of;
  PairingResult result;
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file()) files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  for (const auto& path : files) {
    const std::string name = path.filename().string();
    const bool is_psg = ends_with_ci(name, "-PSG.edf");
    const bool is_hyp = ends_with_ci(name, "-Hypnogram.edf");
    if (!is_psg && !is_hyp) {
      if (ends_with_ci(name, ".edf")) result.warnings.push_back("skipping unpaired-style file " + name);
      continue;
    }
    const std::string stem = name.substr(0, name.find('-'));
    const std::string key = sleep_edf_style(stem) ? stem.substr(0, 6) : stem;
    auto& slot = is_psg ? psg : hyp;
    if (slot.count(key)) {
      result.warnings.push_back("duplicate " + std::string(is_psg ? "PSG" : "hypnogram") +
                                " for " + key + ": skipping " + name);
      continue;
    }
    slot[key] = path;
    patient_of[key] = sleep_edf_style(stem) ? stem.substr(0, 5) : key;
  }
  for (const auto& [key, path] : psg) {
    auto h = hyp.find(key);
    if (h == hyp.end()) {
      result.warnings.push_back("no hypnogram for " + path.filename().string());
      continue;
    }
    RecordingPair p;
    p.recording_id = key;
    p.patient_id = patient_of[key];
    p.psg = path;
    p.hypnogram = h->second;
    result.pairs.push_back(std::move(p));
  }
  for (const auto& [key, path] : hyp) {
    if (!psg.count(key)) result.warnings.push_back("no PSG for " + path.filename().string());
  }
  return result;
}

EpochDataset load_recording(const RecordingPair& pair, const std::string& channel) {
  const EdfFile psg = EdfFile::read(pair.psg);
  const auto idx = psg.header().find_signal(channel);
  if (!idx) {
    throw IngestError(IngestErrc::NoSuchChannel,
                      "'" + channel + "' not found in " + pair.psg.filename().string());
  }
  const double rate = psg.header().sampling_rate(*idx);
  const EdfFile hyp = EdfFile::read(pair.hypnogram);
  EpochDataset ds = segment_epochs(psg.physical_samples(*idx), rate, hyp.annotations(),
                                   pair.patient_id, pair.recording_id);
  ds.channel_label = channel;
  return ds;
}

}  // namespace drts
