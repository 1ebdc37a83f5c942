// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The DenseRTSleep Authors
//
// From PSG/hypnogram pairs to labelled 30-second epochs and patient-level
// splits.

#ifndef DRTS_INGEST_HPP
#define DRTS_INGEST_HPP

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "drts/edf.hpp"

namespace drts {

inline constexpr std::size_t kStageCount = 5;
inline constexpr double kEpochSeconds = 30.0;
inline constexpr const char* kDefaultChannel = "EEG Fpz-Cz";

enum class SleepStage : std::uint8_t { W = 0, N1 = 1, N2 = 2, N3 = 3, REM = 4 };

const char* stage_name(SleepStage s);
std::optional<SleepStage> stage_from_name(std::string_view name);
inline std::size_t stage_index(SleepStage s) { return static_cast<std::size_t>(s); }

/// The eight raw hypnogram labels in the order W, 1, 2, 3, 4, R, M, ?.
const std::array<std::string_view, 8>& raw_stage_labels();

/// W->W, 1->N1, 2->N2, 3->N3, 4->N3, R->REM; movement and unscored epochs
/// map to nullopt (excluded). Throws UnrecognizedLabel otherwise.
std::optional<SleepStage> map_stage(std::string_view raw_label);

struct LabeledEpoch {
  std::string patient_id;
  std::string recording_id;
  std::size_t epoch_index = 0;  // position of the window in its recording
  std::vector<double> samples;  // physical units
  SleepStage stage = SleepStage::W;
};

using ClassCounts = std::array<std::size_t, kStageCount>;

struct EpochDataset {
  std::vector<LabeledEpoch> epochs;
  double sampling_rate = 0.0;
  std::string channel_label = kDefaultChannel;

  std::size_t samples_per_epoch() const;
  std::vector<std::string> patient_ids() const;  // sorted, unique
  // Epochs of the given patients, order preserved.
  EpochDataset subset(const std::vector<std::string>& patients) const;
  void append(EpochDataset other);
};

/// One epoch per 30-second window of every non-excluded event.
EpochDataset segment_epochs(const std::vector<double>& signal, double rate,
                            const std::vector<AnnotationEvent>& events,
                            const std::string& patient_id = "",
                            const std::string& recording_id = "");

ClassCounts class_distribution(const EpochDataset& dataset);

struct PatientSplit {
  std::vector<std::string> train;
  std::vector<std::string> validation;
  std::vector<std::string> test;
};

/// Whole-patient 12:4:4 partition after a seeded shuffle of the sorted ids.
PatientSplit split_by_patient(std::vector<std::string> patient_ids, std::uint64_t seed);

/// Pairing of PSG and hypnogram files found in a directory.
struct RecordingPair {
  std::string recording_id;
  std::string patient_id;
  std::filesystem::path psg;
  std::filesystem::path hypnogram;
};

struct PairingResult {
  std::vector<RecordingPair> pairs;
  std::vector<std::string> warnings;
};

PairingResult pair_recordings(const std::filesystem::path& dir);

/// Reads one PSG/hypnogram pair and segments the requested channel.
EpochDataset load_recording(const RecordingPair& pair,
                            const std::string& channel = kDefaultChannel);

}  // namespace drts

#endif  // DRTS_INGEST_HPP
