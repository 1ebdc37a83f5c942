// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The DenseRTSleep Authors
//
// Synthetic PSG/hypnogram corpus. Each stage gets its own carrier frequency
// so that a small convolutional model can separate the classes.

#ifndef DRTS_SYNTH_HPP
#define DRTS_SYNTH_HPP

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "drts/edf.hpp"
#include "drts/ingest.hpp"

namespace drts {

struct SynthOptions {
  std::size_t patients = 20;
  std::size_t epochs_per_class = 2;
  double sampling_rate = 100.0;
  std::uint64_t seed = 0;
};

/// Stage carrier frequencies in Hz, indexed by stage.
const std::array<double, kStageCount>& synth_carriers();

struct SynthRecording {
  std::string patient_id;
  std::string recording_id;
  std::filesystem::path psg;
  std::filesystem::path hypnogram;
  SignalSpec eeg_spec;
  std::vector<std::int16_t> eeg_digital;      // whole-night Fpz-Cz samples
  std::vector<AnnotationEvent> events;        // as written to the hypnogram
  std::vector<SleepStage> stages;             // non-excluded epochs, in order
};

/// Writes one PSG/hypnogram pair per patient into `out_dir` and returns
/// what was written.
std::vector<SynthRecording> write_synthetic_corpus(const SynthOptions& options,
                                                   const std::filesystem::path& out_dir);

}  // namespace drts

#endif  // DRTS_SYNTH_HPP
