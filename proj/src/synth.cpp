// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The DenseRTSleep Authors

#include "drts/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "drts/rng.hpp"

namespace drts {
namespace {

constexpr double kPhysMin = -250.0;
constexpr double kPhysMax = 250.0;
constexpr int kDigMin = -32768;
constexpr int kDigMax = 32767;

SignalSpec eeg_spec(const std::string& label, std::size_t samples_per_record) {
  SignalSpec s;
  s.label = label;
  s.transducer = "Ag-AgCl electrodes";
  s.physical_dimension = "uV";
  s.physical_min = kPhysMin;
  s.physical_max = kPhysMax;
  s.digital_min = kDigMin;
  s.digital_max = kDigMax;
  s.prefiltering = "HP:0.5Hz LP:45Hz";
  s.samples_per_record = samples_per_record;
  return s;
}

std::int16_t to_digital(double physical) {
  const double d = (physical - kPhysMin) * (static_cast<double>(kDigMax) - kDigMin) /
                       (kPhysMax - kPhysMin) +
                   kDigMin;
  return static_cast<std::int16_t>(std::clamp(std::lround(d), static_cast<long>(kDigMin),
                                              static_cast<long>(kDigMax)));
}

// One 30 s window. Stage epochs are a modulated carrier plus noise;
// excluded epochs (movement / unscored) are broadband noise.
void render_epoch(Rng& rng, double rate, std::size_t n, int stage, std::vector<std::int16_t>& out) {
  const double carrier = stage >= 0 ? synth_carriers()[static_cast<std::size_t>(stage)] : 0.0;
  const double f = carrier * (1.0 + 0.08 * (rng.uniform() - 0.5));
  const double amp = 40.0 + 20.0 * rng.uniform();
  const double phase = 2.0 * M_PI * rng.uniform();
  const double mod_phase = 2.0 * M_PI * rng.uniform();
  const double noise = stage >= 0 ? 4.0 : 30.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / rate;
    double x = noise * rng.normal();
    if (stage >= 0) {
      x += amp * (1.0 + 0.3 * std::sin(2.0 * M_PI * 0.07 * t + mod_phase)) *
           std::sin(2.0 * M_PI * f * t + phase);
    }
    out.push_back(to_digital(x));
  }
}

}  // namespace

const std::array<double, kStageCount>& synth_carriers() {
  // W, N1, N2, N3, REM
  static const std::array<double, kStageCount> hz = {9.0, 5.0, 14.0, 1.0, 2.5};
  return hz;
}

std::vector<SynthRecording> write_synthetic_corpus(const SynthOptions& options,
                                                   const std::filesystem::path& out_dir) {
  if (options.patients < 1 || options.patients > 99 || options.epochs_per_class < 1) {
    throw IngestError(IngestErrc::MalformedField,
                      "synthetic corpus needs 1..99 patients and at least one epoch per class");
  }
  const double per_epoch = options.sampling_rate * kEpochSeconds;
  if (!(options.sampling_rate > 0.0) || std::abs(per_epoch - std::round(per_epoch)) > 1e-9) {
    throw IngestError(IngestErrc::RateMismatch, "sampling rate must give whole epochs");
  }
  const auto epoch_len = static_cast<std::size_t>(std::llround(per_epoch));
  std::filesystem::create_directories(out_dir);
  const RngStreams streams(options.seed);
  const auto& raw = raw_stage_labels();

  std::vector<SynthRecording> out;
  for (std::size_t p = 0; p < options.patients; ++p) {
    char stem[16];
    std::snprintf(stem, sizeof stem, "SY4%02zu1", p);
    Rng rng = streams.stream("synth/" + std::string(stem));

    std::vector<int> stages;
    for (std::size_t c = 0; c < kStageCount; ++c) {
      stages.insert(stages.end(), options.epochs_per_class, static_cast<int>(c));
    }
    rng.shuffle(stages);

    // Raw label per 30 s window; -1 = movement, -2 = unscored.
    std::vector<std::string_view> labels;
    std::vector<int> kinds;
    const std::size_t movement_at = rng.below(stages.size() + 1);
    for (std::size_t i = 0; i <= stages.size(); ++i) {
      if (i == movement_at) {
        labels.push_back(raw[6]);
        kinds.push_back(-1);
      }
      if (i == stages.size()) break;
      const int s = stages[i];
      std::string_view label = raw[static_cast<std::size_t>(s)];
      if (s == static_cast<int>(SleepStage::N3) && rng.below(2) == 1) label = raw[4];
      if (s == static_cast<int>(SleepStage::REM)) label = raw[5];
      labels.push_back(label);
      kinds.push_back(s);
    }
    labels.push_back(raw[7]);
    kinds.push_back(-2);

    SynthRecording rec;
    rec.recording_id = stem;
    rec.patient_id = std::string(stem).substr(0, 5);
    rec.eeg_spec = eeg_spec(kDefaultChannel, epoch_len);
    std::vector<std::int16_t> other;
    for (std::size_t w = 0; w < labels.size(); ++w) {
      render_epoch(rng, options.sampling_rate, epoch_len, kinds[w], rec.eeg_digital);
      render_epoch(rng, options.sampling_rate, epoch_len, -1, other);
      if (kinds[w] >= 0) rec.stages.push_back(static_cast<SleepStage>(kinds[w]));
    }
    for (std::size_t w = 0; w < labels.size();) {
      std::size_t run = 1;
      while (w + run < labels.size() && labels[w + run] == labels[w]) ++run;
      rec.events.push_back({kEpochSeconds * static_cast<double>(w),
                            kEpochSeconds * static_cast<double>(run), std::string(labels[w])});
      w += run;
    }

    EdfHeader psg;
    psg.patient_id = "X X X " + rec.patient_id;
    psg.recording_id = "Startdate 01-JAN-2026 X X synthetic";
    psg.start = {2026, 1, 1, 22, 0, 0};
    psg.data_record_count = static_cast<std::int64_t>(labels.size());
    psg.record_duration = kEpochSeconds;
    psg.signals = {rec.eeg_spec, eeg_spec("EEG Pz-Oz", epoch_len)};
    psg.signal_count = psg.signals.size();
    rec.psg = out_dir / (std::string(stem) + "E0-PSG.edf");
    write_file(rec.psg, encode_edf(psg, {rec.eeg_digital, other}));

    const auto tal = encode_tal(rec.events);
    EdfHeader hyp;
    hyp.patient_id = psg.patient_id;
    hyp.recording_id = psg.recording_id;
    hyp.start = psg.start;
    hyp.reserved = "EDF+C";
    hyp.data_record_count = 1;
    hyp.record_duration = 0.0;
    SignalSpec ann;
    ann.label = "EDF Annotations";
    ann.physical_min = -1;
    ann.physical_max = 1;
    ann.digital_min = kDigMin;
    ann.digital_max = kDigMax;
    ann.samples_per_record = (tal.size() + 1) / 2;
    hyp.signals = {ann};
    hyp.signal_count = 1;
    rec.hypnogram = out_dir / (std::string(stem) + "EC-Hypnogram.edf");
    write_file(rec.hypnogram, encode_edf(hyp, {bytes_to_samples(tal, ann.samples_per_record)}));

    out.push_back(std::move(rec));
  }
  return out;
}

}  // namespace drts
