// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The DenseRTSleep Authors

#include "drts/archive.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include <json.hpp>

namespace drts {
namespace {

static_assert(std::endian::native == std::endian::little,
              "archive I/O assumes a little-endian host");

using nlohmann::json;

}  // namespace

void write_epoch_archive(const EpochDataset& dataset, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const std::size_t spe = dataset.samples_per_epoch();

  json manifest;
  manifest["format"] = "drts-epochs";
  manifest["version"] = 1;
  manifest["sampling_rate"] = dataset.sampling_rate;
  manifest["channel"] = dataset.channel_label;
  manifest["samples_per_epoch"] = spe;
  manifest["epoch_count"] = dataset.epochs.size();
  manifest["patients"] = dataset.patient_ids();
  const ClassCounts counts = class_distribution(dataset);
  json cc = json::object();
  for (std::size_t i = 0; i < kStageCount; ++i) {
    cc[stage_name(static_cast<SleepStage>(i))] = counts[i];
  }
  manifest["class_counts"] = cc;

  // Consecutive epochs sharing a recording form one run.
  json recordings = json::array();
  for (std::size_t i = 0; i < dataset.epochs.size();) {
    const auto& first = dataset.epochs[i];
    json rec;
    rec["recording"] = first.recording_id;
    rec["patient"] = first.patient_id;
    rec["first_epoch"] = i;
    std::vector<std::size_t> indices;
    while (i < dataset.epochs.size() && dataset.epochs[i].recording_id == first.recording_id &&
           dataset.epochs[i].patient_id == first.patient_id) {
      indices.push_back(dataset.epochs[i].epoch_index);
      ++i;
    }
    rec["epoch_count"] = indices.size();
    rec["epoch_indices"] = indices;
    recordings.push_back(std::move(rec));
  }
  manifest["recordings"] = recordings;

  std::ofstream(dir / "manifest.json") << manifest.dump(2) << '\n';

  std::ofstream samples(dir / "epochs.f64", std::ios::binary | std::ios::trunc);
  std::ofstream labels(dir / "labels.u8", std::ios::binary | std::ios::trunc);
  if (!samples || !labels) {
    throw IngestError(IngestErrc::Io, "cannot write archive in " + dir.string());
  }
  for (const auto& e : dataset.epochs) {
    if (e.samples.size() != spe) {
      throw IngestError(IngestErrc::LengthMismatch, "epochs of unequal length in dataset");
    }
    samples.write(reinterpret_cast<const char*>(e.samples.data()),
                  static_cast<std::streamsize>(spe * sizeof(double)));
    const char label = static_cast<char>(stage_index(e.stage));
    labels.write(&label, 1);
  }
  if (!samples || !labels) throw IngestError(IngestErrc::Io, "short write in " + dir.string());
}

EpochDataset read_epoch_archive(const std::filesystem::path& dir) {
  std::ifstream mf(dir / "manifest.json");
  if (!mf) throw IngestError(IngestErrc::Io, "no manifest.json in " + dir.string());
  json manifest;
  try {
    mf >> manifest;
  } catch (const json::exception& ex) {
    throw IngestError(IngestErrc::MalformedField, std::string("manifest.json: ") + ex.what());
  }
  if (manifest.value("format", "") != "drts-epochs") {
    throw IngestError(IngestErrc::MalformedField, "manifest.json is not an epoch archive");
  }
  EpochDataset ds;
  ds.sampling_rate = manifest.at("sampling_rate").get<double>();
  ds.channel_label = manifest.at("channel").get<std::string>();
  const auto spe = manifest.at("samples_per_epoch").get<std::size_t>();
  const auto count = manifest.at("epoch_count").get<std::size_t>();

  const auto raw = read_file(dir / "epochs.f64");
  const auto labels = read_file(dir / "labels.u8");
  if (raw.size() != count * spe * sizeof(double) || labels.size() != count) {
    throw IngestError(IngestErrc::LengthMismatch,
                      "archive payload does not match manifest epoch count " + std::to_string(count));
  }
  ds.epochs.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    auto& e = ds.epochs[i];
    e.samples.resize(spe);
    std::memcpy(e.samples.data(), raw.data() + i * spe * sizeof(double), spe * sizeof(double));
    if (labels[i] >= kStageCount) {
      throw IngestError(IngestErrc::MalformedField, "label byte out of range at epoch " +
                                                        std::to_string(i));
    }
    e.stage = static_cast<SleepStage>(labels[i]);
  }
  for (const auto& rec : manifest.at("recordings")) {
    const auto first = rec.at("first_epoch").get<std::size_t>();
    const auto indices = rec.at("epoch_indices").get<std::vector<std::size_t>>();
    if (first + indices.size() > count) {
      throw IngestError(IngestErrc::MalformedField, "recording runs past the epoch count");
    }
    for (std::size_t k = 0; k < indices.size(); ++k) {
      auto& e = ds.epochs[first + k];
      e.patient_id = rec.at("patient").get<std::string>();
      e.recording_id = rec.at("recording").get<std::string>();
      e.epoch_index = indices[k];
    }
  }
  return ds;
}

}  // namespace drts
