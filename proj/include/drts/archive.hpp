// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The DenseRTSleep Authors
//
// Epoch archive on disk:
//   manifest.json  sampling rate, channel, class counts, patients, recordings
//   epochs.f64     float64 little-endian, row-major [epoch x sample]
//   labels.u8      one stage byte per epoch (0=W 1=N1 2=N2 3=N3 4=REM)

#ifndef DRTS_ARCHIVE_HPP
#define DRTS_ARCHIVE_HPP

#include <filesystem>

#include "drts/ingest.hpp"

namespace drts {

void write_epoch_archive(const EpochDataset& dataset, const std::filesystem::path& dir);
EpochDataset read_epoch_archive(const std::filesystem::path& dir);

}  // namespace drts

#endif  // DRTS_ARCHIVE_HPP
