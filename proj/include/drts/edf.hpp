// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The DenseRTSleep Authors
//
// EDF / EDF+ reading and writing: fixed ASCII headers, 16-bit little-endian
// sample records and time-stamped annotation lists (TAL).

#ifndef DRTS_EDF_HPP
#define DRTS_EDF_HPP

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace drts {

enum class IngestErrc {
  TruncatedHeader,
  MalformedField,
  NoSuchChannel,
  LengthMismatch,
  DegenerateScale,
  MalformedTal,
  UnrecognizedLabel,
  CoverageGap,
  RateMismatch,
  MisalignedEvent,
  TooFewPatients,
  Io,
};

const char* to_string(IngestErrc code);

class IngestError : public std::runtime_error {
 public:
  IngestError(IngestErrc code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}
  IngestErrc code() const noexcept { return code_; }

 private:
  IngestErrc code_;
};

struct EdfTimestamp {
  int year = 1985, month = 1, day = 1;
  int hour = 0, minute = 0, second = 0;
  bool operator==(const EdfTimestamp&) const = default;
};

struct SignalSpec {
  std::string label;
  std::string transducer;
  std::string physical_dimension;
  double physical_min = 0.0;
  double physical_max = 0.0;
  int digital_min = 0;
  int digital_max = 0;
  std::string prefiltering;
  std::size_t samples_per_record = 0;

  bool is_annotation() const { return label == "EDF Annotations"; }
  bool operator==(const SignalSpec&) const = default;
};

struct EdfHeader {
  std::string version = "0";
  std::string patient_id;
  std::string recording_id;
  EdfTimestamp start;
  std::string reserved;  // "EDF+C" / "EDF+D" for EDF+
  std::size_t header_bytes = 0;
  std::int64_t data_record_count = 0;
  double record_duration = 0.0;  // seconds
  std::size_t signal_count = 0;
  std::vector<SignalSpec> signals;

  std::size_t record_bytes() const;
  // Index of the signal whose trimmed label equals `label`.
  std::optional<std::size_t> find_signal(const std::string& label) const;
  double sampling_rate(std::size_t signal) const;
  bool operator==(const EdfHeader&) const = default;
};

struct AnnotationEvent {
  double onset = 0.0;     // seconds from recording start
  double duration = 0.0;  // 0 when absent
  std::string label;
  bool operator==(const AnnotationEvent&) const = default;
};

/// Parses the fixed header and the per-signal headers. When `raw` extends
/// past the header it is taken to be the whole file, which lets an unknown
/// record count (-1) be resolved from the file size.
EdfHeader parse_edf_header(std::span<const std::uint8_t> raw);

/// Maps 16-bit little-endian digital samples to physical units.
std::vector<double> decode_samples(std::span<const std::uint8_t> record_bytes,
                                   const SignalSpec& spec);
double digital_to_physical(int digital, const SignalSpec& spec);

/// Decodes one TAL block (one annotation-signal record, or a concatenation of
/// several). Events are returned ordered by onset.
std::vector<AnnotationEvent> parse_annotations(std::span<const std::uint8_t> tal);

/// A whole EDF file held in memory.
class EdfFile {
 public:
  static EdfFile read(const std::filesystem::path& path);
  static EdfFile from_bytes(std::vector<std::uint8_t> bytes);

  const EdfHeader& header() const { return header_; }
  std::vector<std::int16_t> digital_samples(std::size_t signal) const;
  std::vector<double> physical_samples(std::size_t signal) const;
  // Events from every annotation signal, ordered by onset.
  std::vector<AnnotationEvent> annotations() const;

 private:
  std::span<const std::uint8_t> signal_block(std::int64_t record,
                                             std::size_t signal) const;
  EdfHeader header_;
  std::vector<std::uint8_t> bytes_;
};

/// Serialises a header plus per-signal digital samples (each signal holds
/// data_record_count * samples_per_record values). header_bytes and
/// signal_count are recomputed from `header.signals`.
std::vector<std::uint8_t> encode_edf(const EdfHeader& header,
                                     const std::vector<std::vector<std::int16_t>>& samples);

/// TAL encoding of `events`, preceded by the time-keeping annotation for
/// record onset `record_onset`.
std::vector<std::uint8_t> encode_tal(const std::vector<AnnotationEvent>& events,
                                     double record_onset = 0.0);
/// Packs bytes into 16-bit samples (little-endian), zero padded to `count`.
std::vector<std::int16_t> bytes_to_samples(std::span<const std::uint8_t> bytes,
                                           std::size_t count);

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> read_file(const std::filesystem::path& path);

}  // namespace drts

#endif  // DRTS_EDF_HPP
