// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The DenseRTSleep Authors

#include "drts/edf.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iterator>

namespace drts {

const char* to_string(IngestErrc code) {
  switch (code) {
    case IngestErrc::TruncatedHeader: return "TruncatedHeader";
    case IngestErrc::MalformedField: return "MalformedField";
    case IngestErrc::NoSuchChannel: return "NoSuchChannel";
    case IngestErrc::LengthMismatch: return "LengthMismatch";
    case IngestErrc::DegenerateScale: return "DegenerateScale";
    case IngestErrc::MalformedTal: return "MalformedTal";
    case IngestErrc::UnrecognizedLabel: return "UnrecognizedLabel";
    case IngestErrc::CoverageGap: return "CoverageGap";
    case IngestErrc::RateMismatch: return "RateMismatch";
    case IngestErrc::MisalignedEvent: return "MisalignedEvent";
    case IngestErrc::TooFewPatients: return "TooFewPatients";
    case IngestErrc::Io: return "Io";
  }
  return "Unknown";
}

namespace {

constexpr std::size_t kFixedHeader = 256;
constexpr std::size_t kPerSignal = 256;
constexpr char kTalDuration = 0x15;
constexpr char kTalSeparator = 0x14;

std::string trim(std::string s) {
  const auto not_space = [](unsigned char c) { return c != ' ' && c != '\0'; };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

class FieldReader {
 public:
  explicit FieldReader(std::span<const std::uint8_t> raw) : raw_(raw) {}

  std::string text(std::size_t len) {
    std::string s(raw_.begin() + static_cast<std::ptrdiff_t>(pos_),
                  raw_.begin() + static_cast<std::ptrdiff_t>(pos_ + len));
    pos_ += len;
    return trim(std::move(s));
  }

  long long integer(std::size_t len, const char* what) {
    const std::string s = text(len);
    std::size_t i = (!s.empty() && (s[0] == '+' || s[0] == '-')) ? 1 : 0;
    if (i == s.size() || !std::all_of(s.begin() + static_cast<std::ptrdiff_t>(i), s.end(),
                                      [](unsigned char c) { return std::isdigit(c); })) {
      throw IngestError(IngestErrc::MalformedField,
                        std::string(what) + " is not an integer: '" + s + "'");
    }
    return std::stoll(s);
  }

  double real(std::size_t len, const char* what) {
    const std::string s = text(len);
    char* end = nullptr;
    const double v = s.empty() ? 0.0 : std::strtod(s.c_str(), &end);
    if (s.empty() || end != s.c_str() + s.size() || !std::isfinite(v)) {
      throw IngestError(IngestErrc::MalformedField,
                        std::string(what) + " is not a number: '" + s + "'");
    }
    return v;
  }

 private:
  std::span<const std::uint8_t> raw_;
  std::size_t pos_ = 0;
};

void parse_triplet(const std::string& s, char sep, int& a, int& b, int& c,
                   const char* what) {
  int x = 0, y = 0, z = 0;
  char s1 = 0, s2 = 0;
  if (s.size() != 8 || std::sscanf(s.c_str(), "%2d%c%2d%c%2d", &x, &s1, &y, &s2, &z) != 5 ||
      s1 != sep || s2 != sep) {
    throw IngestError(IngestErrc::MalformedField,
                      std::string(what) + " must look like nn" + sep + "nn" + sep +
                          "nn, got '" + s + "'");
  }
  a = x;
  b = y;
  c = z;
}

std::string format_number(double v, std::size_t width) {
  char buf[64];
  for (int prec = static_cast<int>(width); prec >= 1; --prec) {
    std::snprintf(buf, sizeof buf, "%.*g", prec, v);
    if (std::char_traits<char>::length(buf) <= width) return buf;
  }
  throw IngestError(IngestErrc::MalformedField,
                    "value does not fit a " + std::to_string(width) + "-byte field");
}

void put_field(std::vector<std::uint8_t>& out, const std::string& s, std::size_t len) {
  if (s.size() > len) {
    throw IngestError(IngestErrc::MalformedField,
                      "'" + s + "' exceeds its " + std::to_string(len) + "-byte field");
  }
  out.insert(out.end(), s.begin(), s.end());
  out.insert(out.end(), len - s.size(), ' ');
}

std::string two_digits(int v) {
  char buf[8];
  std::snprintf(buf, sizeof buf, "%02d", v % 100);
  return buf;
}

std::string format_onset(double t, bool with_sign) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.9g", t);
  std::string s = buf;
  if (with_sign && t >= 0) s = "+" + s;
  return s;
}

bool is_tal_number(const std::string& s, bool sign_required) {
  std::size_t i = 0;
  if (!s.empty() && (s[0] == '+' || s[0] == '-')) {
    i = 1;
  } else if (sign_required) {
    return false;
  }
  bool digits = false, dot = false;
  for (; i < s.size(); ++i) {
    if (std::isdigit(static_cast<unsigned char>(s[i]))) {
      digits = true;
    } else if (s[i] == '.' && !dot) {
      dot = true;
    } else {
      return false;
    }
  }
  return digits;
}

}  // namespace

std::size_t EdfHeader::record_bytes() const {
  std::size_t n = 0;
  for (const auto& s : signals) n += 2 * s.samples_per_record;
  return n;
}

std::optional<std::size_t> EdfHeader::find_signal(const std::string& label) const {
  const std::string want = trim(label);
  for (std::size_t i = 0; i < signals.size(); ++i) {
    if (trim(signals[i].label) == want) return i;
  }
  return std::nullopt;
}

double EdfHeader::sampling_rate(std::size_t signal) const {
  if (record_duration <= 0.0) {
    throw IngestError(IngestErrc::RateMismatch,
                      "record duration is zero; sampling rate undefined");
  }
  return static_cast<double>(signals.at(signal).samples_per_record) / record_duration;
}

EdfHeader parse_edf_header(std::span<const std::uint8_t> raw) {
  if (raw.size() < kFixedHeader) {
    throw IngestError(IngestErrc::TruncatedHeader,
                      "need 256 bytes, have " + std::to_string(raw.size()));
  }
  EdfHeader h;
  FieldReader f(raw);
  h.version = f.text(8);
  h.patient_id = f.text(80);
  h.recording_id = f.text(80);
  parse_triplet(f.text(8), '.', h.start.day, h.start.month, h.start.year, "start date");
  h.start.year += h.start.year >= 85 ? 1900 : 2000;
  parse_triplet(f.text(8), '.', h.start.hour, h.start.minute, h.start.second, "start time");
  const long long header_bytes = f.integer(8, "header byte count");
  h.reserved = f.text(44);
  const long long records = f.integer(8, "data record count");
  h.record_duration = f.real(8, "data record duration");
  const long long ns = f.integer(4, "signal count");
  if (ns < 0) throw IngestError(IngestErrc::MalformedField, "negative signal count");
  h.signal_count = static_cast<std::size_t>(ns);
  if (header_bytes != static_cast<long long>(kFixedHeader + kPerSignal * h.signal_count)) {
    throw IngestError(IngestErrc::MalformedField,
                      "header byte count " + std::to_string(header_bytes) +
                          " inconsistent with " + std::to_string(ns) + " signals");
  }
  h.header_bytes = static_cast<std::size_t>(header_bytes);
  if (raw.size() < h.header_bytes) {
    throw IngestError(IngestErrc::TruncatedHeader,
                      "signal headers need " + std::to_string(h.header_bytes) +
                          " bytes, have " + std::to_string(raw.size()));
  }

  FieldReader sf(raw.subspan(kFixedHeader));
  h.signals.resize(h.signal_count);
  for (auto& s : h.signals) s.label = sf.text(16);
  for (auto& s : h.signals) s.transducer = sf.text(80);
  for (auto& s : h.signals) s.physical_dimension = sf.text(8);
  for (auto& s : h.signals) s.physical_min = sf.real(8, "physical minimum");
  for (auto& s : h.signals) s.physical_max = sf.real(8, "physical maximum");
  for (auto& s : h.signals) s.digital_min = static_cast<int>(sf.integer(8, "digital minimum"));
  for (auto& s : h.signals) s.digital_max = static_cast<int>(sf.integer(8, "digital maximum"));
  for (auto& s : h.signals) s.prefiltering = sf.text(80);
  for (auto& s : h.signals) {
    const long long spr = sf.integer(8, "samples per record");
    if (spr <= 0) {
      throw IngestError(IngestErrc::MalformedField,
                        "signal '" + s.label + "' has no samples per record");
    }
    s.samples_per_record = static_cast<std::size_t>(spr);
  }

  bool annotation_only = true;
  for (const auto& s : h.signals) {
    annotation_only = annotation_only && s.is_annotation();
    if (s.digital_min >= s.digital_max) {
      throw IngestError(IngestErrc::MalformedField,
                        "signal '" + s.label + "' digital range is empty");
    }
    if (s.physical_min == s.physical_max) {
      throw IngestError(IngestErrc::MalformedField,
                        "signal '" + s.label + "' physical range is empty");
    }
  }
  // Annotation-only EDF+ files (e.g. hypnograms) may declare a zero duration.
  if (h.record_duration < 0.0 || (h.record_duration == 0.0 && !annotation_only)) {
    throw IngestError(IngestErrc::MalformedField, "data record duration must be positive");
  }

  if (records == -1) {
    const std::size_t rb = h.record_bytes();
    if (raw.size() <= h.header_bytes || rb == 0) {
      throw IngestError(IngestErrc::MalformedField,
                        "record count is unknown (-1) and no file body is available");
    }
    h.data_record_count = static_cast<std::int64_t>((raw.size() - h.header_bytes) / rb);
  } else if (records < 0) {
    throw IngestError(IngestErrc::MalformedField, "negative data record count");
  } else {
    h.data_record_count = records;
  }
  return h;
}

double digital_to_physical(int digital, const SignalSpec& spec) {
  return (static_cast<double>(digital) - spec.digital_min) *
             (spec.physical_max - spec.physical_min) /
             (static_cast<double>(spec.digital_max) - spec.digital_min) +
         spec.physical_min;
}

std::vector<double> decode_samples(std::span<const std::uint8_t> record_bytes,
                                   const SignalSpec& spec) {
  if (record_bytes.size() != 2 * spec.samples_per_record) {
    throw IngestError(IngestErrc::LengthMismatch,
                      "expected " + std::to_string(2 * spec.samples_per_record) +
                          " bytes, got " + std::to_string(record_bytes.size()));
  }
  if (spec.digital_min == spec.digital_max) {
    throw IngestError(IngestErrc::DegenerateScale,
                      "signal '" + spec.label + "' has digital_min == digital_max");
  }
  std::vector<double> out(spec.samples_per_record);
  for (std::size_t i = 0; i < out.size(); ++i) {
    const auto lo = record_bytes[2 * i];
    const auto hi = record_bytes[2 * i + 1];
    const auto d = static_cast<std::int16_t>(static_cast<std::uint16_t>(lo | (hi << 8)));
    out[i] = digital_to_physical(d, spec);
  }
  return out;
}

std::vector<AnnotationEvent> parse_annotations(std::span<const std::uint8_t> tal) {
  std::vector<AnnotationEvent> events;
  std::size_t i = 0;
  const std::size_t n = tal.size();
  auto read_until = [&](auto stop) {
    std::string s;
    while (i < n && !stop(static_cast<char>(tal[i]))) s.push_back(static_cast<char>(tal[i++]));
    return s;
  };
  while (i < n) {
    if (tal[i] == 0) {
      ++i;
      continue;
    }
    const std::string onset_text =
        read_until([](char c) { return c == kTalDuration || c == kTalSeparator || c == 0; });
    if (i >= n || tal[i] == 0) {
      throw IngestError(IngestErrc::MalformedTal, "onset '" + onset_text + "' is not terminated");
    }
    if (!is_tal_number(onset_text, true)) {
      throw IngestError(IngestErrc::MalformedTal, "non-numeric onset '" + onset_text + "'");
    }
    const double onset = std::strtod(onset_text.c_str(), nullptr);
    if (onset < 0.0) {
      throw IngestError(IngestErrc::MalformedTal, "negative onset " + onset_text);
    }
    double duration = 0.0;
    if (tal[i] == kTalDuration) {
      ++i;
      const std::string dur_text = read_until([](char c) { return c == kTalSeparator || c == 0; });
      if (i >= n || tal[i] != kTalSeparator || !is_tal_number(dur_text, false)) {
        throw IngestError(IngestErrc::MalformedTal, "bad duration '" + dur_text + "'");
      }
      duration = std::strtod(dur_text.c_str(), nullptr);
    }
    ++i;  // the 0x14 closing the time stamp
    bool terminated = false;
    while (i < n) {
      if (tal[i] == 0) {
        terminated = true;
        ++i;
        break;
      }
      std::string label = read_until([](char c) { return c == kTalSeparator || c == 0; });
      if (i >= n || tal[i] != kTalSeparator) {
        throw IngestError(IngestErrc::MalformedTal, "label '" + label + "' is not terminated");
      }
      ++i;
      if (!label.empty()) events.push_back({onset, duration, std::move(label)});
    }
    if (!terminated) {
      throw IngestError(IngestErrc::MalformedTal, "annotation list missing its 0x00 terminator");
    }
  }
  std::stable_sort(events.begin(), events.end(),
                   [](const AnnotationEvent& a, const AnnotationEvent& b) { return a.onset < b.onset; });
  return events;
}

EdfFile EdfFile::read(const std::filesystem::path& path) {
  return from_bytes(read_file(path));
}

EdfFile EdfFile::from_bytes(std::vector<std::uint8_t> bytes) {
  EdfFile f;
  f.header_ = parse_edf_header(bytes);
  const std::size_t need =
      f.header_.header_bytes +
      static_cast<std::size_t>(f.header_.data_record_count) * f.header_.record_bytes();
  if (bytes.size() < need) {
    throw IngestError(IngestErrc::LengthMismatch,
                      "file holds " + std::to_string(bytes.size()) + " bytes, header declares " +
                          std::to_string(need));
  }
  f.bytes_ = std::move(bytes);
  return f;
}

std::span<const std::uint8_t> EdfFile::signal_block(std::int64_t record,
                                                    std::size_t signal) const {
  std::size_t off = header_.header_bytes + static_cast<std::size_t>(record) * header_.record_bytes();
  for (std::size_t s = 0; s < signal; ++s) off += 2 * header_.signals[s].samples_per_record;
  return std::span<const std::uint8_t>(bytes_).subspan(off, 2 * header_.signals[signal].samples_per_record);
}

std::vector<std::int16_t> EdfFile::digital_samples(std::size_t signal) const {
  std::vector<std::int16_t> out;
  out.reserve(static_cast<std::size_t>(header_.data_record_count) *
              header_.signals.at(signal).samples_per_record);
  for (std::int64_t r = 0; r < header_.data_record_count; ++r) {
    auto block = signal_block(r, signal);
    for (std::size_t i = 0; i + 1 < block.size(); i += 2) {
      out.push_back(static_cast<std::int16_t>(
          static_cast<std::uint16_t>(block[i] | (block[i + 1] << 8))));
    }
  }
  return out;
}

std::vector<double> EdfFile::physical_samples(std::size_t signal) const {
  const SignalSpec& spec = header_.signals.at(signal);
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(header_.data_record_count) * spec.samples_per_record);
  for (std::int64_t r = 0; r < header_.data_record_count; ++r) {
    auto v = decode_samples(signal_block(r, signal), spec);
    out.insert(out.end(), v.begin(), v.end());
  }
  return out;
}

std::vector<AnnotationEvent> EdfFile::annotations() const {
  std::vector<AnnotationEvent> all;
  for (std::size_t s = 0; s < header_.signals.size(); ++s) {
    if (!header_.signals[s].is_annotation()) continue;
    for (std::int64_t r = 0; r < header_.data_record_count; ++r) {
      auto ev = parse_annotations(signal_block(r, s));
      all.insert(all.end(), std::make_move_iterator(ev.begin()), std::make_move_iterator(ev.end()));
    }
  }
  std::stable_sort(all.begin(), all.end(),
                   [](const AnnotationEvent& a, const AnnotationEvent& b) { return a.onset < b.onset; });
  return all;
}

std::vector<std::uint8_t> encode_edf(const EdfHeader& header,
                                     const std::vector<std::vector<std::int16_t>>& samples) {
  if (samples.size() != header.signals.size()) {
    throw IngestError(IngestErrc::LengthMismatch, "one sample vector per signal required");
  }
  const std::size_t ns = header.signals.size();
  std::vector<std::uint8_t> out;
  out.reserve(kFixedHeader + kPerSignal * ns);
  put_field(out, header.version, 8);
  put_field(out, header.patient_id, 80);
  put_field(out, header.recording_id, 80);
  put_field(out, two_digits(header.start.day) + "." + two_digits(header.start.month) + "." +
                     two_digits(header.start.year), 8);
  put_field(out, two_digits(header.start.hour) + "." + two_digits(header.start.minute) + "." +
                     two_digits(header.start.second), 8);
  put_field(out, std::to_string(kFixedHeader + kPerSignal * ns), 8);
  put_field(out, header.reserved, 44);
  put_field(out, std::to_string(header.data_record_count), 8);
  put_field(out, format_number(header.record_duration, 8), 8);
  put_field(out, std::to_string(ns), 4);
  for (const auto& s : header.signals) put_field(out, s.label, 16);
  for (const auto& s : header.signals) put_field(out, s.transducer, 80);
  for (const auto& s : header.signals) put_field(out, s.physical_dimension, 8);
  for (const auto& s : header.signals) put_field(out, format_number(s.physical_min, 8), 8);
  for (const auto& s : header.signals) put_field(out, format_number(s.physical_max, 8), 8);
  for (const auto& s : header.signals) put_field(out, std::to_string(s.digital_min), 8);
  for (const auto& s : header.signals) put_field(out, std::to_string(s.digital_max), 8);
  for (const auto& s : header.signals) put_field(out, s.prefiltering, 80);
  for (const auto& s : header.signals) put_field(out, std::to_string(s.samples_per_record), 8);
  for (std::size_t i = 0; i < ns; ++i) put_field(out, "", 32);

  const auto records = static_cast<std::size_t>(std::max<std::int64_t>(header.data_record_count, 0));
  for (std::size_t i = 0; i < ns; ++i) {
    if (samples[i].size() != records * header.signals[i].samples_per_record) {
      throw IngestError(IngestErrc::LengthMismatch,
                        "signal '" + header.signals[i].label + "' has " +
                            std::to_string(samples[i].size()) + " samples, expected " +
                            std::to_string(records * header.signals[i].samples_per_record));
    }
  }
  for (std::size_t r = 0; r < records; ++r) {
    for (std::size_t i = 0; i < ns; ++i) {
      const std::size_t spr = header.signals[i].samples_per_record;
      for (std::size_t k = 0; k < spr; ++k) {
        const auto u = static_cast<std::uint16_t>(samples[i][r * spr + k]);
        out.push_back(static_cast<std::uint8_t>(u & 0xff));
        out.push_back(static_cast<std::uint8_t>(u >> 8));
      }
    }
  }
  return out;
}

std::vector<std::uint8_t> encode_tal(const std::vector<AnnotationEvent>& events,
                                     double record_onset) {
  std::vector<std::uint8_t> out;
  auto put = [&](const std::string& s) { out.insert(out.end(), s.begin(), s.end()); };
  put(format_onset(record_onset, true));
  out.push_back(kTalSeparator);
  out.push_back(kTalSeparator);
  out.push_back(0);
  for (const auto& e : events) {
    put(format_onset(e.onset, true));
    if (e.duration > 0.0) {
      out.push_back(kTalDuration);
      put(format_onset(e.duration, false));
    }
    out.push_back(kTalSeparator);
    put(e.label);
    out.push_back(kTalSeparator);
    out.push_back(0);
  }
  return out;
}

std::vector<std::int16_t> bytes_to_samples(std::span<const std::uint8_t> bytes,
                                           std::size_t count) {
  if (bytes.size() > 2 * count) {
    throw IngestError(IngestErrc::LengthMismatch, "annotation bytes exceed the signal capacity");
  }
  std::vector<std::int16_t> out(count, 0);
  for (std::size_t i = 0; i < bytes.size(); ++i) {
    auto u = static_cast<std::uint16_t>(out[i / 2]);
    u = static_cast<std::uint16_t>(u | (static_cast<std::uint16_t>(bytes[i]) << (8 * (i % 2))));
    out[i / 2] = static_cast<std::int16_t>(u);
  }
  return out;
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IngestError(IngestErrc::Io, "cannot open " + path.string() + " for writing");
  os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw IngestError(IngestErrc::Io, "short write to " + path.string());
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IngestError(IngestErrc::Io, "cannot open " + path.string());
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(is), {});
}

}  // namespace drts
