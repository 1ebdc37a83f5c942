// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The DenseRTSleep Authors

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <set>
#include <string>

#include "drts/archive.hpp"
#include "drts/edf.hpp"
#include "drts/ingest.hpp"
#include "drts/rng.hpp"
#include "drts/synth.hpp"

using namespace drts;
namespace fs = std::filesystem;

namespace {

std::vector<std::uint8_t> bytes_of(const std::string& s) { return {s.begin(), s.end()}; }

SignalSpec make_spec(const std::string& label, std::size_t spr) {
  SignalSpec s;
  s.label = label;
  s.transducer = "AgAgCl";
  s.physical_dimension = "uV";
  s.physical_min = -100;
  s.physical_max = 100;
  s.digital_min = -32768;
  s.digital_max = 32767;
  s.samples_per_record = spr;
  return s;
}

EdfHeader two_signal_header() {
  EdfHeader h;
  h.patient_id = "P1";
  h.recording_id = "R1";
  h.start = {2026, 3, 14, 23, 5, 9};
  h.data_record_count = 2;
  h.record_duration = 30;
  h.signals = {make_spec("EEG Fpz-Cz", 4), make_spec("EEG Pz-Oz", 2)};
  h.signal_count = 2;
  h.header_bytes = 768;
  return h;
}

fs::path temp_dir(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("drts_test_ingest_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

}  // namespace

TEST_CASE("parse_edf_header") {
  const EdfHeader h = two_signal_header();
  const auto bytes = encode_edf(h, {{1, 2, 3, 4, 5, 6, 7, 8}, {-1, -2, -3, -4}});

  SUBCASE("two-signal header") {
    const EdfHeader parsed = parse_edf_header(bytes);
    CHECK(parsed.signal_count == 2);
    CHECK(parsed.header_bytes == 768);
    CHECK(std::string(bytes.begin() + 184, bytes.begin() + 192) == "768     ");
    CHECK(parsed.find_signal("EEG Fpz-Cz") == std::optional<std::size_t>(0));
    CHECK(parsed.find_signal("  EEG Pz-Oz ") == std::optional<std::size_t>(1));
    CHECK_FALSE(parsed.find_signal("EOG horizontal"));
  }
  SUBCASE("writer round trip is field-for-field equal") {
    CHECK(parse_edf_header(bytes) == h);
  }
  SUBCASE("unknown record count resolved from file size") {
    auto copy = bytes;
    const std::string minus_one = "-1      ";
    std::copy(minus_one.begin(), minus_one.end(), copy.begin() + 236);
    CHECK(parse_edf_header(copy).data_record_count == 2);
    std::vector<std::uint8_t> header_only(copy.begin(), copy.begin() + 768);
    CHECK_THROWS_AS(parse_edf_header(header_only), IngestError);
  }
  SUBCASE("truncated input") {
    std::vector<std::uint8_t> shorty(bytes.begin(), bytes.begin() + 255);
    try {
      parse_edf_header(shorty);
      FAIL("expected TruncatedHeader");
    } catch (const IngestError& e) {
      CHECK(e.code() == IngestErrc::TruncatedHeader);
    }
    std::vector<std::uint8_t> half(bytes.begin(), bytes.begin() + 500);
    CHECK_THROWS_AS(parse_edf_header(half), IngestError);
  }
  SUBCASE("non-numeric field") {
    auto copy = bytes;
    const std::string junk = "abc     ";
    std::copy(junk.begin(), junk.end(), copy.begin() + 244);  // record duration
    try {
      parse_edf_header(copy);
      FAIL("expected MalformedField");
    } catch (const IngestError& e) {
      CHECK(e.code() == IngestErrc::MalformedField);
    }
  }
  SUBCASE("header byte count must match the signal count") {
    auto copy = bytes;
    const std::string wrong = "512     ";
    std::copy(wrong.begin(), wrong.end(), copy.begin() + 184);
    CHECK_THROWS_AS(parse_edf_header(copy), IngestError);
  }
  SUBCASE("samples decode from the file body") {
    const EdfFile f = EdfFile::from_bytes(bytes);
    CHECK(f.digital_samples(0) == std::vector<std::int16_t>{1, 2, 3, 4, 5, 6, 7, 8});
    CHECK(f.digital_samples(1) == std::vector<std::int16_t>{-1, -2, -3, -4});
    CHECK(f.header().sampling_rate(0) == doctest::Approx(4.0 / 30.0));
  }
}

TEST_CASE("decode_samples") {
  SignalSpec spec = make_spec("EEG Fpz-Cz", 3);
  auto le = [](std::initializer_list<int> v) {
    std::vector<std::uint8_t> out;
    for (int d : v) {
      const auto u = static_cast<std::uint16_t>(static_cast<std::int16_t>(d));
      out.push_back(static_cast<std::uint8_t>(u & 0xff));
      out.push_back(static_cast<std::uint8_t>(u >> 8));
    }
    return out;
  };
  const auto phys = decode_samples(le({-32768, 32767, 0}), spec);
  CHECK(phys[0] == -100.0);
  CHECK(phys[1] == 100.0);
  CHECK(phys[2] == doctest::Approx(0.0015259021896696368).epsilon(1e-12));

  CHECK_THROWS_AS(decode_samples(le({1, 2}), spec), IngestError);
  SignalSpec flat = spec;
  flat.digital_max = flat.digital_min;
  try {
    decode_samples(le({1, 2, 3}), flat);
    FAIL("expected DegenerateScale");
  } catch (const IngestError& e) {
    CHECK(e.code() == IngestErrc::DegenerateScale);
  }
}

TEST_CASE("parse_annotations") {
  SUBCASE("zero padding only") {
    std::vector<std::uint8_t> pad(64, 0);
    CHECK(parse_annotations(pad).empty());
  }
  SUBCASE("single annotation with duration") {
    const auto ev = parse_annotations(bytes_of(std::string("+0\x15" "30\x14Sleep stage W\x14\0", 22)));
    REQUIRE(ev.size() == 1);
    CHECK(ev[0] == AnnotationEvent{0.0, 30.0, "Sleep stage W"});
  }
  SUBCASE("time-keeping entries carry no label and are skipped") {
    const auto ev = parse_annotations(bytes_of(std::string("+0\x14\x14\0+30\x14Sleep stage 2\x14\0", 24)));
    REQUIRE(ev.size() == 1);
    CHECK(ev[0].onset == 30.0);
    CHECK(ev[0].duration == 0.0);
  }
  SUBCASE("all eight raw labels round-trip through the encoder") {
    std::vector<AnnotationEvent> events;
    double t = 0;
    for (auto label : raw_stage_labels()) {
      events.push_back({t, 60, std::string(label)});
      t += 60;
    }
    auto tal = encode_tal(events);
    tal.resize(tal.size() + 10, 0);
    CHECK(parse_annotations(tal) == events);
  }
  SUBCASE("events are ordered by onset") {
    const auto ev = parse_annotations(
        bytes_of(std::string("+60\x15" "30\x14Sleep stage 1\x14\0+0\x15" "30\x14Sleep stage W\x14\0", 44)));
    REQUIRE(ev.size() == 2);
    CHECK(ev[0].label == "Sleep stage W");
  }
  SUBCASE("malformed lists") {
    auto code_of = [](const std::string& s) {
      try {
        parse_annotations(bytes_of(s));
      } catch (const IngestError& e) {
        return e.code();
      }
      return IngestErrc::Io;
    };
    CHECK(code_of(std::string("+0\x15" "30\x14Sleep stage W\x14", 20)) == IngestErrc::MalformedTal);
    CHECK(code_of(std::string("+x\x14Sleep stage W\x14\0", 18)) == IngestErrc::MalformedTal);
    CHECK(code_of(std::string("0\x14Sleep stage W\x14\0", 17)) == IngestErrc::MalformedTal);
  }
}

TEST_CASE("map_stage") {
  CHECK(map_stage("Sleep stage W") == SleepStage::W);
  CHECK(map_stage("Sleep stage 4") == SleepStage::N3);
  CHECK(map_stage("Sleep stage 3") == SleepStage::N3);
  CHECK(map_stage("Sleep stage R") == SleepStage::REM);
  CHECK_FALSE(map_stage("Movement time").has_value());
  CHECK_FALSE(map_stage("Sleep stage ?").has_value());
  CHECK_THROWS_AS(map_stage("Lights off"), IngestError);

  std::set<int> image;
  for (auto label : raw_stage_labels()) {
    auto s = map_stage(label);
    image.insert(s ? static_cast<int>(*s) : -1);
  }
  CHECK(image == std::set<int>{-1, 0, 1, 2, 3, 4});
}

TEST_CASE("segment_epochs") {
  SUBCASE("90 s of N2 at 100 Hz") {
    std::vector<double> sig(9000);
    for (std::size_t i = 0; i < sig.size(); ++i) sig[i] = static_cast<double>(i);
    const auto ds = segment_epochs(sig, 100.0, {{0, 90, "Sleep stage 2"}});
    REQUIRE(ds.epochs.size() == 3);
    for (std::size_t k = 0; k < 3; ++k) {
      CHECK(ds.epochs[k].stage == SleepStage::N2);
      CHECK(ds.epochs[k].samples.size() == 3000);
      CHECK(ds.epochs[k].samples.front() == static_cast<double>(k * 3000));
      CHECK(ds.epochs[k].epoch_index == k);
    }
  }
  SUBCASE("movement contributes nothing") {
    std::vector<double> sig(6000, 1.0);
    CHECK(segment_epochs(sig, 100.0, {{0, 60, "Movement time"}}).epochs.empty());
  }
  SUBCASE("one W epoch") {
    std::vector<double> sig(3000, 0.5);
    const auto ds = segment_epochs(sig, 100.0, {{0, 30, "Sleep stage W"}});
    REQUIRE(ds.epochs.size() == 1);
    CHECK(ds.epochs[0].stage == SleepStage::W);
  }
  SUBCASE("annotation past the signal end") {
    std::vector<double> sig(3000, 0.5);
    try {
      segment_epochs(sig, 100.0, {{0, 60, "Sleep stage W"}});
      FAIL("expected CoverageGap");
    } catch (const IngestError& e) {
      CHECK(e.code() == IngestErrc::CoverageGap);
    }
    // An excluded tail may overrun.
    CHECK(segment_epochs(sig, 100.0, {{0, 30, "Sleep stage W"}, {30, 600, "Sleep stage ?"}})
              .epochs.size() == 1);
  }
  SUBCASE("rate without whole epochs") {
    std::vector<double> sig(3000, 0.5);
    try {
      segment_epochs(sig, 100.01, {{0, 30, "Sleep stage W"}});
      FAIL("expected RateMismatch");
    } catch (const IngestError& e) {
      CHECK(e.code() == IngestErrc::RateMismatch);
    }
  }
  SUBCASE("conservation: labelled seconds / 30 = epoch count") {
    Rng rng(8);
    for (int trial = 0; trial < 20; ++trial) {
      std::vector<AnnotationEvent> events;
      double t = 0, kept_seconds = 0;
      for (int e = 0; e < 12; ++e) {
        const double dur = 30.0 * static_cast<double>(1 + rng.below(4));
        const auto label = raw_stage_labels()[rng.below(8)];
        events.push_back({t, dur, std::string(label)});
        if (map_stage(label)) kept_seconds += dur;
        t += dur;
      }
      std::vector<double> sig(static_cast<std::size_t>(t * 10.0), 0.0);
      const auto ds = segment_epochs(sig, 10.0, events);
      CHECK(ds.epochs.size() == static_cast<std::size_t>(kept_seconds / 30.0));
    }
  }
}

TEST_CASE("split_by_patient") {
  auto ids = [](std::size_t n) {
    std::vector<std::string> v;
    for (std::size_t i = 0; i < n; ++i) v.push_back("P" + std::to_string(100 + i));
    return v;
  };
  SUBCASE("canonical twenty") {
    const auto s = split_by_patient(ids(20), 0);
    CHECK(s.train.size() == 12);
    CHECK(s.validation.size() == 4);
    CHECK(s.test.size() == 4);
    const auto again = split_by_patient(ids(20), 0);
    CHECK(again.train == s.train);
    CHECK(again.validation == s.validation);
    CHECK(again.test == s.test);
    const auto other = split_by_patient(ids(20), 1);
    CHECK(other.train != s.train);
  }
  SUBCASE("ratio fallback for five") {
    const auto s = split_by_patient(ids(5), 0);
    CHECK(s.train.size() == 3);
    CHECK(s.validation.size() == 1);
    CHECK(s.test.size() == 1);
  }
  SUBCASE("partitions are disjoint and cover the input") {
    for (std::size_t n = 3; n <= 40; ++n) {
      for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const auto s = split_by_patient(ids(n), seed);
        std::multiset<std::string> all;
        for (const auto* part : {&s.train, &s.validation, &s.test}) {
          CHECK_FALSE(part->empty());
          all.insert(part->begin(), part->end());
        }
        const auto in = ids(n);
        CHECK(all == std::multiset<std::string>(in.begin(), in.end()));
      }
    }
  }
  SUBCASE("too few patients") {
    try {
      split_by_patient(ids(2), 0);
      FAIL("expected TooFewPatients");
    } catch (const IngestError& e) {
      CHECK(e.code() == IngestErrc::TooFewPatients);
    }
  }
}

TEST_CASE("class_distribution") {
  EpochDataset ds;
  CHECK(class_distribution(ds) == ClassCounts{0, 0, 0, 0, 0});
  for (auto s : {SleepStage::N2, SleepStage::N2, SleepStage::W, SleepStage::N2}) {
    ds.epochs.push_back({"p", "r", 0, {0.0}, s});
  }
  CHECK(class_distribution(ds) == ClassCounts{1, 0, 3, 0, 0});

  EpochDataset skewed;
  const std::size_t per_class[] = {40, 10, 120, 25, 30};
  for (std::size_t c = 0; c < 5; ++c)
    for (std::size_t i = 0; i < per_class[c]; ++i)
      skewed.epochs.push_back({"p", "r", i, {0.0}, static_cast<SleepStage>(c)});
  const auto counts = class_distribution(skewed);
  CHECK(std::max_element(counts.begin(), counts.end()) - counts.begin() == 2);
  std::size_t total = 0;
  for (auto c : counts) total += c;
  CHECK(total == skewed.epochs.size());
}

TEST_CASE("synthetic corpus round trip through ingest") {
  const fs::path dir = temp_dir("synth");
  SynthOptions opt;
  opt.patients = 3;
  opt.epochs_per_class = 2;
  const auto truth = write_synthetic_corpus(opt, dir);
  const auto pairing = pair_recordings(dir);
  CHECK(pairing.warnings.empty());
  REQUIRE(pairing.pairs.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    const auto& pair = pairing.pairs[i];
    const auto& rec = truth[i];
    CHECK(pair.patient_id == rec.patient_id);
    const EpochDataset ds = load_recording(pair);
    CHECK(ds.sampling_rate == 100.0);
    REQUIRE(ds.epochs.size() == rec.stages.size());
    CHECK(ds.epochs.size() == 10);
    const EdfFile psg = EdfFile::read(pair.psg);
    CHECK(psg.digital_samples(0) == rec.eeg_digital);
    for (const auto& e : ds.epochs) {
      CHECK(e.stage == rec.stages[&e - ds.epochs.data()]);
      for (std::size_t k = 0; k < e.samples.size(); ++k) {
        const int digital = rec.eeg_digital[e.epoch_index * 3000 + k];
        CHECK(e.samples[k] == digital_to_physical(digital, rec.eeg_spec));
      }
    }
    CHECK(EdfFile::read(pair.hypnogram).annotations() == rec.events);
  }

  SUBCASE("missing channel") {
    try {
      load_recording(pairing.pairs[0], "EEG Cz");
      FAIL("expected NoSuchChannel");
    } catch (const IngestError& e) {
      CHECK(e.code() == IngestErrc::NoSuchChannel);
    }
  }
  SUBCASE("archive round trip") {
    EpochDataset all;
    for (const auto& p : pairing.pairs) all.append(load_recording(p));
    write_epoch_archive(all, dir / "archive");
    const EpochDataset back = read_epoch_archive(dir / "archive");
    REQUIRE(back.epochs.size() == all.epochs.size());
    CHECK(back.sampling_rate == all.sampling_rate);
    CHECK(back.channel_label == all.channel_label);
    for (std::size_t i = 0; i < all.epochs.size(); ++i) {
      CHECK(back.epochs[i].samples == all.epochs[i].samples);
      CHECK(back.epochs[i].stage == all.epochs[i].stage);
      CHECK(back.epochs[i].patient_id == all.epochs[i].patient_id);
      CHECK(back.epochs[i].epoch_index == all.epochs[i].epoch_index);
    }
  }
  fs::remove_all(dir);
}
