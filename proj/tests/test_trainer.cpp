// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The DenseRTSleep Authors

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>

#include "drts/losses.hpp"
#include "drts/trainer.hpp"

using namespace drts;

namespace {

constexpr std::size_t kLen = 64;

// Class c is a sinusoid with 2(c+1) cycles per epoch, random phase and
// amplitude, plus noise.
EpochDataset sinusoids(std::size_t per_class, std::uint64_t seed, const std::string& patient = "P01") {
  Rng rng(seed);
  EpochDataset d;
  d.sampling_rate = 100.0;
  std::size_t index = 0;
  for (std::size_t i = 0; i < per_class; ++i) {
    for (std::size_t c = 0; c < kStageCount; ++c) {
      LabeledEpoch e;
      e.patient_id = patient;
      e.recording_id = patient + "R";
      e.epoch_index = index++;
      e.stage = static_cast<SleepStage>(c);
      const double phase = rng.uniform(0.0, 2 * std::numbers::pi);
      const double amp = rng.uniform(20.0, 60.0);
      e.samples.resize(kLen);
      for (std::size_t t = 0; t < kLen; ++t) {
        e.samples[t] = amp * std::sin(2 * std::numbers::pi * 2.0 * static_cast<double>(c + 1) *
                                          static_cast<double>(t) / kLen + phase) +
                       2.0 * rng.normal();
      }
      d.epochs.push_back(std::move(e));
    }
  }
  return d;
}

TrainConfig small_train(ModelVariant v = ModelVariant::DenseRTSleepII) {
  TrainConfig t;
  t.variant = v;
  t.batch_size = 8;
  t.max_epochs = 1000;
  t.max_steps = 20;
  t.seed = 5;
  return t;
}

std::vector<double> flat_params(const Model& m) {
  std::vector<double> out;
  for (const auto& p : m.parameters()) out.insert(out.end(), p.tensor.values().begin(), p.tensor.values().end());
  return out;
}

bool same_history(const std::vector<HistoryRow>& a, const std::vector<HistoryRow>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const auto& x = a[i];
    const auto& y = b[i];
    const bool val = (std::isnan(x.val_accuracy) && std::isnan(y.val_accuracy)) || x.val_accuracy == y.val_accuracy;
    if (x.step != y.step || x.epoch != y.epoch || x.total != y.total || x.ce != y.ce || x.kl != y.kl ||
        x.contrastive != y.contrastive || !val) {
      return false;
    }
  }
  return true;
}

}  // namespace

TEST_CASE("standardize_epoch and prepare_set") {
  std::vector<double> v{1, 2, 3, 4};
  standardize_epoch(v);
  CHECK(v[0] == doctest::Approx(-1.3416407864998738));
  CHECK(v[3] == doctest::Approx(1.3416407864998738));
  std::vector<double> flat{5, 5, 5};
  standardize_epoch(flat);
  CHECK(flat == std::vector<double>{0, 0, 0});

  const EpochDataset d = sinusoids(2, 1);
  const PreparedSet p = prepare_set(d, kLen, true);
  CHECK(p.n == 10);
  CHECK(p.labels[3] == 3);
  double mean = 0;
  for (std::size_t t = 0; t < kLen; ++t) mean += p.x[t];
  CHECK(std::abs(mean) < 1e-12);
  CHECK_THROWS_AS(prepare_set(d, kLen + 1, true), AutogradError);
  CHECK_THROWS_AS(prepare_set(EpochDataset{}, kLen, true), TrainEvalError);
}

TEST_CASE("lr = 0 leaves every parameter unchanged") {
  Model m(ModelConfig::gradcheck(), 1);
  const auto before = flat_params(m);
  TrainConfig cfg = small_train();
  cfg.optimizer.lr = 0.0;
  cfg.max_steps = 6;
  Trainer t(m, cfg, prepare_set(sinusoids(3, 2), kLen, true));
  t.run();
  CHECK(t.progress().step == 6);
  CHECK(flat_params(m) == before);
}

TEST_CASE("same seed gives bitwise identical trajectories") {
  auto run = [](std::uint64_t seed) {
    Model m(ModelConfig::gradcheck(), seed);
    TrainConfig cfg = small_train();
    cfg.seed = seed;
    Trainer t(m, cfg, prepare_set(sinusoids(3, 2), kLen, true), prepare_set(sinusoids(1, 3), kLen, true));
    t.run();
    return std::pair{t.progress().history, flat_params(m)};
  };
  const auto a = run(11), b = run(11), c = run(12);
  CHECK(same_history(a.first, b.first));
  CHECK(a.second == b.second);
  CHECK_FALSE(same_history(a.first, c.first));
}

TEST_CASE("batching, passes and validation") {
  Model m(ModelConfig::gradcheck(), 4);
  TrainConfig cfg = small_train();
  cfg.batch_size = 4;
  cfg.max_steps = 0;
  cfg.max_epochs = 3;
  // 15 training epochs: batches of 4, 4, 4, 3 per pass.
  Trainer t(m, cfg, prepare_set(sinusoids(3, 2), kLen, true), prepare_set(sinusoids(1, 3), kLen, true));
  t.run();
  const auto& h = t.progress().history;
  REQUIRE(h.size() == 12);
  for (std::size_t i = 0; i < h.size(); ++i) {
    CHECK(h[i].step == i + 1);
    CHECK(std::isnan(h[i].val_accuracy) == ((i + 1) % 4 != 0));
  }
  CHECK(h.back().epoch == 3);
  CHECK(t.progress().has_best);
  CHECK(t.progress().best_params.size() == m.parameters().size());
  double best = 0;
  for (const auto& r : h)
    if (!std::isnan(r.val_accuracy)) best = std::max(best, r.val_accuracy);
  CHECK(t.progress().best_val_accuracy == best);
  const std::string csv = history_csv(h);
  CHECK(csv.rfind("step,epoch,ce,kl,contrastive,total,val_accuracy\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 13);
}

TEST_CASE("resume from a checkpoint matches the uninterrupted run") {
  const PreparedSet train = prepare_set(sinusoids(3, 2), kLen, true);
  const PreparedSet val = prepare_set(sinusoids(1, 3), kLen, true);
  TrainConfig cfg = small_train();
  cfg.batch_size = 4;
  cfg.max_steps = 14;

  Model full(ModelConfig::gradcheck(), 6);
  Trainer a(full, cfg, train, val);
  a.run();

  // Stop mid-pass at step 9, round-trip through bytes, continue in a fresh model.
  Model first(ModelConfig::gradcheck(), 6);
  Trainer b(first, cfg, train, val);
  b.run([](const HistoryRow& r) { return r.step < 9; });
  REQUIRE(b.progress().step == 9);
  const Checkpoint ck = decode_checkpoint(encode_checkpoint(b.checkpoint()));

  Model second(ModelConfig::gradcheck(), 99);
  Trainer c(second, cfg, train, val);
  c.resume(ck);
  c.run();
  CHECK(same_history(a.progress().history, c.progress().history));
  CHECK(flat_params(full) == flat_params(second));
  CHECK(encode_checkpoint(a.checkpoint()) == encode_checkpoint(c.checkpoint()));
}

TEST_CASE("non-finite loss names the step") {
  Model m(ModelConfig::gradcheck(), 1);
  PreparedSet data = prepare_set(sinusoids(2, 2), kLen, true);
  TrainConfig cfg = small_train();
  cfg.batch_size = data.n;
  Trainer t(m, cfg, data);
  t.step();
  // Blow the head up so the next forward overflows.
  for (auto& p : m.parameters()) {
    if (p.name == "head.weight") p.tensor.values()[0] = std::numeric_limits<double>::infinity();
  }
  try {
    t.step();
    FAIL("expected NonFiniteLoss");
  } catch (const TrainEvalError& e) {
    CHECK(e.code() == TrainEvalErrc::NonFiniteLoss);
    CHECK(std::string(e.what()).find("step 2") != std::string::npos);
  }
}

TEST_CASE("configuration mismatches") {
  Model m(ModelConfig::gradcheck(), 1);
  CHECK_THROWS_AS(Trainer(m, small_train(ModelVariant::DenseSleep), prepare_set(sinusoids(1, 2), kLen, true)),
                  ConfigError);
  Model other(ModelConfig::gradcheck(), 1);
  PreparedSet wrong = prepare_set(sinusoids(1, 2), kLen, true);
  wrong.length = 32;
  CHECK_THROWS_AS(Trainer(other, small_train(), wrong), AutogradError);
}

TEST_CASE("separable sinusoids are learned") {
  Model m(ModelConfig::gradcheck(ModelVariant::DenseRTSleepII), 3);
  const PreparedSet data = prepare_set(sinusoids(8, 7), kLen, true);
  TrainConfig cfg = small_train();
  cfg.batch_size = 128;
  cfg.max_steps = 200;
  // The gradcheck widths are very narrow; 1e-3 plateaus near 80% here.
  cfg.optimizer.lr = 3e-3;
  Trainer t(m, cfg, data);
  t.run();
  const auto cm = evaluate(m, data);
  const double acc = static_cast<double>(cm.trace()) / static_cast<double>(cm.total());
  MESSAGE("training accuracy " << acc << " after " << t.progress().step << " steps");
  CHECK(acc >= 0.95);
}

TEST_CASE("evaluate") {
  Model m(ModelConfig::gradcheck(ModelVariant::DenseSleep), 2);
  PreparedSet data = prepare_set(sinusoids(4, 9), kLen, true);
  SUBCASE("conservation on a random model") {
    const auto cm = evaluate(m, data, 3);
    CHECK(cm.total() == data.n);
    CHECK(evaluate(m, data, 64) == cm);
  }
  SUBCASE("labels equal to the predictions give a diagonal matrix") {
    const auto probs = predict_probabilities(m, data);
    for (std::size_t i = 0; i < data.n; ++i) {
      data.labels[i] = argmax_class(std::span<const double>(probs).subspan(i * 5, 5));
    }
    const auto cm = evaluate(m, data);
    CHECK(cm.trace() == data.n);
  }
  SUBCASE("constant N2 predictor fills one column") {
    for (auto& p : m.parameters()) {
      if (p.name == "head.weight") std::fill(p.tensor.values().begin(), p.tensor.values().end(), 0.0);
      if (p.name == "head.bias") {
        std::fill(p.tensor.values().begin(), p.tensor.values().end(), 0.0);
        p.tensor.values()[2] = 5.0;
      }
    }
    const auto cm = evaluate(m, data);
    for (std::size_t a = 0; a < 5; ++a)
      for (std::size_t p = 0; p < 5; ++p) CHECK((cm.counts[a][p] != 0) == (p == 2));
  }
}

TEST_CASE("hypnogram export") {
  Model m(ModelConfig::gradcheck(), 8);
  EpochDataset night = sinusoids(1, 4, "P07");
  night.epochs.resize(3);
  const auto rows = predict_hypnogram(m, night, true);
  const std::string csv = hypnogram_csv(rows);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 4);
  CHECK(csv.rfind("epoch_index,stage,p_W,p_N1,p_N2,p_N3,p_REM\n", 0) == 0);
  for (const auto& r : rows) {
    double s = 0;
    for (double p : r.probabilities) s += p;
    CHECK(s == doctest::Approx(1.0).epsilon(1e-6));
  }
  const auto parsed = parse_hypnogram_csv(csv);
  REQUIRE(parsed.size() == rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    CHECK(parsed[i].stage == rows[i].stage);
    CHECK(parsed[i].epoch_index == rows[i].epoch_index);
    CHECK(parsed[i].probabilities == rows[i].probabilities);
  }
  CHECK(export_hypnogram(m, night, true) == csv);

  auto code = [&](const EpochDataset& d) {
    try {
      predict_hypnogram(m, d, true);
    } catch (const TrainEvalError& e) {
      return e.code();
    }
    return TrainEvalErrc::EmptyMatrix;
  };
  EpochDataset swapped = night;
  std::swap(swapped.epochs[0], swapped.epochs[2]);
  CHECK(code(swapped) == TrainEvalErrc::UnorderedInput);
  EpochDataset mixed = night;
  mixed.epochs[1].patient_id = "P08";
  CHECK(code(mixed) == TrainEvalErrc::UnorderedInput);

  CHECK_THROWS_AS(parse_hypnogram_csv("epoch_index,stage\n"), TrainEvalError);
  CHECK_THROWS_AS(parse_hypnogram_csv("epoch_index,stage,p_W,p_N1,p_N2,p_N3,p_REM\n0,X,1,0,0,0,0\n"),
                  TrainEvalError);
  CHECK_THROWS_AS(parse_hypnogram_csv("epoch_index,stage,p_W,p_N1,p_N2,p_N3,p_REM\n0,W,1,0\n"), TrainEvalError);
}
