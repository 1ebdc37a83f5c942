// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The DenseRTSleep Authors

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstring>
#include <filesystem>

#include "drts/checkpoint.hpp"
#include "drts/metrics.hpp"
#include "drts/rng.hpp"

using namespace drts;

namespace {

Checkpoint sample_checkpoint() {
  Model m(ModelConfig::gradcheck(), 3);
  Checkpoint ck;
  ck.model = m.config();
  ck.train.seed = 3;
  ck.params = snapshot_params(m);
  ck.buffers = snapshot_buffers(m);
  Rng rng(1);
  for (const auto& p : ck.params) {
    std::vector<double> a(p.values.size()), b(p.values.size());
    for (double& v : a) v = rng.normal();
    for (double& v : b) v = rng.uniform();
    ck.optimizer.first.push_back(a);
    ck.optimizer.second.push_back(b);
  }
  ck.optimizer.steps = 12;
  auto& pr = ck.progress;
  pr.step = 12;
  pr.epoch = 3;
  pr.cursor = 2;
  pr.order = {3, 0, 2, 1};
  pr.rng_state = rng.state();
  pr.has_best = true;
  pr.best_val_accuracy = 0.625;
  pr.best_step = 8;
  pr.best_params = ck.params;
  pr.best_buffers = ck.buffers;
  pr.history.push_back({1, 0, 1.5, 1.25, 4.0, 3.0});
  pr.history.push_back({2, 1, 1.4, 1.2, 3.9, 2.9, 0.5});
  return ck;
}

TrainEvalErrc decode_error(const std::string& bytes) {
  try {
    decode_checkpoint(bytes);
  } catch (const TrainEvalError& e) {
    return e.code();
  }
  FAIL("decode succeeded");
  return TrainEvalErrc::EmptyMatrix;
}

}  // namespace

TEST_CASE("encode, decode, encode is byte-identical") {
  const Checkpoint ck = sample_checkpoint();
  const std::string a = encode_checkpoint(ck);
  CHECK(a.compare(0, 4, "DRTS") == 0);
  const Checkpoint back = decode_checkpoint(a);
  CHECK(encode_checkpoint(back) == a);
  CHECK(back.params == ck.params);
  CHECK(back.buffers == ck.buffers);
  CHECK(back.optimizer.first == ck.optimizer.first);
  CHECK(back.optimizer.second == ck.optimizer.second);
  CHECK(back.optimizer.steps == 12);
  CHECK(back.progress.order == ck.progress.order);
  CHECK(back.progress.rng_state == ck.progress.rng_state);
  CHECK(back.progress.best_params == ck.progress.best_params);
  REQUIRE(back.progress.history.size() == 2);
  CHECK(std::isnan(back.progress.history[0].val_accuracy));
  CHECK(back.progress.history[1].val_accuracy == 0.5);
  CHECK(model_key_values(back.model) == model_key_values(ck.model));
}

TEST_CASE("files and model restoration") {
  const Checkpoint ck = sample_checkpoint();
  const auto path = std::filesystem::temp_directory_path() / "drts_test_checkpoint.drts";
  save_checkpoint(ck, path);
  const Checkpoint back = load_checkpoint(path);
  CHECK(encode_checkpoint(back) == encode_checkpoint(ck));
  save_checkpoint(back, path);
  CHECK(encode_checkpoint(load_checkpoint(path)) == encode_checkpoint(ck));
  std::filesystem::remove(path);

  Model original(ModelConfig::gradcheck(), 3);
  Model restored = model_from_checkpoint(back, false);
  Rng rng(2);
  std::vector<double> x(3 * 64);
  for (double& v : x) v = rng.normal();
  const Tensor batch = Tensor::from({3, 1, 64}, x);
  CHECK(restored.predict(batch) == original.predict(batch));
}

TEST_CASE("damaged files") {
  const std::string good = encode_checkpoint(sample_checkpoint());
  CHECK(decode_error(good.substr(0, good.size() / 2)) == TrainEvalErrc::CorruptFile);
  CHECK(decode_error(good.substr(0, 5)) == TrainEvalErrc::CorruptFile);
  CHECK(decode_error("") == TrainEvalErrc::CorruptFile);
  std::string flipped = good;
  flipped[good.size() - 100] ^= 0x01;
  CHECK(decode_error(flipped) == TrainEvalErrc::CorruptFile);
  std::string magic = good;
  magic[0] = 'X';
  CHECK(decode_error(magic) == TrainEvalErrc::CorruptFile);
  std::string version = good;
  version[4] = 2;
  CHECK(decode_error(version) == TrainEvalErrc::VersionMismatch);
  CHECK(decode_error(good + "x") == TrainEvalErrc::CorruptFile);
}

TEST_CASE("snapshot mismatches") {
  Model m(ModelConfig::gradcheck(), 0);
  auto params = snapshot_params(m);
  auto buffers = snapshot_buffers(m);
  params[0].values.pop_back();
  CHECK_THROWS_AS(apply_snapshot(m, params, buffers), std::invalid_argument);
  params = snapshot_params(m);
  params[1].name = "other";
  CHECK_THROWS_AS(apply_snapshot(m, params, buffers), std::invalid_argument);
}
