// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The DenseRTSleep Authors

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>
#include <string>

#include "drts/gradcheck.hpp"
#include "drts/losses.hpp"
#include "drts/network.hpp"

using namespace drts;

namespace {

Tensor random_tensor(Rng& rng, Shape shape, bool grad = false) {
  std::vector<double> v(shape_numel(shape));
  for (double& x : v) x = rng.normal();
  return Tensor::from(std::move(shape), std::move(v), grad);
}

Parameter random_param(Rng& rng, const std::string& name, Shape shape, double scale = 0.5) {
  std::vector<double> v(shape_numel(shape));
  for (double& x : v) x = scale * rng.normal();
  return {name, Tensor::from(std::move(shape), std::move(v), true)};
}

LstmParams random_lstm(Rng& rng, std::size_t in, std::size_t u) {
  return {random_param(rng, "w_ih", {4 * u, in}), random_param(rng, "w_hh", {4 * u, u}),
          random_param(rng, "b", {4 * u})};
}

ConvLayer random_conv(Rng& rng, std::size_t in, std::size_t out, std::size_t k) {
  ConvLayer c;
  c.weight = random_param(rng, "w", {out, in, k});
  c.bias = random_param(rng, "b", {out});
  c.padding = k / 2;
  return c;
}

BatchNormLayer unit_bn(std::size_t c) {
  return {{"g", Tensor::full({c}, 1.0, true)}, {"b", Tensor::zeros({c}, true)}, BatchNormState(c)};
}

FeatureExtractor random_dense(Rng& rng, std::size_t c, std::size_t growth, std::size_t k) {
  FeatureExtractor fe;
  fe.cfg = {c, growth, k};
  for (std::size_t j = 0; j < 2; ++j) {
    fe.layers[j].bn = unit_bn(c + j * growth);
    fe.layers[j].conv = random_conv(rng, c + j * growth, growth, k);
  }
  return fe;
}

std::vector<std::string> param_names(const Model& m) {
  std::vector<std::string> out;
  for (const auto& p : m.parameters()) out.push_back(p.name);
  return out;
}

}  // namespace

TEST_CASE("feature_extractor_forward") {
  Rng rng(1);
  SUBCASE("C=2, growth=4 -> 10 channels") {
    auto fe = random_dense(rng, 2, 4, 3);
    Tape tape;
    const Tensor y = feature_extractor_forward(tape, random_tensor(rng, {3, 2, 11}), fe, Mode::Train);
    CHECK(y.shape() == Shape{3, 10, 11});
  }
  SUBCASE("length preserved for odd kernels") {
    for (std::size_t k : {1, 3, 5, 7, 9}) {
      auto fe = random_dense(rng, 3, 2, k);
      Tape tape;
      const Tensor y = feature_extractor_forward(tape, random_tensor(rng, {2, 3, 17}), fe, Mode::Train);
      CHECK(y.dim(2) == 17);
    }
  }
  SUBCASE("input channels pass through unchanged") {
    auto fe = random_dense(rng, 2, 3, 5);
    Tape tape;
    const Tensor x = random_tensor(rng, {2, 2, 9});
    const Tensor y = feature_extractor_forward(tape, x, fe, Mode::Train);
    for (std::size_t b = 0; b < 2; ++b)
      for (std::size_t c = 0; c < 2; ++c)
        for (std::size_t l = 0; l < 9; ++l)
          CHECK(y.values()[(b * 8 + c) * 9 + l] == x.values()[(b * 2 + c) * 9 + l]);
  }
  SUBCASE("channel mismatch") {
    auto fe = random_dense(rng, 2, 3, 5);
    Tape tape;
    CHECK_THROWS_AS(feature_extractor_forward(tape, random_tensor(rng, {2, 3, 9}), fe, Mode::Train),
                    AutogradError);
  }
  SUBCASE("config validation rejects zero growth") {
    auto cfg = ModelConfig::tiny();
    cfg.stages[1].dense.growth_channels = 0;
    cfg.link();
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
  }
}

TEST_CASE("config validation") {
  auto expect_invalid = [](auto mutate) {
    auto cfg = ModelConfig::full_size();
    mutate(cfg);
    cfg.link();
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    CHECK_THROWS_AS(Model(cfg, 0), ConfigError);
  };
  expect_invalid([](ModelConfig& c) { c.stages[0].dense.kernel_size = 4; });
  expect_invalid([](ModelConfig& c) { c.stages[2].transformer.heads = 5; });
  expect_invalid([](ModelConfig& c) { c.stages[1].transition.pool_stride = 1; });
  expect_invalid([](ModelConfig& c) { c.class_count = 4; });
  expect_invalid([](ModelConfig& c) { c.bilstm.hidden_units = 0; });
  expect_invalid([](ModelConfig& c) { c.input_length = 40; });
  // Heads only matter when the variant has a transformer.
  auto cfg = ModelConfig::full_size(ModelVariant::DenseRNNSleep);
  cfg.stages[2].transformer.heads = 5;
  CHECK_NOTHROW(cfg.validate());
  for (auto preset : {ModelConfig::full_size(), ModelConfig::tiny(), ModelConfig::gradcheck()}) {
    CHECK_NOTHROW(preset.validate());
  }
}

TEST_CASE("transformer_encoder_forward") {
  Rng rng(2);
  auto make = [&](std::size_t c, std::size_t heads) {
    TransformerEncoder t;
    t.cfg = {heads, c, 1};
    t.projection = random_conv(rng, c, c, 1);
    t.post_bn = unit_bn(c);
    return t;
  };
  SUBCASE("L=1: post-BN of the projection") {
    auto enc = make(6, 3);
    const Tensor x = random_tensor(rng, {4, 6, 1});
    Tape tape(false);
    const Tensor y = transformer_encoder_forward(tape, x, enc, Mode::Infer);
    BatchNormLayer ref = unit_bn(6);
    const Tensor expect = batchnorm_forward(tape, conv_forward(tape, x, enc.projection), ref, Mode::Infer);
    for (std::size_t i = 0; i < y.numel(); ++i) CHECK(y.values()[i] == doctest::Approx(expect.values()[i]).epsilon(1e-14));
  }
  SUBCASE("heads=3, C=48 -> d=16, scale 1/4") {
    auto enc = make(48, 3);
    const Tensor x = random_tensor(rng, {1, 48, 5});
    Tape tape(false);
    std::vector<double> att;
    transformer_encoder_forward(tape, x, enc, Mode::Infer, &att);
    REQUIRE(att.size() == 3 * 5 * 5);
    const Tensor xh = conv_forward(tape, x, enc.projection);
    // Head 1 covers channels 16..31; row 2 of its attention matrix.
    const std::size_t head = 1, row = 2;
    std::vector<double> s(5);
    for (std::size_t j = 0; j < 5; ++j) {
      double dot = 0;
      for (std::size_t c = 16; c < 32; ++c) dot += xh.values()[c * 5 + row] * xh.values()[c * 5 + j];
      s[j] = dot * 0.25;
    }
    const double m = *std::max_element(s.begin(), s.end());
    double z = 0;
    for (double& v : s) z += (v = std::exp(v - m));
    for (std::size_t j = 0; j < 5; ++j) {
      CHECK(att[(head * 5 + row) * 5 + j] == doctest::Approx(s[j] / z).epsilon(1e-12));
    }
  }
  SUBCASE("identical positions give identical attention outputs") {
    auto enc = make(6, 3);
    std::vector<double> v(6 * 7);
    for (std::size_t c = 0; c < 6; ++c)
      for (std::size_t l = 0; l < 7; ++l) v[c * 7 + l] = static_cast<double>(c) - 2.5;
    Tape tape(false);
    const Tensor xh = conv_forward(tape, Tensor::from({1, 6, 7}, v), enc.projection);
    const Tensor a = ops::multi_head_self_attention(tape, xh, 3);
    for (std::size_t c = 0; c < 6; ++c)
      for (std::size_t l = 1; l < 7; ++l)
        CHECK(a.values()[c * 7 + l] == doctest::Approx(a.values()[c * 7]).epsilon(1e-14));
  }
  SUBCASE("heads must divide channels") {
    auto enc = make(6, 3);
    enc.cfg.heads = 4;
    Tape tape;
    try {
      transformer_encoder_forward(tape, random_tensor(rng, {1, 6, 3}), enc, Mode::Train);
      FAIL("expected HeadsDivisibility");
    } catch (const AutogradError& e) {
      CHECK(e.code() == AutogradErrc::HeadsDivisibility);
    }
  }
}

TEST_CASE("transition_forward") {
  Rng rng(3);
  auto make = [&](std::size_t in, std::size_t out, std::size_t pool) {
    Transition t;
    t.cfg = {out, 1, pool, pool};
    t.conv = random_conv(rng, in, out, 1);
    return t;
  };
  Tape tape(false);
  const Tensor x = random_tensor(rng, {1, 2, 3000});
  auto t1 = make(2, 5, 2);
  const Tensor y = transition_forward(tape, x, t1);
  CHECK(y.shape() == Shape{1, 5, 1500});
  auto t2 = make(5, 3, 2), t3 = make(3, 7, 2);
  CHECK(transition_forward(tape, transition_forward(tape, y, t2), t3).shape() == Shape{1, 7, 375});
  auto t4 = make(2, 4, 8);
  CHECK_THROWS_AS(transition_forward(tape, random_tensor(rng, {1, 2, 5}), t4), AutogradError);
}

TEST_CASE("lstm_cell") {
  const std::size_t u = 2, c_in = 3;
  LstmParams zero{{"w_ih", Tensor::zeros({4 * u, c_in}, true)},
                  {"w_hh", Tensor::zeros({4 * u, u}, true)},
                  {"b", Tensor::zeros({4 * u}, true)}};
  Tape tape(false);
  SUBCASE("zero parameters") {
    const Tensor c_prev = Tensor::from({1, u}, {0.4, -2.0});
    auto [h, c] = lstm_cell(tape, Tensor::from({1, c_in}, {1, 2, 3}), Tensor::from({1, u}, {0.3, 0.1}),
                            c_prev, zero);
    for (std::size_t j = 0; j < u; ++j) {
      const double cp = c_prev.values()[j];
      CHECK(c.values()[j] == doctest::Approx(0.5 * cp).epsilon(1e-15));
      CHECK(h.values()[j] == doctest::Approx(0.5 * std::tanh(0.5 * cp)).epsilon(1e-15));
    }
  }
  SUBCASE("zero state and input") {
    auto [h, c] = lstm_cell(tape, Tensor::zeros({1, c_in}), Tensor::zeros({1, u}), Tensor::zeros({1, u}), zero);
    CHECK(h.values()[0] == 0.0);
    CHECK(h.values()[1] == 0.0);
  }
  SUBCASE("gradient through three steps") {
    Rng rng(4);
    const LstmParams p = random_lstm(rng, c_in, u);
    const Parameter x0 = random_param(rng, "x0", {2, c_in}, 1.0);
    const Parameter x1 = random_param(rng, "x1", {2, c_in}, 1.0);
    const Parameter x2 = random_param(rng, "x2", {2, c_in}, 1.0);
    const std::vector<double> w = {0.3, -1.2, 0.7, 0.5, 1.1, -0.4, 0.9, 0.2};
    auto graph = [&](Tape& t) {
      Tensor h = Tensor::zeros({2, u}), c = Tensor::zeros({2, u});
      for (const auto* x : {&x0, &x1, &x2}) std::tie(h, c) = lstm_cell(t, x->tensor, h, c, p);
      const Tensor both[] = {h, c};
      return ops::weighted_sum(t, ops::concat(t, both, 1), w);
    };
    const auto report = grad_check(graph, {p.w_ih, p.w_hh, p.bias, x0, x1, x2}, 1e-4);
    CHECK(report.passed());
    CHECK(report.max_rel_error() < 1e-6);
  }
  SUBCASE("shape mismatch") {
    CHECK_THROWS_AS(lstm_cell(tape, Tensor::zeros({1, 4}), Tensor::zeros({1, u}), Tensor::zeros({1, u}), zero),
                    AutogradError);
  }
}

TEST_CASE("bilstm_forward") {
  Rng rng(5);
  SUBCASE("T=1 gives width 2u") {
    std::vector<BiLstmLayer> layers{{random_lstm(rng, 3, 4), random_lstm(rng, 3, 4)}};
    Tape tape(false);
    const auto out = bilstm_forward(tape, random_tensor(rng, {2, 1, 3}), layers);
    CHECK(out.final_state.shape() == Shape{2, 8});
    CHECK(out.outputs.shape() == Shape{2, 1, 8});
  }
  SUBCASE("u=128 -> 256 classifier features") {
    std::vector<BiLstmLayer> layers{{random_lstm(rng, 2, 128), random_lstm(rng, 2, 128)}};
    Tape tape(false);
    CHECK(bilstm_forward(tape, random_tensor(rng, {1, 3, 2}), layers).final_state.dim(1) == 256);
  }
  SUBCASE("reversing the sequence swaps the directional states") {
    const auto a = random_lstm(rng, 3, 4), b = random_lstm(rng, 3, 4);
    const Tensor seq = random_tensor(rng, {2, 5, 3});
    std::vector<double> rev(seq.numel());
    for (std::size_t n = 0; n < 2; ++n)
      for (std::size_t t = 0; t < 5; ++t)
        for (std::size_t c = 0; c < 3; ++c)
          rev[(n * 5 + (4 - t)) * 3 + c] = seq.values()[(n * 5 + t) * 3 + c];
    Tape tape(false);
    const auto o1 = bilstm_forward(tape, seq, {{a, b}}).final_state;
    const auto o2 = bilstm_forward(tape, Tensor::from({2, 5, 3}, rev), {{b, a}}).final_state;
    for (std::size_t n = 0; n < 2; ++n)
      for (std::size_t j = 0; j < 4; ++j) {
        CHECK(o1.values()[n * 8 + j] == o2.values()[n * 8 + 4 + j]);
        CHECK(o1.values()[n * 8 + 4 + j] == o2.values()[n * 8 + j]);
      }
  }
  SUBCASE("full outputs align with final states") {
    std::vector<BiLstmLayer> layers{{random_lstm(rng, 3, 2), random_lstm(rng, 3, 2)}};
    Tape tape(false);
    const auto out = bilstm_forward(tape, random_tensor(rng, {1, 4, 3}), layers);
    // forward h_T sits at t=3 first half; backward h_1 at t=0 second half.
    CHECK(out.final_state.values()[0] == out.outputs.values()[3 * 4 + 0]);
    CHECK(out.final_state.values()[2] == out.outputs.values()[0 * 4 + 2]);
  }
  SUBCASE("empty sequence") {
    std::vector<BiLstmLayer> layers{{random_lstm(rng, 3, 2), random_lstm(rng, 3, 2)}};
    Tape tape(false);
    try {
      bilstm_forward(tape, Tensor::zeros({1, 0, 3}), layers);
      FAIL("expected EmptySequence");
    } catch (const AutogradError& e) {
      CHECK(e.code() == AutogradErrc::EmptySequence);
    }
  }
}

TEST_CASE("build_model") {
  SUBCASE("DenseSleep has no recurrent or attention nodes") {
    Model m(ModelConfig::gradcheck(ModelVariant::DenseSleep), 1);
    Tape tape;
    Rng rng(6);
    m.forward(tape, random_tensor(rng, {2, 1, 64}), Mode::Train);
    for (const auto& op : tape.op_names()) {
      CHECK(op != "multi_head_self_attention");
      CHECK(op != "sigmoid");
      CHECK(op != "tanh");
    }
    const auto trace = shape_trace(m.config());
    CHECK(std::none_of(trace.begin(), trace.end(), [](const ShapeStep& s) {
      return s.layer.find("transformer") != std::string::npos || s.layer.find("bilstm") != std::string::npos;
    }));
  }
  SUBCASE("DenseRTSleep-I and -II are structurally identical") {
    Model a(ModelConfig::full_size(ModelVariant::DenseRTSleepI), 3);
    Model b(ModelConfig::full_size(ModelVariant::DenseRTSleepII), 3);
    CHECK(param_names(a) == param_names(b));
    const auto pa = a.parameters(), pb = b.parameters();
    for (std::size_t i = 0; i < pa.size(); ++i) {
      CHECK(pa[i].tensor.shape() == pb[i].tensor.shape());
      CHECK(std::equal(pa[i].tensor.values().begin(), pa[i].tensor.values().end(), pb[i].tensor.values().begin()));
    }
  }
  SUBCASE("default configuration has three encoder stages") {
    const auto trace = shape_trace(ModelConfig::full_size());
    CHECK(std::count_if(trace.begin(), trace.end(), [](const ShapeStep& s) {
      return s.layer.find(".transformer") != std::string::npos;
    }) == 3);
  }
  SUBCASE("parameter names are unique") {
    for (auto v : kAllVariants) {
      Model m(ModelConfig::full_size(v), 0);
      const auto names = param_names(m);
      CHECK(std::set<std::string>(names.begin(), names.end()).size() == names.size());
    }
  }
  SUBCASE("variant containment by role") {
    auto roles = [](ModelVariant v) {
      Model m(ModelConfig::tiny(v), 0);
      const auto r = m.roles();
      return std::set<std::string>(r.begin(), r.end());
    };
    const auto r0 = roles(ModelVariant::DenseSleep), r1 = roles(ModelVariant::DenseRNNSleep),
               r2 = roles(ModelVariant::DenseRTSleepI);
    CHECK(r0 == std::set<std::string>{"stem", "dense", "transition", "head"});
    CHECK(std::includes(r1.begin(), r1.end(), r0.begin(), r0.end()));
    CHECK(r1.size() > r0.size());
    CHECK(std::includes(r2.begin(), r2.end(), r1.begin(), r1.end()));
    CHECK(r2.size() > r1.size());
  }
}

TEST_CASE("shape trace and param_count") {
  SUBCASE("default chain") {
    const auto trace = shape_trace(ModelConfig::full_size());
    auto find = [&](const std::string& name) {
      return std::find_if(trace.begin(), trace.end(), [&](const ShapeStep& s) { return s.layer == name; })->shape;
    };
    CHECK(find("stem") == Shape{16, 1500});
    CHECK(find("stage1.dense") == Shape{48, 1500});
    CHECK(find("stage1.transition") == Shape{40, 375});
    CHECK(find("stage2.dense") == Shape{72, 375});
    CHECK(find("stage3.dense") == Shape{96, 187});
    CHECK(find("stage3.transition") == Shape{128, 93});
    CHECK(find("bilstm.1") == Shape{93, 256});
  }
  SUBCASE("trace parameter totals equal the built model") {
    for (auto v : kAllVariants)
      for (auto cfg : {ModelConfig::full_size(v), ModelConfig::tiny(v), ModelConfig::gradcheck(v)}) {
        std::size_t total = 0;
        for (const auto& s : shape_trace(cfg)) total += s.params;
        CHECK(Model(cfg, 0).param_count() == total);
      }
  }
  SUBCASE("head 256 -> 5 has 1285 parameters") {
    Model m(ModelConfig::full_size(), 0);
    std::size_t head = 0;
    for (const auto& p : m.parameters())
      if (p.name.rfind("head.", 0) == 0) head += p.tensor.numel();
    CHECK(head == 1285);
  }
  SUBCASE("default DenseRTSleep-II lands within 10% of 749,913") {
    const std::size_t n = Model(ModelConfig::full_size(), 0).param_count();
    MESSAGE("param_count = " << n);
    CHECK(std::abs(static_cast<double>(n) - 749913.0) <= 0.1 * 749913.0);
  }
  SUBCASE("summary lists every block") {
    const std::string s = Model(ModelConfig::tiny(), 0).summary();
    CHECK(s.find("stage3.transformer") != std::string::npos);
    CHECK(s.find("total") != std::string::npos);
  }
}

TEST_CASE("forward") {
  Rng rng(7);
  for (auto v : kAllVariants) {
    const std::string name = variant_name(v);
    CAPTURE(name);
    Model m(ModelConfig::tiny(v), 11);
    const Tensor x = random_tensor(rng, {4, 1, 3000});
    Tape tape;
    ForwardTrace trace;
    const Tensor p = m.forward(tape, x, Mode::Train, &trace);
    REQUIRE(p.shape() == Shape{4, 5});
    for (std::size_t r = 0; r < 4; ++r) {
      double s = 0;
      for (std::size_t c = 0; c < 5; ++c) {
        CHECK(std::isfinite(p.values()[r * 5 + c]));
        s += p.values()[r * 5 + c];
      }
      CHECK(s == doctest::Approx(1.0).epsilon(1e-6));
    }
    // Attention matrices are row-stochastic.
    CHECK(trace.attention.size() == (uses_transformer(v) ? 3u : 0u));
    for (std::size_t st = 0; st < trace.attention.size(); ++st) {
      const std::size_t n = trace.attention_length[st];
      const auto& a = trace.attention[st];
      REQUIRE(a.size() % (n * n) == 0);
      for (std::size_t row = 0; row < a.size() / n; ++row) {
        double s = 0;
        for (std::size_t j = 0; j < n; ++j) {
          CHECK(a[row * n + j] >= 0.0);
          s += a[row * n + j];
        }
        CHECK(s == doctest::Approx(1.0).epsilon(1e-6));
      }
    }
    // Batch-size invariance in inference mode.
    const auto full = m.predict(x);
    for (std::size_t r = 0; r < 4; ++r) {
      std::vector<double> one(x.values().begin() + r * 3000, x.values().begin() + (r + 1) * 3000);
      const auto single = m.predict(Tensor::from({1, 1, 3000}, one));
      for (std::size_t c = 0; c < 5; ++c) CHECK(single[c] == doctest::Approx(full[r * 5 + c]).epsilon(1e-6));
    }
    CHECK(m.predict(x) == full);
  }
  SUBCASE("wrong input length") {
    Model m(ModelConfig::tiny(), 0);
    Tape tape;
    CHECK_THROWS_AS(m.forward(tape, Tensor::zeros({1, 1, 2999}), Mode::Infer), AutogradError);
  }
  SUBCASE("default network forward is finite") {
    Model m(ModelConfig::full_size(), 2);
    const auto p = m.predict(random_tensor(rng, {1, 1, 3000}));
    double s = 0;
    for (double v : p) {
      CHECK(std::isfinite(v));
      s += v;
    }
    CHECK(s == doctest::Approx(1.0).epsilon(1e-6));
  }
}

TEST_CASE("end-to-end gradient check at the small configuration") {
  for (auto v : kAllVariants) {
    const std::string name = variant_name(v);
    CAPTURE(name);
    Model m(ModelConfig::gradcheck(v), 21);
    Rng rng(9);
    const Tensor x = random_tensor(rng, {2, 1, 64});
    const Tensor y = one_hot({1, 3}, 5);
    const LossWeights w = effective_weights(v, LossWeights{});
    auto graph = [&](Tape& tape) { return total_loss(tape, y, m.forward(tape, x, Mode::Train), w).total; };
    const auto report = grad_check(graph, m.parameters(), 1e-4);
    const auto& worst = *std::max_element(report.entries.begin(), report.entries.end(),
                                          [](const auto& a, const auto& b) { return a.max_rel_error < b.max_rel_error; });
    MESSAGE(name << ": max rel err " << report.max_rel_error() << " (raw " << report.raw_max_rel_error()
                 << ") at " << worst.name << ", kinks " << report.kinks() << ", below resolution "
                 << report.below_resolution() << " of " << report.coordinates());
    CHECK(report.passed());
    // Skipped coordinates stay a small minority.
    CHECK(report.kinks() * 50 < report.coordinates());
    CHECK(report.below_resolution() * 50 < report.coordinates());
  }
}
