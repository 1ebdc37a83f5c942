// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The DenseRTSleep Authors

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <json.hpp>

#include "drts/metrics.hpp"
#include "drts/rng.hpp"

using namespace drts;

namespace {

// Reference DenseRTSleep-II confusion counts, rows actual W N1 N2 N3 REM.
ConfusionMatrix reference_counts() {
  ConfusionMatrix cm;
  cm.counts = {{{1800, 110, 61, 5, 150},
                {140, 160, 71, 1, 170},
                {59, 140, 3300, 110, 270},
                {17, 9, 270, 1100, 0},
                {53, 140, 240, 1, 1300}}};
  return cm;
}

ConfusionMatrix random_matrix(Rng& rng, std::uint64_t max = 50) {
  ConfusionMatrix cm;
  for (auto& row : cm.counts)
    for (auto& c : row) c = rng.below(max);
  return cm;
}

}  // namespace

TEST_CASE("per-class metrics on the reference counts") {
  const auto per = per_class_metrics(reference_counts());
  // Reference values, rounded to four places.
  const double rounded[5][3] = {{0.8699, 0.8466, 0.8581},
                                {0.2862, 0.2952, 0.2906},
                                {0.8371, 0.8507, 0.8438},
                                {0.9038, 0.7879, 0.8419},
                                {0.6878, 0.7497, 0.7174}};
  // Exact ratios from the counts, e.g. W precision 1800 / 2069.
  const double exact[5][3] = {{1800.0 / 2069, 1800.0 / 2126, 0.8581644815256257},
                              {160.0 / 559, 160.0 / 542, 0.29064486830154407},
                              {3300.0 / 3942, 3300.0 / 3879, 0.8438818565400844},
                              {1100.0 / 1217, 1100.0 / 1396, 0.8419441255262151},
                              {1300.0 / 1890, 1300.0 / 1734, 0.717439293598234}};
  for (std::size_t c = 0; c < 5; ++c) {
    CAPTURE(c);
    const double got[3] = {per[c].precision, per[c].recall, per[c].f1};
    for (int k = 0; k < 3; ++k) {
      CHECK(std::abs(got[k] - rounded[c][k]) <= 0.002);
      CHECK(got[k] == doctest::Approx(exact[c][k]).epsilon(1e-12));
    }
  }
}

TEST_CASE("overall metrics on the reference counts") {
  const auto r = overall_metrics(reference_counts());
  CHECK(r.total == 9677);
  CHECK(r.accuracy == doctest::Approx(7660.0 / 9677.0).epsilon(1e-15));
  CHECK(std::abs(100 * r.accuracy - 79.16) <= 0.05);
  CHECK(std::abs(100 * r.macro_precision - 71.70) <= 0.05);
  CHECK(std::abs(100 * r.macro_recall - 70.60) <= 0.05);
  CHECK(std::abs(100 * r.macro_f1 - 71.04) <= 0.05);
  double mp = 0;
  for (const auto& m : r.per_class) mp += m.precision;
  CHECK(r.macro_precision == doctest::Approx(mp / 5).epsilon(1e-15));
}

TEST_CASE("degenerate and trivial matrices") {
  SUBCASE("class never present and never predicted") {
    ConfusionMatrix cm;
    cm.add(0, 0, 3);
    cm.add(1, 0, 1);
    const auto per = per_class_metrics(cm);
    CHECK(per[3].precision == 0.0);
    CHECK(per[3].recall == 0.0);
    CHECK(per[3].f1 == 0.0);
    CHECK(per[1].recall == 0.0);
  }
  SUBCASE("identity with equal counts") {
    ConfusionMatrix cm;
    for (std::size_t c = 0; c < 5; ++c) cm.add(c, c, 7);
    const auto r = overall_metrics(cm);
    CHECK(r.accuracy == 1.0);
    CHECK(r.macro_precision == 1.0);
    CHECK(r.macro_recall == 1.0);
    CHECK(r.macro_f1 == 1.0);
  }
  SUBCASE("empty matrix") {
    try {
      overall_metrics(ConfusionMatrix{});
      FAIL("expected EmptyMatrix");
    } catch (const TrainEvalError& e) {
      CHECK(e.code() == TrainEvalErrc::EmptyMatrix);
    }
  }
  SUBCASE("out-of-range class") {
    ConfusionMatrix cm;
    CHECK_THROWS(cm.add(5, 0));
  }
}

TEST_CASE("metric bounds and F1 between P and R") {
  Rng rng(5);
  for (int i = 0; i < 500; ++i) {
    ConfusionMatrix cm = random_matrix(rng, i % 3 == 0 ? 3 : 60);
    if (cm.total() == 0) continue;
    const auto r = overall_metrics(cm);
    for (double v : {r.accuracy, r.macro_precision, r.macro_recall, r.macro_f1}) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
    for (const auto& m : r.per_class) {
      CHECK(m.precision >= 0.0);
      CHECK(m.precision <= 1.0);
      CHECK(m.recall <= 1.0);
      if (m.precision + m.recall > 0) {
        CHECK(m.f1 >= std::min(m.precision, m.recall) - 1e-15);
        CHECK(m.f1 <= std::max(m.precision, m.recall) + 1e-15);
      }
    }
  }
}

TEST_CASE("merge is associative and commutative") {
  Rng rng(6);
  for (int i = 0; i < 50; ++i) {
    const auto a = random_matrix(rng), b = random_matrix(rng), c = random_matrix(rng);
    ConfusionMatrix ab = a;
    ab.merge(b).merge(c);
    ConfusionMatrix bc = b;
    bc.merge(c);
    ConfusionMatrix a_bc = a;
    a_bc.merge(bc);
    ConfusionMatrix cba = c;
    cba.merge(b).merge(a);
    CHECK(ab == a_bc);
    CHECK(ab == cba);
    CHECK(ab.total() == a.total() + b.total() + c.total());
  }
}

TEST_CASE("argmax_class") {
  const double tie[] = {0.1, 0.4, 0.4, 0.05, 0.05};
  CHECK(argmax_class(tie) == 1);
  const double flat[] = {0.2, 0.2, 0.2, 0.2, 0.2};
  CHECK(argmax_class(flat) == 0);
  const double last[] = {0.1, 0.1, 0.1, 0.1, 0.6};
  CHECK(argmax_class(last) == 4);
}

TEST_CASE("rendering and JSON") {
  const auto cm = reference_counts();
  const auto r = overall_metrics(cm);
  const std::string table = render_metrics(r);
  CHECK(table.find("0.8700") != std::string::npos);
  CHECK(table.find("79.16%") != std::string::npos);
  CHECK(table.find("71.70%") != std::string::npos);
  CHECK(render_confusion(cm).find("3300") != std::string::npos);
  const auto j = nlohmann::json::parse(metrics_json(r, &cm));
  CHECK(j["accuracy"].get<double>() == r.accuracy);
  CHECK(j["per_class"]["N1"]["recall"].get<double>() == r.per_class[1].recall);
  CHECK(j["confusion"][2][2].get<int>() == 3300);
  CHECK(j["total"].get<int>() == 9677);
}
