// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The DenseRTSleep Authors

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <optional>
#include <sstream>

#include "drts/archive.hpp"
#include "drts/commands.hpp"
#include "drts/config.hpp"
#include "drts/gradcheck_suite.hpp"
#include "drts/losses.hpp"
#include "drts/metrics.hpp"
#include "drts/network.hpp"

namespace py = pybind11;
namespace fs = std::filesystem;

namespace {

using Rows = std::vector<std::vector<double>>;

drts::ConfusionMatrix to_matrix(const std::vector<std::vector<std::uint64_t>>& counts) {
  if (counts.size() != drts::kStageCount) throw py::value_error("confusion matrix must be 5x5");
  drts::ConfusionMatrix cm;
  for (std::size_t a = 0; a < counts.size(); ++a) {
    if (counts[a].size() != drts::kStageCount) throw py::value_error("confusion matrix must be 5x5");
    for (std::size_t p = 0; p < counts[a].size(); ++p) cm.counts[a][p] = counts[a][p];
  }
  return cm;
}

drts::Tensor to_tensor(const Rows& rows) {
  if (rows.empty()) throw py::value_error("empty batch");
  std::vector<double> flat;
  for (const auto& r : rows) {
    if (r.size() != rows.front().size()) throw py::value_error("ragged rows");
    flat.insert(flat.end(), r.begin(), r.end());
  }
  return drts::Tensor::from({rows.size(), rows.front().size()}, std::move(flat));
}

py::dict metrics(const std::vector<std::vector<std::uint64_t>>& counts) {
  const auto cm = to_matrix(counts);
  return py::module_::import("json").attr("loads")(drts::metrics_json(drts::overall_metrics(cm), &cm));
}

drts::RunConfig resolve(const drts::KeyValues& overrides) { return drts::resolve_config(overrides); }

// Runs a command, raising RuntimeError with its output on a nonzero exit.
std::string run(const std::function<int(std::ostream&)>& fn) {
  std::ostringstream out, err;
  const int code = drts::guarded(err, [&] { return fn(out); });
  if (code != drts::kExitOk) throw std::runtime_error(err.str() + out.str());
  return out.str();
}

}  // namespace

PYBIND11_MODULE(_drts, m) {
  m.doc() = "Single-channel EEG sleep staging";

  m.def("metrics", &metrics, py::arg("counts"),
        "Per-class and macro metrics of a 5x5 confusion matrix (rows actual).");

  m.def("resolve_config", [](const drts::KeyValues& overrides) { return drts::to_key_values(resolve(overrides)); },
        py::arg("overrides") = drts::KeyValues{});

  m.def("param_count", [](const drts::KeyValues& overrides) {
    const auto cfg = resolve(overrides);
    return drts::Model(cfg.model, cfg.seed).param_count();
  }, py::arg("overrides") = drts::KeyValues{});

  m.def("cross_entropy", [](const Rows& t, const Rows& p) {
    drts::Tape tape(false);
    return drts::cross_entropy(tape, to_tensor(t), to_tensor(p)).item();
  }, py::arg("y_true"), py::arg("y_pred"));
  m.def("kl_divergence", [](const Rows& t, const Rows& p) {
    drts::Tape tape(false);
    return drts::kl_divergence(tape, to_tensor(t), to_tensor(p)).item();
  }, py::arg("y_true"), py::arg("y_pred"));
  m.def("contrastive_loss", [](const Rows& t, const Rows& p, double mu) {
    drts::Tape tape(false);
    return drts::contrastive_loss(tape, to_tensor(t), to_tensor(p), mu).item();
  }, py::arg("y_true"), py::arg("y_pred"), py::arg("mu") = 1.0);

  m.def("synth", [](const fs::path& out, const drts::KeyValues& overrides) {
    py::gil_scoped_release release;
    return run([&](std::ostream& os) { return drts::cmd_synth(resolve(overrides), out, os); });
  }, py::arg("out_dir"), py::arg("overrides") = drts::KeyValues{});

  m.def("ingest", [](const fs::path& edf_dir, const fs::path& out, const drts::KeyValues& overrides) {
    py::gil_scoped_release release;
    return run([&](std::ostream& os) { return drts::cmd_ingest(resolve(overrides), edf_dir, out, os); });
  }, py::arg("edf_dir"), py::arg("out_dir"), py::arg("overrides") = drts::KeyValues{});

  m.def("class_distribution", [](const fs::path& archive) {
    const auto counts = drts::class_distribution(drts::read_epoch_archive(archive));
    py::dict d;
    for (std::size_t s = 0; s < counts.size(); ++s) {
      d[drts::stage_name(static_cast<drts::SleepStage>(s))] = counts[s];
    }
    return d;
  }, py::arg("archive"));

  m.def("train", [](const fs::path& archive, const fs::path& out, const drts::KeyValues& overrides,
                    const std::optional<fs::path>& resume) {
    py::gil_scoped_release release;
    return run([&](std::ostream& os) {
      return drts::cmd_train(resolve(overrides), archive, out, os, resume.value_or(fs::path{}));
    });
  }, py::arg("archive"), py::arg("out_dir"), py::arg("overrides") = drts::KeyValues{},
        py::arg("resume") = py::none());

  m.def("evaluate", [](const fs::path& archive, const fs::path& checkpoint, const std::string& split,
                       const fs::path& out) {
    {
      py::gil_scoped_release release;
      run([&](std::ostream& os) { return drts::cmd_eval(archive, checkpoint, split, out, os); });
    }
    auto json = py::module_::import("json");
    auto text = py::module_::import("pathlib").attr("Path")(out / "metrics.json").attr("read_text")();
    return json.attr("loads")(text);
  }, py::arg("archive"), py::arg("checkpoint"), py::arg("split") = "test", py::arg("out_dir"));

  m.def("gradcheck", [](const std::string& scope, std::size_t seeds) {
    std::vector<drts::SuiteResult> results;
    {
      py::gil_scoped_release release;
      results = drts::run_gradcheck_suite(scope, seeds);
    }
    py::list out;
    for (const auto& r : results) {
      py::dict d;
      d["scope"] = r.scope;
      d["name"] = r.name;
      d["max_rel_error"] = r.max_rel_error;
      d["tolerance"] = r.tolerance;
      d["coordinates"] = r.coordinates;
      d["passed"] = r.passed;
      out.append(d);
    }
    return out;
  }, py::arg("scope") = "all", py::arg("seeds") = 10);

  py::register_exception<drts::ConfigError>(m, "ConfigError", PyExc_ValueError);
}
