// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The DenseRTSleep Authors

#include "drts/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <sstream>
#include <vector>

namespace drts {
namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string fmt_size(std::size_t v) { return std::to_string(v); }

std::string fmt_double(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

std::uint64_t parse_u64(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto r = std::from_chars(v.data(), v.data() + v.size(), out);
  if (r.ec != std::errc() || r.ptr != v.data() + v.size()) {
    throw ConfigError(key + ": expected a non-negative integer, got '" + v + "'");
  }
  return out;
}

double parse_double(const std::string& key, const std::string& v) {
  double out = 0;
  const auto r = std::from_chars(v.data(), v.data() + v.size(), out);
  if (r.ec != std::errc() || r.ptr != v.data() + v.size() || !std::isfinite(out)) {
    throw ConfigError(key + ": expected a finite number, got '" + v + "'");
  }
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError(key + ": expected true or false, got '" + v + "'");
}

ModelConfig preset_config(const std::string& name, ModelVariant v) {
  if (name == "default") return ModelConfig::full_size(v);
  if (name == "tiny") return ModelConfig::tiny(v);
  if (name == "gradcheck") return ModelConfig::gradcheck(v);
  throw ConfigError("model.preset: expected default, tiny or gradcheck, got '" + name + "'");
}

ModelVariant parse_variant(const std::string& v) {
  if (auto m = variant_from_name(v)) return *m;
  throw ConfigError("model.variant: unknown variant '" + v + "'");
}

struct Field {
  std::string key;
  std::function<std::string()> get;
  std::function<void(const std::string&)> set;
};

void add_size(std::vector<Field>& f, std::string key, std::size_t& ref) {
  f.push_back({key, [&ref] { return fmt_size(ref); },
               [&ref, key](const std::string& v) { ref = parse_u64(key, v); }});
}

void add_double(std::vector<Field>& f, std::string key, double& ref) {
  f.push_back({key, [&ref] { return fmt_double(ref); },
               [&ref, key](const std::string& v) { ref = parse_double(key, v); }});
}

void model_fields(std::vector<Field>& f, ModelConfig& m) {
  f.push_back({"model.variant", [&m] { return std::string(variant_name(m.variant)); },
               [&m](const std::string& v) { m.variant = parse_variant(v); }});
  add_size(f, "model.input_length", m.input_length);
  add_size(f, "model.stem.channels", m.stem.channels_out);
  add_size(f, "model.stem.kernel", m.stem.kernel_size);
  add_size(f, "model.stem.stride", m.stem.stride);
  for (std::size_t s = 0; s < ModelConfig::kStages; ++s) {
    auto& st = m.stages[s];
    const std::string p = "model.stage" + std::to_string(s + 1) + ".";
    add_size(f, p + "growth", st.dense.growth_channels);
    add_size(f, p + "kernel", st.dense.kernel_size);
    add_size(f, p + "heads", st.transformer.heads);
    add_size(f, p + "projection_kernel", st.transformer.projection_kernel);
    add_size(f, p + "transition_channels", st.transition.channels_out);
    add_size(f, p + "transition_kernel", st.transition.kernel_size);
    add_size(f, p + "pool_window", st.transition.pool_window);
    add_size(f, p + "pool_stride", st.transition.pool_stride);
  }
  add_size(f, "model.bilstm.units", m.bilstm.hidden_units);
  add_size(f, "model.bilstm.layers", m.bilstm.layers);
}

void train_fields(std::vector<Field>& f, TrainConfig& t) {
  f.push_back({"train.optimizer", [&t] { return std::string(optimizer_name(t.optimizer.kind)); },
               [&t](const std::string& v) { t.optimizer.kind = optimizer_from_name(v); }});
  add_double(f, "train.lr", t.optimizer.lr);
  add_double(f, "train.beta1", t.optimizer.beta1);
  add_double(f, "train.beta2", t.optimizer.beta2);
  add_double(f, "train.eps", t.optimizer.eps);
  add_double(f, "train.momentum", t.optimizer.momentum);
  add_size(f, "train.batch_size", t.batch_size);
  add_size(f, "train.max_epochs", t.max_epochs);
  add_size(f, "train.max_steps", t.max_steps);
  f.push_back({"train.standardize", [&t] { return std::string(t.standardize ? "true" : "false"); },
               [&t](const std::string& v) { t.standardize = parse_bool("train.standardize", v); }});
  add_double(f, "loss.alpha", t.loss_weights.alpha);
  add_double(f, "loss.beta", t.loss_weights.beta);
  add_double(f, "loss.mu", t.loss_weights.mu);
}

std::vector<Field> run_fields(RunConfig& c) {
  std::vector<Field> f;
  f.push_back({"seed", [&c] { return std::to_string(c.seed); },
               [&c](const std::string& v) { c.seed = parse_u64("seed", v); }});
  add_size(f, "threads", c.threads);
  model_fields(f, c.model);
  train_fields(f, c.train);
  f.push_back({"data.channel", [&c] { return c.channel; },
               [&c](const std::string& v) { c.channel = v; }});
  add_size(f, "synth.patients", c.synth.patients);
  add_size(f, "synth.epochs_per_class", c.synth.epochs_per_class);
  add_double(f, "synth.sampling_rate", c.synth.sampling_rate);
  add_size(f, "gradcheck.seeds", c.gradcheck_seeds);
  add_double(f, "gradcheck.tolerance", c.gradcheck_tolerance);
  return f;
}

void apply(std::vector<Field>& fields, const KeyValues& kv, const char* skip = nullptr) {
  for (const auto& [k, v] : kv) {
    if (skip && k == skip) continue;
    bool found = false;
    for (auto& f : fields) {
      if (f.key == k) {
        f.set(v);
        found = true;
        break;
      }
    }
    if (!found) throw ConfigError("unknown config key '" + k + "'");
  }
}

}  // namespace

void TrainConfig::validate() const {
  optimizer.validate();
  loss_weights.validate();
  if (batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
  if (max_epochs < 1 && max_steps < 1) throw ConfigError("train.max_epochs or train.max_steps must be >= 1");
}

KeyValues parse_key_values(std::string_view text, const std::string& origin) {
  KeyValues kv;
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    line = trim(line);
    if (line.empty() || line.front() == '#') continue;
    const auto eq = line.find('=');
    const std::string where = origin + ":" + std::to_string(line_no);
    if (eq == std::string_view::npos) throw ConfigError(where + ": expected key = value");
    const std::string key(trim(line.substr(0, eq)));
    if (key.empty()) throw ConfigError(where + ": empty key");
    kv[key] = std::string(trim(line.substr(eq + 1)));
  }
  return kv;
}

KeyValues read_key_values(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_key_values(ss.str(), path.string());
}

std::string format_key_values(const KeyValues& kv) {
  std::string out;
  for (const auto& [k, v] : kv) out += k + " = " + v + "\n";
  return out;
}

KeyValues default_key_values() { return to_key_values(RunConfig{}); }

RunConfig resolve_config(const KeyValues& overrides) {
  RunConfig c;
  ModelVariant variant = c.model.variant;
  if (auto it = overrides.find("model.variant"); it != overrides.end()) variant = parse_variant(it->second);
  if (auto it = overrides.find("model.preset"); it != overrides.end()) c.preset = it->second;
  c.model = preset_config(c.preset, variant);
  auto fields = run_fields(c);
  apply(fields, overrides, "model.preset");
  c.model.link();
  c.train.seed = c.seed;
  c.train.variant = c.model.variant;
  if (c.threads < 1) throw ConfigError("threads must be >= 1");
  c.model.validate();
  c.train.validate();
  return c;
}

KeyValues to_key_values(const RunConfig& cfg) {
  RunConfig c = cfg;
  KeyValues kv;
  for (auto& f : run_fields(c)) kv[f.key] = f.get();
  kv["model.preset"] = c.preset;
  return kv;
}

KeyValues model_key_values(const ModelConfig& cfg) {
  ModelConfig m = cfg;
  std::vector<Field> f;
  model_fields(f, m);
  KeyValues kv;
  for (auto& x : f) kv[x.key] = x.get();
  return kv;
}

ModelConfig model_from_key_values(const KeyValues& kv) {
  ModelConfig m;
  std::vector<Field> f;
  model_fields(f, m);
  apply(f, kv);
  m.link();
  m.validate();
  return m;
}

KeyValues train_key_values(const TrainConfig& cfg) {
  TrainConfig t = cfg;
  std::vector<Field> f;
  train_fields(f, t);
  KeyValues kv;
  for (auto& x : f) kv[x.key] = x.get();
  kv["seed"] = std::to_string(t.seed);
  kv["model.variant"] = variant_name(t.variant);
  return kv;
}

TrainConfig train_from_key_values(const KeyValues& kv) {
  TrainConfig t;
  std::vector<Field> f;
  train_fields(f, t);
  f.push_back({"seed", [] { return std::string(); },
               [&t](const std::string& v) { t.seed = parse_u64("seed", v); }});
  f.push_back({"model.variant", [] { return std::string(); },
               [&t](const std::string& v) { t.variant = parse_variant(v); }});
  apply(f, kv);
  t.validate();
  return t;
}

}  // namespace drts
