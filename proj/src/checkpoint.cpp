// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The DenseRTSleep Authors

#include "drts/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <json.hpp>
#include <sstream>
#include <stdexcept>
#include <zlib.h>

#include "drts/metrics.hpp"

namespace drts {
namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

using Json = nlohmann::ordered_json;

constexpr char kMagic[4] = {'D', 'R', 'T', 'S'};
constexpr std::size_t kHistoryColumns = 7;

[[noreturn]] void corrupt(const std::string& what) {
  throw TrainEvalError(TrainEvalErrc::CorruptFile, "corrupt checkpoint: " + what);
}

template <typename T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

template <typename T>
T get(std::string_view bytes, std::size_t& pos) {
  if (bytes.size() - pos < sizeof(T)) corrupt("truncated");
  T v;
  std::memcpy(&v, bytes.data() + pos, sizeof(T));
  pos += sizeof(T);
  return v;
}

std::uint32_t crc32_of(std::string_view bytes) {
  uLong crc = crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed in bounded chunks.
  const std::size_t chunk = 1u << 30;
  for (std::size_t off = 0; off < bytes.size(); off += chunk) {
    const std::size_t n = std::min(chunk, bytes.size() - off);
    crc = crc32(crc, reinterpret_cast<const Bytef*>(bytes.data() + off), static_cast<uInt>(n));
  }
  return static_cast<std::uint32_t>(crc);
}

Json kv_json(const KeyValues& kv) {
  Json j = Json::object();
  for (const auto& [k, v] : kv) j[k] = v;
  return j;
}

KeyValues json_kv(const Json& j) {
  KeyValues kv;
  for (const auto& [k, v] : j.items()) kv[k] = v.get<std::string>();
  return kv;
}

// Tensors in file order, each a (name, data) pair.
struct TensorList {
  std::vector<std::pair<std::string, const std::vector<double>*>> items;
  void add(const std::string& name, const std::vector<double>& v) { items.emplace_back(name, &v); }
};

std::vector<double> history_buffer(const std::vector<HistoryRow>& rows) {
  std::vector<double> v;
  v.reserve(rows.size() * kHistoryColumns);
  for (const auto& r : rows) {
    v.insert(v.end(), {static_cast<double>(r.step), static_cast<double>(r.epoch), r.ce, r.kl,
                       r.contrastive, r.total, r.val_accuracy});
  }
  return v;
}

}  // namespace

std::vector<NamedValues> snapshot_params(const Model& model) {
  std::vector<NamedValues> out;
  for (const auto& p : model.parameters()) {
    auto v = p.tensor.values();
    out.push_back({p.name, std::vector<double>(v.begin(), v.end())});
  }
  return out;
}

std::vector<NamedValues> snapshot_buffers(Model& model) {
  std::vector<NamedValues> out;
  for (const auto& [name, ptr] : model.buffers()) out.push_back({name, *ptr});
  return out;
}

void apply_snapshot(Model& model, const std::vector<NamedValues>& params,
                    const std::vector<NamedValues>& buffers) {
  const auto ps = model.parameters();
  if (ps.size() != params.size()) throw std::invalid_argument("snapshot parameter count mismatch");
  for (std::size_t i = 0; i < ps.size(); ++i) {
    Tensor t = ps[i].tensor;
    if (ps[i].name != params[i].name || t.numel() != params[i].values.size()) {
      throw std::invalid_argument("snapshot parameter mismatch at " + ps[i].name);
    }
    std::copy(params[i].values.begin(), params[i].values.end(), t.values().begin());
  }
  auto bs = model.buffers();
  if (bs.size() != buffers.size()) throw std::invalid_argument("snapshot buffer count mismatch");
  for (std::size_t i = 0; i < bs.size(); ++i) {
    if (bs[i].first != buffers[i].name || bs[i].second->size() != buffers[i].values.size()) {
      throw std::invalid_argument("snapshot buffer mismatch at " + bs[i].first);
    }
    *bs[i].second = buffers[i].values;
  }
}

std::string encode_checkpoint(const Checkpoint& ck) {
  const auto& pr = ck.progress;
  const std::vector<double> history = history_buffer(pr.history);
  TensorList tensors;
  for (const auto& p : ck.params) tensors.add("param/" + p.name, p.values);
  for (const auto& b : ck.buffers) tensors.add("buffer/" + b.name, b.values);
  for (std::size_t i = 0; i < ck.optimizer.first.size(); ++i) {
    tensors.add("optim/first/" + std::to_string(i), ck.optimizer.first[i]);
  }
  for (std::size_t i = 0; i < ck.optimizer.second.size(); ++i) {
    tensors.add("optim/second/" + std::to_string(i), ck.optimizer.second[i]);
  }
  for (const auto& p : pr.best_params) tensors.add("best/param/" + p.name, p.values);
  for (const auto& b : pr.best_buffers) tensors.add("best/buffer/" + b.name, b.values);
  tensors.add("history", history);

  Json m;
  m["model"] = kv_json(model_key_values(ck.model));
  m["train"] = kv_json(train_key_values(ck.train));
  m["optimizer"] = {{"steps", ck.optimizer.steps}};
  m["progress"] = {{"step", pr.step},
                   {"epoch", pr.epoch},
                   {"cursor", pr.cursor},
                   {"order", pr.order},
                   {"rng", pr.rng_state},
                   {"has_best", pr.has_best},
                   {"best_val_accuracy", pr.best_val_accuracy},
                   {"best_step", pr.best_step}};
  Json list = Json::array();
  for (const auto& [name, v] : tensors.items) list.push_back({name, v->size()});
  m["tensors"] = std::move(list);
  const std::string manifest = m.dump();

  std::string out(kMagic, 4);
  put<std::uint16_t>(out, kCheckpointVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(manifest.size()));
  out += manifest;
  for (const auto& [name, v] : tensors.items) {
    out.append(reinterpret_cast<const char*>(v->data()), v->size() * sizeof(double));
  }
  put<std::uint32_t>(out, crc32_of(out));
  return out;
}

Checkpoint decode_checkpoint(std::string_view bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) corrupt("bad magic");
  std::size_t pos = 4;
  const auto version = get<std::uint16_t>(bytes, pos);
  if (version != kCheckpointVersion) {
    throw TrainEvalError(TrainEvalErrc::VersionMismatch,
                         "checkpoint format version " + std::to_string(version) + ", expected " +
                             std::to_string(kCheckpointVersion));
  }
  if (bytes.size() < pos + 8) corrupt("truncated");
  std::size_t tail = bytes.size() - 4;
  const auto stored = get<std::uint32_t>(bytes, tail);
  if (stored != crc32_of(bytes.substr(0, bytes.size() - 4))) corrupt("checksum mismatch");
  const auto manifest_len = get<std::uint32_t>(bytes, pos);
  if (bytes.size() - 4 - pos < manifest_len) corrupt("truncated manifest");
  const std::string_view body = bytes.substr(0, bytes.size() - 4);

  Checkpoint ck;
  try {
    const Json m = Json::parse(body.substr(pos, manifest_len));
    pos += manifest_len;
    ck.model = model_from_key_values(json_kv(m.at("model")));
    ck.train = train_from_key_values(json_kv(m.at("train")));
    ck.optimizer.steps = m.at("optimizer").at("steps").get<std::uint64_t>();
    const Json& p = m.at("progress");
    auto& pr = ck.progress;
    pr.step = p.at("step").get<std::uint64_t>();
    pr.epoch = p.at("epoch").get<std::uint64_t>();
    pr.cursor = p.at("cursor").get<std::uint64_t>();
    pr.order = p.at("order").get<std::vector<std::uint64_t>>();
    pr.rng_state = p.at("rng").get<std::string>();
    pr.has_best = p.at("has_best").get<bool>();
    pr.best_val_accuracy = p.at("best_val_accuracy").get<double>();
    pr.best_step = p.at("best_step").get<std::uint64_t>();

    for (const auto& entry : m.at("tensors")) {
      const auto name = entry.at(0).get<std::string>();
      const auto count = entry.at(1).get<std::size_t>();
      if ((body.size() - pos) / sizeof(double) < count) corrupt("truncated tensor " + name);
      std::vector<double> v(count);
      std::memcpy(v.data(), body.data() + pos, count * sizeof(double));
      pos += count * sizeof(double);
      auto starts = [&](std::string_view prefix) { return name.rfind(prefix, 0) == 0; };
      auto rest = [&](std::string_view prefix) { return name.substr(prefix.size()); };
      if (starts("param/")) {
        ck.params.push_back({rest("param/"), std::move(v)});
      } else if (starts("buffer/")) {
        ck.buffers.push_back({rest("buffer/"), std::move(v)});
      } else if (starts("optim/first/")) {
        ck.optimizer.first.push_back(std::move(v));
      } else if (starts("optim/second/")) {
        ck.optimizer.second.push_back(std::move(v));
      } else if (starts("best/param/")) {
        pr.best_params.push_back({rest("best/param/"), std::move(v)});
      } else if (starts("best/buffer/")) {
        pr.best_buffers.push_back({rest("best/buffer/"), std::move(v)});
      } else if (name == "history") {
        if (v.size() % kHistoryColumns != 0) corrupt("history shape");
        for (std::size_t r = 0; r < v.size(); r += kHistoryColumns) {
          pr.history.push_back({static_cast<std::uint64_t>(v[r]), static_cast<std::uint64_t>(v[r + 1]),
                                v[r + 2], v[r + 3], v[r + 4], v[r + 5], v[r + 6]});
        }
      } else {
        corrupt("unknown tensor " + name);
      }
    }
  } catch (const nlohmann::json::exception& e) {
    corrupt(std::string("manifest: ") + e.what());
  } catch (const ConfigError& e) {
    corrupt(std::string("manifest config: ") + e.what());
  }
  if (pos != body.size()) corrupt("trailing bytes");
  return ck;
}

void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& path) {
  const std::string bytes = encode_checkpoint(ck);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return decode_checkpoint(ss.str());
}

Model model_from_checkpoint(const Checkpoint& ck, bool best) {
  Model m(ck.model, 0);
  try {
    if (best && ck.progress.has_best) {
      apply_snapshot(m, ck.progress.best_params, ck.progress.best_buffers);
    } else {
      apply_snapshot(m, ck.params, ck.buffers);
    }
  } catch (const std::invalid_argument& e) {
    corrupt(e.what());
  }
  return m;
}

}  // namespace drts
