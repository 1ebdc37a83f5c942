// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The DenseRTSleep Authors

#include "drts/network.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>
#include <sstream>

namespace drts {
namespace {

std::string stage_prefix(std::size_t s) { return "stage" + std::to_string(s + 1); }

std::size_t conv_out_length(std::size_t length, std::size_t kernel, std::size_t stride,
                            std::size_t padding) {
  if (length + 2 * padding < kernel || stride == 0) return 0;
  return (length + 2 * padding - kernel) / stride + 1;
}

std::size_t conv_params(std::size_t in, std::size_t out, std::size_t k) { return out * in * k + out; }
std::size_t lstm_params(std::size_t in, std::size_t u) { return 4 * u * (in + u) + 4 * u; }

// Creates parameters in a fixed order from one init stream.
class Initializer {
 public:
  Initializer(std::uint64_t seed, std::vector<Parameter>& sink)
      : rng_(RngStreams(seed).stream("init")), sink_(sink) {}

  Parameter uniform(const std::string& name, Shape shape, double bound) {
    std::vector<double> v(shape_numel(shape));
    for (double& x : v) x = rng_.uniform(-bound, bound);
    return add(name, std::move(shape), std::move(v));
  }
  Parameter constant(const std::string& name, Shape shape, double value) {
    std::vector<double> v(shape_numel(shape), value);
    return add(name, std::move(shape), std::move(v));
  }

  ConvLayer conv(const std::string& name, std::size_t in, std::size_t out, std::size_t k,
                 std::size_t stride, std::size_t padding) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in * k));
    ConvLayer c;
    c.weight = uniform(name + ".weight", {out, in, k}, bound);
    c.bias = uniform(name + ".bias", {out}, bound);
    c.stride = stride;
    c.padding = padding;
    return c;
  }
  BatchNormLayer batchnorm(const std::string& name, std::size_t channels) {
    BatchNormLayer b;
    b.gamma = constant(name + ".gamma", {channels}, 1.0);
    b.beta = constant(name + ".beta", {channels}, 0.0);
    b.state = BatchNormState(channels);
    return b;
  }
  LstmParams lstm(const std::string& name, std::size_t in, std::size_t u) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(u));
    LstmParams p;
    p.w_ih = uniform(name + ".w_ih", {4 * u, in}, bound);
    p.w_hh = uniform(name + ".w_hh", {4 * u, u}, bound);
    p.bias = uniform(name + ".bias", {4 * u}, bound);
    auto b = p.bias.tensor.values();
    for (std::size_t j = u; j < 2 * u; ++j) b[j] += 1.0;  // forget gate
    return p;
  }
  LinearLayer linear(const std::string& name, std::size_t in, std::size_t out) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    LinearLayer l;
    l.weight = uniform(name + ".weight", {out, in}, bound);
    l.bias = uniform(name + ".bias", {out}, bound);
    return l;
  }

 private:
  Parameter add(const std::string& name, Shape shape, std::vector<double> v) {
    Parameter p{name, Tensor::from(std::move(shape), std::move(v), true)};
    sink_.push_back(p);
    return p;
  }
  Rng rng_;
  std::vector<Parameter>& sink_;
};

}  // namespace

const char* variant_name(ModelVariant v) {
  switch (v) {
    case ModelVariant::DenseSleep: return "DenseSleep";
    case ModelVariant::DenseRNNSleep: return "DenseRNNSleep";
    case ModelVariant::DenseRTSleepI: return "DenseRTSleep-I";
    case ModelVariant::DenseRTSleepII: return "DenseRTSleep-II";
  }
  return "?";
}

std::optional<ModelVariant> variant_from_name(std::string_view name) {
  for (auto v : kAllVariants) {
    if (name == variant_name(v)) return v;
  }
  if (name == "DenseRTSleepI") return ModelVariant::DenseRTSleepI;
  if (name == "DenseRTSleepII") return ModelVariant::DenseRTSleepII;
  return std::nullopt;
}

bool uses_bilstm(ModelVariant v) { return v != ModelVariant::DenseSleep; }
bool uses_transformer(ModelVariant v) {
  return v == ModelVariant::DenseRTSleepI || v == ModelVariant::DenseRTSleepII;
}
bool uses_multi_loss(ModelVariant v) { return v == ModelVariant::DenseRTSleepII; }

ModelConfig ModelConfig::full_size(ModelVariant v) {
  ModelConfig c;
  c.variant = v;
  c.input_length = 3000;
  c.stem = {16, 7, 2};
  const std::size_t out[] = {40, 64, 128};
  const std::size_t pool[] = {4, 2, 2};
  for (std::size_t s = 0; s < kStages; ++s) {
    c.stages[s].dense.growth_channels = 16;
    c.stages[s].dense.kernel_size = 5;
    c.stages[s].transformer.heads = 3;
    c.stages[s].transformer.projection_kernel = 1;
    c.stages[s].transition = {out[s], 1, pool[s], pool[s]};
  }
  c.bilstm.hidden_units = 128;
  c.bilstm.layers = 2;
  c.link();
  return c;
}

ModelConfig ModelConfig::tiny(ModelVariant v) {
  ModelConfig c;
  c.variant = v;
  c.input_length = 3000;
  c.stem = {12, 63, 32};
  const std::size_t out[] = {12, 18, 24};
  const std::size_t pool[] = {4, 2, 2};
  for (std::size_t s = 0; s < kStages; ++s) {
    c.stages[s].dense.growth_channels = 6;
    c.stages[s].dense.kernel_size = 5;
    c.stages[s].transformer.heads = 3;
    c.stages[s].transformer.projection_kernel = 1;
    c.stages[s].transition = {out[s], 1, pool[s], pool[s]};
  }
  c.bilstm.hidden_units = 16;
  c.bilstm.layers = 1;
  c.link();
  return c;
}

ModelConfig ModelConfig::gradcheck(ModelVariant v) {
  ModelConfig c;
  c.variant = v;
  c.input_length = 64;
  c.stem = {4, 3, 2};
  for (std::size_t s = 0; s < kStages; ++s) {
    c.stages[s].dense.growth_channels = 1;
    c.stages[s].dense.kernel_size = 3;
    c.stages[s].transformer.heads = 3;
    c.stages[s].transformer.projection_kernel = 1;
    c.stages[s].transition = {4, 1, 2, 2};
  }
  c.bilstm.hidden_units = 4;
  c.bilstm.layers = 2;
  c.link();
  return c;
}

void ModelConfig::link() {
  std::size_t channels = stem.channels_out;
  for (auto& st : stages) {
    st.dense.channels_in = channels;
    st.transformer.model_channels = st.dense.channels_out();
    channels = st.transition.channels_out;
  }
  bilstm.input_channels = channels;
}

void ModelConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError(msg); };
  if (class_count != 5) fail("class_count must be 5");
  if (input_length == 0) fail("input_length must be positive");
  if (stem.channels_out == 0 || stem.kernel_size == 0 || stem.stride == 0) {
    fail("stem channels, kernel and stride must be positive");
  }
  std::size_t channels = stem.channels_out;
  for (std::size_t s = 0; s < kStages; ++s) {
    const auto& st = stages[s];
    const std::string at = stage_prefix(s) + ": ";
    if (st.dense.channels_in != channels) fail(at + "dense channels_in does not chain");
    if (st.dense.growth_channels == 0) fail(at + "growth_channels must be positive");
    if (st.dense.kernel_size % 2 == 0) fail(at + "dense kernel_size must be odd");
    if (uses_transformer(variant)) {
      const auto& t = st.transformer;
      if (t.model_channels != st.dense.channels_out()) {
        fail(at + "transformer model_channels must equal the dense block output");
      }
      if (t.heads == 0 || t.model_channels % t.heads != 0) {
        fail(at + "model_channels " + std::to_string(t.model_channels) +
             " not divisible by heads " + std::to_string(t.heads));
      }
      if (t.projection_kernel % 2 == 0) fail(at + "projection_kernel must be odd");
    }
    if (st.transition.channels_out == 0) fail(at + "transition channels_out must be positive");
    if (st.transition.kernel_size % 2 == 0) fail(at + "transition kernel_size must be odd");
    if (st.transition.pool_stride < 2) fail(at + "pool_stride must be at least 2");
    if (st.transition.pool_window == 0) fail(at + "pool_window must be positive");
    channels = st.transition.channels_out;
  }
  if (uses_bilstm(variant)) {
    if (bilstm.hidden_units == 0) fail("bilstm hidden_units must be positive");
    if (bilstm.layers == 0) fail("bilstm layers must be positive");
    if (bilstm.input_channels != channels) fail("bilstm input_channels does not chain");
  }
  // Length chain.
  std::size_t length = conv_out_length(input_length, stem.kernel_size, stem.stride,
                                       stem.kernel_size / 2);
  if (length == 0) fail("input_length too short for the stem");
  for (std::size_t s = 0; s < kStages; ++s) {
    const auto& st = stages[s];
    const std::string at = stage_prefix(s) + ": ";
    if (length < st.dense.kernel_size) {
      fail(at + "length " + std::to_string(length) + " shorter than dense kernel");
    }
    if (length < st.transition.pool_window) {
      fail(at + "length " + std::to_string(length) + " shorter than pool window");
    }
    length = (length - st.transition.pool_window) / st.transition.pool_stride + 1;
  }
}

std::vector<ShapeStep> shape_trace(const ModelConfig& cfg) {
  cfg.validate();
  std::vector<ShapeStep> out;
  std::size_t length = conv_out_length(cfg.input_length, cfg.stem.kernel_size, cfg.stem.stride,
                                       cfg.stem.kernel_size / 2);
  out.push_back({"input", {1, cfg.input_length}, 0});
  out.push_back({"stem", {cfg.stem.channels_out, length},
                 conv_params(1, cfg.stem.channels_out, cfg.stem.kernel_size)});
  for (std::size_t s = 0; s < ModelConfig::kStages; ++s) {
    const auto& st = cfg.stages[s];
    const std::string p = stage_prefix(s);
    std::size_t dense_params = 0;
    for (std::size_t j = 0; j < DenseBlockCfg::repeats; ++j) {
      const std::size_t in = st.dense.channels_in + j * st.dense.growth_channels;
      dense_params += 2 * in + conv_params(in, st.dense.growth_channels, st.dense.kernel_size);
    }
    const std::size_t c = st.dense.channels_out();
    out.push_back({p + ".dense", {c, length}, dense_params});
    if (uses_transformer(cfg.variant)) {
      out.push_back({p + ".transformer", {c, length},
                     conv_params(c, c, st.transformer.projection_kernel) + 2 * c});
    }
    length = (length - st.transition.pool_window) / st.transition.pool_stride + 1;
    out.push_back({p + ".transition", {st.transition.channels_out, length},
                   conv_params(c, st.transition.channels_out, st.transition.kernel_size)});
  }
  const std::size_t c = cfg.stages.back().transition.channels_out;
  std::size_t features = c * length;
  if (uses_bilstm(cfg.variant)) {
    const std::size_t u = cfg.bilstm.hidden_units;
    std::size_t in = c;
    for (std::size_t l = 0; l < cfg.bilstm.layers; ++l) {
      out.push_back({"bilstm." + std::to_string(l), {length, 2 * u}, 2 * lstm_params(in, u)});
      in = 2 * u;
    }
    features = 2 * u;
  } else {
    out.push_back({"flatten", {features}, 0});
  }
  out.push_back({"head", {cfg.class_count}, features * cfg.class_count + cfg.class_count});
  return out;
}

Tensor conv_forward(Tape& tape, const Tensor& x, const ConvLayer& layer) {
  return ops::conv1d(tape, x, layer.weight.tensor, layer.bias.tensor, layer.stride, layer.padding);
}

Tensor batchnorm_forward(Tape& tape, const Tensor& x, BatchNormLayer& layer, Mode mode) {
  return ops::batchnorm1d(tape, x, layer.gamma.tensor, layer.beta.tensor, layer.state, mode);
}

Tensor feature_extractor_forward(Tape& tape, const Tensor& x, FeatureExtractor& block,
                                 Mode mode) {
  if (x.rank() != 3 || x.dim(1) != block.cfg.channels_in) {
    throw AutogradError(AutogradErrc::ShapeMismatch,
                        "dense block expects " + std::to_string(block.cfg.channels_in) +
                            " channels, got " + shape_str(x.shape()));
  }
  if (x.dim(2) < block.cfg.kernel_size) {
    throw AutogradError(AutogradErrc::ShapeMismatch, "sequence shorter than dense kernel");
  }
  Tensor h = x;
  for (auto& layer : block.layers) {
    Tensor y = batchnorm_forward(tape, h, layer.bn, mode);
    y = ops::relu(tape, y);
    y = conv_forward(tape, y, layer.conv);
    const Tensor parts[] = {h, y};
    h = ops::concat(tape, parts, 1);
  }
  return h;
}

Tensor transformer_encoder_forward(Tape& tape, const Tensor& x, TransformerEncoder& block,
                                   Mode mode, std::vector<double>* attention) {
  if (x.rank() != 3 || x.dim(1) != block.cfg.model_channels) {
    throw AutogradError(AutogradErrc::ShapeMismatch,
                        "transformer expects " + std::to_string(block.cfg.model_channels) +
                            " channels, got " + shape_str(x.shape()));
  }
  if (block.cfg.heads == 0 || block.cfg.model_channels % block.cfg.heads != 0) {
    throw AutogradError(AutogradErrc::HeadsDivisibility,
                        "model_channels not divisible by heads");
  }
  Tensor projected = conv_forward(tape, x, block.projection);
  Tensor attended = ops::multi_head_self_attention(tape, projected, block.cfg.heads, attention);
  return batchnorm_forward(tape, attended, block.post_bn, mode);
}

Tensor transition_forward(Tape& tape, const Tensor& x, const Transition& block) {
  if (x.rank() != 3 || x.dim(2) < block.cfg.pool_window) {
    throw AutogradError(AutogradErrc::EmptyOutput, "sequence shorter than the pool window");
  }
  Tensor y = conv_forward(tape, x, block.conv);
  return ops::max_pool1d(tape, y, block.cfg.pool_window, block.cfg.pool_stride);
}

std::pair<Tensor, Tensor> lstm_cell(Tape& tape, const Tensor& x_t, const Tensor& h_prev,
                                    const Tensor& c_prev, const LstmParams& params) {
  const std::size_t u = params.hidden_units();
  if (x_t.rank() != 2 || h_prev.shape() != Shape{x_t.dim(0), u} ||
      c_prev.shape() != h_prev.shape() || params.w_ih.tensor.dim(1) != x_t.dim(1)) {
    throw AutogradError(AutogradErrc::ShapeMismatch,
                        "lstm_cell: x " + shape_str(x_t.shape()) + ", h " +
                            shape_str(h_prev.shape()) + ", c " + shape_str(c_prev.shape()));
  }
  Tensor gates = ops::add(tape, ops::linear(tape, x_t, params.w_ih.tensor, params.bias.tensor),
                          ops::linear(tape, h_prev, params.w_hh.tensor, Tensor()));
  Tensor i = ops::sigmoid(tape, ops::slice(tape, gates, 1, 0, u));
  Tensor f = ops::sigmoid(tape, ops::slice(tape, gates, 1, u, 2 * u));
  Tensor g = ops::tanh_op(tape, ops::slice(tape, gates, 1, 2 * u, 3 * u));
  Tensor o = ops::sigmoid(tape, ops::slice(tape, gates, 1, 3 * u, 4 * u));
  Tensor c = ops::add(tape, ops::mul(tape, f, c_prev), ops::mul(tape, i, g));
  Tensor h = ops::mul(tape, o, ops::tanh_op(tape, c));
  return {h, c};
}

BiLstmOutput bilstm_forward(Tape& tape, const Tensor& seq, const std::vector<BiLstmLayer>& layers) {
  if (seq.rank() != 3) {
    throw AutogradError(AutogradErrc::ShapeMismatch,
                        "bilstm expects [batch, T, C], got " + shape_str(seq.shape()));
  }
  const std::size_t batch = seq.dim(0);
  const std::size_t steps = seq.dim(1);
  if (steps == 0) throw AutogradError(AutogradErrc::EmptySequence, "bilstm over zero steps");
  if (layers.empty()) throw AutogradError(AutogradErrc::ShapeMismatch, "bilstm without layers");

  BiLstmOutput out;
  Tensor input = seq;
  for (const auto& layer : layers) {
    const std::size_t c = input.dim(2);
    std::vector<Tensor> xs(steps);
    for (std::size_t t = 0; t < steps; ++t) {
      xs[t] = ops::reshape(tape, ops::slice(tape, input, 1, t, t + 1), {batch, c});
    }
    auto run = [&](const LstmParams& p, bool reverse) {
      const std::size_t u = p.hidden_units();
      Tensor h = Tensor::zeros({batch, u});
      Tensor cell = Tensor::zeros({batch, u});
      std::vector<Tensor> hs(steps);
      for (std::size_t k = 0; k < steps; ++k) {
        const std::size_t t = reverse ? steps - 1 - k : k;
        std::tie(h, cell) = lstm_cell(tape, xs[t], h, cell, p);
        hs[t] = h;
      }
      return hs;
    };
    const auto fwd = run(layer.forward, false);
    const auto bwd = run(layer.backward, true);
    const std::size_t u2 = layer.forward.hidden_units() + layer.backward.hidden_units();
    std::vector<Tensor> rows(steps);
    for (std::size_t t = 0; t < steps; ++t) {
      const Tensor pair[] = {fwd[t], bwd[t]};
      rows[t] = ops::reshape(tape, ops::concat(tape, pair, 1), {batch, 1, u2});
    }
    out.outputs = ops::concat(tape, rows, 1);
    const Tensor ends[] = {fwd[steps - 1], bwd[0]};
    out.final_state = ops::concat(tape, ends, 1);
    input = out.outputs;
  }
  return out;
}

Model::Model(const ModelConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  Initializer init(seed, params_);
  stem_ = init.conv("stem", 1, cfg_.stem.channels_out, cfg_.stem.kernel_size, cfg_.stem.stride,
                    cfg_.stem.kernel_size / 2);
  for (std::size_t s = 0; s < ModelConfig::kStages; ++s) {
    const auto& st = cfg_.stages[s];
    const std::string p = stage_prefix(s);
    dense_[s].cfg = st.dense;
    for (std::size_t j = 0; j < DenseBlockCfg::repeats; ++j) {
      const std::size_t in = st.dense.channels_in + j * st.dense.growth_channels;
      const std::string name = p + ".dense." + std::to_string(j);
      dense_[s].layers[j].bn = init.batchnorm(name + ".bn", in);
      dense_[s].layers[j].conv = init.conv(name + ".conv", in, st.dense.growth_channels,
                                           st.dense.kernel_size, 1, st.dense.kernel_size / 2);
    }
    const std::size_t c = st.dense.channels_out();
    if (uses_transformer(cfg_.variant)) {
      transformer_[s].cfg = st.transformer;
      const std::size_t k = st.transformer.projection_kernel;
      transformer_[s].projection = init.conv(p + ".transformer.proj", c, c, k, 1, k / 2);
      transformer_[s].post_bn = init.batchnorm(p + ".transformer.bn", c);
    }
    transition_[s].cfg = st.transition;
    transition_[s].conv = init.conv(p + ".transition.conv", c, st.transition.channels_out,
                                    st.transition.kernel_size, 1, st.transition.kernel_size / 2);
  }
  const auto trace = shape_trace(cfg_);
  std::size_t features = 0;
  if (uses_bilstm(cfg_.variant)) {
    const std::size_t u = cfg_.bilstm.hidden_units;
    std::size_t in = cfg_.bilstm.input_channels;
    for (std::size_t l = 0; l < cfg_.bilstm.layers; ++l) {
      const std::string name = "bilstm." + std::to_string(l);
      BiLstmLayer layer;
      layer.forward = init.lstm(name + ".fwd", in, u);
      layer.backward = init.lstm(name + ".bwd", in, u);
      bilstm_.push_back(std::move(layer));
      in = 2 * u;
    }
    features = 2 * u;
  } else {
    features = shape_numel(trace[trace.size() - 2].shape);
  }
  head_ = init.linear("head", features, cfg_.class_count);
}

Tensor Model::forward(Tape& tape, const Tensor& batch, Mode mode, ForwardTrace* trace) {
  if (batch.rank() != 3 || batch.dim(1) != 1 || batch.dim(2) != cfg_.input_length ||
      batch.dim(0) == 0) {
    throw AutogradError(AutogradErrc::ShapeMismatch,
                        "model expects [batch, 1, " + std::to_string(cfg_.input_length) +
                            "], got " + shape_str(batch.shape()));
  }
  auto note = [&](const std::string& name, const Tensor& t) {
    if (trace) trace->shapes.emplace_back(name, t.shape());
  };
  Tensor h = conv_forward(tape, batch, stem_);
  note("stem", h);
  for (std::size_t s = 0; s < ModelConfig::kStages; ++s) {
    const std::string p = stage_prefix(s);
    h = feature_extractor_forward(tape, h, dense_[s], mode);
    note(p + ".dense", h);
    if (uses_transformer(cfg_.variant)) {
      std::vector<double>* capture = nullptr;
      if (trace) {
        trace->attention.emplace_back();
        trace->attention_length.push_back(h.dim(2));
        capture = &trace->attention.back();
      }
      h = transformer_encoder_forward(tape, h, transformer_[s], mode, capture);
      note(p + ".transformer", h);
    }
    h = transition_forward(tape, h, transition_[s]);
    note(p + ".transition", h);
  }
  Tensor features;
  if (uses_bilstm(cfg_.variant)) {
    features = bilstm_forward(tape, ops::swap_last_axes(tape, h), bilstm_).final_state;
    note("bilstm", features);
  } else {
    features = ops::reshape(tape, h, {h.dim(0), h.dim(1) * h.dim(2)});
    note("flatten", features);
  }
  Tensor logits = ops::linear(tape, features, head_.weight.tensor, head_.bias.tensor);
  Tensor probs = ops::softmax(tape, logits);
  note("head", probs);
  return probs;
}

std::vector<double> Model::predict(const Tensor& batch) {
  Tape tape(false);
  const Tensor p = forward(tape, batch, Mode::Infer);
  return {p.values().begin(), p.values().end()};
}

std::vector<Parameter> Model::parameters() const { return params_; }

std::vector<std::pair<std::string, std::vector<double>*>> Model::buffers() {
  std::vector<std::pair<std::string, std::vector<double>*>> out;
  auto add = [&](const std::string& name, BatchNormLayer& bn) {
    out.emplace_back(name + ".running_mean", &bn.state.running_mean);
    out.emplace_back(name + ".running_var", &bn.state.running_var);
  };
  for (std::size_t s = 0; s < ModelConfig::kStages; ++s) {
    const std::string p = stage_prefix(s);
    for (std::size_t j = 0; j < DenseBlockCfg::repeats; ++j) {
      add(p + ".dense." + std::to_string(j) + ".bn", dense_[s].layers[j].bn);
    }
    if (uses_transformer(cfg_.variant)) add(p + ".transformer.bn", transformer_[s].post_bn);
  }
  return out;
}

std::size_t Model::param_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.tensor.numel();
  return n;
}

std::vector<std::string> Model::roles() const {
  std::set<std::string> seen;
  std::vector<std::string> out;
  for (const auto& p : params_) {
    std::string name = p.name;
    if (name.rfind("stage", 0) == 0) name = name.substr(name.find('.') + 1);
    name = name.substr(0, name.find('.'));
    if (seen.insert(name).second) out.push_back(name);
  }
  return out;
}

std::string Model::summary() const {
  std::ostringstream os;
  os << variant_name(cfg_.variant) << "\n";
  char line[128];
  std::snprintf(line, sizeof line, "%-20s %-16s %12s\n", "layer", "shape", "params");
  os << line;
  for (const auto& step : shape_trace(cfg_)) {
    std::snprintf(line, sizeof line, "%-20s %-16s %12zu\n", step.layer.c_str(),
                  shape_str(step.shape).c_str(), step.params);
    os << line;
  }
  std::snprintf(line, sizeof line, "%-20s %-16s %12zu\n", "total", "", param_count());
  os << line;
  return os.str();
}

}  // namespace drts
