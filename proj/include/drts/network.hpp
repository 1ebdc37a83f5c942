// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The DenseRTSleep Authors
//
// Model family: a strided stem, three stages of dense block -> (optional)
// transformer encoder -> transition, then a stacked BiLSTM (or a flatten)
// and a softmax head over the five stages.

#ifndef DRTS_NETWORK_HPP
#define DRTS_NETWORK_HPP

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "drts/ops.hpp"
#include "drts/rng.hpp"
#include "drts/tensor.hpp"

namespace drts {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class ModelVariant { DenseSleep, DenseRNNSleep, DenseRTSleepI, DenseRTSleepII };

inline constexpr std::array<ModelVariant, 4> kAllVariants = {
    ModelVariant::DenseSleep, ModelVariant::DenseRNNSleep, ModelVariant::DenseRTSleepI,
    ModelVariant::DenseRTSleepII};

const char* variant_name(ModelVariant v);
std::optional<ModelVariant> variant_from_name(std::string_view name);
bool uses_bilstm(ModelVariant v);
bool uses_transformer(ModelVariant v);
bool uses_multi_loss(ModelVariant v);

struct StemCfg {
  std::size_t channels_out = 16;
  std::size_t kernel_size = 7;  // padding kernel_size / 2
  std::size_t stride = 2;
};

struct DenseBlockCfg {
  static constexpr std::size_t repeats = 2;
  std::size_t channels_in = 0;
  std::size_t growth_channels = 16;
  std::size_t kernel_size = 5;

  std::size_t channels_out() const { return channels_in + repeats * growth_channels; }
};

struct TransformerCfg {
  std::size_t heads = 3;
  std::size_t model_channels = 0;
  std::size_t projection_kernel = 1;
};

struct TransitionCfg {
  std::size_t channels_out = 0;
  std::size_t kernel_size = 1;
  std::size_t pool_window = 2;
  std::size_t pool_stride = 2;
};

struct StageCfg {
  DenseBlockCfg dense;
  TransformerCfg transformer;
  TransitionCfg transition;
};

struct BiLstmCfg {
  std::size_t hidden_units = 128;
  std::size_t input_channels = 0;
  std::size_t layers = 2;
};

struct ModelConfig {
  static constexpr std::size_t kStages = 3;

  ModelVariant variant = ModelVariant::DenseRTSleepII;
  std::size_t input_length = 3000;
  std::size_t class_count = 5;
  StemCfg stem;
  std::array<StageCfg, kStages> stages;
  BiLstmCfg bilstm;

  // Full-size network for 30 s at 100 Hz.
  static ModelConfig full_size(ModelVariant v = ModelVariant::DenseRTSleepII);
  // Small network that trains in seconds on one core.
  static ModelConfig tiny(ModelVariant v = ModelVariant::DenseRTSleepII);
  // input_length 64, 4 channels, u = 4: sized for finite differences.
  static ModelConfig gradcheck(ModelVariant v = ModelVariant::DenseRTSleepII);

  // Fills the derived widths (dense channels_in, transformer model_channels,
  // BiLSTM input_channels) from the stage chain.
  void link();
  // Throws ConfigError on any inconsistency, including the shape chain.
  void validate() const;
};

/// One row of the symbolic shape trace (batch axis omitted).
struct ShapeStep {
  std::string layer;
  Shape shape;
  std::size_t params = 0;
};

/// Shapes of every block for `cfg`, computed without touching numbers.
std::vector<ShapeStep> shape_trace(const ModelConfig& cfg);

// Layer parameter holders.

struct ConvLayer {
  Parameter weight;  // [out, in, k]
  Parameter bias;    // [out]
  std::size_t stride = 1;
  std::size_t padding = 0;
};

struct BatchNormLayer {
  Parameter gamma;
  Parameter beta;
  BatchNormState state;
};

struct DenseLayer {
  BatchNormLayer bn;
  ConvLayer conv;
};

struct FeatureExtractor {
  DenseBlockCfg cfg;
  std::array<DenseLayer, DenseBlockCfg::repeats> layers;
};

struct TransformerEncoder {
  TransformerCfg cfg;
  ConvLayer projection;
  BatchNormLayer post_bn;
};

struct Transition {
  TransitionCfg cfg;
  ConvLayer conv;
};

/// Gate order in the stacked matrices: input, forget, cell, output.
struct LstmParams {
  Parameter w_ih;  // [4u, C]
  Parameter w_hh;  // [4u, u]
  Parameter bias;  // [4u]
  std::size_t hidden_units() const { return w_hh.tensor.dim(1); }
};

struct BiLstmLayer {
  LstmParams forward;
  LstmParams backward;
};

struct LinearLayer {
  Parameter weight;  // [out, in]
  Parameter bias;    // [out]
};

// Block forwards on [batch, C, L] tensors.

Tensor conv_forward(Tape& tape, const Tensor& x, const ConvLayer& layer);
Tensor batchnorm_forward(Tape& tape, const Tensor& x, BatchNormLayer& layer, Mode mode);

/// Two rounds of BN -> ReLU -> same-padded conv, each output concatenated
/// onto its input along channels.
Tensor feature_extractor_forward(Tape& tape, const Tensor& x, FeatureExtractor& block,
                                 Mode mode);

/// Projection conv, multi-head self-attention over positions, post-BN.
Tensor transformer_encoder_forward(Tape& tape, const Tensor& x, TransformerEncoder& block,
                                   Mode mode, std::vector<double>* attention = nullptr);

/// Conv then max-pool.
Tensor transition_forward(Tape& tape, const Tensor& x, const Transition& block);

/// One LSTM step: x_t [batch, C], h_prev/c_prev [batch, u].
std::pair<Tensor, Tensor> lstm_cell(Tape& tape, const Tensor& x_t, const Tensor& h_prev,
                                    const Tensor& c_prev, const LstmParams& params);

struct BiLstmOutput {
  Tensor final_state;  // [batch, 2u]: forward h_T then backward h_1
  Tensor outputs;      // [batch, T, 2u]
};

/// Stacked bidirectional LSTM over seq [batch, T, C]. Layer k > 0 consumes
/// the full output sequence of layer k - 1.
BiLstmOutput bilstm_forward(Tape& tape, const Tensor& seq, const std::vector<BiLstmLayer>& layers);

/// What a forward pass can report besides its result.
struct ForwardTrace {
  // Per transformer stage: attention weights ordered (batch, head, row, col).
  std::vector<std::vector<double>> attention;
  std::vector<std::size_t> attention_length;  // sequence length per stage
  std::vector<std::pair<std::string, Shape>> shapes;
};

/// A built network. Parameters are named uniquely and ordered by creation.
class Model {
 public:
  Model(const ModelConfig& cfg, std::uint64_t seed);
  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;
  Model(Model&&) = default;
  Model& operator=(Model&&) = default;

  const ModelConfig& config() const { return cfg_; }

  /// batch [B, 1, input_length] -> class probabilities [B, 5].
  Tensor forward(Tape& tape, const Tensor& batch, Mode mode, ForwardTrace* trace = nullptr);
  /// Inference without a recording tape.
  std::vector<double> predict(const Tensor& batch);

  std::vector<Parameter> parameters() const;
  // Running statistics of every batch-norm layer, named like parameters.
  std::vector<std::pair<std::string, std::vector<double>*>> buffers();
  std::size_t param_count() const;
  // Distinct parameter roles ("stem", "dense", "transformer", "transition",
  // "bilstm", "head").
  std::vector<std::string> roles() const;
  std::string summary() const;

 private:
  ModelConfig cfg_;
  ConvLayer stem_;
  std::array<FeatureExtractor, ModelConfig::kStages> dense_;
  std::array<TransformerEncoder, ModelConfig::kStages> transformer_;
  std::array<Transition, ModelConfig::kStages> transition_;
  std::vector<BiLstmLayer> bilstm_;
  LinearLayer head_;
  std::vector<Parameter> params_;
};

}  // namespace drts

#endif  // DRTS_NETWORK_HPP
