// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The DenseRTSleep Authors

#include "drts/optimizer.hpp"

#include <cmath>
#include <stdexcept>

#include "drts/network.hpp"

namespace drts {

const char* optimizer_name(OptimizerKind k) { return k == OptimizerKind::Adam ? "adam" : "sgd"; }

OptimizerKind optimizer_from_name(const std::string& name) {
  if (name == "adam") return OptimizerKind::Adam;
  if (name == "sgd") return OptimizerKind::Sgd;
  throw ConfigError("unknown optimizer '" + name + "' (expected adam or sgd)");
}

void OptimizerConfig::validate() const {
  // lr = 0 is allowed as a null update.
  if (!(lr >= 0.0) || !std::isfinite(lr)) throw ConfigError("optimizer lr must be >= 0");
  if (kind == OptimizerKind::Adam) {
    if (!(beta1 >= 0.0 && beta1 < 1.0)) throw ConfigError("adam beta1 must lie in [0, 1)");
    if (!(beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("adam beta2 must lie in [0, 1)");
    if (!(eps > 0.0)) throw ConfigError("adam eps must be positive");
  } else if (!(momentum >= 0.0 && momentum < 1.0)) {
    throw ConfigError("sgd momentum must lie in [0, 1)");
  }
}

Optimizer::Optimizer(OptimizerConfig cfg, std::vector<Parameter> params)
    : cfg_(cfg), params_(std::move(params)) {
  cfg_.validate();
  for (const auto& p : params_) {
    state_.first.emplace_back(p.tensor.numel(), 0.0);
    if (cfg_.kind == OptimizerKind::Adam) state_.second.emplace_back(p.tensor.numel(), 0.0);
  }
}

void Optimizer::step() {
  ++state_.steps;
  const double t = static_cast<double>(state_.steps);
  const double c1 = 1.0 - std::pow(cfg_.beta1, t);
  const double c2 = 1.0 - std::pow(cfg_.beta2, t);
  for (std::size_t k = 0; k < params_.size(); ++k) {
    Tensor p = params_[k].tensor;
    auto v = p.values();
    const TensorNode* node = p.node();
    const bool has_grad = !node->grad.empty();
    auto& m = state_.first[k];
    if (cfg_.kind == OptimizerKind::Adam) {
      auto& s = state_.second[k];
      for (std::size_t i = 0; i < v.size(); ++i) {
        const double g = has_grad ? node->grad[i] : 0.0;
        m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g;
        s[i] = cfg_.beta2 * s[i] + (1.0 - cfg_.beta2) * g * g;
        v[i] -= cfg_.lr * (m[i] / c1) / (std::sqrt(s[i] / c2) + cfg_.eps);
      }
    } else {
      for (std::size_t i = 0; i < v.size(); ++i) {
        const double g = has_grad ? node->grad[i] : 0.0;
        m[i] = cfg_.momentum * m[i] + g;
        v[i] -= cfg_.lr * m[i];
      }
    }
  }
}

void Optimizer::zero_grad() {
  for (auto& p : params_) p.tensor.zero_grad();
}

void Optimizer::restore(OptimizerState state) {
  const bool adam = cfg_.kind == OptimizerKind::Adam;
  bool ok = state.first.size() == params_.size() &&
            state.second.size() == (adam ? params_.size() : 0);
  for (std::size_t k = 0; ok && k < params_.size(); ++k) {
    ok = state.first[k].size() == params_[k].tensor.numel() &&
         (!adam || state.second[k].size() == params_[k].tensor.numel());
  }
  if (!ok) throw std::invalid_argument("optimizer state does not match the parameter list");
  state_ = std::move(state);
}

}  // namespace drts
