// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The DenseRTSleep Authors

#include "drts/tensor.hpp"

#include <numeric>
#include <sstream>

namespace drts {

std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(Shape shape, double v, bool requires_grad) {
  auto n = std::make_shared<TensorNode>();
  n->value.assign(shape_numel(shape), v);
  n->shape = std::move(shape);
  n->requires_grad = requires_grad;
  return Tensor(std::move(n));
}

Tensor Tensor::from(Shape shape, std::vector<double> values,
                    bool requires_grad) {
  if (values.size() != shape_numel(shape)) {
    throw AutogradError(AutogradErrc::ShapeMismatch,
                        "value count " + std::to_string(values.size()) +
                            " does not match shape " + shape_str(shape));
  }
  auto n = std::make_shared<TensorNode>();
  n->shape = std::move(shape);
  n->value = std::move(values);
  n->requires_grad = requires_grad;
  return Tensor(std::move(n));
}

Tensor Tensor::scalar(double v, bool requires_grad) {
  return from(Shape{1}, {v}, requires_grad);
}

double Tensor::item() const {
  if (numel() != 1) {
    throw AutogradError(AutogradErrc::NotScalar,
                        "item() on tensor of shape " + shape_str(shape()));
  }
  return node_->value[0];
}

std::vector<double> Tensor::grad() const {
  if (node_->grad.empty()) return std::vector<double>(node_->value.size(), 0.0);
  return node_->grad;
}

Tensor Tensor::detach_copy() const {
  return from(node_->shape, node_->value, false);
}

Tensor Tape::make_output(Shape shape,
                         std::initializer_list<const Tensor*> inputs) {
  bool needs = false;
  if (recording_) {
    for (const Tensor* t : inputs) needs = needs || t->requires_grad();
  }
  return Tensor::zeros(std::move(shape), needs);
}

Tensor Tape::make_output(Shape shape, std::span<const Tensor> inputs) {
  bool needs = false;
  if (recording_) {
    for (const Tensor& t : inputs) needs = needs || t.requires_grad();
  }
  return Tensor::zeros(std::move(shape), needs);
}

void Tape::record(const Tensor& output, std::string op_name,
                  std::function<void()> backward) {
  if (!recording_ || !output.requires_grad()) return;
  entries_.push_back({output.shared(), std::move(op_name), std::move(backward)});
}

void Tape::backward(const Tensor& loss) {
  if (loss.numel() != 1) {
    throw AutogradError(AutogradErrc::NotScalar,
                        "backward() needs a scalar loss, got shape " +
                            shape_str(loss.shape()));
  }
  if (!loss.requires_grad()) {
    throw AutogradError(AutogradErrc::DisconnectedGraph,
                        "loss is not connected to any tensor requiring grad");
  }
  loss.node()->grad_buffer()[0] += 1.0;
  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
    if (it->output->grad.empty()) continue;
    it->backward();
  }
}

std::vector<std::string> Tape::op_names() const {
  std::vector<std::string> names;
  names.reserve(entries_.size());
  for (const auto& e : entries_) names.push_back(e.op);
  return names;
}

}  // namespace drts
