// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The DenseRTSleep Authors
//
// Dense n-dimensional tensors and the reverse-mode tape that records
// primitive applications on them.

#ifndef DRTS_TENSOR_HPP
#define DRTS_TENSOR_HPP

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace drts {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

enum class AutogradErrc {
  ShapeMismatch,
  EmptyOutput,
  DegenerateBatch,
  NotScalar,
  DisconnectedGraph,
  HeadsDivisibility,
  EmptySequence,
  NotProbability,
};

class AutogradError : public std::runtime_error {
 public:
  AutogradError(AutogradErrc code, const std::string& what)
      : std::runtime_error(what), code_(code) {}
  AutogradErrc code() const noexcept { return code_; }

 private:
  AutogradErrc code_;
};

struct TensorNode {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // empty means "all zeros"
  bool requires_grad = false;

  std::vector<double>& grad_buffer() {
    if (grad.empty()) grad.assign(value.size(), 0.0);
    return grad;
  }
};

/// Shared handle to a tensor node. Copies alias the same storage.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double v, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values,
                     bool requires_grad = false);
  static Tensor scalar(double v, bool requires_grad = false);

  bool defined() const noexcept { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t dim(std::size_t axis) const { return node_->shape.at(axis); }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t numel() const { return node_->value.size(); }

  std::span<double> values() { return node_->value; }
  std::span<const double> values() const { return node_->value; }
  double item() const;

  bool requires_grad() const noexcept { return node_ && node_->requires_grad; }
  void set_requires_grad(bool on) { node_->requires_grad = on; }

  // Gradient as a dense vector (zeros when nothing has been accumulated).
  std::vector<double> grad() const;
  bool has_grad() const { return !node_->grad.empty(); }
  void zero_grad() { node_->grad.clear(); }

  Tensor detach_copy() const;

  TensorNode* node() const noexcept { return node_.get(); }
  const std::shared_ptr<TensorNode>& shared() const noexcept { return node_; }

 private:
  explicit Tensor(std::shared_ptr<TensorNode> n) : node_(std::move(n)) {}
  std::shared_ptr<TensorNode> node_;
};

struct Parameter {
  std::string name;
  Tensor tensor;
};

/// Ordered record of primitive applications. Backward replays the recorded
/// rules in exact reverse order. A tape with recording disabled evaluates
/// ops eagerly and keeps nothing.
class Tape {
 public:
  explicit Tape(bool recording = true) : recording_(recording) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const noexcept { return recording_; }
  std::size_t size() const noexcept { return entries_.size(); }

  // Creates the output tensor of an op. The output requires a gradient when
  // the tape records and any input does.
  Tensor make_output(Shape shape, std::initializer_list<const Tensor*> inputs);
  Tensor make_output(Shape shape, std::span<const Tensor> inputs);

  // Registers the backward rule for `output`. Ignored when the output does
  // not require a gradient.
  void record(const Tensor& output, std::string op_name,
              std::function<void()> backward);

  // Seeds d(loss)/d(loss) = 1 and accumulates gradients into every
  // requires_grad tensor reachable from the recorded ops.
  void backward(const Tensor& loss);

  // Names of the recorded ops, in order.
  std::vector<std::string> op_names() const;

  void clear() { entries_.clear(); }

  // Branch fingerprint. When enabled, ops with data-dependent branches
  // (relu sign, pool argmax, clamps, hinges) fold each decision into a
  // running hash, so two evaluations can be compared for a kink crossing.
  void track_branches(bool on) { track_branches_ = on; }
  bool tracks_branches() const noexcept { return track_branches_; }
  void note_branch(std::uint64_t decision) {
    fingerprint_ = (fingerprint_ ^ decision) * 0x100000001b3ULL;
  }
  std::uint64_t branch_fingerprint() const noexcept { return fingerprint_; }

 private:
  struct Entry {
    std::shared_ptr<TensorNode> output;
    std::string op;
    std::function<void()> backward;
  };
  bool recording_;
  bool track_branches_ = false;
  std::uint64_t fingerprint_ = 0xcbf29ce484222325ULL;
  std::vector<Entry> entries_;
};

}  // namespace drts

#endif  // DRTS_TENSOR_HPP
