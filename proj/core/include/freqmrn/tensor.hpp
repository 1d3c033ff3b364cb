#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace freqmrn {

using Shape = std::vector<std::size_t>;
using NodeId = std::size_t;

std::size_t shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

class Tape;

/// Dense row-major array of doubles.
///
/// Tensors are immutable: storage is shared between copies and never written
/// after construction. A tensor that was produced on a Tape (or registered with
/// Tape::watch) carries a handle to its node and participates in backward().
class Tensor {
 public:
  Tensor();
  Tensor(Shape shape, std::vector<double> data);

  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, double value);
  static Tensor scalar(double value);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t size() const { return data_->size(); }

  std::span<const double> data() const& { return *data_; }
  /// The span would outlive a temporary tensor.
  std::span<const double> data() const&& = delete;
  const double* raw() const { return data_->data(); }
  double operator[](std::size_t i) const { return (*data_)[i]; }
  /// Value of a single-element tensor.
  double item() const;
  /// Multi-index access; the index count must equal rank().
  double at(std::initializer_list<std::size_t> index) const;

  std::vector<double> to_vector() const { return *data_; }

  bool requires_grad() const { return tape_ != nullptr; }
  Tape* tape() const { return tape_; }
  std::optional<NodeId> node() const;

  /// Same values, no tape handle.
  Tensor detached() const;

 private:
  friend class Tape;

  Shape shape_;
  std::shared_ptr<const std::vector<double>> data_;
  Tape* tape_ = nullptr;
  NodeId node_ = 0;
};

/// Gradient buffers handed to a node's backward rule, one per input.
/// An empty span marks an input that does not need a gradient.
using GradSpans = std::vector<std::span<double>>;
using BackwardFn = std::function<void(std::span<const double> grad_out, GradSpans& grad_in)>;

/// Gradients produced by Tape::backward, keyed by node.
class Gradients {
 public:
  bool contains(const Tensor& t) const;
  /// Gradient of the loss w.r.t. `t`; zeros if `t` is unreachable from the loss.
  Tensor of(const Tensor& t) const;
  std::size_t size() const { return grads_.size(); }

 private:
  friend class Tape;
  const Tape* tape_ = nullptr;
  std::unordered_map<NodeId, Tensor> grads_;
};

/// Append-only record of differentiable operations.
///
/// Nodes are appended in evaluation order, so inputs always precede their
/// consumers and a reverse sweep is a valid topological order.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Registers `value` as a differentiable leaf.
  Tensor watch(const Tensor& value);

  /// Appends a node computing `value` from `inputs`. Untracked inputs are
  /// allowed and receive no gradient.
  Tensor record(Tensor value, std::span<const Tensor* const> inputs, BackwardFn backward);

  /// Reverse sweep from a single-element loss. Only one sweep per recording.
  Gradients backward(const Tensor& loss);

  /// Drops all nodes; tensors recorded before the reset must not be reused.
  void reset();

  std::size_t size() const { return nodes_.size(); }

 private:
  static constexpr NodeId kNoNode = static_cast<NodeId>(-1);

  struct Node {
    Shape shape;
    std::vector<NodeId> inputs;
    BackwardFn backward;
  };

  std::vector<Node> nodes_;
  bool consumed_ = false;
};

/// Builds the result of an op: a plain tensor when no input is tracked,
/// otherwise a node on the inputs' tape.
Tensor make_result(Tensor value, std::span<const Tensor* const> inputs, BackwardFn backward);
Tensor make_result(Tensor value, std::initializer_list<const Tensor*> inputs, BackwardFn backward);

}  // namespace freqmrn
