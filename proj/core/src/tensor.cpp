#include "freqmrn/tensor.hpp"

#include <algorithm>
#include <sstream>

#include "freqmrn/error.hpp"

namespace freqmrn {

std::size_t shape_size(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << 'x';
    out << shape[i];
  }
  out << ']';
  return out.str();
}

Tensor::Tensor() : shape_{0}, data_(std::make_shared<const std::vector<double>>()) {}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)) {
  if (shape_size(shape_) != data.size()) {
    throw DimensionError("tensor shape " + shape_string(shape_) + " needs " +
                         std::to_string(shape_size(shape_)) + " values, got " + std::to_string(data.size()));
  }
  data_ = std::make_shared<const std::vector<double>>(std::move(data));
}

Tensor Tensor::zeros(Shape shape) { return full(std::move(shape), 0.0); }

Tensor Tensor::full(Shape shape, double value) {
  const auto n = shape_size(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value));
}

Tensor Tensor::scalar(double value) { return Tensor({}, {value}); }

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= shape_.size()) {
    throw DimensionError("axis " + std::to_string(axis) + " out of range for shape " + shape_string(shape_));
  }
  return shape_[axis];
}

double Tensor::item() const {
  if (size() != 1) throw DimensionError("item() on tensor of shape " + shape_string(shape_));
  return (*data_)[0];
}

double Tensor::at(std::initializer_list<std::size_t> index) const {
  if (index.size() != shape_.size()) {
    throw DimensionError("index of rank " + std::to_string(index.size()) + " for shape " + shape_string(shape_));
  }
  std::size_t flat = 0;
  std::size_t axis = 0;
  for (auto i : index) {
    if (i >= shape_[axis]) throw BoundsError("index out of range for shape " + shape_string(shape_));
    flat = flat * shape_[axis] + i;
    ++axis;
  }
  return (*data_)[flat];
}

std::optional<NodeId> Tensor::node() const {
  if (!tape_) return std::nullopt;
  return node_;
}

Tensor Tensor::detached() const {
  Tensor out = *this;
  out.tape_ = nullptr;
  out.node_ = 0;
  return out;
}

bool Gradients::contains(const Tensor& t) const {
  return t.tape() == tape_ && t.node() && grads_.count(*t.node()) > 0;
}

Tensor Gradients::of(const Tensor& t) const {
  if (!t.node() || t.tape() != tape_) {
    throw TapeError("tensor " + shape_string(t.shape()) + " is not tracked on the differentiated tape");
  }
  auto it = grads_.find(*t.node());
  if (it == grads_.end()) return Tensor::zeros(t.shape());
  return it->second;
}

Tensor Tape::watch(const Tensor& value) {
  Tensor out = value.detached();
  nodes_.push_back(Node{value.shape(), {}, nullptr});
  out.tape_ = this;
  out.node_ = nodes_.size() - 1;
  return out;
}

Tensor Tape::record(Tensor value, std::span<const Tensor* const> inputs, BackwardFn backward) {
  if (consumed_) throw TapeError("cannot record on a tape after backward(); call reset() first");
  Node node{value.shape(), {}, std::move(backward)};
  node.inputs.reserve(inputs.size());
  for (const Tensor* in : inputs) {
    if (in->tape_ == nullptr) {
      node.inputs.push_back(kNoNode);
    } else if (in->tape_ != this) {
      throw TapeError("operation mixes tensors from different tapes");
    } else {
      node.inputs.push_back(in->node_);
    }
  }
  nodes_.push_back(std::move(node));
  value.tape_ = this;
  value.node_ = nodes_.size() - 1;
  return value;
}

Gradients Tape::backward(const Tensor& loss) {
  if (loss.size() != 1) {
    throw DimensionError("backward() needs a scalar loss, got shape " + shape_string(loss.shape()));
  }
  if (loss.tape_ != this) throw TapeError("loss is not recorded on this tape");
  if (consumed_) throw TapeError("backward() already ran on this tape; call reset() first");
  consumed_ = true;

  std::vector<std::vector<double>> buffers(nodes_.size());
  buffers[loss.node_].assign(1, 1.0);

  GradSpans spans;
  for (NodeId id = loss.node_ + 1; id-- > 0;) {
    if (buffers[id].empty()) continue;
    Node& node = nodes_[id];
    if (!node.backward) continue;
    spans.assign(node.inputs.size(), std::span<double>{});
    for (std::size_t i = 0; i < node.inputs.size(); ++i) {
      const NodeId in = node.inputs[i];
      if (in == kNoNode) continue;
      if (buffers[in].empty()) buffers[in].assign(shape_size(nodes_[in].shape), 0.0);
      spans[i] = buffers[in];
    }
    node.backward(buffers[id], spans);
  }

  Gradients grads;
  grads.tape_ = this;
  for (NodeId id = 0; id <= loss.node_; ++id) {
    if (buffers[id].empty()) continue;
    grads.grads_.emplace(id, Tensor(nodes_[id].shape, std::move(buffers[id])));
  }
  return grads;
}

void Tape::reset() {
  nodes_.clear();
  consumed_ = false;
}

Tensor make_result(Tensor value, std::span<const Tensor* const> inputs, BackwardFn backward) {
  Tape* tape = nullptr;
  for (const Tensor* in : inputs) {
    if (in->tape()) {
      tape = in->tape();
      break;
    }
  }
  if (!tape) return value;
  return tape->record(std::move(value), inputs, std::move(backward));
}

Tensor make_result(Tensor value, std::initializer_list<const Tensor*> inputs, BackwardFn backward) {
  return make_result(std::move(value), std::span<const Tensor* const>(inputs.begin(), inputs.size()),
                     std::move(backward));
}

}  // namespace freqmrn
