// Copyright 2026 The expertfind Authors
// SPDX-License-Identifier: Apache-2.0

// Dense row-major tensors with tape-based reverse-mode differentiation.
//
// A Tensor is a cheap handle to an immutable value. Tensors created through a
// Tape (leaves) or computed from such tensors are recorded on that tape; all
// other tensors are constants. Tape::backward() replays the recorded ops in
// reverse order and accumulates gradients into every node that requires them.
//
// Everything is templated on the scalar type. float is used for training and
// double for finite-difference verification; both are instantiated in
// tensor.cpp and ops.cpp.

#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace expertfind {

using Shape = std::vector<std::size_t>;

// Number of elements; 1 for the rank-0 (scalar) shape.
std::size_t shape_numel(const Shape& shape);
std::string shape_to_string(const Shape& shape);

template <typename T>
class Tape;

namespace detail {

template <typename T>
struct Node {
  Shape shape;
  std::vector<T> value;
  std::vector<T> grad;  // empty until backward reaches the node
  Tape<T>* tape = nullptr;

  std::vector<T>& grad_buffer() {
    if (grad.empty()) grad.assign(value.size(), T(0));
    return grad;
  }
};

}  // namespace detail

template <typename T>
class Tensor {
 public:
  using NodePtr = std::shared_ptr<detail::Node<T>>;

  Tensor() = default;
  explicit Tensor(NodePtr node) : node_(std::move(node)) {}

  static Tensor constant(Shape shape, std::vector<T> values);
  static Tensor zeros(Shape shape);
  static Tensor scalar(T value);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t numel() const { return node_->value.size(); }
  // Leading extent of a rank-2 tensor.
  std::size_t rows() const;
  // Trailing extent; 1 for scalars.
  std::size_t cols() const;

  std::span<const T> values() const { return node_->value; }
  // Empty before backward, or when the tensor is a constant.
  std::span<const T> grad() const { return node_->grad; }
  bool requires_grad() const { return node_->tape != nullptr; }
  Tape<T>* tape() const { return node_->tape; }

  T item() const;
  T at(std::size_t i, std::size_t j) const;

  const NodePtr& node() const { return node_; }

 private:
  NodePtr node_;
};

// Single-threaded record of executed ops. A tape is used for exactly one
// forward/backward pass and must outlive every tensor recorded on it.
template <typename T>
class Tape {
 public:
  using BackwardFn = std::function<void()>;
  using Observer = std::function<void(std::size_t index, std::string_view op)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Tensor<T> leaf(Shape shape, std::vector<T> values);

  // Called by ops. `op` must have static storage duration.
  void record(std::string_view op, BackwardFn fn);

  // Seeds d(loss)/d(loss) = 1 and runs the recorded ops in reverse. The loss
  // must be a single-element tensor recorded on this tape.
  void backward(const Tensor<T>& loss);

  std::size_t op_count() const { return records_.size(); }
  std::string_view op_name(std::size_t index) const { return records_[index].op; }

  // Test hook: invoked for each op as backward visits it.
  void set_backward_observer(Observer observer) { observer_ = std::move(observer); }

 private:
  struct Record {
    std::string_view op;
    BackwardFn fn;
  };
  std::vector<Record> records_;
  std::vector<typename Tensor<T>::NodePtr> leaves_;
  Observer observer_;
  bool consumed_ = false;
};

extern template class Tensor<float>;
extern template class Tensor<double>;
extern template class Tape<float>;
extern template class Tape<double>;

}  // namespace expertfind
