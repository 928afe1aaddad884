// Copyright 2026 The expertfind Authors
// SPDX-License-Identifier: Apache-2.0

#include "expertfind/tensor.h"

#include <sstream>
#include <utility>

#include "expertfind/errors.h"

namespace expertfind {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t e : shape) n *= e;
  return n;
}

std::string shape_to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

template <typename T>
Tensor<T> Tensor<T>::constant(Shape shape, std::vector<T> values) {
  if (shape_numel(shape) != values.size()) {
    throw DimensionError("shape " + shape_to_string(shape) + " needs " +
                         std::to_string(shape_numel(shape)) + " values, got " +
                         std::to_string(values.size()));
  }
  auto node = std::make_shared<detail::Node<T>>();
  node->shape = std::move(shape);
  node->value = std::move(values);
  return Tensor(std::move(node));
}

template <typename T>
Tensor<T> Tensor<T>::zeros(Shape shape) {
  const std::size_t n = shape_numel(shape);
  return constant(std::move(shape), std::vector<T>(n, T(0)));
}

template <typename T>
Tensor<T> Tensor<T>::scalar(T value) {
  return constant({}, {value});
}

template <typename T>
std::size_t Tensor<T>::rows() const {
  if (rank() != 2) throw DimensionError("rows() needs a matrix, got " + shape_to_string(shape()));
  return shape()[0];
}

template <typename T>
std::size_t Tensor<T>::cols() const {
  return rank() == 0 ? 1 : shape().back();
}

template <typename T>
T Tensor<T>::item() const {
  if (numel() != 1) {
    throw DimensionError("item() needs a single element, got " + shape_to_string(shape()));
  }
  return node_->value[0];
}

template <typename T>
T Tensor<T>::at(std::size_t i, std::size_t j) const {
  return node_->value[i * cols() + j];
}

template <typename T>
Tensor<T> Tape<T>::leaf(Shape shape, std::vector<T> values) {
  Tensor<T> t = Tensor<T>::constant(std::move(shape), std::move(values));
  t.node()->tape = this;
  leaves_.push_back(t.node());
  return t;
}

template <typename T>
void Tape<T>::record(std::string_view op, BackwardFn fn) {
  records_.push_back(Record{op, std::move(fn)});
}

template <typename T>
void Tape<T>::backward(const Tensor<T>& loss) {
  if (!loss.defined() || loss.tape() != this) {
    throw Error("backward: loss was not recorded on this tape");
  }
  if (loss.numel() != 1) {
    throw DimensionError("backward: loss must be scalar, got " + shape_to_string(loss.shape()));
  }
  if (consumed_) throw Error("backward: tape already consumed");
  consumed_ = true;
  loss.node()->grad_buffer()[0] += T(1);
  for (std::size_t i = records_.size(); i-- > 0;) {
    if (observer_) observer_(i, records_[i].op);
    records_[i].fn();
  }
  for (auto& leaf : leaves_) leaf->grad_buffer();
  // Release captured graph; leaf gradients stay readable through the handles.
  records_.clear();
}

template class Tensor<float>;
template class Tensor<double>;
template class Tape<float>;
template class Tape<double>;

}  // namespace expertfind
