// Copyright 2026 The expertfind Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "expertfind/errors.h"
#include "expertfind/tensor.h"

namespace expertfind {

// Named parameter tensors in insertion order.
template <typename T>
class ParamStore {
 public:
  struct Entry {
    std::string name;
    Shape shape;
    std::vector<T> values;
  };

  std::size_t add(std::string name, Shape shape, std::vector<T> values) {
    if (shape_numel(shape) != values.size()) {
      throw DimensionError("parameter " + name + ": shape " + shape_to_string(shape) +
                           " does not match " + std::to_string(values.size()) + " values");
    }
    if (index_.count(name)) throw Error("duplicate parameter " + name);
    index_.emplace(name, entries_.size());
    entries_.push_back(Entry{std::move(name), std::move(shape), std::move(values)});
    return entries_.size() - 1;
  }

  // Adds or replaces.
  std::size_t set(std::string name, Shape shape, std::vector<T> values) {
    if (auto it = index_.find(name); it != index_.end()) {
      if (shape_numel(shape) != values.size()) {
        throw DimensionError("parameter " + name + ": shape/value count mismatch");
      }
      entries_[it->second].shape = std::move(shape);
      entries_[it->second].values = std::move(values);
      return it->second;
    }
    return add(std::move(name), std::move(shape), std::move(values));
  }

  bool contains(std::string_view name) const { return index_.find(name) != index_.end(); }

  std::size_t index_of(std::string_view name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw IndexError("unknown parameter " + std::string(name));
    return it->second;
  }

  Entry& at(std::string_view name) { return entries_[index_of(name)]; }
  const Entry& at(std::string_view name) const { return entries_[index_of(name)]; }
  Entry& entry(std::size_t i) { return entries_[i]; }
  const Entry& entry(std::size_t i) const { return entries_[i]; }

  std::size_t size() const { return entries_.size(); }
  std::span<const Entry> entries() const { return entries_; }

  std::size_t total_elements() const {
    std::size_t n = 0;
    for (const auto& e : entries_) n += e.values.size();
    return n;
  }

  template <typename U>
  ParamStore<U> cast() const {
    ParamStore<U> out;
    for (const auto& e : entries_) {
      out.add(e.name, e.shape, std::vector<U>(e.values.begin(), e.values.end()));
    }
    return out;
  }

  bool operator==(const ParamStore& other) const {
    if (entries_.size() != other.entries_.size()) return false;
    for (std::size_t i = 0; i < entries_.size(); ++i) {
      const Entry& a = entries_[i];
      const Entry& b = other.entries_[i];
      if (a.name != b.name || a.shape != b.shape || a.values != b.values) return false;
    }
    return true;
  }

 private:
  std::vector<Entry> entries_;
  std::map<std::string, std::size_t, std::less<>> index_;
};

// Gradient buffers aligned with a ParamStore.
template <typename T>
class Gradients {
 public:
  Gradients() = default;
  explicit Gradients(const ParamStore<T>& store) {
    for (const auto& e : store.entries()) buffers_.emplace_back(e.values.size(), T(0));
  }

  std::size_t size() const { return buffers_.size(); }
  std::span<T> operator[](std::size_t i) { return buffers_[i]; }
  std::span<const T> operator[](std::size_t i) const { return buffers_[i]; }

 private:
  std::vector<std::vector<T>> buffers_;
};

// Exposes ParamStore entries as tensors. With a tape, each parameter becomes a
// leaf on first use; without one, a constant. A tape-less binding can be
// reused across any number of forward passes.
template <typename T>
class ParamBinding {
 public:
  ParamBinding(const ParamStore<T>& store, Tape<T>* tape)
      : store_(&store), tape_(tape), bound_(store.size()) {}

  const Tensor<T>& get(std::size_t index) {
    Tensor<T>& slot = bound_[index];
    if (!slot.defined()) {
      const auto& e = store_->entry(index);
      slot = tape_ ? tape_->leaf(e.shape, e.values) : Tensor<T>::constant(e.shape, e.values);
    }
    return slot;
  }

  const Tensor<T>& operator()(std::string_view name) { return get(store_->index_of(name)); }

  bool has(std::string_view name) const { return store_->contains(name); }

  // Adds leaf gradients (after backward) into `out`.
  void accumulate_into(Gradients<T>& out) const {
    for (std::size_t i = 0; i < bound_.size(); ++i) {
      if (!bound_[i].defined()) continue;
      const auto g = bound_[i].grad();
      auto dst = out[i];
      for (std::size_t j = 0; j < g.size(); ++j) dst[j] += g[j];
    }
  }

  Gradients<T> gradients() const {
    Gradients<T> out(*store_);
    accumulate_into(out);
    return out;
  }

  const ParamStore<T>& store() const { return *store_; }
  Tape<T>* tape() const { return tape_; }

 private:
  const ParamStore<T>* store_;
  Tape<T>* tape_;
  std::vector<Tensor<T>> bound_;
};

}  // namespace expertfind
