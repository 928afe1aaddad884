// Copyright 2026 The expertfind Authors
// SPDX-License-Identifier: Apache-2.0

// Differentiable tensor ops. Matrices are rank-2 and row-major; "row-wise"
// ops treat any tensor as [numel / last extent, last extent]. Every op throws
// DimensionError on incompatible shapes and NumericalError if it produces a
// non-finite value.

#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "expertfind/rng.h"
#include "expertfind/tensor.h"

namespace expertfind {

inline constexpr double kLayerNormEps = 1e-12;

// [m x k] * [k x n] -> [m x n].
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);

// [m x k] * [n x k]^T -> [m x n].
template <typename T>
Tensor<T> matmul_nt(const Tensor<T>& a, const Tensor<T>& b);

// Elementwise; shapes must match exactly.
template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);

// [m x n] + bias[n], broadcast over rows.
template <typename T>
Tensor<T> add_bias(const Tensor<T>& x, const Tensor<T>& bias);

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T factor);

template <typename T>
Tensor<T> relu(const Tensor<T>& x);

// Row-wise softmax over the last axis, computed with max subtraction. Columns
// at index >= valid_cols receive probability 0 (key masking); valid_cols == 0
// means all columns are valid.
template <typename T>
Tensor<T> softmax(const Tensor<T>& x, std::size_t valid_cols = 0);

// Row-wise normalization followed by per-column gamma/beta.
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                     double eps = kLayerNormEps);

// Rows of a [V x d] table selected by `ids` -> [ids.size() x d].
template <typename T>
Tensor<T> gather_rows(const Tensor<T>& table, std::span<const int> ids);

template <typename T>
Tensor<T> slice_rows(const Tensor<T>& x, std::size_t start, std::size_t count);
template <typename T>
Tensor<T> slice_cols(const Tensor<T>& x, std::size_t start, std::size_t count);

// Matrices with equal column counts stacked vertically.
template <typename T>
Tensor<T> concat_rows(const std::vector<Tensor<T>>& parts);
// Matrices with equal row counts joined horizontally.
template <typename T>
Tensor<T> concat_cols(const std::vector<Tensor<T>>& parts);
// Single-element tensors -> rank-1 tensor of length parts.size().
template <typename T>
Tensor<T> stack_scalars(const std::vector<Tensor<T>>& parts);

// Inverted dropout; identity when p == 0.
template <typename T>
Tensor<T> dropout(const Tensor<T>& x, double p, Rng& rng);

template <typename T>
Tensor<T> sum(const Tensor<T>& x);

// Mean over rows of -log softmax(row)[target]. `logits` is [m x C] with
// targets.size() == m, or rank-1 [C] with a single target. Throws IndexError
// for targets outside [0, C).
template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& logits, std::span<const int> targets);
template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& logits, int target);

// Sum of -log softmax(row)[target] (not averaged); used when a loss is
// normalized over positions pooled from several sequences.
template <typename T>
Tensor<T> cross_entropy_sum(const Tensor<T>& logits, std::span<const int> targets);

}  // namespace expertfind
