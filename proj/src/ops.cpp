// Copyright 2026 The expertfind Authors
// SPDX-License-Identifier: Apache-2.0

#include "expertfind/ops.h"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "expertfind/errors.h"

namespace expertfind {
namespace {

template <typename T>
using MatRM = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapC = Eigen::Map<const MatRM<T>>;
template <typename T>
using Map = Eigen::Map<MatRM<T>>;

template <typename T>
using NodePtr = typename Tensor<T>::NodePtr;

template <typename T>
Tape<T>* tape_of(std::initializer_list<const Tensor<T>*> inputs) {
  Tape<T>* tape = nullptr;
  for (const Tensor<T>* t : inputs) {
    if (!t->defined()) throw Error("op received an undefined tensor");
    Tape<T>* other = t->tape();
    if (!other) continue;
    if (tape && other != tape) throw Error("op mixes tensors from different tapes");
    tape = other;
  }
  return tape;
}

template <typename T>
Tensor<T> make_output(const char* op, Shape shape, std::vector<T> value, Tape<T>* tape) {
  for (const T v : value) {
    if (!std::isfinite(v)) throw NumericalError(std::string(op) + " produced a non-finite value");
  }
  auto node = std::make_shared<detail::Node<T>>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  node->tape = tape;
  return Tensor<T>(std::move(node));
}

void require_matrix(const char* op, const Shape& s) {
  if (s.size() != 2) {
    throw DimensionError(std::string(op) + " needs a matrix, got " + shape_to_string(s));
  }
}

// [rows x cols] view of any tensor over its last axis.
std::pair<std::size_t, std::size_t> row_view(const Shape& s) {
  const std::size_t cols = s.empty() ? 1 : s.back();
  return {cols == 0 ? 0 : shape_numel(s) / cols, cols};
}

}  // namespace

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  Tape<T>* tape = tape_of({&a, &b});
  require_matrix("matmul", a.shape());
  require_matrix("matmul", b.shape());
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  if (b.shape()[0] != k) {
    throw DimensionError("matmul: inner extents differ: " + shape_to_string(a.shape()) + " x " +
                         shape_to_string(b.shape()));
  }
  std::vector<T> out(m * n);
  Map<T>(out.data(), m, n).noalias() =
      MapC<T>(a.values().data(), m, k) * MapC<T>(b.values().data(), k, n);
  Tensor<T> y = make_output("matmul", {m, n}, std::move(out), tape);
  if (tape) {
    tape->record("matmul", [an = a.node(), bn = b.node(), yn = y.node(), m, k, n] {
      if (yn->grad.empty()) return;
      MapC<T> g(yn->grad.data(), m, n);
      if (an->tape) {
        Map<T>(an->grad_buffer().data(), m, k).noalias() +=
            g * MapC<T>(bn->value.data(), k, n).transpose();
      }
      if (bn->tape) {
        Map<T>(bn->grad_buffer().data(), k, n).noalias() +=
            MapC<T>(an->value.data(), m, k).transpose() * g;
      }
    });
  }
  return y;
}

template <typename T>
Tensor<T> matmul_nt(const Tensor<T>& a, const Tensor<T>& b) {
  Tape<T>* tape = tape_of({&a, &b});
  require_matrix("matmul_nt", a.shape());
  require_matrix("matmul_nt", b.shape());
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[0];
  if (b.shape()[1] != k) {
    throw DimensionError("matmul_nt: inner extents differ: " + shape_to_string(a.shape()) +
                         " x " + shape_to_string(b.shape()) + "^T");
  }
  std::vector<T> out(m * n);
  Map<T>(out.data(), m, n).noalias() =
      MapC<T>(a.values().data(), m, k) * MapC<T>(b.values().data(), n, k).transpose();
  Tensor<T> y = make_output("matmul_nt", {m, n}, std::move(out), tape);
  if (tape) {
    tape->record("matmul_nt", [an = a.node(), bn = b.node(), yn = y.node(), m, k, n] {
      if (yn->grad.empty()) return;
      MapC<T> g(yn->grad.data(), m, n);
      if (an->tape) {
        Map<T>(an->grad_buffer().data(), m, k).noalias() += g * MapC<T>(bn->value.data(), n, k);
      }
      if (bn->tape) {
        Map<T>(bn->grad_buffer().data(), n, k).noalias() +=
            g.transpose() * MapC<T>(an->value.data(), m, k);
      }
    });
  }
  return y;
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  Tape<T>* tape = tape_of({&a, &b});
  if (a.shape() != b.shape()) {
    throw DimensionError("add: shapes differ: " + shape_to_string(a.shape()) + " vs " +
                         shape_to_string(b.shape()));
  }
  std::vector<T> out(a.values().begin(), a.values().end());
  const auto bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  Tensor<T> y = make_output("add", a.shape(), std::move(out), tape);
  if (tape) {
    tape->record("add", [an = a.node(), bn = b.node(), yn = y.node()] {
      if (yn->grad.empty()) return;
      for (const auto& in : {an, bn}) {
        if (!in->tape) continue;
        auto& g = in->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += yn->grad[i];
      }
    });
  }
  return y;
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  Tape<T>* tape = tape_of({&a, &b});
  if (a.shape() != b.shape()) {
    throw DimensionError("mul: shapes differ: " + shape_to_string(a.shape()) + " vs " +
                         shape_to_string(b.shape()));
  }
  std::vector<T> out(a.values().begin(), a.values().end());
  const auto bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  Tensor<T> y = make_output("mul", a.shape(), std::move(out), tape);
  if (tape) {
    tape->record("mul", [an = a.node(), bn = b.node(), yn = y.node()] {
      if (yn->grad.empty()) return;
      if (an->tape) {
        auto& g = an->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += yn->grad[i] * bn->value[i];
      }
      if (bn->tape) {
        auto& g = bn->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += yn->grad[i] * an->value[i];
      }
    });
  }
  return y;
}

template <typename T>
Tensor<T> add_bias(const Tensor<T>& x, const Tensor<T>& bias) {
  Tape<T>* tape = tape_of({&x, &bias});
  require_matrix("add_bias", x.shape());
  const std::size_t m = x.shape()[0], n = x.shape()[1];
  if (bias.numel() != n) {
    throw DimensionError("add_bias: bias " + shape_to_string(bias.shape()) + " does not match " +
                         shape_to_string(x.shape()));
  }
  std::vector<T> out(x.values().begin(), x.values().end());
  const auto bv = bias.values();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] += bv[j];
  }
  Tensor<T> y = make_output("add_bias", x.shape(), std::move(out), tape);
  if (tape) {
    tape->record("add_bias", [xn = x.node(), bn = bias.node(), yn = y.node(), m, n] {
      if (yn->grad.empty()) return;
      if (xn->tape) {
        auto& g = xn->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += yn->grad[i];
      }
      if (bn->tape) {
        auto& g = bn->grad_buffer();
        for (std::size_t i = 0; i < m; ++i) {
          for (std::size_t j = 0; j < n; ++j) g[j] += yn->grad[i * n + j];
        }
      }
    });
  }
  return y;
}

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T factor) {
  Tape<T>* tape = tape_of({&x});
  std::vector<T> out(x.values().begin(), x.values().end());
  for (T& v : out) v *= factor;
  Tensor<T> y = make_output("scale", x.shape(), std::move(out), tape);
  if (tape) {
    tape->record("scale", [xn = x.node(), yn = y.node(), factor] {
      if (yn->grad.empty()) return;
      auto& g = xn->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += factor * yn->grad[i];
    });
  }
  return y;
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  Tape<T>* tape = tape_of({&x});
  std::vector<T> out(x.values().begin(), x.values().end());
  for (T& v : out) v = v > T(0) ? v : T(0);
  Tensor<T> y = make_output("relu", x.shape(), std::move(out), tape);
  if (tape) {
    tape->record("relu", [xn = x.node(), yn = y.node()] {
      if (yn->grad.empty()) return;
      auto& g = xn->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) {
        if (xn->value[i] > T(0)) g[i] += yn->grad[i];
      }
    });
  }
  return y;
}

template <typename T>
Tensor<T> softmax(const Tensor<T>& x, std::size_t valid_cols) {
  Tape<T>* tape = tape_of({&x});
  const auto [rows, cols] = row_view(x.shape());
  const std::size_t valid = valid_cols == 0 ? cols : std::min(valid_cols, cols);
  std::vector<T> out(x.numel(), T(0));
  const auto xv = x.values();
  for (std::size_t r = 0; r < rows; ++r) {
    const T* in = xv.data() + r * cols;
    T* o = out.data() + r * cols;
    T mx = -std::numeric_limits<T>::infinity();
    for (std::size_t c = 0; c < valid; ++c) mx = std::max(mx, in[c]);
    T total = 0;
    for (std::size_t c = 0; c < valid; ++c) {
      o[c] = std::exp(in[c] - mx);
      total += o[c];
    }
    for (std::size_t c = 0; c < valid; ++c) o[c] /= total;
  }
  Tensor<T> y = make_output("softmax", x.shape(), std::move(out), tape);
  if (tape) {
    tape->record("softmax", [xn = x.node(), yn = y.node(), rows = rows, cols = cols] {
      if (yn->grad.empty()) return;
      auto& g = xn->grad_buffer();
      for (std::size_t r = 0; r < rows; ++r) {
        const T* yr = yn->value.data() + r * cols;
        const T* gy = yn->grad.data() + r * cols;
        T dot = 0;
        for (std::size_t c = 0; c < cols; ++c) dot += gy[c] * yr[c];
        for (std::size_t c = 0; c < cols; ++c) g[r * cols + c] += yr[c] * (gy[c] - dot);
      }
    });
  }
  return y;
}

template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                     double eps) {
  Tape<T>* tape = tape_of({&x, &gamma, &beta});
  const auto [rows, cols] = row_view(x.shape());
  if (gamma.numel() != cols || beta.numel() != cols) {
    throw DimensionError("layer_norm: gamma/beta " + shape_to_string(gamma.shape()) + "/" +
                         shape_to_string(beta.shape()) + " do not match " +
                         shape_to_string(x.shape()));
  }
  std::vector<T> out(x.numel());
  std::vector<T> xhat(x.numel());
  std::vector<T> inv_std(rows);
  const auto xv = x.values();
  const auto gv = gamma.values();
  const auto bv = beta.values();
  for (std::size_t r = 0; r < rows; ++r) {
    const T* in = xv.data() + r * cols;
    T mean = 0;
    for (std::size_t c = 0; c < cols; ++c) mean += in[c];
    mean /= static_cast<T>(cols);
    T var = 0;
    for (std::size_t c = 0; c < cols; ++c) var += (in[c] - mean) * (in[c] - mean);
    var /= static_cast<T>(cols);
    inv_std[r] = T(1) / std::sqrt(var + static_cast<T>(eps));
    for (std::size_t c = 0; c < cols; ++c) {
      const T h = (in[c] - mean) * inv_std[r];
      xhat[r * cols + c] = h;
      out[r * cols + c] = gv[c] * h + bv[c];
    }
  }
  Tensor<T> y = make_output("layer_norm", x.shape(), std::move(out), tape);
  if (tape) {
    tape->record("layer_norm", [xn = x.node(), gn = gamma.node(), bn = beta.node(), yn = y.node(),
                                xhat = std::move(xhat), inv_std = std::move(inv_std),
                                rows = rows, cols = cols] {
      if (yn->grad.empty()) return;
      const T n = static_cast<T>(cols);
      for (std::size_t r = 0; r < rows; ++r) {
        const T* gy = yn->grad.data() + r * cols;
        const T* h = xhat.data() + r * cols;
        if (gn->tape) {
          auto& gg = gn->grad_buffer();
          for (std::size_t c = 0; c < cols; ++c) gg[c] += gy[c] * h[c];
        }
        if (bn->tape) {
          auto& gb = bn->grad_buffer();
          for (std::size_t c = 0; c < cols; ++c) gb[c] += gy[c];
        }
        if (xn->tape) {
          T sum_d = 0, sum_dh = 0;
          for (std::size_t c = 0; c < cols; ++c) {
            const T d = gy[c] * gn->value[c];
            sum_d += d;
            sum_dh += d * h[c];
          }
          auto& gx = xn->grad_buffer();
          for (std::size_t c = 0; c < cols; ++c) {
            const T d = gy[c] * gn->value[c];
            gx[r * cols + c] += inv_std[r] / n * (n * d - sum_d - h[c] * sum_dh);
          }
        }
      }
    });
  }
  return y;
}

template <typename T>
Tensor<T> gather_rows(const Tensor<T>& table, std::span<const int> ids) {
  Tape<T>* tape = tape_of({&table});
  require_matrix("gather_rows", table.shape());
  const std::size_t vocab = table.shape()[0], d = table.shape()[1];
  std::vector<T> out(ids.size() * d);
  const auto tv = table.values();
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= vocab) {
      throw IndexError("gather_rows: id " + std::to_string(ids[i]) + " outside table of " +
                       std::to_string(vocab) + " rows");
    }
    std::copy_n(tv.data() + ids[i] * d, d, out.data() + i * d);
  }
  Tensor<T> y = make_output("gather_rows", {ids.size(), d}, std::move(out), tape);
  if (tape) {
    tape->record("gather_rows",
                 [tn = table.node(), yn = y.node(), ids = std::vector<int>(ids.begin(), ids.end()),
                  d] {
                   if (yn->grad.empty()) return;
                   auto& g = tn->grad_buffer();
                   for (std::size_t i = 0; i < ids.size(); ++i) {
                     T* row = g.data() + static_cast<std::size_t>(ids[i]) * d;
                     for (std::size_t c = 0; c < d; ++c) row[c] += yn->grad[i * d + c];
                   }
                 });
  }
  return y;
}

template <typename T>
Tensor<T> slice_rows(const Tensor<T>& x, std::size_t start, std::size_t count) {
  Tape<T>* tape = tape_of({&x});
  require_matrix("slice_rows", x.shape());
  const std::size_t n = x.shape()[1];
  if (start + count > x.shape()[0]) {
    throw DimensionError("slice_rows: rows [" + std::to_string(start) + ", " +
                         std::to_string(start + count) + ") outside " +
                         shape_to_string(x.shape()));
  }
  const auto xv = x.values();
  std::vector<T> out(xv.begin() + start * n, xv.begin() + (start + count) * n);
  Tensor<T> y = make_output("slice_rows", {count, n}, std::move(out), tape);
  if (tape) {
    tape->record("slice_rows", [xn = x.node(), yn = y.node(), offset = start * n] {
      if (yn->grad.empty()) return;
      auto& g = xn->grad_buffer();
      for (std::size_t i = 0; i < yn->grad.size(); ++i) g[offset + i] += yn->grad[i];
    });
  }
  return y;
}

template <typename T>
Tensor<T> slice_cols(const Tensor<T>& x, std::size_t start, std::size_t count) {
  Tape<T>* tape = tape_of({&x});
  require_matrix("slice_cols", x.shape());
  const std::size_t m = x.shape()[0], n = x.shape()[1];
  if (start + count > n) {
    throw DimensionError("slice_cols: columns [" + std::to_string(start) + ", " +
                         std::to_string(start + count) + ") outside " +
                         shape_to_string(x.shape()));
  }
  std::vector<T> out(m * count);
  const auto xv = x.values();
  for (std::size_t i = 0; i < m; ++i) {
    std::copy_n(xv.data() + i * n + start, count, out.data() + i * count);
  }
  Tensor<T> y = make_output("slice_cols", {m, count}, std::move(out), tape);
  if (tape) {
    tape->record("slice_cols", [xn = x.node(), yn = y.node(), m, n, start, count] {
      if (yn->grad.empty()) return;
      auto& g = xn->grad_buffer();
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t c = 0; c < count; ++c) g[i * n + start + c] += yn->grad[i * count + c];
      }
    });
  }
  return y;
}

template <typename T>
Tensor<T> concat_rows(const std::vector<Tensor<T>>& parts) {
  if (parts.empty()) throw DimensionError("concat_rows: no inputs");
  Tape<T>* tape = nullptr;
  for (const auto& p : parts) {
    Tape<T>* t = tape_of({&p});
    if (t && tape && t != tape) throw Error("op mixes tensors from different tapes");
    if (t) tape = t;
    require_matrix("concat_rows", p.shape());
    if (p.shape()[1] != parts[0].shape()[1]) {
      throw DimensionError("concat_rows: column counts differ: " + shape_to_string(p.shape()) +
                           " vs " + shape_to_string(parts[0].shape()));
    }
  }
  const std::size_t n = parts[0].shape()[1];
  std::vector<T> out;
  std::size_t rows = 0;
  for (const auto& p : parts) {
    out.insert(out.end(), p.values().begin(), p.values().end());
    rows += p.shape()[0];
  }
  Tensor<T> y = make_output("concat_rows", {rows, n}, std::move(out), tape);
  if (tape) {
    std::vector<NodePtr<T>> nodes;
    for (const auto& p : parts) nodes.push_back(p.node());
    tape->record("concat_rows", [nodes = std::move(nodes), yn = y.node()] {
      if (yn->grad.empty()) return;
      std::size_t offset = 0;
      for (const auto& in : nodes) {
        if (in->tape) {
          auto& g = in->grad_buffer();
          for (std::size_t i = 0; i < g.size(); ++i) g[i] += yn->grad[offset + i];
        }
        offset += in->value.size();
      }
    });
  }
  return y;
}

template <typename T>
Tensor<T> concat_cols(const std::vector<Tensor<T>>& parts) {
  if (parts.empty()) throw DimensionError("concat_cols: no inputs");
  Tape<T>* tape = nullptr;
  std::size_t total = 0;
  for (const auto& p : parts) {
    Tape<T>* t = tape_of({&p});
    if (t && tape && t != tape) throw Error("op mixes tensors from different tapes");
    if (t) tape = t;
    require_matrix("concat_cols", p.shape());
    if (p.shape()[0] != parts[0].shape()[0]) {
      throw DimensionError("concat_cols: row counts differ: " + shape_to_string(p.shape()) +
                           " vs " + shape_to_string(parts[0].shape()));
    }
    total += p.shape()[1];
  }
  const std::size_t m = parts[0].shape()[0];
  std::vector<T> out(m * total);
  std::size_t offset = 0;
  for (const auto& p : parts) {
    const std::size_t w = p.shape()[1];
    for (std::size_t i = 0; i < m; ++i) {
      std::copy_n(p.values().data() + i * w, w, out.data() + i * total + offset);
    }
    offset += w;
  }
  Tensor<T> y = make_output("concat_cols", {m, total}, std::move(out), tape);
  if (tape) {
    std::vector<NodePtr<T>> nodes;
    for (const auto& p : parts) nodes.push_back(p.node());
    tape->record("concat_cols", [nodes = std::move(nodes), yn = y.node(), m, total] {
      if (yn->grad.empty()) return;
      std::size_t off = 0;
      for (const auto& in : nodes) {
        const std::size_t w = in->shape[1];
        if (in->tape) {
          auto& g = in->grad_buffer();
          for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t c = 0; c < w; ++c) g[i * w + c] += yn->grad[i * total + off + c];
          }
        }
        off += w;
      }
    });
  }
  return y;
}

template <typename T>
Tensor<T> stack_scalars(const std::vector<Tensor<T>>& parts) {
  Tape<T>* tape = nullptr;
  std::vector<T> out;
  for (const auto& p : parts) {
    Tape<T>* t = tape_of({&p});
    if (t && tape && t != tape) throw Error("op mixes tensors from different tapes");
    if (t) tape = t;
    out.push_back(p.item());
  }
  Tensor<T> y = make_output("stack_scalars", {parts.size()}, std::move(out), tape);
  if (tape) {
    std::vector<NodePtr<T>> nodes;
    for (const auto& p : parts) nodes.push_back(p.node());
    tape->record("stack_scalars", [nodes = std::move(nodes), yn = y.node()] {
      if (yn->grad.empty()) return;
      for (std::size_t i = 0; i < nodes.size(); ++i) {
        if (nodes[i]->tape) nodes[i]->grad_buffer()[0] += yn->grad[i];
      }
    });
  }
  return y;
}

template <typename T>
Tensor<T> dropout(const Tensor<T>& x, double p, Rng& rng) {
  if (p <= 0.0) return x;
  if (p >= 1.0) throw Error("dropout: probability must be < 1");
  Tape<T>* tape = tape_of({&x});
  const T keep_scale = static_cast<T>(1.0 / (1.0 - p));
  std::vector<T> mask(x.numel());
  for (T& m : mask) m = rng.uniform() < p ? T(0) : keep_scale;
  std::vector<T> out(x.values().begin(), x.values().end());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= mask[i];
  Tensor<T> y = make_output("dropout", x.shape(), std::move(out), tape);
  if (tape) {
    tape->record("dropout", [xn = x.node(), yn = y.node(), mask = std::move(mask)] {
      if (yn->grad.empty()) return;
      auto& g = xn->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += mask[i] * yn->grad[i];
    });
  }
  return y;
}

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
  Tape<T>* tape = tape_of({&x});
  T total = 0;
  for (const T v : x.values()) total += v;
  Tensor<T> y = make_output("sum", {}, std::vector<T>{total}, tape);
  if (tape) {
    tape->record("sum", [xn = x.node(), yn = y.node()] {
      if (yn->grad.empty()) return;
      auto& g = xn->grad_buffer();
      for (T& v : g) v += yn->grad[0];
    });
  }
  return y;
}

namespace {

template <typename T>
Tensor<T> cross_entropy_impl(const char* op, const Tensor<T>& logits,
                             std::span<const int> targets, bool average) {
  Tape<T>* tape = tape_of({&logits});
  if (logits.rank() != 1 && logits.rank() != 2) {
    throw DimensionError(std::string(op) + ": logits must be rank 1 or 2, got " +
                         shape_to_string(logits.shape()));
  }
  const auto [rows, classes] = row_view(logits.shape());
  if (targets.size() != rows) {
    throw DimensionError(std::string(op) + ": " + std::to_string(targets.size()) +
                         " targets for " + std::to_string(rows) + " rows");
  }
  if (rows == 0) throw DimensionError(std::string(op) + ": empty logits");
  std::vector<T> probs(logits.numel());
  const auto lv = logits.values();
  double total = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    const int t = targets[r];
    if (t < 0 || static_cast<std::size_t>(t) >= classes) {
      throw IndexError(std::string(op) + ": target " + std::to_string(t) + " outside [0, " +
                       std::to_string(classes) + ")");
    }
    const T* in = lv.data() + r * classes;
    T mx = *std::max_element(in, in + classes);
    T z = 0;
    for (std::size_t c = 0; c < classes; ++c) z += std::exp(in[c] - mx);
    const T log_z = std::log(z) + mx;
    for (std::size_t c = 0; c < classes; ++c) probs[r * classes + c] = std::exp(in[c] - log_z);
    total += static_cast<double>(log_z - in[t]);
  }
  const T norm = average ? T(1) / static_cast<T>(rows) : T(1);
  Tensor<T> y = make_output(op, {}, std::vector<T>{static_cast<T>(total) * norm}, tape);
  if (tape) {
    tape->record(op, [ln = logits.node(), yn = y.node(), probs = std::move(probs),
                      tg = std::vector<int>(targets.begin(), targets.end()), rows = rows,
                      classes = classes, norm] {
      if (yn->grad.empty()) return;
      auto& g = ln->grad_buffer();
      const T scale_factor = yn->grad[0] * norm;
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < classes; ++c) {
          const T p = probs[r * classes + c] - (static_cast<int>(c) == tg[r] ? T(1) : T(0));
          g[r * classes + c] += scale_factor * p;
        }
      }
    });
  }
  return y;
}

}  // namespace

template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& logits, std::span<const int> targets) {
  return cross_entropy_impl("cross_entropy", logits, targets, true);
}

template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& logits, int target) {
  const int targets[1] = {target};
  return cross_entropy_impl("cross_entropy", logits, std::span<const int>(targets), true);
}

template <typename T>
Tensor<T> cross_entropy_sum(const Tensor<T>& logits, std::span<const int> targets) {
  return cross_entropy_impl("cross_entropy_sum", logits, targets, false);
}

#define EXPERTFIND_INSTANTIATE_OPS(T)                                                        \
  template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&);                             \
  template Tensor<T> matmul_nt(const Tensor<T>&, const Tensor<T>&);                          \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                                \
  template Tensor<T> add_bias(const Tensor<T>&, const Tensor<T>&);                           \
  template Tensor<T> scale(const Tensor<T>&, T);                                             \
  template Tensor<T> relu(const Tensor<T>&);                                                 \
  template Tensor<T> softmax(const Tensor<T>&, std::size_t);                                 \
  template Tensor<T> layer_norm(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,        \
                                double);                                                     \
  template Tensor<T> gather_rows(const Tensor<T>&, std::span<const int>);                    \
  template Tensor<T> slice_rows(const Tensor<T>&, std::size_t, std::size_t);                 \
  template Tensor<T> slice_cols(const Tensor<T>&, std::size_t, std::size_t);                 \
  template Tensor<T> concat_rows(const std::vector<Tensor<T>>&);                             \
  template Tensor<T> concat_cols(const std::vector<Tensor<T>>&);                             \
  template Tensor<T> stack_scalars(const std::vector<Tensor<T>>&);                           \
  template Tensor<T> dropout(const Tensor<T>&, double, Rng&);                                \
  template Tensor<T> sum(const Tensor<T>&);                                                  \
  template Tensor<T> cross_entropy(const Tensor<T>&, std::span<const int>);                  \
  template Tensor<T> cross_entropy(const Tensor<T>&, int);                                   \
  template Tensor<T> cross_entropy_sum(const Tensor<T>&, std::span<const int>);

EXPERTFIND_INSTANTIATE_OPS(float)
EXPERTFIND_INSTANTIATE_OPS(double)

#undef EXPERTFIND_INSTANTIATE_OPS

}  // namespace expertfind
