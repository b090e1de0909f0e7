#pragma once

#include <cassert>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <vector>

#include "synformer/common.hpp"

namespace synformer {

// Dense row-major tensor. The model only ever needs rank 1 and 2; shape is kept
// as a vector so character-window index blocks can be reshaped cheaply.
template <typename S>
struct Tensor {
  std::vector<int> shape;
  std::vector<S> data;

  Tensor() = default;
  explicit Tensor(std::vector<int> shp) : shape(std::move(shp)) {
    data.assign(numel_of(shape), S(0));
  }
  Tensor(int r, int c) : Tensor(std::vector<int>{r, c}) {}

  static size_t numel_of(const std::vector<int>& shp) {
    size_t n = 1;
    for (int d : shp) n *= static_cast<size_t>(d);
    return n;
  }

  static Tensor zeros(int r, int c) { return Tensor(r, c); }
  static Tensor full(int r, int c, S v) {
    Tensor t(r, c);
    t.data.assign(t.data.size(), v);
    return t;
  }
  static Tensor from_rows(std::initializer_list<std::initializer_list<S>> rows) {
    Tensor t(static_cast<int>(rows.size()), static_cast<int>(rows.begin()->size()));
    size_t k = 0;
    for (const auto& r : rows)
      for (S v : r) t.data[k++] = v;
    return t;
  }

  int rows() const { return shape.empty() ? 0 : shape[0]; }
  int cols() const { return shape.size() < 2 ? 1 : shape[1]; }
  size_t numel() const { return data.size(); }
  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  S& at(int i, int j) { return data[static_cast<size_t>(i) * cols() + j]; }
  S at(int i, int j) const { return data[static_cast<size_t>(i) * cols() + j]; }

  S* row_ptr(int i) { return data.data() + static_cast<size_t>(i) * cols(); }
  const S* row_ptr(int i) const { return data.data() + static_cast<size_t>(i) * cols(); }

  void fill(S v) { data.assign(data.size(), v); }

  bool all_finite() const {
    for (S v : data)
      if (!std::isfinite(static_cast<double>(v))) return false;
    return true;
  }

  template <typename T>
  Tensor<T> cast() const {
    Tensor<T> out;
    out.shape = shape;
    out.data.resize(data.size());
    for (size_t i = 0; i < data.size(); ++i) out.data[i] = static_cast<T>(data[i]);
    return out;
  }
};

// c += a * b  with a (m x k), b (k x n). ikj order keeps the inner loop contiguous.
template <typename S>
void matmul_acc(const Tensor<S>& a, const Tensor<S>& b, Tensor<S>& c) {
  int m = a.rows(), k = a.cols(), n = b.cols();
  assert(b.rows() == k && c.rows() == m && c.cols() == n);
  for (int i = 0; i < m; ++i) {
    const S* ai = a.row_ptr(i);
    S* ci = c.row_ptr(i);
    for (int p = 0; p < k; ++p) {
      S av = ai[p];
      if (av == S(0)) continue;
      const S* bp = b.row_ptr(p);
      for (int j = 0; j < n; ++j) ci[j] += av * bp[j];
    }
  }
}

// c += a * b^T  with a (m x k), b (n x k).
template <typename S>
void matmul_nt_acc(const Tensor<S>& a, const Tensor<S>& b, Tensor<S>& c) {
  int m = a.rows(), k = a.cols(), n = b.rows();
  assert(b.cols() == k && c.rows() == m && c.cols() == n);
  for (int i = 0; i < m; ++i) {
    const S* ai = a.row_ptr(i);
    S* ci = c.row_ptr(i);
    for (int j = 0; j < n; ++j) {
      const S* bj = b.row_ptr(j);
      S acc = S(0);
      for (int p = 0; p < k; ++p) acc += ai[p] * bj[p];
      ci[j] += acc;
    }
  }
}

// c += a^T * b  with a (k x m), b (k x n).
template <typename S>
void matmul_tn_acc(const Tensor<S>& a, const Tensor<S>& b, Tensor<S>& c) {
  int k = a.rows(), m = a.cols(), n = b.cols();
  assert(b.rows() == k && c.rows() == m && c.cols() == n);
  for (int p = 0; p < k; ++p) {
    const S* ap = a.row_ptr(p);
    const S* bp = b.row_ptr(p);
    for (int i = 0; i < m; ++i) {
      S av = ap[i];
      if (av == S(0)) continue;
      S* ci = c.row_ptr(i);
      for (int j = 0; j < n; ++j) ci[j] += av * bp[j];
    }
  }
}

}  // namespace synformer
