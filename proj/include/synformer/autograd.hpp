#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <utility>
#include <vector>

#include "synformer/params.hpp"
#include "synformer/tensor.hpp"

namespace synformer {

template <typename S>
class Graph;

// Handle to a node in a Graph. Value semantics; cheap to copy.
template <typename S>
struct Expr {
  Graph<S>* g = nullptr;
  int i = -1;

  bool valid() const { return g != nullptr; }
  const Tensor<S>& value() const;
  int rows() const { return value().rows(); }
  int cols() const { return value().cols(); }
};

// Reverse-mode tape. Nodes are appended in forward order, so reverse creation
// order is a valid topological order for the backward sweep. One Graph per
// forward/backward pass; parameters persist outside it.
template <typename S>
class Graph {
 public:
  struct Node {
    Tensor<S> value;
    Tensor<S> grad;  // allocated lazily during backward
    std::function<void(Graph&, Node&)> backward;
    std::vector<int> parents;
    Parameter<S>* param = nullptr;
    bool needs_grad = false;
  };

  bool training = false;
  Rng rng{0};

  Node& node(int i) { return nodes_[i]; }
  const Node& node(int i) const { return nodes_[i]; }
  size_t size() const { return nodes_.size(); }

  Expr<S> input(Tensor<S> t) { return make(std::move(t), {}, nullptr, false); }

  // One node per parameter per graph; repeated uses share it (and its grad).
  Expr<S> leaf(Parameter<S>& p) {
    auto it = leaf_cache_.find(&p);
    if (it != leaf_cache_.end()) return Expr<S>{this, it->second};
    Expr<S> e = make(p.value, {}, nullptr, p.trainable);
    nodes_[e.i].param = &p;
    leaf_cache_[&p] = e.i;
    return e;
  }

  // Accumulates grad for node i, allocating zeros on first touch.
  Tensor<S>& grad_of(int i) {
    Node& n = nodes_[i];
    if (n.grad.data.empty()) {
      n.grad.shape = n.value.shape;
      n.grad.data.assign(n.value.data.size(), S(0));
    }
    return n.grad;
  }

  bool has_grad(int i) const { return !nodes_[i].grad.data.empty(); }

  // Backward from a scalar loss node. Gradients of trainable parameters are
  // accumulated into their .grad slots (callers zero them beforehand).
  void backward(const Expr<S>& loss) {
    if (loss.value().numel() != 1)
      throw NumericError("backward requires a scalar loss node");
    grad_of(loss.i).data[0] = S(1);
    for (int i = loss.i; i >= 0; --i) {
      Node& n = nodes_[i];
      if (!n.needs_grad || n.grad.data.empty() || !n.backward) continue;
      n.backward(*this, n);
    }
    for (auto& n : nodes_) {
      if (n.param && n.param->trainable && !n.grad.data.empty()) {
        for (size_t k = 0; k < n.grad.data.size(); ++k)
          n.param->grad.data[k] += n.grad.data[k];
      }
    }
  }

  Expr<S> make(Tensor<S> value, std::vector<int> parents,
               std::function<void(Graph&, Node&)> bw, bool needs_grad) {
    Node n;
    n.value = std::move(value);
    n.parents = std::move(parents);
    n.backward = std::move(bw);
    n.needs_grad = needs_grad;
    nodes_.push_back(std::move(n));
    return Expr<S>{this, static_cast<int>(nodes_.size()) - 1};
  }

  bool any_needs(const std::vector<int>& parents) const {
    for (int p : parents)
      if (nodes_[p].needs_grad) return true;
    return false;
  }

 private:
  std::vector<Node> nodes_;
  std::map<Parameter<S>*, int> leaf_cache_;
};

template <typename S>
const Tensor<S>& Expr<S>::value() const {
  return g->node(i).value;
}

namespace detail {
template <typename S>
void check_same_shape(const Tensor<S>& a, const Tensor<S>& b, const char* op) {
  if (!a.same_shape(b)) throw NumericError(std::string(op) + ": shape mismatch");
}
}  // namespace detail

// ---------------------------------------------------------------------------
// Core ops. Each returns a new node; backward closures capture indices and any
// forward intermediates they need.
// ---------------------------------------------------------------------------

template <typename S>
Expr<S> matmul(Expr<S> a, Expr<S> b) {
  Graph<S>& g = *a.g;
  if (a.value().cols() != b.value().rows()) throw NumericError("matmul: inner dims differ");
  Tensor<S> out(a.value().rows(), b.value().cols());
  matmul_acc(a.value(), b.value(), out);
  bool need = g.any_needs({a.i, b.i});
  int ai = a.i, bi = b.i;
  return g.make(std::move(out), {ai, bi},
                need ? std::function<void(Graph<S>&, typename Graph<S>::Node&)>(
                           [ai, bi](Graph<S>& gg, typename Graph<S>::Node& n) {
                             if (gg.node(ai).needs_grad)
                               matmul_nt_acc(n.grad, gg.node(bi).value, gg.grad_of(ai));
                             if (gg.node(bi).needs_grad)
                               matmul_tn_acc(gg.node(ai).value, n.grad, gg.grad_of(bi));
                           })
                     : nullptr,
                need);
}

// a * b^T with a (m x k), b (n x k) -> (m x n). Used for attention scores.
template <typename S>
Expr<S> matmul_nt(Expr<S> a, Expr<S> b) {
  Graph<S>& g = *a.g;
  if (a.value().cols() != b.value().cols()) throw NumericError("matmul_nt: inner dims differ");
  Tensor<S> out(a.value().rows(), b.value().rows());
  matmul_nt_acc(a.value(), b.value(), out);
  bool need = g.any_needs({a.i, b.i});
  int ai = a.i, bi = b.i;
  return g.make(std::move(out), {ai, bi},
                need ? std::function<void(Graph<S>&, typename Graph<S>::Node&)>(
                           [ai, bi](Graph<S>& gg, typename Graph<S>::Node& n) {
                             if (gg.node(ai).needs_grad)
                               matmul_acc(n.grad, gg.node(bi).value, gg.grad_of(ai));
                             if (gg.node(bi).needs_grad)
                               matmul_tn_acc(n.grad, gg.node(ai).value, gg.grad_of(bi));
                           })
                     : nullptr,
                need);
}

template <typename S>
Expr<S> add(Expr<S> a, Expr<S> b) {
  Graph<S>& g = *a.g;
  detail::check_same_shape(a.value(), b.value(), "add");
  Tensor<S> out = a.value();
  for (size_t k = 0; k < out.data.size(); ++k) out.data[k] += b.value().data[k];
  bool need = g.any_needs({a.i, b.i});
  int ai = a.i, bi = b.i;
  return g.make(std::move(out), {ai, bi},
                need ? std::function<void(Graph<S>&, typename Graph<S>::Node&)>(
                           [ai, bi](Graph<S>& gg, typename Graph<S>::Node& n) {
                             for (int pi : {ai, bi}) {
                               if (!gg.node(pi).needs_grad) continue;
                               Tensor<S>& pg = gg.grad_of(pi);
                               for (size_t k = 0; k < n.grad.data.size(); ++k)
                                 pg.data[k] += n.grad.data[k];
                             }
                           })
                     : nullptr,
                need);
}

// x (m x n) + v (1 x n) broadcast over rows; the only broadcast the model needs.
template <typename S>
Expr<S> add_rowvec(Expr<S> x, Expr<S> v) {
  Graph<S>& g = *x.g;
  if (v.value().rows() != 1 || v.value().cols() != x.value().cols())
    throw NumericError("add_rowvec: bias must be (1 x cols)");
  Tensor<S> out = x.value();
  int m = out.rows(), n = out.cols();
  for (int i = 0; i < m; ++i) {
    S* r = out.row_ptr(i);
    const S* b = v.value().row_ptr(0);
    for (int j = 0; j < n; ++j) r[j] += b[j];
  }
  bool need = g.any_needs({x.i, v.i});
  int xi = x.i, vi = v.i;
  return g.make(std::move(out), {xi, vi},
                need ? std::function<void(Graph<S>&, typename Graph<S>::Node&)>(
                           [xi, vi](Graph<S>& gg, typename Graph<S>::Node& n) {
                             int m = n.grad.rows(), nc = n.grad.cols();
                             if (gg.node(xi).needs_grad) {
                               Tensor<S>& xg = gg.grad_of(xi);
                               for (size_t k = 0; k < n.grad.data.size(); ++k)
                                 xg.data[k] += n.grad.data[k];
                             }
                             if (gg.node(vi).needs_grad) {
                               Tensor<S>& vg = gg.grad_of(vi);
                               for (int i = 0; i < m; ++i)
                                 for (int j = 0; j < nc; ++j) vg.data[j] += n.grad.at(i, j);
                             }
                           })
                     : nullptr,
                need);
}

template <typename S>
Expr<S> scale(Expr<S> x, S c) {
  Graph<S>& g = *x.g;
  Tensor<S> out = x.value();
  for (auto& v : out.data) v *= c;
  bool need = g.node(x.i).needs_grad;
  int xi = x.i;
  return g.make(std::move(out), {xi},
                need ? std::function<void(Graph<S>&, typename Graph<S>::Node&)>(
                           [xi, c](Graph<S>& gg, typename Graph<S>::Node& n) {
                             Tensor<S>& xg = gg.grad_of(xi);
                             for (size_t k = 0; k < n.grad.data.size(); ++k)
                               xg.data[k] += c * n.grad.data[k];
                           })
                     : nullptr,
                need);
}

// Elementwise product with a constant tensor (no gradient into c).
template <typename S>
Expr<S> mul_const(Expr<S> x, const Tensor<S>& c) {
  Graph<S>& g = *x.g;
  detail::check_same_shape(x.value(), c, "mul_const");
  Tensor<S> out = x.value();
  for (size_t k = 0; k < out.data.size(); ++k) out.data[k] *= c.data[k];
  bool need = g.node(x.i).needs_grad;
  int xi = x.i;
  return g.make(std::move(out), {xi},
                need ? std::function<void(Graph<S>&, typename Graph<S>::Node&)>(
                           [xi, c](Graph<S>& gg, typename Graph<S>::Node& n) {
                             Tensor<S>& xg = gg.grad_of(xi);
                             for (size_t k = 0; k < n.grad.data.size(); ++k)
                               xg.data[k] += n.grad.data[k] * c.data[k];
                           })
                     : nullptr,
                need);
}

// Sum of all entries, as a (1 x 1) node.
template <typename S>
Expr<S> reduce_sum(Expr<S> x) {
  Graph<S>& g = *x.g;
  Tensor<S> out(1, 1);
  for (S v : x.value().data) out.data[0] += v;
  bool need = g.node(x.i).needs_grad;
  int xi = x.i;
  return g.make(std::move(out), {xi},
                need ? std::function<void(Graph<S>&, typename Graph<S>::Node&)>(
                           [xi](Graph<S>& gg, typename Graph<S>::Node& n) {
                             Tensor<S>& xg = gg.grad_of(xi);
                             for (auto& v : xg.data) v += n.grad.data[0];
                           })
                     : nullptr,
                need);
}

template <typename S>
Expr<S> concat_cols(const std::vector<Expr<S>>& parts) {
  if (parts.empty()) throw NumericError("concat_cols: empty input");
  Graph<S>& g = *parts[0].g;
  int m = parts[0].value().rows(), total = 0;
  std::vector<int> pidx;
  for (const auto& p : parts) {
    if (p.value().rows() != m) throw NumericError("concat_cols: row mismatch");
    total += p.value().cols();
    pidx.push_back(p.i);
  }
  Tensor<S> out(m, total);
  int off = 0;
  for (const auto& p : parts) {
    int c = p.value().cols();
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < c; ++j) out.at(i, off + j) = p.value().at(i, j);
    off += c;
  }
  bool need = g.any_needs(pidx);
  return g.make(std::move(out), pidx,
                need ? std::function<void(Graph<S>&, typename Graph<S>::Node&)>(
                           [pidx](Graph<S>& gg, typename Graph<S>::Node& n) {
                             int m = n.grad.rows();
                             int off = 0;
                             for (int pi : pidx) {
                               int c = gg.node(pi).value.cols();
                               if (gg.node(pi).needs_grad) {
                                 Tensor<S>& pg = gg.grad_of(pi);
                                 for (int i = 0; i < m; ++i)
                                   for (int j = 0; j < c; ++j)
                                     pg.at(i, j) += n.grad.at(i, off + j);
                               }
                               off += c;
                             }
                           })
                     : nullptr,
                need);
}

template <typename S>
Expr<S> reshape(Expr<S> x, int r, int c) {
  Graph<S>& g = *x.g;
  if (static_cast<size_t>(r) * c != x.value().numel())
    throw NumericError("reshape: element count mismatch");
  Tensor<S> out = x.value();
  out.shape = {r, c};
  bool need = g.node(x.i).needs_grad;
  int xi = x.i;
  return g.make(std::move(out), {xi},
                need ? std::function<void(Graph<S>&, typename Graph<S>::Node&)>(
                           [xi](Graph<S>& gg, typename Graph<S>::Node& n) {
                             Tensor<S>& xg = gg.grad_of(xi);
                             for (size_t k = 0; k < n.grad.data.size(); ++k)
                               xg.data[k] += n.grad.data[k];
                           })
                     : nullptr,
                need);
}

template <typename S>
Expr<S> select_row(Expr<S> x, int r) {
  Graph<S>& g = *x.g;
  if (r < 0 || r >= x.value().rows()) throw NumericError("select_row: out of range");
  int n = x.value().cols();
  Tensor<S> out(1, n);
  for (int j = 0; j < n; ++j) out.at(0, j) = x.value().at(r, j);
  bool need = g.node(x.i).needs_grad;
  int xi = x.i;
  return g.make(std::move(out), {xi},
                need ? std::function<void(Graph<S>&, typename Graph<S>::Node&)>(
                           [xi, r](Graph<S>& gg, typename Graph<S>::Node& n) {
                             Tensor<S>& xg = gg.grad_of(xi);
                             for (int j = 0; j < n.grad.cols(); ++j)
                               xg.at(r, j) += n.grad.at(0, j);
                           })
                     : nullptr,
                need);
}

// Row gather from an embedding table: out[k] = table[ids[k]].
template <typename S>
Expr<S> embedding_lookup(Expr<S> table, std::vector<int> ids) {
  Graph<S>& g = *table.g;
  int v = table.value().rows(), d = table.value().cols();
  for (int id : ids)
    if (id < 0 || id >= v) throw DataError("embedding_lookup: id out of range");
  Tensor<S> out(static_cast<int>(ids.size()), d);
  for (size_t k = 0; k < ids.size(); ++k)
    for (int j = 0; j < d; ++j) out.at(static_cast<int>(k), j) = table.value().at(ids[k], j);
  bool need = g.node(table.i).needs_grad;
  int ti = table.i;
  return g.make(std::move(out), {ti},
                need ? std::function<void(Graph<S>&, typename Graph<S>::Node&)>(
                           [ti, ids = std::move(ids)](Graph<S>& gg, typename Graph<S>::Node& n) {
                             Tensor<S>& tg = gg.grad_of(ti);
                             int d = n.grad.cols();
                             for (size_t k = 0; k < ids.size(); ++k)
                               for (int j = 0; j < d; ++j)
                                 tg.at(ids[k], j) += n.grad.at(static_cast<int>(k), j);
                           })
                     : nullptr,
                need);
}

// Places row k of x at row_index[k] of a zero (total_rows x d) output.
template <typename S>
Expr<S> scatter_rows(Expr<S> x, std::vector<int> row_index, int total_rows) {
  Graph<S>& g = *x.g;
  if (static_cast<int>(row_index.size()) != x.value().rows())
    throw NumericError("scatter_rows: index count mismatch");
  int d = x.value().cols();
  Tensor<S> out(total_rows, d);
  for (size_t k = 0; k < row_index.size(); ++k) {
    if (row_index[k] < 0 || row_index[k] >= total_rows)
      throw NumericError("scatter_rows: index out of range");
    for (int j = 0; j < d; ++j) out.at(row_index[k], j) = x.value().at(static_cast<int>(k), j);
  }
  bool need = g.node(x.i).needs_grad;
  int xi = x.i;
  return g.make(std::move(out), {xi},
                need ? std::function<void(Graph<S>&, typename Graph<S>::Node&)>(
                           [xi, row_index = std::move(row_index)](Graph<S>& gg,
                                                                  typename Graph<S>::Node& n) {
                             Tensor<S>& xg = gg.grad_of(xi);
                             int d = n.grad.cols();
                             for (size_t k = 0; k < row_index.size(); ++k)
                               for (int j = 0; j < d; ++j)
                                 xg.at(static_cast<int>(k), j) += n.grad.at(row_index[k], j);
                           })
                     : nullptr,
                need);
}

// Column-wise max over row segments [begin, end); gradient routes to the argmax row.
template <typename S>
Expr<S> segment_max_rows(Expr<S> x, const std::vector<std::pair<int, int>>& segments) {
  Graph<S>& g = *x.g;
  int d = x.value().cols();
  int nseg = static_cast<int>(segments.size());
  Tensor<S> out(nseg, d);
  std::vector<int> argmax(static_cast<size_t>(nseg) * d);
  for (int s = 0; s < nseg; ++s) {
    auto [b, e] = segments[s];
    if (b >= e || e > x.value().rows()) throw NumericError("segment_max_rows: bad segment");
    for (int j = 0; j < d; ++j) {
      S best = x.value().at(b, j);
      int arg = b;
      for (int i = b + 1; i < e; ++i) {
        if (x.value().at(i, j) > best) {
          best = x.value().at(i, j);
          arg = i;
        }
      }
      out.at(s, j) = best;
      argmax[static_cast<size_t>(s) * d + j] = arg;
    }
  }
  bool need = g.node(x.i).needs_grad;
  int xi = x.i;
  return g.make(std::move(out), {xi},
                need ? std::function<void(Graph<S>&, typename Graph<S>::Node&)>(
                           [xi, argmax = std::move(argmax)](Graph<S>& gg,
                                                            typename Graph<S>::Node& n) {
                             Tensor<S>& xg = gg.grad_of(xi);
                             int d = n.grad.cols();
                             for (int s = 0; s < n.grad.rows(); ++s)
                               for (int j = 0; j < d; ++j)
                                 xg.at(argmax[static_cast<size_t>(s) * d + j], j) +=
                                     n.grad.at(s, j);
                           })
                     : nullptr,
                need);
}

template <typename S>
Expr<S> relu(Expr<S> x) {
  Graph<S>& g = *x.g;
  Tensor<S> out = x.value();
  for (auto& v : out.data) v = v > S(0) ? v : S(0);
  bool need = g.node(x.i).needs_grad;
  int xi = x.i;
  return g.make(std::move(out), {xi},
                need ? std::function<void(Graph<S>&, typename Graph<S>::Node&)>(
                           [xi](Graph<S>& gg, typename Graph<S>::Node& n) {
                             Tensor<S>& xg = gg.grad_of(xi);
                             const Tensor<S>& xv = gg.node(xi).value;
                             for (size_t k = 0; k < n.grad.data.size(); ++k)
                               if (xv.data[k] > S(0)) xg.data[k] += n.grad.data[k];
                           })
                     : nullptr,
                need);
}

// Exact (erf) form.
template <typename S>
Expr<S> gelu(Expr<S> x) {
  Graph<S>& g = *x.g;
  Tensor<S> out = x.value();
  const double inv_sqrt2 = 0.7071067811865475244;
  for (auto& v : out.data) {
    double xv = static_cast<double>(v);
    v = static_cast<S>(0.5 * xv * (1.0 + std::erf(xv * inv_sqrt2)));
  }
  bool need = g.node(x.i).needs_grad;
  int xi = x.i;
  return g.make(std::move(out), {xi},
                need ? std::function<void(Graph<S>&, typename Graph<S>::Node&)>(
                           [xi](Graph<S>& gg, typename Graph<S>::Node& n) {
                             const double inv_sqrt2 = 0.7071067811865475244;
                             const double inv_sqrt2pi = 0.3989422804014326779;
                             Tensor<S>& xg = gg.grad_of(xi);
                             const Tensor<S>& xv = gg.node(xi).value;
                             for (size_t k = 0; k < n.grad.data.size(); ++k) {
                               double x0 = static_cast<double>(xv.data[k]);
                               double cdf = 0.5 * (1.0 + std::erf(x0 * inv_sqrt2));
                               double pdf = inv_sqrt2pi * std::exp(-0.5 * x0 * x0);
                               xg.data[k] += static_cast<S>((cdf + x0 * pdf)) * n.grad.data[k];
                             }
                           })
                     : nullptr,
                need);
}

// Inverted dropout driven by the graph RNG. Identity when not training or p == 0,
// in which case no node is added.
template <typename S>
Expr<S> dropout(Expr<S> x, double p) {
  Graph<S>& g = *x.g;
  if (p < 0.0 || p >= 1.0) throw NumericError("dropout: p must be in [0, 1)");
  if (!g.training || p == 0.0) return x;
  Tensor<S> mask(x.value().rows(), x.value().cols());
  S keep_scale = static_cast<S>(1.0 / (1.0 - p));
  for (auto& m : mask.data) m = uniform_unit(g.rng) < p ? S(0) : keep_scale;
  Tensor<S> out = x.value();
  for (size_t k = 0; k < out.data.size(); ++k) out.data[k] *= mask.data[k];
  bool need = g.node(x.i).needs_grad;
  int xi = x.i;
  return g.make(std::move(out), {xi},
                need ? std::function<void(Graph<S>&, typename Graph<S>::Node&)>(
                           [xi, mask = std::move(mask)](Graph<S>& gg,
                                                        typename Graph<S>::Node& n) {
                             Tensor<S>& xg = gg.grad_of(xi);
                             for (size_t k = 0; k < n.grad.data.size(); ++k)
                               xg.data[k] += n.grad.data[k] * mask.data[k];
                           })
                     : nullptr,
                need);
}

// Where mask != 0, output = fill (no gradient); elsewhere passes x through.
template <typename S>
Expr<S> masked_fill(Expr<S> x, const Tensor<uint8_t>& mask, S fill) {
  Graph<S>& g = *x.g;
  if (mask.shape != x.value().shape) throw NumericError("masked_fill: mask shape mismatch");
  Tensor<S> out = x.value();
  for (size_t k = 0; k < out.data.size(); ++k)
    if (mask.data[k]) out.data[k] = fill;
  bool need = g.node(x.i).needs_grad;
  int xi = x.i;
  return g.make(std::move(out), {xi},
                need ? std::function<void(Graph<S>&, typename Graph<S>::Node&)>(
                           [xi, mask](Graph<S>& gg, typename Graph<S>::Node& n) {
                             Tensor<S>& xg = gg.grad_of(xi);
                             for (size_t k = 0; k < n.grad.data.size(); ++k)
                               if (!mask.data[k]) xg.data[k] += n.grad.data[k];
                           })
                     : nullptr,
                need);
}

// Row-wise softmax, max-shifted. -inf entries come out exactly 0, so feeding
// masked scores through keeps masked columns at zero weight.
template <typename S>
Expr<S> softmax_rows(Expr<S> x) {
  Graph<S>& g = *x.g;
  Tensor<S> out = x.value();
  int m = out.rows(), n = out.cols();
  for (int i = 0; i < m; ++i) {
    S* r = out.row_ptr(i);
    S mx = r[0];
    for (int j = 1; j < n; ++j) mx = std::max(mx, r[j]);
    if (!(mx > -std::numeric_limits<S>::infinity()))
      throw NumericError("softmax_rows: entire row is -inf");
    S sum = S(0);
    for (int j = 0; j < n; ++j) {
      r[j] = std::exp(r[j] - mx);
      sum += r[j];
    }
    for (int j = 0; j < n; ++j) r[j] /= sum;
  }
  bool need = g.node(x.i).needs_grad;
  int xi = x.i;
  return g.make(std::move(out), {xi},
                need ? std::function<void(Graph<S>&, typename Graph<S>::Node&)>(
                           [xi](Graph<S>& gg, typename Graph<S>::Node& n) {
                             Tensor<S>& xg = gg.grad_of(xi);
                             int m = n.value.rows(), nc = n.value.cols();
                             for (int i = 0; i < m; ++i) {
                               const S* a = n.value.row_ptr(i);
                               const S* dy = n.grad.row_ptr(i);
                               S dot = S(0);
                               for (int j = 0; j < nc; ++j) dot += a[j] * dy[j];
                               S* dx = xg.row_ptr(i);
                               for (int j = 0; j < nc; ++j) dx[j] += a[j] * (dy[j] - dot);
                             }
                           })
                     : nullptr,
                need);
}

// Per-row normalization with affine scale/shift; gamma and beta are (1 x n).
template <typename S>
Expr<S> layer_norm(Expr<S> x, Expr<S> gamma, Expr<S> beta, S eps = S(1e-5)) {
  Graph<S>& g = *x.g;
  int m = x.value().rows(), n = x.value().cols();
  if (gamma.value().cols() != n || beta.value().cols() != n)
    throw NumericError("layer_norm: affine shape mismatch");
  Tensor<S> xhat(m, n), inv_sigma(m, 1);
  Tensor<S> out(m, n);
  for (int i = 0; i < m; ++i) {
    const S* r = x.value().row_ptr(i);
    S mean = S(0);
    for (int j = 0; j < n; ++j) mean += r[j];
    mean /= S(n);
    S var = S(0);
    for (int j = 0; j < n; ++j) var += (r[j] - mean) * (r[j] - mean);
    var /= S(n);
    S is = S(1) / std::sqrt(var + eps);
    inv_sigma.at(i, 0) = is;
    for (int j = 0; j < n; ++j) {
      xhat.at(i, j) = (r[j] - mean) * is;
      out.at(i, j) = gamma.value().at(0, j) * xhat.at(i, j) + beta.value().at(0, j);
    }
  }
  bool need = g.any_needs({x.i, gamma.i, beta.i});
  int xi = x.i, gi = gamma.i, bi = beta.i;
  return g.make(
      std::move(out), {xi, gi, bi},
      need ? std::function<void(Graph<S>&, typename Graph<S>::Node&)>(
                 [xi, gi, bi, xhat = std::move(xhat), inv_sigma = std::move(inv_sigma)](
                     Graph<S>& gg, typename Graph<S>::Node& n) {
                   int m = n.grad.rows(), nc = n.grad.cols();
                   const Tensor<S>& gv = gg.node(gi).value;
                   if (gg.node(gi).needs_grad) {
                     Tensor<S>& ggrad = gg.grad_of(gi);
                     for (int i = 0; i < m; ++i)
                       for (int j = 0; j < nc; ++j)
                         ggrad.at(0, j) += n.grad.at(i, j) * xhat.at(i, j);
                   }
                   if (gg.node(bi).needs_grad) {
                     Tensor<S>& bgrad = gg.grad_of(bi);
                     for (int i = 0; i < m; ++i)
                       for (int j = 0; j < nc; ++j) bgrad.at(0, j) += n.grad.at(i, j);
                   }
                   if (gg.node(xi).needs_grad) {
                     Tensor<S>& xg = gg.grad_of(xi);
                     for (int i = 0; i < m; ++i) {
                       S mean_dxhat = S(0), mean_dxhat_xhat = S(0);
                       for (int j = 0; j < nc; ++j) {
                         S dxh = n.grad.at(i, j) * gv.at(0, j);
                         mean_dxhat += dxh;
                         mean_dxhat_xhat += dxh * xhat.at(i, j);
                       }
                       mean_dxhat /= S(nc);
                       mean_dxhat_xhat /= S(nc);
                       S is = inv_sigma.at(i, 0);
                       for (int j = 0; j < nc; ++j) {
                         S dxh = n.grad.at(i, j) * gv.at(0, j);
                         xg.at(i, j) +=
                             is * (dxh - mean_dxhat - xhat.at(i, j) * mean_dxhat_xhat);
                       }
                     }
                   }
                 })
           : nullptr,
      need);
}

// Summed cross-entropy over rows of raw logits, computed in shifted-log space.
// gold[k] < 0 flags row k as ignored (contributes exactly 0). Returns a scalar.
template <typename S>
Expr<S> cross_entropy_rows(Expr<S> logits, std::vector<int> gold) {
  Graph<S>& g = *logits.g;
  int m = logits.value().rows(), c = logits.value().cols();
  if (static_cast<int>(gold.size()) != m)
    throw NumericError("cross_entropy_rows: gold count mismatch");
  Tensor<S> probs(m, c);
  double loss = 0.0;
  int active = 0;
  for (int i = 0; i < m; ++i) {
    if (gold[i] < 0) continue;
    if (gold[i] >= c) throw DataError("cross_entropy_rows: gold index out of range");
    ++active;
    const S* r = logits.value().row_ptr(i);
    S mx = r[0];
    for (int j = 1; j < c; ++j) mx = std::max(mx, r[j]);
    double sum = 0.0;
    for (int j = 0; j < c; ++j) sum += std::exp(static_cast<double>(r[j] - mx));
    double lse = static_cast<double>(mx) + std::log(sum);
    loss += lse - static_cast<double>(r[gold[i]]);
    for (int j = 0; j < c; ++j)
      probs.at(i, j) = static_cast<S>(std::exp(static_cast<double>(r[j] - mx)) / sum);
  }
  if (active == 0 && m > 0) warn("cross_entropy_rows: all rows ignored; loss is 0");
  Tensor<S> out(1, 1);
  out.data[0] = static_cast<S>(loss);
  bool need = g.node(logits.i).needs_grad;
  int li = logits.i;
  return g.make(std::move(out), {li},
                need ? std::function<void(Graph<S>&, typename Graph<S>::Node&)>(
                           [li, probs = std::move(probs), gold = std::move(gold)](
                               Graph<S>& gg, typename Graph<S>::Node& n) {
                             S d = n.grad.data[0];
                             Tensor<S>& lg = gg.grad_of(li);
                             int c = lg.cols();
                             for (size_t i = 0; i < gold.size(); ++i) {
                               if (gold[i] < 0) continue;
                               for (int j = 0; j < c; ++j) {
                                 S onehot = (j == gold[i]) ? S(1) : S(0);
                                 lg.at(static_cast<int>(i), j) +=
                                     d * (probs.at(static_cast<int>(i), j) - onehot);
                               }
                             }
                           })
                     : nullptr,
                need);
}

// Row-wise KL(prior || model) with 0 * ln 0 := 0, summed over masked-in rows and
// optionally divided by their count. Model rows must be strictly positive where
// the prior is, which softmax output guarantees unless it underflowed.
template <typename S>
Expr<S> kl_div_rows(const Tensor<S>& prior, Expr<S> model, const std::vector<uint8_t>& row_mask,
                    bool mean = true) {
  Graph<S>& g = *model.g;
  if (prior.shape != model.value().shape) throw NumericError("kl_div_rows: shape mismatch");
  int m = prior.rows(), n = prior.cols();
  if (static_cast<int>(row_mask.size()) != m) throw NumericError("kl_div_rows: mask size");
  int rows_in = 0;
  for (uint8_t b : row_mask) rows_in += b ? 1 : 0;
  if (rows_in == 0) {
    warn("kl_div_rows: mask excludes all rows; loss is 0");
    return g.input(Tensor<S>::full(1, 1, S(0)));
  }
  double coeff = mean ? 1.0 / rows_in : 1.0;
  double total = 0.0;
  for (int i = 0; i < m; ++i) {
    if (!row_mask[i]) continue;
    for (int j = 0; j < n; ++j) {
      double p = static_cast<double>(prior.at(i, j));
      if (p <= 0.0) continue;
      double q = static_cast<double>(model.value().at(i, j));
      if (q <= 0.0)
        throw NumericError("kl_div_rows: model probability is 0 at a prior-positive cell");
      total += p * (std::log(p) - std::log(q));
    }
  }
  Tensor<S> out(1, 1);
  out.data[0] = static_cast<S>(total * coeff);
  bool need = g.node(model.i).needs_grad;
  int mi = model.i;
  return g.make(std::move(out), {mi},
                need ? std::function<void(Graph<S>&, typename Graph<S>::Node&)>(
                           [mi, prior, row_mask, coeff](Graph<S>& gg,
                                                        typename Graph<S>::Node& n) {
                             S d = n.grad.data[0];
                             Tensor<S>& mg = gg.grad_of(mi);
                             const Tensor<S>& mv = gg.node(mi).value;
                             int m = prior.rows(), nc = prior.cols();
                             for (int i = 0; i < m; ++i) {
                               if (!row_mask[i]) continue;
                               for (int j = 0; j < nc; ++j) {
                                 S p = prior.at(i, j);
                                 if (p <= S(0)) continue;
                                 mg.at(i, j) -= d * static_cast<S>(coeff) * p / mv.at(i, j);
                               }
                             }
                           })
                     : nullptr,
                need);
}

}  // namespace synformer
