#pragma once

#include <cstdint>
#include <initializer_list>
#include <limits>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "irmrank/errors.hpp"
#include "irmrank/numerics/ops.hpp"
#include "irmrank/numerics/tensor.hpp"

namespace irm {

/// Handle to a value recorded on a Tape.
struct Var {
  std::uint32_t id = std::numeric_limits<std::uint32_t>::max();
  bool valid() const { return id != std::numeric_limits<std::uint32_t>::max(); }
};

/// Reverse-mode evaluation graph. Values and gradients live in two flat
/// arenas; clear() keeps capacity so a tape can be reused per example
/// without reallocating.
///
/// Parameters enter as leaves that copy the current ParamStore entry (or one
/// row of it). After backward(), accumulate_into() adds the leaf gradients to
/// a gradient map keyed by parameter name.
class Tape {
 public:
  void clear() {
    nodes_.clear();
    values_.clear();
    grads_.clear();
    lists_.clear();
    bindings_.clear();
  }

  std::size_t node_count() const { return nodes_.size(); }

  Var constant(CSpan v) {
    const Var out = push(OpKind::Leaf, v.size());
    std::copy(v.begin(), v.end(), values_.begin() + off(out));
    return out;
  }

  Var param(const ParamStore& store, const std::string& name) {
    const Tensor& t = store.value(name);
    const Var out = constant(t.data());
    Node& n = nodes_[out.id];
    n.rows = static_cast<std::uint32_t>(t.rows());
    n.cols = static_cast<std::uint32_t>(t.rank() == 2 ? t.cols() : 1);
    n.binding = static_cast<std::int32_t>(bindings_.size());
    bindings_.push_back({&store.values().find(name)->first, -1});
    return out;
  }

  Var param_row(const ParamStore& store, const std::string& name, std::size_t row) {
    const Tensor& t = store.value(name);
    if (t.rank() != 2 || row >= t.rows())
      throw DimensionError("param_row: row " + std::to_string(row) + " out of range for " + name);
    const Var out = constant(t.row(row));
    Node& n = nodes_[out.id];
    n.binding = static_cast<std::int32_t>(bindings_.size());
    bindings_.push_back({&store.values().find(name)->first, static_cast<std::int64_t>(row)});
    return out;
  }

  Var matvec(Var w, Var v) {
    const Node& wn = nodes_.at(w.id);
    const std::size_t rows = wn.rows, cols = wn.cols;
    if (rows * cols != wn.len || cols != len(v))
      throw DimensionError("tape matvec: " + std::to_string(rows) + "x" + std::to_string(cols) +
                           " times vector of " + std::to_string(len(v)));
    const Var out = push(OpKind::MatVec, rows, w, v);
    nodes_[out.id].rows = static_cast<std::uint32_t>(rows);
    nodes_[out.id].cols = static_cast<std::uint32_t>(cols);
    kernel::matvec(cval(w), rows, cols, cval(v), mval(out));
    return out;
  }

  Var add(Var a, Var b) {
    same_len(a, b, "add");
    const Var out = push(OpKind::Add, len(a), a, b);
    auto x = cval(a), y = cval(b);
    auto o = mval(out);
    for (std::size_t i = 0; i < o.size(); ++i) o[i] = x[i] + y[i];
    return out;
  }

  Var mul(Var a, Var b) {
    same_len(a, b, "mul");
    const Var out = push(OpKind::Mul, len(a), a, b);
    auto x = cval(a), y = cval(b);
    auto o = mval(out);
    for (std::size_t i = 0; i < o.size(); ++i) o[i] = x[i] * y[i];
    return out;
  }

  Var relu(Var a) {
    const Var out = push(OpKind::Relu, len(a), a);
    kernel::relu(cval(a), mval(out));
    return out;
  }

  Var tanh_scaled(Var a, double scale = 1.0) {
    if (!(scale > 0.0)) throw ParameterError("tanh_scaled: scale must be positive");
    const Var out = push(OpKind::TanhScaled, len(a), a);
    nodes_[out.id].scalar = scale;
    kernel::tanh_scaled(cval(a), scale, mval(out));
    return out;
  }

  Var sigmoid(Var a) {
    const Var out = push(OpKind::Sigmoid, len(a), a);
    kernel::sigmoid(cval(a), mval(out));
    return out;
  }

  Var softmax(Var a) {
    if (len(a) == 0) throw ParameterError("softmax: empty input");
    const Var out = push(OpKind::Softmax, len(a), a);
    kernel::softmax(cval(a), mval(out));
    return out;
  }

  Var dot(Var a, Var b) {
    same_len(a, b, "dot");
    const Var out = push(OpKind::Dot, 1, a, b);
    mval(out)[0] = kernel::dot(cval(a), cval(b));
    return out;
  }

  Var concat(std::span<const Var> parts) {
    std::size_t n = 0;
    for (Var p : parts) n += len(p);
    const Var out = push_list(OpKind::Concat, n, parts);
    std::size_t o = off(out);
    for (Var p : parts)
      for (double x : cval(p)) values_[o++] = x;
    return out;
  }

  /// sum_k weights[k] * items[k]
  Var weighted_sum(Var weights, std::span<const Var> items) {
    if (items.empty() || len(weights) != items.size()) throw DimensionError("weighted_sum: arity");
    const std::size_t n = len(items[0]);
    for (Var it : items)
      if (len(it) != n) throw DimensionError("weighted_sum: item length mismatch");
    const Var out = push_list(OpKind::WeightedSum, n, items, weights);
    auto w = cval(weights);
    auto o = mval(out);
    std::fill(o.begin(), o.end(), 0.0);
    for (std::size_t k = 0; k < items.size(); ++k) {
      auto x = cval(items[k]);
      for (std::size_t i = 0; i < n; ++i) o[i] += w[k] * x[i];
    }
    return out;
  }

  Var mean(std::span<const Var> items) {
    if (items.empty()) throw DimensionError("mean: no inputs");
    const std::size_t n = len(items[0]);
    for (Var it : items)
      if (len(it) != n) throw DimensionError("mean: item length mismatch");
    const Var out = push_list(OpKind::Mean, n, items);
    auto o = mval(out);
    std::fill(o.begin(), o.end(), 0.0);
    for (Var it : items) {
      auto x = cval(it);
      for (std::size_t i = 0; i < n; ++i) o[i] += x[i];
    }
    for (double& x : o) x /= static_cast<double>(items.size());
    return out;
  }

  /// Returns [h_t ; c_t]; use slice() to split.
  Var lstm_cell(Var x, Var h, Var c, Var w, Var u, Var b) {
    const std::size_t H = len(h);
    if (len(c) != H || len(u) != 4 * H * H || len(b) != 4 * H || len(w) != 4 * H * len(x))
      throw DimensionError("tape lstm_cell: inconsistent shapes");
    const Var ins[] = {x, h, c, w, u, b};
    const Var out = push_list(OpKind::LstmCell, 2 * H, ins);
    nodes_[out.id].rows = static_cast<std::uint32_t>(H);
    scratch_.resize(4 * H);
    kernel::lstm_cell(lstm_view(w, u, b, len(x), H), cval(x), cval(h), cval(c), scratch_, mval(out));
    return out;
  }

  Var rnn_cell(Var x, Var h, Var w, Var u, Var b) {
    const std::size_t H = len(h);
    if (len(u) != H * H || len(b) != H || len(w) != H * len(x))
      throw DimensionError("tape rnn_cell: inconsistent shapes");
    const Var ins[] = {x, h, w, u, b};
    const Var out = push_list(OpKind::RnnCell, H, ins);
    nodes_[out.id].rows = static_cast<std::uint32_t>(H);
    kernel::rnn_cell(lstm_view(w, u, b, len(x), H), cval(x), cval(h), mval(out));
    return out;
  }

  Var slice(Var a, std::size_t offset, std::size_t length) {
    if (offset + length > len(a)) throw DimensionError("slice: range out of bounds");
    const Var out = push(OpKind::Slice, length, a);
    nodes_[out.id].rows = static_cast<std::uint32_t>(offset);
    auto x = cval(a);
    auto o = mval(out);
    for (std::size_t i = 0; i < length; ++i) o[i] = x[offset + i];
    return out;
  }

  Var hinge(Var pos, Var neg, double margin) {
    if (len(pos) != 1 || len(neg) != 1) throw DimensionError("hinge: scalar inputs required");
    const Var out = push(OpKind::Hinge, 1, pos, neg);
    nodes_[out.id].scalar = margin;
    mval(out)[0] = kernel::hinge(cval(pos)[0], cval(neg)[0], margin);
    return out;
  }

  CSpan value(Var v) const { return cval(v); }
  double scalar(Var v) const { return cval(v)[0]; }
  Vec value_vec(Var v) const {
    auto s = cval(v);
    return Vec(s.begin(), s.end());
  }
  CSpan grad(Var v) const {
    return CSpan(grads_).subspan(nodes_.at(v.id).off, nodes_.at(v.id).len);
  }

  /// Seeds d(out)/d(out) = seed (out must be scalar) and propagates.
  void backward(Var out, double seed = 1.0) {
    if (len(out) != 1) throw DimensionError("backward: output must be scalar");
    grads_.assign(values_.size(), 0.0);
    grads_[off(out)] = seed;
    for (std::size_t idx = out.id + 1; idx-- > 0;) backprop(nodes_[idx]);
  }

  /// Adds every parameter leaf's gradient into `grads` (same names and
  /// shapes as the ParamStore the leaves were bound from).
  void accumulate_into(std::map<std::string, Tensor>& grads) const {
    for (const Node& n : nodes_) {
      if (n.binding < 0) continue;
      const Binding& b = bindings_[static_cast<std::size_t>(n.binding)];
      auto it = grads.find(*b.name);
      if (it == grads.end()) throw ParameterError("accumulate_into: missing gradient slot " + *b.name);
      auto dst = b.row < 0 ? it->second.data() : it->second.row(static_cast<std::size_t>(b.row));
      const double* src = grads_.data() + n.off;
      for (std::size_t i = 0; i < n.len; ++i) dst[i] += src[i];
    }
  }

  void accumulate_into(ParamStore& store) const { accumulate_into(store.grads()); }

 private:
  struct Node {
    OpKind op = OpKind::Leaf;
    std::uint32_t off = 0, len = 0;
    std::uint32_t a = 0, b = 0;
    std::uint32_t list_off = 0, list_len = 0;
    std::uint32_t rows = 0, cols = 0;
    double scalar = 0.0;
    std::int32_t binding = -1;
  };

  struct Binding {
    const std::string* name;
    std::int64_t row;
  };

  std::size_t off(Var v) const { return nodes_[v.id].off; }
  std::size_t len(Var v) const { return nodes_.at(v.id).len; }
  CSpan cval(Var v) const { return CSpan(values_).subspan(nodes_.at(v.id).off, nodes_.at(v.id).len); }
  MSpan mval(Var v) { return MSpan(values_).subspan(nodes_[v.id].off, nodes_[v.id].len); }
  MSpan mgrad(std::uint32_t id) { return MSpan(grads_).subspan(nodes_[id].off, nodes_[id].len); }
  CSpan cgrad(std::uint32_t id) const { return CSpan(grads_).subspan(nodes_[id].off, nodes_[id].len); }
  CSpan cval_id(std::uint32_t id) const { return CSpan(values_).subspan(nodes_[id].off, nodes_[id].len); }

  void same_len(Var a, Var b, const char* what) const {
    if (len(a) != len(b))
      throw DimensionError(std::string(what) + ": length " + std::to_string(len(a)) + " vs " +
                           std::to_string(len(b)));
  }

  Var push(OpKind op, std::size_t n, Var a = {}, Var b = {}) {
    Node node;
    node.op = op;
    node.off = static_cast<std::uint32_t>(values_.size());
    node.len = static_cast<std::uint32_t>(n);
    node.a = a.id;
    node.b = b.id;
    values_.resize(values_.size() + n);
    nodes_.push_back(node);
    return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
  }

  Var push_list(OpKind op, std::size_t n, std::span<const Var> list, Var a = {}) {
    const Var out = push(op, n, a);
    Node& node = nodes_[out.id];
    node.list_off = static_cast<std::uint32_t>(lists_.size());
    node.list_len = static_cast<std::uint32_t>(list.size());
    for (Var v : list) lists_.push_back(v.id);
    return out;
  }

  kernel::LstmView lstm_view(Var w, Var u, Var b, std::size_t in, std::size_t hidden) const {
    return {cval(w), cval(u), cval(b), in, hidden};
  }

  std::uint32_t list_at(const Node& n, std::size_t k) const { return lists_[n.list_off + k]; }

  void backprop(const Node& n) {
    if (n.op == OpKind::Leaf) return;
    const CSpan g(grads_.data() + n.off, n.len);
    bool any = false;
    for (double x : g)
      if (x != 0.0) {
        any = true;
        break;
      }
    if (!any) return;
    const CSpan y(values_.data() + n.off, n.len);
    switch (n.op) {
      case OpKind::MatVec:
        kernel::matvec_vjp(cval_id(n.a), n.rows, n.cols, cval_id(n.b), g, mgrad(n.a), mgrad(n.b));
        break;
      case OpKind::Add: {
        auto da = mgrad(n.a);
        for (std::size_t i = 0; i < n.len; ++i) da[i] += g[i];
        auto db = mgrad(n.b);
        for (std::size_t i = 0; i < n.len; ++i) db[i] += g[i];
        break;
      }
      case OpKind::Mul: {
        auto xa = cval_id(n.a), xb = cval_id(n.b);
        auto da = mgrad(n.a);
        for (std::size_t i = 0; i < n.len; ++i) da[i] += g[i] * xb[i];
        auto db = mgrad(n.b);
        for (std::size_t i = 0; i < n.len; ++i) db[i] += g[i] * xa[i];
        break;
      }
      case OpKind::Relu: kernel::relu_vjp(cval_id(n.a), g, mgrad(n.a)); break;
      case OpKind::TanhScaled: kernel::tanh_scaled_vjp(y, n.scalar, g, mgrad(n.a)); break;
      case OpKind::Sigmoid: kernel::sigmoid_vjp(y, g, mgrad(n.a)); break;
      case OpKind::Softmax: kernel::softmax_vjp(y, g, mgrad(n.a)); break;
      case OpKind::Dot: {
        auto xa = cval_id(n.a), xb = cval_id(n.b);
        auto da = mgrad(n.a);
        for (std::size_t i = 0; i < xa.size(); ++i) da[i] += g[0] * xb[i];
        auto db = mgrad(n.b);
        for (std::size_t i = 0; i < xb.size(); ++i) db[i] += g[0] * xa[i];
        break;
      }
      case OpKind::Concat: {
        std::size_t o = 0;
        for (std::size_t k = 0; k < n.list_len; ++k) {
          auto d = mgrad(list_at(n, k));
          for (double& x : d) x += g[o++];
        }
        break;
      }
      case OpKind::WeightedSum: {
        auto w = cval_id(n.a);
        auto dw = mgrad(n.a);
        for (std::size_t k = 0; k < n.list_len; ++k) {
          const std::uint32_t item = list_at(n, k);
          dw[k] += kernel::dot(g, cval_id(item));
          auto d = mgrad(item);
          for (std::size_t i = 0; i < n.len; ++i) d[i] += w[k] * g[i];
        }
        break;
      }
      case OpKind::Mean: {
        const double inv = 1.0 / static_cast<double>(n.list_len);
        for (std::size_t k = 0; k < n.list_len; ++k) {
          auto d = mgrad(list_at(n, k));
          for (std::size_t i = 0; i < n.len; ++i) d[i] += g[i] * inv;
        }
        break;
      }
      case OpKind::LstmCell: {
        const std::uint32_t x = list_at(n, 0), h = list_at(n, 1), c = list_at(n, 2), w = list_at(n, 3),
                            u = list_at(n, 4), b = list_at(n, 5);
        const std::size_t H = n.rows;
        scratch_.resize(4 * H);
        dpre_.resize(4 * H);
        kernel::LstmView p{cval_id(w), cval_id(u), cval_id(b), nodes_[x].len, H};
        kernel::lstm_cell_vjp(p, cval_id(x), cval_id(h), cval_id(c), g, scratch_, dpre_,
                              {mgrad(x), mgrad(h), mgrad(c), mgrad(w), mgrad(u), mgrad(b)});
        break;
      }
      case OpKind::RnnCell: {
        const std::uint32_t x = list_at(n, 0), h = list_at(n, 1), w = list_at(n, 2), u = list_at(n, 3),
                            b = list_at(n, 4);
        kernel::LstmView p{cval_id(w), cval_id(u), cval_id(b), nodes_[x].len, n.rows};
        kernel::rnn_cell_vjp(p, cval_id(x), cval_id(h), y, g, {mgrad(x), mgrad(h), {}, mgrad(w), mgrad(u), mgrad(b)});
        break;
      }
      case OpKind::Slice: {
        auto d = mgrad(n.a);
        for (std::size_t i = 0; i < n.len; ++i) d[n.rows + i] += g[i];
        break;
      }
      case OpKind::Hinge: {
        double dp = 0.0, dn = 0.0;
        kernel::hinge_vjp(cval_id(n.a)[0], cval_id(n.b)[0], n.scalar, g[0], dp, dn);
        mgrad(n.a)[0] += dp;
        mgrad(n.b)[0] += dn;
        break;
      }
      case OpKind::Leaf: break;
    }
  }

  std::vector<Node> nodes_;
  Vec values_;
  Vec grads_;
  std::vector<std::uint32_t> lists_;
  std::vector<Binding> bindings_;
  Vec scratch_, dpre_;
};

}  // namespace irm
