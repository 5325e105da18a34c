#pragma once

// Differentiable primitives. Each forward kernel has a matching
// vector-Jacobian product that *accumulates* into the caller's cotangent
// buffers, so the same kernels serve the tape and the standalone API.

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "irmrank/errors.hpp"
#include "irmrank/numerics/tensor.hpp"

namespace irm {

using CSpan = std::span<const double>;
using MSpan = std::span<double>;

enum class OpKind : std::uint8_t {
  Leaf,
  MatVec,
  Add,
  Mul,
  Relu,
  TanhScaled,
  Sigmoid,
  Softmax,
  Dot,
  Concat,
  WeightedSum,
  Mean,
  LstmCell,
  RnnCell,
  Slice,
  Hinge,
};

inline const char* op_name(OpKind op) {
  switch (op) {
    case OpKind::Leaf: return "leaf";
    case OpKind::MatVec: return "matvec";
    case OpKind::Add: return "add";
    case OpKind::Mul: return "mul";
    case OpKind::Relu: return "relu";
    case OpKind::TanhScaled: return "tanh_scaled";
    case OpKind::Sigmoid: return "sigmoid";
    case OpKind::Softmax: return "softmax";
    case OpKind::Dot: return "dot";
    case OpKind::Concat: return "concat";
    case OpKind::WeightedSum: return "weighted_sum";
    case OpKind::Mean: return "mean";
    case OpKind::LstmCell: return "lstm_cell";
    case OpKind::RnnCell: return "rnn_cell";
    case OpKind::Slice: return "slice";
    case OpKind::Hinge: return "hinge";
  }
  return "unknown";
}

namespace kernel {

inline double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// out = W v, W is rows x cols row-major.
inline void matvec(CSpan w, std::size_t rows, std::size_t cols, CSpan v, MSpan out) {
  for (std::size_t r = 0; r < rows; ++r) {
    const double* wr = w.data() + r * cols;
    double acc = 0.0;
    for (std::size_t c = 0; c < cols; ++c) acc += wr[c] * v[c];
    out[r] = acc;
  }
}

// dW += cot v^T, dv += W^T cot. Either output may be empty to skip it.
inline void matvec_vjp(CSpan w, std::size_t rows, std::size_t cols, CSpan v, CSpan cot, MSpan dw,
                       MSpan dv) {
  for (std::size_t r = 0; r < rows; ++r) {
    const double g = cot[r];
    if (g == 0.0) continue;
    const double* wr = w.data() + r * cols;
    if (!dw.empty()) {
      double* dwr = dw.data() + r * cols;
      for (std::size_t c = 0; c < cols; ++c) dwr[c] += g * v[c];
    }
    if (!dv.empty())
      for (std::size_t c = 0; c < cols; ++c) dv[c] += wr[c] * g;
  }
}

inline void relu(CSpan x, MSpan out) {
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] > 0.0 ? x[i] : 0.0;
}

inline void relu_vjp(CSpan x, CSpan cot, MSpan dx) {
  for (std::size_t i = 0; i < x.size(); ++i)
    if (x[i] > 0.0) dx[i] += cot[i];
}

inline void tanh_scaled(CSpan x, double scale, MSpan out) {
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = scale * std::tanh(x[i]);
}

// Uses the forward output y = s tanh(x): dy/dx = s (1 - (y/s)^2).
inline void tanh_scaled_vjp(CSpan y, double scale, CSpan cot, MSpan dx) {
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double t = y[i] / scale;
    dx[i] += cot[i] * scale * (1.0 - t * t);
  }
}

inline void sigmoid(CSpan x, MSpan out) {
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = sigmoid(x[i]);
}

inline void sigmoid_vjp(CSpan y, CSpan cot, MSpan dx) {
  for (std::size_t i = 0; i < y.size(); ++i) dx[i] += cot[i] * y[i] * (1.0 - y[i]);
}

inline void softmax(CSpan s, MSpan out) {
  const double mx = *std::max_element(s.begin(), s.end());
  double total = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    out[i] = std::exp(s[i] - mx);
    total += out[i];
  }
  for (std::size_t i = 0; i < s.size(); ++i) out[i] /= total;
}

inline void softmax_vjp(CSpan y, CSpan cot, MSpan ds) {
  double gy = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) gy += cot[i] * y[i];
  for (std::size_t i = 0; i < y.size(); ++i) ds[i] += y[i] * (cot[i] - gy);
}

inline double dot(CSpan a, CSpan b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

// NaN passes through so that a diverged score is not read as zero loss.
inline double hinge(double pos, double neg, double margin) {
  const double v = margin + neg - pos;
  return v > 0.0 || std::isnan(v) ? v : 0.0;
}

// Subgradient at the kink is taken as zero: the hinge is active only when
// margin + neg - pos > 0 strictly.
inline void hinge_vjp(double pos, double neg, double margin, double cot, double& dpos, double& dneg) {
  if (margin + neg - pos > 0.0) {
    dpos -= cot;
    dneg += cot;
  }
}

// Single-layer LSTM. Gate rows are stacked [input, forget, candidate,
// output], each `hidden` rows tall; w is (4h x in), u is (4h x h), b is 4h.
struct LstmView {
  CSpan w, u, b;
  std::size_t input = 0;
  std::size_t hidden = 0;
};

inline void lstm_gates(const LstmView& p, CSpan x, CSpan h, MSpan gates) {
  const std::size_t g = 4 * p.hidden;
  for (std::size_t r = 0; r < g; ++r) {
    double acc = p.b[r];
    const double* wr = p.w.data() + r * p.input;
    for (std::size_t c = 0; c < p.input; ++c) acc += wr[c] * x[c];
    const double* ur = p.u.data() + r * p.hidden;
    for (std::size_t c = 0; c < p.hidden; ++c) acc += ur[c] * h[c];
    gates[r] = acc;
  }
  const std::size_t H = p.hidden;
  for (std::size_t k = 0; k < H; ++k) {
    gates[k] = sigmoid(gates[k]);
    gates[H + k] = sigmoid(gates[H + k]);
    gates[2 * H + k] = std::tanh(gates[2 * H + k]);
    gates[3 * H + k] = sigmoid(gates[3 * H + k]);
  }
}

// out = [h_t ; c_t], length 2h. scratch must hold 4h.
inline void lstm_cell(const LstmView& p, CSpan x, CSpan h, CSpan c, MSpan scratch, MSpan out) {
  lstm_gates(p, x, h, scratch);
  const std::size_t H = p.hidden;
  for (std::size_t k = 0; k < H; ++k) {
    const double ct = scratch[H + k] * c[k] + scratch[k] * scratch[2 * H + k];
    out[H + k] = ct;
    out[k] = scratch[3 * H + k] * std::tanh(ct);
  }
}

struct LstmGrads {
  MSpan dx, dh, dc, dw, du, db;
};

// cot = [dh_t ; dc_t]. Gate activations are recomputed from the inputs.
inline void lstm_cell_vjp(const LstmView& p, CSpan x, CSpan h, CSpan c, CSpan cot, MSpan scratch,
                          MSpan dpre, const LstmGrads& g) {
  lstm_gates(p, x, h, scratch);
  const std::size_t H = p.hidden;
  for (std::size_t k = 0; k < H; ++k) {
    const double ig = scratch[k], fg = scratch[H + k], cg = scratch[2 * H + k], og = scratch[3 * H + k];
    const double ct = fg * c[k] + ig * cg;
    const double tc = std::tanh(ct);
    const double gh = cot[k];
    const double gc = cot[H + k] + gh * og * (1.0 - tc * tc);
    dpre[k] = gc * cg * ig * (1.0 - ig);
    dpre[H + k] = gc * c[k] * fg * (1.0 - fg);
    dpre[2 * H + k] = gc * ig * (1.0 - cg * cg);
    dpre[3 * H + k] = gh * tc * og * (1.0 - og);
    if (!g.dc.empty()) g.dc[k] += gc * fg;
  }
  const std::size_t G = 4 * H;
  for (std::size_t r = 0; r < G; ++r) {
    const double d = dpre[r];
    if (d == 0.0) continue;
    if (!g.db.empty()) g.db[r] += d;
    const double* wr = p.w.data() + r * p.input;
    const double* ur = p.u.data() + r * H;
    if (!g.dw.empty())
      for (std::size_t cc = 0; cc < p.input; ++cc) g.dw[r * p.input + cc] += d * x[cc];
    if (!g.du.empty())
      for (std::size_t cc = 0; cc < H; ++cc) g.du[r * H + cc] += d * h[cc];
    if (!g.dx.empty())
      for (std::size_t cc = 0; cc < p.input; ++cc) g.dx[cc] += wr[cc] * d;
    if (!g.dh.empty())
      for (std::size_t cc = 0; cc < H; ++cc) g.dh[cc] += ur[cc] * d;
  }
}

// Plain recurrent cell h_t = tanh(w x + u h + b); w is (h x in), u (h x h).
inline void rnn_cell(const LstmView& p, CSpan x, CSpan h, MSpan out) {
  for (std::size_t r = 0; r < p.hidden; ++r) {
    double acc = p.b[r];
    for (std::size_t c = 0; c < p.input; ++c) acc += p.w[r * p.input + c] * x[c];
    for (std::size_t c = 0; c < p.hidden; ++c) acc += p.u[r * p.hidden + c] * h[c];
    out[r] = std::tanh(acc);
  }
}

inline void rnn_cell_vjp(const LstmView& p, CSpan x, CSpan h, CSpan y, CSpan cot, const LstmGrads& g) {
  for (std::size_t r = 0; r < p.hidden; ++r) {
    const double d = cot[r] * (1.0 - y[r] * y[r]);
    if (d == 0.0) continue;
    if (!g.db.empty()) g.db[r] += d;
    for (std::size_t c = 0; c < p.input; ++c) {
      if (!g.dw.empty()) g.dw[r * p.input + c] += d * x[c];
      if (!g.dx.empty()) g.dx[c] += p.w[r * p.input + c] * d;
    }
    for (std::size_t c = 0; c < p.hidden; ++c) {
      if (!g.du.empty()) g.du[r * p.hidden + c] += d * h[c];
      if (!g.dh.empty()) g.dh[c] += p.u[r * p.hidden + c] * d;
    }
  }
}

}  // namespace kernel

// ---------------------------------------------------------------------------
// Checked value-level API.

inline Vec matvec(const Tensor& w, CSpan v) {
  if (w.rank() != 2) throw DimensionError("matvec: weight must be a matrix, got " + shape_str(w.shape()));
  if (w.shape()[1] != v.size())
    throw DimensionError("matvec: inner dimension " + std::to_string(w.shape()[1]) + " vs vector " +
                         std::to_string(v.size()));
  require_finite(v, "matvec");
  Vec out(w.shape()[0]);
  kernel::matvec(w.data(), w.shape()[0], w.shape()[1], v, out);
  return out;
}

inline Vec relu(CSpan x) {
  require_finite(x, "relu");
  Vec out(x.size());
  kernel::relu(x, out);
  return out;
}

inline Vec tanh_scaled(CSpan x, double scale) {
  if (!(scale > 0.0) || !std::isfinite(scale)) throw ParameterError("tanh_scaled: scale must be positive");
  require_finite(x, "tanh_scaled");
  Vec out(x.size());
  kernel::tanh_scaled(x, scale, out);
  return out;
}

inline Vec sigmoid(CSpan x) {
  require_finite(x, "sigmoid");
  Vec out(x.size());
  kernel::sigmoid(x, out);
  return out;
}

inline Vec softmax(CSpan s) {
  if (s.empty()) throw ParameterError("softmax: empty input");
  require_finite(s, "softmax");
  Vec out(s.size());
  kernel::softmax(s, out);
  return out;
}

inline double dot(CSpan a, CSpan b) {
  if (a.size() != b.size())
    throw DimensionError("dot: length " + std::to_string(a.size()) + " vs " + std::to_string(b.size()));
  return kernel::dot(a, b);
}

/// Weights of one recurrent cell as stored in a ParamStore.
struct CellParams {
  const Tensor* w = nullptr;
  const Tensor* u = nullptr;
  const Tensor* b = nullptr;

  std::size_t hidden() const { return u->shape()[1]; }
  std::size_t input() const { return w->shape()[1]; }

  kernel::LstmView view() const { return {w->data(), u->data(), b->data(), input(), hidden()}; }
};

struct LstmState {
  Vec h;
  Vec c;
};

inline void check_cell(const CellParams& p, std::size_t gates, CSpan x, CSpan h) {
  const std::size_t H = p.u->shape()[1];
  if (p.w->rank() != 2 || p.u->rank() != 2 || p.w->shape()[0] != gates * H || p.u->shape()[0] != gates * H ||
      p.b->size() != gates * H)
    throw DimensionError("recurrent cell: inconsistent weight shapes");
  if (x.size() != p.w->shape()[1]) throw DimensionError("recurrent cell: input dimension mismatch");
  if (h.size() != H) throw DimensionError("recurrent cell: hidden dimension mismatch");
}

inline LstmState lstm_cell(CSpan x, CSpan h, CSpan c, const CellParams& p) {
  check_cell(p, 4, x, h);
  if (c.size() != h.size()) throw DimensionError("lstm_cell: cell state dimension mismatch");
  const std::size_t H = p.hidden();
  Vec scratch(4 * H), out(2 * H);
  kernel::lstm_cell(p.view(), x, h, c, scratch, out);
  return {Vec(out.begin(), out.begin() + H), Vec(out.begin() + H, out.end())};
}

inline Vec rnn_cell(CSpan x, CSpan h, const CellParams& p) {
  check_cell(p, 1, x, h);
  Vec out(p.hidden());
  kernel::rnn_cell(p.view(), x, h, out);
  return out;
}

inline double hinge_loss(double pos, double neg, double margin) {
  if (!(margin > 0.0 && margin < 1.0)) throw ParameterError("hinge_loss: margin must lie in (0, 1)");
  return kernel::hinge(pos, neg, margin);
}

// ---------------------------------------------------------------------------
// Generic vector-Jacobian product over the registered ops. Used by tests and
// the gradient checker to exercise each op in isolation.

struct OpAttrs {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::size_t hidden = 0;
  std::size_t offset = 0;
  std::size_t length = 0;
  double scalar = 1.0;
};

inline void expect_inputs(OpKind op, std::span<const Vec> in, std::size_t n) {
  if (in.size() != n)
    throw DimensionError(std::string(op_name(op)) + ": expected " + std::to_string(n) + " inputs, got " +
                         std::to_string(in.size()));
}

/// Evaluates one registered op on value inputs.
inline Vec apply_op(OpKind op, std::span<const Vec> in, const OpAttrs& at) {
  switch (op) {
    case OpKind::MatVec: {
      expect_inputs(op, in, 2);
      if (in[0].size() != at.rows * at.cols || in[1].size() != at.cols) throw DimensionError("matvec: shape");
      Vec out(at.rows);
      kernel::matvec(in[0], at.rows, at.cols, in[1], out);
      return out;
    }
    case OpKind::Add:
    case OpKind::Mul: {
      expect_inputs(op, in, 2);
      if (in[0].size() != in[1].size()) throw DimensionError(std::string(op_name(op)) + ": shape");
      Vec out(in[0].size());
      for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = op == OpKind::Add ? in[0][i] + in[1][i] : in[0][i] * in[1][i];
      return out;
    }
    case OpKind::Relu: expect_inputs(op, in, 1); return relu(in[0]);
    case OpKind::TanhScaled: expect_inputs(op, in, 1); return tanh_scaled(in[0], at.scalar);
    case OpKind::Sigmoid: expect_inputs(op, in, 1); return sigmoid(in[0]);
    case OpKind::Softmax: expect_inputs(op, in, 1); return softmax(in[0]);
    case OpKind::Dot: expect_inputs(op, in, 2); return {dot(in[0], in[1])};
    case OpKind::Concat: {
      Vec out;
      for (const auto& v : in) out.insert(out.end(), v.begin(), v.end());
      return out;
    }
    case OpKind::WeightedSum: {
      // in[0] = weights (n), in[1..n] = items
      if (in.empty() || in[0].size() + 1 != in.size()) throw DimensionError("weighted_sum: arity");
      Vec out(in[1].size(), 0.0);
      for (std::size_t k = 0; k < in[0].size(); ++k)
        for (std::size_t i = 0; i < out.size(); ++i) out[i] += in[0][k] * in[k + 1][i];
      return out;
    }
    case OpKind::Mean: {
      if (in.empty()) throw DimensionError("mean: no inputs");
      Vec out(in[0].size(), 0.0);
      for (const auto& v : in)
        for (std::size_t i = 0; i < out.size(); ++i) out[i] += v[i];
      for (double& x : out) x /= static_cast<double>(in.size());
      return out;
    }
    case OpKind::LstmCell: {
      // x, h, c, w, u, b
      expect_inputs(op, in, 6);
      const std::size_t H = at.hidden, I = in[0].size();
      if (in[3].size() != 4 * H * I || in[4].size() != 4 * H * H || in[5].size() != 4 * H)
        throw DimensionError("lstm_cell: shape");
      kernel::LstmView p{in[3], in[4], in[5], I, H};
      Vec scratch(4 * H), out(2 * H);
      kernel::lstm_cell(p, in[0], in[1], in[2], scratch, out);
      return out;
    }
    case OpKind::RnnCell: {
      expect_inputs(op, in, 5);
      const std::size_t H = at.hidden, I = in[0].size();
      if (in[2].size() != H * I || in[3].size() != H * H || in[4].size() != H)
        throw DimensionError("rnn_cell: shape");
      kernel::LstmView p{in[2], in[3], in[4], I, H};
      Vec out(H);
      kernel::rnn_cell(p, in[0], in[1], out);
      return out;
    }
    case OpKind::Slice: {
      expect_inputs(op, in, 1);
      if (at.offset + at.length > in[0].size()) throw DimensionError("slice: range");
      return Vec(in[0].begin() + static_cast<std::ptrdiff_t>(at.offset),
                 in[0].begin() + static_cast<std::ptrdiff_t>(at.offset + at.length));
    }
    case OpKind::Hinge:
      expect_inputs(op, in, 2);
      return {kernel::hinge(in[0][0], in[1][0], at.scalar)};
    case OpKind::Leaf: break;
  }
  throw ContractError(std::string("apply_op: unregistered op '") + op_name(op) + "'");
}

/// Returns one cotangent per input for the registered op `op`.
inline std::vector<Vec> vjp(OpKind op, std::span<const Vec> in, CSpan cot, const OpAttrs& at) {
  std::vector<Vec> d;
  d.reserve(in.size());
  for (const auto& v : in) d.emplace_back(v.size(), 0.0);
  switch (op) {
    case OpKind::MatVec:
      expect_inputs(op, in, 2);
      kernel::matvec_vjp(in[0], at.rows, at.cols, in[1], cot, d[0], d[1]);
      return d;
    case OpKind::Add:
      expect_inputs(op, in, 2);
      for (std::size_t i = 0; i < cot.size(); ++i) d[0][i] = d[1][i] = cot[i];
      return d;
    case OpKind::Mul:
      expect_inputs(op, in, 2);
      for (std::size_t i = 0; i < cot.size(); ++i) {
        d[0][i] = cot[i] * in[1][i];
        d[1][i] = cot[i] * in[0][i];
      }
      return d;
    case OpKind::Relu: kernel::relu_vjp(in[0], cot, d[0]); return d;
    case OpKind::TanhScaled: {
      const Vec y = apply_op(op, in, at);
      kernel::tanh_scaled_vjp(y, at.scalar, cot, d.at(0));
      return d;
    }
    case OpKind::Sigmoid: {
      const Vec y = apply_op(op, in, at);
      kernel::sigmoid_vjp(y, cot, d.at(0));
      return d;
    }
    case OpKind::Softmax: {
      const Vec y = apply_op(op, in, at);
      kernel::softmax_vjp(y, cot, d.at(0));
      return d;
    }
    case OpKind::Dot:
      expect_inputs(op, in, 2);
      for (std::size_t i = 0; i < in[0].size(); ++i) {
        d[0][i] = cot[0] * in[1][i];
        d[1][i] = cot[0] * in[0][i];
      }
      return d;
    case OpKind::Concat: {
      std::size_t off = 0;
      for (std::size_t k = 0; k < in.size(); ++k)
        for (std::size_t i = 0; i < in[k].size(); ++i) d[k][i] = cot[off++];
      return d;
    }
    case OpKind::WeightedSum:
      for (std::size_t k = 0; k + 1 < in.size(); ++k) {
        d[0][k] = kernel::dot(cot, in[k + 1]);
        for (std::size_t i = 0; i < cot.size(); ++i) d[k + 1][i] = in[0][k] * cot[i];
      }
      return d;
    case OpKind::Mean:
      for (auto& dk : d)
        for (std::size_t i = 0; i < cot.size(); ++i) dk[i] = cot[i] / static_cast<double>(in.size());
      return d;
    case OpKind::LstmCell: {
      expect_inputs(op, in, 6);
      const std::size_t H = at.hidden, I = in[0].size();
      kernel::LstmView p{in[3], in[4], in[5], I, H};
      Vec scratch(4 * H), dpre(4 * H);
      kernel::lstm_cell_vjp(p, in[0], in[1], in[2], cot, scratch, dpre, {d[0], d[1], d[2], d[3], d[4], d[5]});
      return d;
    }
    case OpKind::RnnCell: {
      expect_inputs(op, in, 5);
      const std::size_t H = at.hidden, I = in[0].size();
      kernel::LstmView p{in[2], in[3], in[4], I, H};
      const Vec y = apply_op(op, in, at);
      kernel::rnn_cell_vjp(p, in[0], in[1], y, cot, {d[0], d[1], {}, d[2], d[3], d[4]});
      return d;
    }
    case OpKind::Slice:
      for (std::size_t i = 0; i < at.length; ++i) d.at(0)[at.offset + i] = cot[i];
      return d;
    case OpKind::Hinge:
      expect_inputs(op, in, 2);
      kernel::hinge_vjp(in[0][0], in[1][0], at.scalar, cot[0], d[0][0], d[1][0]);
      return d;
    case OpKind::Leaf: break;
  }
  throw ContractError(std::string("vjp: unregistered op '") + op_name(op) + "'");
}

}  // namespace irm
