#pragma once

// Text encoding and multimodal fusion: sentence LSTM, linear fusion, and the
// text-guided glimpse attention over the conv feature map.

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "irmrank/errors.hpp"
#include "irmrank/features.hpp"
#include "irmrank/numerics/ops.hpp"
#include "irmrank/numerics/tape.hpp"
#include "irmrank/params.hpp"
#include "irmrank/variant.hpp"

namespace irm {

struct TextEncoderVars {
  Var w, u, b;
};

/// Tape handles of the fusion parameters a variant reads.
struct FusionVars {
  Var image, text, attended;
  TextEncoderVars lstm;
  Var attn_text, attn_patch, attn_p, attn_b;
};

inline FusionVars bind_fusion(Tape& t, const ParamStore& ps, Variant v) {
  FusionVars out;
  if (uses_image(v)) out.image = t.param(ps, pname::kImage);
  if (uses_text(v)) {
    out.text = t.param(ps, pname::kText);
    out.lstm = {t.param(ps, pname::kLstmW), t.param(ps, pname::kLstmU), t.param(ps, pname::kLstmB)};
  }
  if (is_attentive(v)) {
    out.attended = t.param(ps, pname::kAttended);
    if (!is_pooled(v)) {
      out.attn_text = t.param(ps, pname::kAttnText);
      out.attn_patch = t.param(ps, pname::kAttnPatch);
      out.attn_p = t.param(ps, pname::kAttnP);
      out.attn_b = t.param(ps, pname::kAttnB);
    }
  }
  return out;
}

/// Runs the LSTM left to right from a zero state; returns the last hidden
/// state as the sentence embedding.
inline Var encode_sentence(Tape& t, const TextEncoderVars& enc, std::span<const Var> words) {
  if (words.empty()) throw InputError("encode_sentence: empty word sequence");
  const std::size_t H = t.value(enc.b).size() / 4;
  const Vec zeros(H, 0.0);
  Var h = t.constant(zeros);
  Var c = t.constant(zeros);
  for (Var x : words) {
    const Var hc = t.lstm_cell(x, h, c, enc.w, enc.u, enc.b);
    h = t.slice(hc, 0, H);
    c = t.slice(hc, H, H);
  }
  return h;
}

/// Sentence embeddings y_i1..y_ik of one tweet.
inline std::vector<Var> encode_contexts(Tape& t, const TextEncoderVars& enc, const FeatureStore& fs, Id tweet) {
  const FeatureDims& d = fs.dims();
  std::vector<Var> ys;
  std::vector<Var> words(d.tokens);
  for (std::size_t j = 0; j < d.contexts; ++j) {
    for (std::size_t w = 0; w < d.tokens; ++w) words[w] = t.constant(fs.word(tweet, j, w));
    ys.push_back(encode_sentence(t, enc, words));
  }
  return ys;
}

namespace detail {
inline Var fused_preactivation(Tape& t, const FusionVars& v, Variant variant, Var f, std::span<const Var> ys) {
  Var pre;
  if (uses_image(variant)) pre = t.matvec(v.image, f);
  if (uses_text(variant)) {
    if (ys.empty()) throw InputError("fusion: no sentence embeddings");
    const Var text = t.matvec(v.text, t.mean(ys));
    pre = pre.valid() ? t.add(pre, text) : text;
  }
  return pre;
}
}  // namespace detail

/// z = relu(W_img f + W_txt mean(y)), restricted to the variant's modalities.
inline Var fuse_linear(Tape& t, const FusionVars& v, Variant variant, Var f, std::span<const Var> ys) {
  return t.relu(detail::fused_preactivation(t, v, variant, f, ys));
}

// ---------------------------------------------------------------------------
// Glimpse attention

struct Location {
  double row = 0.0;
  double col = 0.0;
};

inline Location grid_center(const FeatureDims& d) {
  return {(static_cast<double>(d.conv_h) - 1.0) / 2.0, (static_cast<double>(d.conv_w) - 1.0) / 2.0};
}

/// 3x3 window of S-dim cell vectors, row-major window order.
struct PatchSet {
  std::size_t center_row = 0;
  std::size_t center_col = 0;
  std::vector<Vec> patches;
};

/// Window centered at round(l) clamped into [1, H-2] x [1, W-2].
inline PatchSet extract_patch(std::span<const double> conv, const FeatureDims& d, Location l) {
  if (d.conv_h < 3 || d.conv_w < 3) throw ConfigError("extract_patch: conv grid smaller than 3x3");
  if (conv.size() != d.conv_size()) throw DimensionError("extract_patch: conv map size mismatch");
  if (!std::isfinite(l.row) || !std::isfinite(l.col)) throw ParameterError("extract_patch: non-finite location");
  auto clamp_center = [](double x, std::size_t n) {
    const double r = std::clamp(std::round(x), 1.0, static_cast<double>(n - 2));
    return static_cast<std::size_t>(r);
  };
  PatchSet out;
  out.center_row = clamp_center(l.row, d.conv_h);
  out.center_col = clamp_center(l.col, d.conv_w);
  out.patches.reserve(9);
  for (std::size_t r = out.center_row - 1; r <= out.center_row + 1; ++r)
    for (std::size_t c = out.center_col - 1; c <= out.center_col + 1; ++c) {
      auto cell = conv.subspan((r * d.conv_w + c) * d.channels, d.channels);
      out.patches.emplace_back(cell.begin(), cell.end());
    }
  return out;
}

/// Spatial mean of the conv map (one S-dim vector).
inline Vec spatial_mean(std::span<const double> conv, const FeatureDims& d) {
  Vec out(d.channels, 0.0);
  const std::size_t cells = d.conv_h * d.conv_w;
  for (std::size_t cell = 0; cell < cells; ++cell)
    for (std::size_t s = 0; s < d.channels; ++s) out[s] += conv[cell * d.channels + s];
  for (double& x : out) x /= static_cast<double>(cells);
  return out;
}

struct AttentionResult {
  Var weights;  // simplex over the 9 patches
  Var context;  // g = sum_k weights_k * patch_k
};

/// s_k = p^T tanh(W_text y + W_patch theta_k + b), weights = softmax(s).
inline AttentionResult text_attention(Tape& t, const FusionVars& v, Var y, std::span<const Var> patches) {
  if (patches.size() != 9) throw DimensionError("text_attention: expected 9 patch vectors");
  const Var base = t.add(t.matvec(v.attn_text, y), v.attn_b);
  std::vector<Var> scores;
  scores.reserve(patches.size());
  for (Var theta : patches) scores.push_back(t.dot(v.attn_p, t.tanh_scaled(t.add(base, t.matvec(v.attn_patch, theta)))));
  const Var w = t.softmax(t.concat(scores));
  return {w, t.weighted_sum(w, patches)};
}

/// Glimpse recurrence weights and the location read-out.
struct GlimpseParams {
  CellParams cell;
  GlimpseCell kind = GlimpseCell::Lstm;
  const Tensor* loc_image = nullptr;
  const Tensor* loc_out = nullptr;
  double scale = 1.0;
};

inline GlimpseParams glimpse_params(const ParamStore& ps, const ModelDims& m) {
  return {{&ps.value(pname::kGlimpseW), &ps.value(pname::kGlimpseU), &ps.value(pname::kGlimpseB)},
          m.glimpse_cell,
          &ps.value(pname::kLocImage),
          &ps.value(pname::kLocOut),
          m.location_scale};
}

struct GlimpseState {
  Location loc;
  Vec hidden;
  Vec cell;
  Vec output;  // c_ij, the recurrence output read by the location map
};

inline GlimpseState initial_glimpse(const GlimpseParams& p, const FeatureDims& d) {
  const std::size_t H = p.cell.hidden();
  return {grid_center(d), Vec(H, 0.0), Vec(H, 0.0), Vec(H, 0.0)};
}

/// Maps u in [-scale, scale]^2 affinely onto the patch-center box
/// [1, H-2] x [1, W-2].
inline Location decode_location(std::span<const double> u, double scale, const FeatureDims& d) {
  auto map = [&](double x, std::size_t n) {
    const double lo = 1.0, hi = static_cast<double>(n) - 2.0;
    return std::clamp(lo + (x + scale) / (2.0 * scale) * (hi - lo), lo, hi);
  };
  return {map(u[0], d.conv_h), map(u[1], d.conv_w)};
}

/// Feeds the attended context g into the recurrence and emits the next
/// location l' = decode(scale * tanh(W_loc_img f + W_loc_out c)).
inline GlimpseState glimpse_step(const GlimpseParams& p, const GlimpseState& s, std::span<const double> g,
                                 std::span<const double> f, const FeatureDims& d) {
  GlimpseState next;
  if (p.kind == GlimpseCell::Lstm) {
    auto hc = lstm_cell(g, s.hidden, s.cell, p.cell);
    next.hidden = std::move(hc.h);
    next.cell = std::move(hc.c);
  } else {
    next.hidden = rnn_cell(g, s.hidden, p.cell);
    next.cell = next.hidden;
  }
  next.output = next.hidden;
  Vec pre = matvec(*p.loc_image, f);
  const Vec from_out = matvec(*p.loc_out, next.output);
  for (std::size_t i = 0; i < pre.size(); ++i) pre[i] += from_out[i];
  next.loc = decode_location(tanh_scaled(pre, p.scale), p.scale, d);
  return next;
}

struct GlimpseTrace {
  std::vector<Location> locations;  // l_0 .. l_k
  std::vector<Vec> weights;         // attention weights per step (empty when pooled)
};

/// Text-guided attentive fusion. For each sentence j: read the 3x3 window at
/// l_{j-1}, attend over it with y_j (or average-pool the whole map when the
/// variant is pooled), then advance the glimpse recurrence. Finally
/// z = relu(W_img f + W_txt mean(y) + W_att mean(g)).
inline Var fuse_attentive(Tape& t, const FusionVars& v, const GlimpseParams& gp, Variant variant, Var f,
                          std::span<const double> conv, const FeatureDims& d, std::span<const Var> ys,
                          GlimpseTrace* trace = nullptr) {
  if (ys.size() != d.contexts)
    throw InputError("fuse_attentive: expected " + std::to_string(d.contexts) + " contexts, got " +
                     std::to_string(ys.size()));
  const Vec fval = t.value_vec(f);
  GlimpseState state = initial_glimpse(gp, d);
  if (trace) trace->locations.push_back(state.loc);
  std::vector<Var> contexts;
  contexts.reserve(ys.size());
  Var pooled;
  if (is_pooled(variant)) pooled = t.constant(spatial_mean(conv, d));
  std::vector<Var> patch_vars(9);
  for (std::size_t j = 0; j < ys.size(); ++j) {
    Var g;
    if (is_pooled(variant)) {
      g = pooled;
    } else {
      const PatchSet ps = extract_patch(conv, d, state.loc);
      for (std::size_t k = 0; k < 9; ++k) patch_vars[k] = t.constant(ps.patches[k]);
      const AttentionResult att = text_attention(t, v, ys[j], patch_vars);
      if (trace) trace->weights.push_back(t.value_vec(att.weights));
      g = att.context;
    }
    contexts.push_back(g);
    state = glimpse_step(gp, state, t.value(g), fval, d);
    if (trace) trace->locations.push_back(state.loc);
  }
  const Var pre = detail::fused_preactivation(t, v, variant, f, ys);
  const Var attended = t.matvec(v.attended, t.mean(contexts));
  return t.relu(pre.valid() ? t.add(pre, attended) : attended);
}

/// Joint representation z_i of tweet `tweet` under `variant`.
inline Var joint_repr(Tape& t, const FusionVars& v, const GlimpseParams& gp, Variant variant, const FeatureStore& fs,
                      Id tweet, GlimpseTrace* trace = nullptr) {
  const Var f = t.constant(fs.global(tweet));
  std::vector<Var> ys;
  if (uses_text(variant)) ys = encode_contexts(t, v.lstm, fs, tweet);
  if (is_attentive(variant)) return fuse_attentive(t, v, gp, variant, f, fs.conv(tweet), fs.dims(), ys, trace);
  return fuse_linear(t, v, variant, f, ys);
}

}  // namespace irm
