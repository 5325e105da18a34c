#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "irmrank/fusion.hpp"
#include "irmrank/numerics/gradcheck.hpp"
#include "irmrank/params.hpp"
#include "test_util.hpp"

namespace irm {
namespace {

using test::Gen;

const FeatureDims kDims{6, 4, 5, 3, 2, 3, 4};
const ModelDims kModel{5, 4, 3, 3, 3, GlimpseCell::Lstm, 1.0};

ParamStore params(std::uint64_t seed, double sd = 0.5) { return make_params(kModel, kDims, 3, sd, seed); }

Vec naive_matvec(const Tensor& w, const Vec& x) {
  Vec out(w.rows(), 0.0);
  for (std::size_t r = 0; r < w.rows(); ++r)
    for (std::size_t c = 0; c < w.cols(); ++c) out[r] += w.at(r, c) * x[c];
  return out;
}

double sig(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// One LSTM step with gates [i, f, g, o].
void naive_lstm_step(const Tensor& w, const Tensor& u, const Tensor& b, const Vec& x, Vec& h, Vec& c) {
  const std::size_t H = h.size();
  const Vec wx = naive_matvec(w, x), uh = naive_matvec(u, h);
  Vec h2(H), c2(H);
  for (std::size_t k = 0; k < H; ++k) {
    auto pre = [&](std::size_t gate) { return wx[gate * H + k] + uh[gate * H + k] + b[gate * H + k]; };
    c2[k] = sig(pre(1)) * c[k] + sig(pre(0)) * std::tanh(pre(2));
    h2[k] = sig(pre(3)) * std::tanh(c2[k]);
  }
  h = h2, c = c2;
}

std::vector<Var> word_vars(Tape& t, const std::vector<Vec>& words) {
  std::vector<Var> out;
  for (const Vec& w : words) out.push_back(t.constant(w));
  return out;
}

// ---------------------------------------------------------------------------
// Sentence encoder

TEST(EncodeSentence, ZeroParamsGiveZeroEmbedding) {
  const ParamStore ps = params(1, 0.0);
  Gen g(1);
  Tape t;
  const FusionVars v = bind_fusion(t, ps, Variant::Amnl);
  const std::vector<Vec> words{g.vec(kDims.word_dim), g.vec(kDims.word_dim)};
  const Var y = encode_sentence(t, v.lstm, word_vars(t, words));
  for (double x : t.value(y)) EXPECT_EQ(x, 0.0);
  EXPECT_THROW(encode_sentence(t, v.lstm, {}), InputError);
}

TEST(EncodeSentence, MatchesUnrolledOracle) {
  Gen g(2);
  for (int trial = 0; trial < 20; ++trial) {
    const ParamStore ps = params(10 + trial);
    const std::size_t T = g.range(1, 4);
    std::vector<Vec> words;
    for (std::size_t s = 0; s < T; ++s) words.push_back(g.vec(kDims.word_dim));
    Tape t;
    const FusionVars v = bind_fusion(t, ps, Variant::Amnl);
    const Var y = encode_sentence(t, v.lstm, word_vars(t, words));
    Vec h(kModel.text_hidden, 0.0), c(kModel.text_hidden, 0.0);
    for (const Vec& w : words)
      naive_lstm_step(ps.value(pname::kLstmW), ps.value(pname::kLstmU), ps.value(pname::kLstmB), w, h, c);
    for (std::size_t k = 0; k < h.size(); ++k) EXPECT_NEAR(t.value(y)[k], h[k], 1e-12);
  }
}

// ---------------------------------------------------------------------------
// Linear fusion

TEST(FuseLinear, IdentityImagePathAndZeroWeights) {
  FeatureDims d = kDims;
  d.global = kModel.joint;
  ParamStore ps = make_params(kModel, d, 2, 0.5, 3);
  Tensor& wi = ps.value(pname::kImage);
  wi.fill(0.0);
  for (std::size_t i = 0; i < kModel.joint; ++i) wi.at(i, i) = 1.0;
  ps.value(pname::kText).fill(0.0);
  Gen g(3);
  Vec f = g.vec(kModel.joint);
  for (double& x : f) x = std::abs(x);
  Tape t;
  const FusionVars v = bind_fusion(t, ps, Variant::Amnl);
  const std::vector<Var> ys{t.constant(g.vec(kModel.text_hidden))};
  EXPECT_EQ(t.value_vec(fuse_linear(t, v, Variant::Amnl, t.constant(f), ys)), f);

  ps.value(pname::kImage).fill(0.0);
  Tape t2;
  const FusionVars v2 = bind_fusion(t2, ps, Variant::Amnl);
  const std::vector<Var> ys2{t2.constant(g.vec(kModel.text_hidden))};
  for (double x : t2.value(fuse_linear(t2, v2, Variant::Amnl, t2.constant(f), ys2))) EXPECT_EQ(x, 0.0);
}

TEST(FuseLinear, MatchesComposedOracle) {
  Gen g(4);
  for (int trial = 0; trial < 30; ++trial) {
    const ParamStore ps = params(40 + trial);
    const Vec f = g.vec(kDims.global);
    const std::vector<Vec> y{g.vec(kModel.text_hidden), g.vec(kModel.text_hidden)};
    for (Variant variant : {Variant::Amnl, Variant::AmnlImage, Variant::AmnlText}) {
      Tape t;
      const FusionVars v = bind_fusion(t, ps, variant);
      const Var z = fuse_linear(t, v, variant, t.constant(f), word_vars(t, y));
      Vec ybar(kModel.text_hidden);
      for (std::size_t k = 0; k < ybar.size(); ++k) ybar[k] = (y[0][k] + y[1][k]) / 2.0;
      Vec pre(kModel.joint, 0.0);
      if (uses_image(variant)) pre = naive_matvec(ps.value(pname::kImage), f);
      if (uses_text(variant)) {
        const Vec tx = naive_matvec(ps.value(pname::kText), ybar);
        for (std::size_t k = 0; k < pre.size(); ++k) pre[k] += tx[k];
      }
      for (std::size_t k = 0; k < pre.size(); ++k) EXPECT_NEAR(t.value(z)[k], std::max(0.0, pre[k]), 1e-12);
    }
  }
}

// ---------------------------------------------------------------------------
// Patches

Vec cell_coded_map(const FeatureDims& d) {
  // cell (r, c), channel s holds 100 r + 10 c + s.
  Vec m(d.conv_size());
  for (std::size_t r = 0; r < d.conv_h; ++r)
    for (std::size_t c = 0; c < d.conv_w; ++c)
      for (std::size_t s = 0; s < d.channels; ++s) m[(r * d.conv_w + c) * d.channels + s] = 100.0 * r + 10.0 * c + s;
  return m;
}

TEST(ExtractPatch, ConstantMapGivesEqualPatches) {
  const Vec m(kDims.conv_size(), 2.5);
  const PatchSet p = extract_patch(m, kDims, {1.2, 2.7});
  ASSERT_EQ(p.patches.size(), 9u);
  for (const Vec& v : p.patches) EXPECT_EQ(v, Vec(kDims.channels, 2.5));
}

TEST(ExtractPatch, CenterAndCornerClamp) {
  const FeatureDims d4{1, 4, 4, 2, 1, 1, 1};
  const PatchSet mid = extract_patch(cell_coded_map(d4), d4, grid_center(d4));  // (1.5, 1.5) rounds to (2, 2)
  EXPECT_EQ(mid.center_row, 2u);
  EXPECT_EQ(mid.center_col, 2u);
  EXPECT_EQ(mid.patches.front()[0], 110.0);
  EXPECT_EQ(mid.patches.back()[1], 331.0);

  const FeatureDims d8{1, 8, 8, 2, 1, 1, 1};
  const PatchSet corner = extract_patch(cell_coded_map(d8), d8, {0.0, 0.0});
  EXPECT_EQ(corner.center_row, 1u);
  EXPECT_EQ(corner.center_col, 1u);
  EXPECT_EQ(corner.patches.front()[0], 0.0);
  EXPECT_EQ(corner.patches[5][0], 120.0);  // window row 1, col 2
  EXPECT_EQ(corner.patches.back()[0], 220.0);
}

TEST(ExtractPatch, FuzzedLocationsStayInBounds) {
  Gen g(5);
  for (int trial = 0; trial < 500; ++trial) {
    const FeatureDims d{1, g.range(3, 9), g.range(3, 9), 1, 1, 1, 1};
    const Vec m = cell_coded_map(d);
    const Location l{g.normal(20.0), g.normal(20.0)};
    const PatchSet p = extract_patch(m, d, l);
    ASSERT_GE(p.center_row, 1u);
    ASSERT_LE(p.center_row, d.conv_h - 2);
    ASSERT_GE(p.center_col, 1u);
    ASSERT_LE(p.center_col, d.conv_w - 2);
    EXPECT_EQ(p.patches[4][0], 100.0 * p.center_row + 10.0 * p.center_col);
  }
  const FeatureDims small{1, 2, 5, 1, 1, 1, 1};
  EXPECT_THROW(extract_patch(Vec(10), small, {0, 0}), ConfigError);
  EXPECT_THROW(extract_patch(Vec(kDims.conv_size()), kDims, {NAN, 0}), ParameterError);
}

// ---------------------------------------------------------------------------
// Text attention

struct AttentionCase {
  ParamStore ps;
  Vec y;
  std::vector<Vec> patches;
};

AttentionCase attention_case(Gen& g, std::uint64_t seed) {
  AttentionCase c{params(seed), g.vec(kModel.text_hidden), {}};
  for (int k = 0; k < 9; ++k) c.patches.push_back(g.vec(kDims.channels));
  return c;
}

std::pair<Vec, Vec> run_attention(const AttentionCase& c) {
  Tape t;
  const FusionVars v = bind_fusion(t, c.ps, Variant::AmnlPlus);
  const auto r = text_attention(t, v, t.constant(c.y), word_vars(t, c.patches));
  return {t.value_vec(r.weights), t.value_vec(r.context)};
}

TEST(TextAttention, MatchesFormulaOracle) {
  Gen g(6);
  for (int trial = 0; trial < 50; ++trial) {
    const AttentionCase c = attention_case(g, 60 + trial);
    const auto [w, ctx] = run_attention(c);
    const Vec base = naive_matvec(c.ps.value(pname::kAttnText), c.y);
    const Tensor& p = c.ps.value(pname::kAttnP);
    const Tensor& b = c.ps.value(pname::kAttnB);
    Vec s(9);
    for (int k = 0; k < 9; ++k) {
      const Vec up = naive_matvec(c.ps.value(pname::kAttnPatch), c.patches[k]);
      for (std::size_t a = 0; a < base.size(); ++a) s[k] += p[a] * std::tanh(base[a] + up[a] + b[a]);
    }
    double z = 0.0;
    for (double x : s) z += std::exp(x);
    double total = 0.0;
    Vec expect_ctx(kDims.channels, 0.0);
    for (int k = 0; k < 9; ++k) {
      const double a = std::exp(s[k]) / z;
      EXPECT_NEAR(w[k], a, 1e-10);
      EXPECT_GT(w[k], 0.0);
      EXPECT_LT(w[k], 1.0);
      total += w[k];
      for (std::size_t ch = 0; ch < expect_ctx.size(); ++ch) expect_ctx[ch] += a * c.patches[k][ch];
    }
    EXPECT_NEAR(total, 1.0, 1e-9);
    for (std::size_t ch = 0; ch < ctx.size(); ++ch) EXPECT_NEAR(ctx[ch], expect_ctx[ch], 1e-10);
  }
}

TEST(TextAttention, SymmetricInputsGiveUniformWeights) {
  Gen g(7);
  AttentionCase same = attention_case(g, 70);
  const Vec patch = g.vec(kDims.channels);
  for (auto& p : same.patches) p = patch;
  const auto [w, ctx] = run_attention(same);
  for (double a : w) EXPECT_NEAR(a, 1.0 / 9.0, 1e-15);
  for (std::size_t ch = 0; ch < ctx.size(); ++ch) EXPECT_NEAR(ctx[ch], patch[ch], 1e-14);

  AttentionCase zero_p = attention_case(g, 71);
  zero_p.ps.value(pname::kAttnP).fill(0.0);
  for (double a : run_attention(zero_p).first) EXPECT_NEAR(a, 1.0 / 9.0, 1e-15);
}

// ---------------------------------------------------------------------------
// Glimpse

TEST(Glimpse, ZeroParamsReturnToGridCenter) {
  const ParamStore ps = params(8, 0.0);
  const GlimpseParams gp = glimpse_params(ps, kModel);
  Gen g(8);
  const GlimpseState s0 = initial_glimpse(gp, kDims);
  const GlimpseState s1 = glimpse_step(gp, s0, g.vec(kDims.channels), g.vec(kDims.global), kDims);
  const Location c = grid_center(kDims);
  EXPECT_DOUBLE_EQ(s1.loc.row, c.row);
  EXPECT_DOUBLE_EQ(s1.loc.col, c.col);
}

TEST(Glimpse, TwoStepRolloutMatchesUnrolledOracle) {
  Gen g(9);
  for (GlimpseCell cell : {GlimpseCell::Lstm, GlimpseCell::Tanh}) {
    ModelDims m = kModel;
    m.glimpse_cell = cell;
    m.location_scale = 1.5;
    const ParamStore ps = make_params(m, kDims, 2, 0.7, 90);
    const GlimpseParams gp = glimpse_params(ps, m);
    const Vec f = g.vec(kDims.global);
    const std::vector<Vec> gs{g.vec(kDims.channels), g.vec(kDims.channels)};

    GlimpseState s = initial_glimpse(gp, kDims);
    for (const Vec& x : gs) s = glimpse_step(gp, s, x, f, kDims);
    GlimpseState again = initial_glimpse(gp, kDims);
    for (const Vec& x : gs) again = glimpse_step(gp, again, x, f, kDims);
    EXPECT_EQ(again.hidden, s.hidden);
    EXPECT_EQ(again.loc.row, s.loc.row);

    const std::size_t H = m.glimpse_hidden;
    Vec h(H, 0.0), c(H, 0.0);
    for (const Vec& x : gs) {
      if (cell == GlimpseCell::Lstm) {
        naive_lstm_step(ps.value(pname::kGlimpseW), ps.value(pname::kGlimpseU), ps.value(pname::kGlimpseB), x, h, c);
      } else {
        const Vec wx = naive_matvec(ps.value(pname::kGlimpseW), x), uh = naive_matvec(ps.value(pname::kGlimpseU), h);
        for (std::size_t k = 0; k < H; ++k) h[k] = std::tanh(wx[k] + uh[k] + ps.value(pname::kGlimpseB)[k]);
      }
    }
    for (std::size_t k = 0; k < H; ++k) EXPECT_NEAR(s.hidden[k], h[k], 1e-12);
    const Vec a = naive_matvec(ps.value(pname::kLocImage), f), b = naive_matvec(ps.value(pname::kLocOut), h);
    auto decode = [&](double pre, std::size_t n) {
      const double u = 1.5 * std::tanh(pre);
      return 1.0 + (u + 1.5) / 3.0 * (static_cast<double>(n) - 3.0);
    };
    EXPECT_NEAR(s.loc.row, decode(a[0] + b[0], kDims.conv_h), 1e-12);
    EXPECT_NEAR(s.loc.col, decode(a[1] + b[1], kDims.conv_w), 1e-12);
  }
}

// ---------------------------------------------------------------------------
// Attentive fusion

Vec linear_joint(const ParamStore& ps, const FeatureStore& fs, Id tweet) {
  Tape t;
  const FusionVars v = bind_fusion(t, ps, Variant::Amnl);
  return t.value_vec(joint_repr(t, v, glimpse_params(ps, kModel), Variant::Amnl, fs, tweet));
}

Vec attentive_joint(const ParamStore& ps, const FeatureStore& fs, Id tweet, Variant variant,
                    GlimpseTrace* trace = nullptr) {
  Tape t;
  const FusionVars v = bind_fusion(t, ps, variant);
  return t.value_vec(joint_repr(t, v, glimpse_params(ps, kModel), variant, fs, tweet, trace));
}

TEST(FuseAttentive, ZeroAttendedWeightIsBitEqualToLinear) {
  Gen g(10);
  for (int trial = 0; trial < 100; ++trial) {
    ParamStore ps = params(100 + trial);
    ps.value(pname::kAttended).fill(0.0);
    const FeatureStore fs = test::random_features(g, kDims, 1);
    const Vec lin = linear_joint(ps, fs, 0);
    EXPECT_EQ(attentive_joint(ps, fs, 0, Variant::AmnlPlus), lin) << "trial " << trial;
    EXPECT_EQ(attentive_joint(ps, fs, 0, Variant::AmnlPlusPooled), lin) << "trial " << trial;
  }
}

TEST(FuseAttentive, ConstantMapMakesAttentionEqualPooling) {
  Gen g(11);
  for (int trial = 0; trial < 20; ++trial) {
    const ParamStore ps = params(200 + trial);
    FeatureStore fs = test::random_features(g, kDims, 1);
    const Vec cell = g.vec(kDims.channels);
    auto conv = fs.conv_mut(0);
    for (std::size_t i = 0; i < conv.size(); ++i) conv[i] = cell[i % kDims.channels];
    const Vec a = attentive_joint(ps, fs, 0, Variant::AmnlPlus);
    const Vec b = attentive_joint(ps, fs, 0, Variant::AmnlPlusPooled);
    for (std::size_t k = 0; k < a.size(); ++k) EXPECT_NEAR(a[k], b[k], 1e-12);
  }
}

TEST(FuseAttentive, OutputsNonnegativeAndLocationsInBox) {
  Gen g(12);
  for (int trial = 0; trial < 50; ++trial) {
    ModelDims m = kModel;
    m.location_scale = g.uniform(0.2, 4.0);
    const ParamStore ps = make_params(m, kDims, 2, g.uniform(0.1, 3.0), 300 + trial);
    const FeatureStore fs = test::random_features(g, kDims, 1);
    GlimpseTrace trace;
    Tape t;
    const FusionVars v = bind_fusion(t, ps, Variant::AmnlPlus);
    const Vec z = t.value_vec(joint_repr(t, v, glimpse_params(ps, m), Variant::AmnlPlus, fs, 0, &trace));
    for (double x : z) {
      EXPECT_GE(x, 0.0);
      EXPECT_TRUE(std::isfinite(x));
    }
    ASSERT_EQ(trace.locations.size(), kDims.contexts + 1);
    ASSERT_EQ(trace.weights.size(), kDims.contexts);
    for (const Location& l : trace.locations) {
      EXPECT_GE(l.row, 1.0);
      EXPECT_LE(l.row, kDims.conv_h - 2.0);
      EXPECT_GE(l.col, 1.0);
      EXPECT_LE(l.col, kDims.conv_w - 2.0);
    }
  }
}

TEST(FuseAttentive, WrongContextCountThrows) {
  const ParamStore ps = params(13);
  Gen g(13);
  Tape t;
  const FusionVars v = bind_fusion(t, ps, Variant::AmnlPlus);
  const Vec conv = g.vec(kDims.conv_size());
  const std::vector<Var> ys{t.constant(g.vec(kModel.text_hidden))};
  EXPECT_THROW(fuse_attentive(t, v, glimpse_params(ps, kModel), Variant::AmnlPlus, t.constant(g.vec(kDims.global)), conv,
                              kDims, ys),
               InputError);
}

TEST(FuseAttentive, EveryFusionParameterPassesFiniteDifferences) {
  Gen g(14);
  const FeatureStore fs = test::random_features(g, kDims, 1);
  ParamStore ps = params(14);
  const Vec probe = g.vec(kModel.joint);
  auto run = [&](const ParamStore& p, Tape& t) {
    const FusionVars v = bind_fusion(t, p, Variant::AmnlPlus);
    const Var z = joint_repr(t, v, glimpse_params(p, kModel), Variant::AmnlPlus, fs, 0);
    return t.dot(z, t.constant(probe));
  };
  Tape t;
  t.backward(run(ps, t));
  t.accumulate_into(ps);
  GradCheckOptions opt;
  opt.max_coords = 0;
  const auto r = finite_diff_check([&](const ParamStore& p) { Tape tt; return tt.scalar(run(p, tt)); }, ps, ps.grads(), opt);
  EXPECT_LE(r.max_rel_error(), 1e-4) << r.worst()->name;
}

}  // namespace
}  // namespace irm
