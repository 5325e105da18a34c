#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "irmrank/model.hpp"
#include "irmrank/ranking.hpp"
#include "test_util.hpp"

namespace irm {
namespace {

using test::Gen;

const ModelDims kModel{6, 4, 3, 5, 3, GlimpseCell::Lstm, 1.0};
const FeatureDims kDims{5, 3, 3, 2, 2, 2, 3};

double naive_dot(const Vec& a, const Vec& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

TEST(PersonalScore, DotProductCases) {
  EXPECT_EQ(personal_score(Vec{1, 0, 0}, Vec{0, 3, -2}), 0.0);
  EXPECT_EQ(personal_score(Vec{1, 0}, Vec{1, 0}), 1.0);
  Gen g(1);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = g.range(1, 20);
    const Vec r = g.vec(n), z = g.vec(n);
    EXPECT_NEAR(personal_score(r, z), naive_dot(r, z), 1e-12);
  }
  EXPECT_THROW(personal_score(Vec{1, 2}, Vec{1}), DimensionError);
}

ParamStore social_params(std::uint64_t seed, std::size_t users) { return make_params(kModel, kDims, users, 0.8, seed); }

TEST(SocialAttention, SingleNeighborGetsAllWeight) {
  const ParamStore ps = social_params(2, 4);
  const IdList nb{3};
  const SocialValues s = social_attention_values(ps, 0, nb);
  EXPECT_EQ(s.weights, Vec{1.0});
  const auto r3 = ps.value(pname::kUserPref).row(3);
  EXPECT_EQ(s.aggregate, Vec(r3.begin(), r3.end()));
  EXPECT_TRUE(social_attention_values(ps, 0, {}).aggregate.empty());
}

TEST(SocialAttention, IdenticalNeighborsAreUniform) {
  ParamStore ps = social_params(3, 5);
  Tensor& r = ps.value(pname::kUserPref);
  for (std::size_t q = 2; q < 5; ++q)
    for (std::size_t k = 0; k < r.cols(); ++k) r.at(q, k) = r.at(1, k);
  const IdList nb{1, 2, 3, 4};
  for (double w : social_attention_values(ps, 0, nb).weights) EXPECT_NEAR(w, 0.25, 1e-15);
}

TEST(SocialAttention, MatchesFormulaOracle) {
  Gen g(4);
  for (int trial = 0; trial < 30; ++trial) {
    const ParamStore ps = social_params(40 + trial, 6);
    IdList nb{1, 2, 3, 4, 5};
    std::shuffle(nb.begin(), nb.end(), g.rng());
    nb.resize(3);
    const SocialValues got = social_attention_values(ps, 0, nb);
    const Tensor& R = ps.value(pname::kUserPref);
    const Tensor& Ws = ps.value(pname::kSocialSelf);
    const Tensor& Wn = ps.value(pname::kSocialNbr);
    const Tensor& p = ps.value(pname::kSocialP);
    const Tensor& b = ps.value(pname::kSocialB);
    Vec score(nb.size(), 0.0);
    for (std::size_t n = 0; n < nb.size(); ++n)
      for (std::size_t a = 0; a < kModel.social_attention; ++a) {
        double pre = b[a];
        for (std::size_t k = 0; k < kModel.joint; ++k) pre += Ws.at(a, k) * R.at(0, k) + Wn.at(a, k) * R.at(nb[n], k);
        score[n] += p[a] * std::tanh(pre);
      }
    double z = 0.0;
    for (double s : score) z += std::exp(s);
    Vec agg(kModel.joint, 0.0);
    for (std::size_t n = 0; n < nb.size(); ++n) {
      const double w = std::exp(score[n]) / z;
      EXPECT_NEAR(got.weights[n], w, 1e-10);
      for (std::size_t k = 0; k < kModel.joint; ++k) agg[k] += w * R.at(nb[n], k);
    }
    for (std::size_t k = 0; k < kModel.joint; ++k) EXPECT_NEAR(got.aggregate[k], agg[k], 1e-10);
    EXPECT_NEAR(std::accumulate(got.weights.begin(), got.weights.end(), 0.0), 1.0, 1e-12);
  }
}

TEST(MultifacetedScore, FactorsAndFallbacks) {
  Gen g(5);
  const Vec r = g.vec(4), agg = g.vec(4), z = g.vec(4);
  EXPECT_EQ(social_influence(Vec{}, z), 1.0);
  EXPECT_EQ(social_influence(Vec{1, 0, 0, 0}, Vec{0, 1, 0, 0}), 0.0);
  EXPECT_NEAR(social_influence(agg, z), naive_dot(agg, z), 1e-12);
  EXPECT_EQ(multifaceted_score(Variant::Amnl, r, Vec{}, z), personal_score(r, z));
  EXPECT_EQ(multifaceted_score(Variant::AmnlNoSocial, r, agg, z), personal_score(r, z));
  EXPECT_EQ(multifaceted_score(Variant::AmnlPlusNoSocial, r, agg, z), personal_score(r, z));
  EXPECT_EQ(multifaceted_score(Variant::Amnl, r, agg, z), personal_score(r, z) * social_influence(agg, z));
}

TEST(MultifacetedScore, QuadraticScalingInTheJointRepresentation) {
  Gen g(6);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = g.range(1, 16);
    const Vec r = g.vec(n), agg = g.vec(n), z = g.vec(n);
    const double base = multifaceted_score(Variant::AmnlPlus, r, agg, z);
    for (double alpha : {0.5, 2.0, 10.0}) {
      Vec az = z;
      for (double& x : az) x *= alpha;
      const double scaled = multifaceted_score(Variant::AmnlPlus, r, agg, az);
      EXPECT_LE(std::abs(scaled - alpha * alpha * base), 1e-9 * std::abs(alpha * alpha * base)) << alpha;
    }
  }
}

TEST(HingeLoss, FormulaBoundaryAndGradient) {
  EXPECT_NEAR(hinge_loss(0.3, 0.2, 0.5), 0.4, 1e-15);
  EXPECT_EQ(hinge_loss(1.25, 1.0, 0.25), 0.0);
  Gen g(7);
  for (int trial = 0; trial < 200; ++trial) {
    const double p = g.normal(), n = g.normal(), c = g.uniform(0.01, 0.99);
    const double l = hinge_loss(p, n, c);
    EXPECT_GE(l, 0.0);
    EXPECT_EQ(l == 0.0, p >= n + c);
    Tape t;
    const Var vp = t.constant(Vec{p}), vn = t.constant(Vec{n});
    t.backward(t.hinge(vp, vn, c));
    const bool active = c + n - p > 0.0;
    EXPECT_EQ(t.grad(vp)[0], active ? -1.0 : 0.0);
    EXPECT_EQ(t.grad(vn)[0], active ? 1.0 : 0.0);
  }
}

// ---------------------------------------------------------------------------

TEST(RankByScores, SortOracleAndMonotoneInvariance) {
  Gen g(8);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = g.range(1, 10);
    IdList ids(n);
    std::iota(ids.begin(), ids.end(), Id{0});
    std::shuffle(ids.begin(), ids.end(), g.rng());
    Vec scores(n);
    for (double& s : scores) s = static_cast<double>(g.range(0, 4));  // force ties
    const auto ranked = rank_by_scores(ids, scores);
    // Brute force: position = number of candidates strictly ahead.
    for (std::size_t a = 0; a < n; ++a) {
      std::size_t ahead = 0;
      for (std::size_t b = 0; b < n; ++b)
        ahead += scores[b] > scores[a] || (scores[b] == scores[a] && ids[b] < ids[a]);
      EXPECT_EQ(ranked[ahead].first, ids[a]);
    }
    Vec transformed = scores;
    for (double& s : transformed) s = std::exp(3.0 * s) - 7.0;
    const auto again = rank_by_scores(ids, transformed);
    for (std::size_t k = 0; k < n; ++k) EXPECT_EQ(again[k].first, ranked[k].first);
  }
  const IdList one{42};
  EXPECT_EQ(rank_by_scores(one, Vec{-1.0}).front().first, 42u);
  EXPECT_THROW(rank_by_scores(one, Vec{}), DimensionError);
}

// ---------------------------------------------------------------------------
// Whole tuple

struct Problem {
  ParamStore ps;
  FeatureStore fs;
  IRMNetwork net;
};

Problem problem(std::uint64_t seed) {
  Gen g(seed);
  Problem p;
  p.net = test::random_network(g, 6, 10, 0.3, 0.4);
  p.fs = test::random_features(g, kDims, 10);
  p.ps = make_params(kModel, kDims, 6, 0.5, seed);
  return p;
}

TEST(Tuple, NoSocialVariantsGiveZeroSocialGradients) {
  for (Variant v : {Variant::AmnlNoSocial, Variant::AmnlPlusNoSocial}) {
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
      Problem p = problem(seed);
      const auto tuples = enumerate_tuples(p.net, 100000);
      std::map<std::string, Tensor> grads;
      total_loss_grad(p.ps, {v, kModel, 0.9}, p.fs, tuples, grads);
      for (const auto& [name, g] : grads) {
        if (!is_social_param(name)) continue;
        for (double x : g.data()) EXPECT_EQ(x, 0.0) << name;
      }
    }
  }
}

TEST(Tuple, SocialGradientsFlowWhenNeighborsExist) {
  Problem p = problem(3);
  const auto tuples = enumerate_tuples(p.net, 100000);
  std::map<std::string, Tensor> grads;
  total_loss_grad(p.ps, {Variant::Amnl, kModel, 0.9}, p.fs, tuples, grads);
  double mass = 0.0;
  for (double x : grads.at(pname::kSocialNbr).data()) mass += std::abs(x);
  EXPECT_GT(mass, 0.0);
}

TEST(Tuple, ScorerMatchesTrainingForwardBitForBit) {
  for (Variant v : kAllVariants) {
    Problem p = problem(4);
    const ModelConfig mc{v, kModel, 0.3};
    Scorer scorer(p.ps, mc, p.fs, p.net);
    Tape t;
    for (const auto& tup : enumerate_tuples(p.net, 100000)) {
      t.clear();
      const auto fwd = record_tuple(t, p.ps, mc, p.fs, tup);
      EXPECT_EQ(t.scalar(fwd.pos_score), scorer.score(tup.user, tup.pos)) << variant_name(v);
      EXPECT_EQ(t.scalar(fwd.neg_score), scorer.score(tup.user, tup.neg)) << variant_name(v);
    }
  }
}

TEST(Tuple, RankTweetsForUserSortsByScore) {
  Problem p = problem(5);
  Scorer scorer(p.ps, {Variant::AmnlPlus, kModel, 0.3}, p.fs, p.net);
  const IdList cands{9, 0, 4, 7, 2};
  const auto ranked = rank_tweets_for_user(scorer, 1, cands);
  ASSERT_EQ(ranked.size(), cands.size());
  for (std::size_t k = 1; k < ranked.size(); ++k) EXPECT_GE(ranked[k - 1].second, ranked[k].second);
  for (const auto& [id, s] : ranked) EXPECT_EQ(s, scorer.score(1, id));
  const IdList bad{10};
  EXPECT_THROW(rank_tweets_for_user(scorer, 1, bad), InputError);
  EXPECT_THROW(scorer.rank(6, cands), InputError);
}

}  // namespace
}  // namespace irm
