#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "irmrank/errors.hpp"
#include "irmrank/features.hpp"
#include "irmrank/fusion.hpp"
#include "irmrank/graph.hpp"
#include "irmrank/numerics/tape.hpp"
#include "irmrank/params.hpp"
#include "irmrank/ranking.hpp"
#include "irmrank/variant.hpp"

namespace irm {

struct ModelConfig {
  Variant variant = Variant::Amnl;
  ModelDims dims;
  double margin = kDefaultMargin;
};

struct TupleForward {
  Var loss;
  Var pos_score;
  Var neg_score;
};

/// Records max(0, c + F(z_k) - F(z_i)) for tuple (j, i, k, N_j) on the tape.
inline TupleForward record_tuple(Tape& t, const ParamStore& ps, const ModelConfig& cfg, const FeatureStore& fs,
                                 const RankTuple& tup) {
  const FusionVars fv = bind_fusion(t, ps, cfg.variant);
  const GlimpseParams gp = glimpse_params(ps, cfg.dims);
  const Var zi = joint_repr(t, fv, gp, cfg.variant, fs, tup.pos);
  const Var zk = joint_repr(t, fv, gp, cfg.variant, fs, tup.neg);
  const Var r = t.param_row(ps, pname::kUserPref, tup.user);
  SocialResult social;
  if (uses_social(cfg.variant) && !tup.neighbors.empty()) {
    const SocialVars sv = bind_social(t, ps);
    std::vector<Var> rq;
    rq.reserve(tup.neighbors.size());
    for (Id q : tup.neighbors) rq.push_back(t.param_row(ps, pname::kUserPref, q));
    social = social_attention(t, sv, r, rq);
  }
  const Var fpos = multifaceted_score(t, cfg.variant, r, social, zi);
  const Var fneg = multifaceted_score(t, cfg.variant, r, social, zk);
  return {t.hinge(fpos, fneg, cfg.margin), fpos, fneg};
}

/// Summed tuple losses as a pure function of the parameters.
inline double total_loss(const ParamStore& ps, const ModelConfig& cfg, const FeatureStore& fs,
                         std::span<const RankTuple> tuples) {
  Tape t;
  double total = 0.0;
  for (const auto& tup : tuples) {
    t.clear();
    total += t.scalar(record_tuple(t, ps, cfg, fs, tup).loss);
  }
  return total;
}

/// Summed loss and its gradient (written into a zeroed copy of ps' gradient map).
inline double total_loss_grad(const ParamStore& ps, const ModelConfig& cfg, const FeatureStore& fs,
                              std::span<const RankTuple> tuples, std::map<std::string, Tensor>& grads) {
  grads = ps.grads();
  for (auto& [_, g] : grads) g.fill(0.0);
  Tape t;
  double total = 0.0;
  for (const auto& tup : tuples) {
    t.clear();
    const auto fwd = record_tuple(t, ps, cfg, fs, tup);
    total += t.scalar(fwd.loss);
    t.backward(fwd.loss);
    t.accumulate_into(grads);
  }
  return total;
}

/// Inference-time scorer. Joint representations and social aggregates are
/// computed on demand with the same kernels as training and cached, so
/// scores match the training-time forward bit for bit.
class Scorer {
 public:
  Scorer(const ParamStore& ps, ModelConfig cfg, const FeatureStore& fs, const IRMNetwork& social_graph)
      : ps_(&ps), cfg_(cfg), fs_(&fs), net_(&social_graph), joint_(fs.tweet_count()), agg_(social_graph.user_count()) {
    if (ps.value(pname::kUserPref).rows() != social_graph.user_count())
      throw DimensionError("Scorer: user preference table does not match the user count");
  }

  const Vec& joint(Id tweet, GlimpseTrace* trace = nullptr) {
    if (tweet >= joint_.size()) throw InputError("unknown tweet id " + std::to_string(tweet));
    if (!joint_[tweet] || trace) {
      tape_.clear();
      const FusionVars fv = bind_fusion(tape_, *ps_, cfg_.variant);
      const Var z = joint_repr(tape_, fv, glimpse_params(*ps_, cfg_.dims), cfg_.variant, *fs_, tweet, trace);
      joint_[tweet] = tape_.value_vec(z);
    }
    return *joint_[tweet];
  }

  /// Social aggregate of user j (empty if j has no neighbors).
  const Vec& aggregate(Id user) {
    if (user >= agg_.size()) throw InputError("unknown user id " + std::to_string(user));
    if (!agg_[user]) {
      const IdList& nb = net_->neighbors(user);
      agg_[user] = uses_social(cfg_.variant) ? social_attention_values(*ps_, user, nb).aggregate : Vec{};
    }
    return *agg_[user];
  }

  double score(Id user, Id tweet) {
    const auto r = ps_->value(pname::kUserPref).row(user);
    return multifaceted_score(cfg_.variant, r, aggregate(user), joint(tweet));
  }

  /// Candidates by score descending, ties by ascending tweet id.
  std::vector<std::pair<Id, double>> rank(Id user, std::span<const Id> candidates) {
    if (user >= agg_.size()) throw InputError("unknown user id " + std::to_string(user));
    Vec scores(candidates.size());
    for (std::size_t i = 0; i < candidates.size(); ++i) scores[i] = score(user, candidates[i]);
    return rank_by_scores(candidates, scores);
  }

  const ModelConfig& config() const { return cfg_; }

 private:
  const ParamStore* ps_;
  ModelConfig cfg_;
  const FeatureStore* fs_;
  const IRMNetwork* net_;
  Tape tape_;
  std::vector<std::optional<Vec>> joint_;
  std::vector<std::optional<Vec>> agg_;
};

inline std::vector<std::pair<Id, double>> rank_tweets_for_user(Scorer& scorer, Id user, std::span<const Id> candidates) {
  return scorer.rank(user, candidates);
}

}  // namespace irm
