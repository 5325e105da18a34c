#pragma once

// Personalized score f = r_j^T z, social-influence factor h, the
// multi-faceted score F = f * h, and the margin ranking loss.

#include <algorithm>
#include <numeric>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "irmrank/errors.hpp"
#include "irmrank/graph.hpp"
#include "irmrank/numerics/ops.hpp"
#include "irmrank/numerics/tape.hpp"
#include "irmrank/params.hpp"
#include "irmrank/variant.hpp"

namespace irm {

inline constexpr double kDefaultMargin = 0.3;

struct SocialVars {
  Var w_self, w_nbr, p, b;
};

inline SocialVars bind_social(Tape& t, const ParamStore& ps) {
  return {t.param(ps, pname::kSocialSelf), t.param(ps, pname::kSocialNbr), t.param(ps, pname::kSocialP),
          t.param(ps, pname::kSocialB)};
}

/// Attention over the neighbors' preference vectors. `aggregate` is invalid
/// when the neighbor list is empty.
struct SocialResult {
  Var weights;
  Var aggregate;
  bool empty() const { return !aggregate.valid(); }
};

/// score_q = p^T tanh(W_self r_j + W_nbr r_q + b); weights = softmax(score);
/// aggregate = sum_q weights_q r_q.
inline SocialResult social_attention(Tape& t, const SocialVars& v, Var r_self, std::span<const Var> neighbors) {
  if (neighbors.empty()) return {};
  const Var base = t.add(t.matvec(v.w_self, r_self), v.b);
  std::vector<Var> scores;
  scores.reserve(neighbors.size());
  for (Var rq : neighbors) scores.push_back(t.dot(v.p, t.tanh_scaled(t.add(base, t.matvec(v.w_nbr, rq)))));
  const Var w = t.softmax(t.concat(scores));
  return {w, t.weighted_sum(w, neighbors)};
}

inline Var personal_score(Tape& t, Var r, Var z) { return t.dot(r, z); }

/// h = aggregate^T z, or the constant 1 for users without neighbors.
inline Var social_influence(Tape& t, const SocialResult& s, Var z) {
  if (s.empty()) {
    const double one = 1.0;
    return t.constant(std::span<const double>(&one, 1));
  }
  return t.dot(s.aggregate, z);
}

/// F = f * h; variants without the social factor return f.
inline Var multifaceted_score(Tape& t, Variant variant, Var r, const SocialResult& s, Var z) {
  const Var f = personal_score(t, r, z);
  if (!uses_social(variant)) return f;
  return t.mul(f, social_influence(t, s, z));
}

// ---------------------------------------------------------------------------
// Value-level forms

inline double personal_score(std::span<const double> r, std::span<const double> z) { return dot(r, z); }

/// `aggregate` empty means no neighbors.
inline double social_influence(std::span<const double> aggregate, std::span<const double> z) {
  if (aggregate.empty()) return 1.0;
  return dot(aggregate, z);
}

inline double multifaceted_score(Variant variant, std::span<const double> r, std::span<const double> aggregate,
                                 std::span<const double> z) {
  const double f = personal_score(r, z);
  if (!uses_social(variant)) return f;
  return f * social_influence(aggregate, z);
}

struct SocialValues {
  Vec weights;
  Vec aggregate;
};

/// Evaluates social_attention for user `user` from a ParamStore.
inline SocialValues social_attention_values(const ParamStore& ps, Id user, std::span<const Id> neighbors) {
  if (neighbors.empty()) return {};
  Tape t;
  const SocialVars v = bind_social(t, ps);
  const Var r = t.param_row(ps, pname::kUserPref, user);
  std::vector<Var> rq;
  for (Id q : neighbors) rq.push_back(t.param_row(ps, pname::kUserPref, q));
  const SocialResult s = social_attention(t, v, r, rq);
  return {t.value_vec(s.weights), t.value_vec(s.aggregate)};
}

// ---------------------------------------------------------------------------

/// Candidates sorted by score descending, ties by ascending tweet id.
inline std::vector<std::pair<Id, double>> rank_by_scores(std::span<const Id> ids, std::span<const double> scores) {
  if (ids.size() != scores.size()) throw DimensionError("rank_by_scores: ids and scores differ in length");
  std::vector<std::pair<Id, double>> out(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) out[i] = {ids[i], scores[i]};
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
    return a.second > b.second || (a.second == b.second && a.first < b.first);
  });
  return out;
}

}  // namespace irm
