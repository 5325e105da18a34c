#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <numeric>
#include <random>
#include <span>
#include <vector>

#include "irmrank/errors.hpp"
#include "irmrank/graph.hpp"
#include "irmrank/model.hpp"
#include "irmrank/ranking.hpp"

namespace irm {

/// Scored candidate list of one user; `positives` (sorted) are the held-out
/// retweets among the candidates.
struct UserRanking {
  Id user = 0;
  IdList candidates;
  Vec scores;
  IdList positives;

  bool is_positive(Id t) const { return std::binary_search(positives.begin(), positives.end(), t); }
};

/// |top-K ∩ positives| / K for one user.
inline double user_precision_at_k(const UserRanking& u, std::size_t k) {
  if (k == 0) throw ParameterError("precision@K: K must be at least 1");
  if (k > u.candidates.size())
    throw ParameterError("precision@K: K=" + std::to_string(k) + " exceeds the candidate pool of user " +
                         std::to_string(u.user) + " (" + std::to_string(u.candidates.size()) + ")");
  const auto ranked = rank_by_scores(u.candidates, u.scores);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < k; ++i) hits += u.is_positive(ranked[i].first) ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(k);
}

/// Mann-Whitney form: (sum of positive mid-ranks - P(P+1)/2) / (P N), which
/// counts score(pos) > score(neg) as 1 and ties as 1/2.
inline double user_auc(const UserRanking& u) {
  const std::size_t n = u.candidates.size();
  if (u.scores.size() != n) throw DimensionError("auc: candidates and scores differ in length");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return u.scores[a] < u.scores[b]; });
  double pos_rank_sum = 0.0;
  std::size_t P = 0;
  for (std::size_t a = 0; a < n;) {
    std::size_t b = a;
    while (b + 1 < n && u.scores[order[b + 1]] == u.scores[order[a]]) ++b;
    const double mid = (static_cast<double>(a + 1) + static_cast<double>(b + 1)) / 2.0;
    for (std::size_t i = a; i <= b; ++i)
      if (u.is_positive(u.candidates[order[i]])) {
        pos_rank_sum += mid;
        ++P;
      }
    a = b + 1;
  }
  const std::size_t N = n - P;
  if (P == 0 || N == 0) throw EvaluationError("auc: user " + std::to_string(u.user) + " needs a positive and a negative");
  const double Pd = static_cast<double>(P);
  return (pos_rank_sum - Pd * (Pd + 1.0) / 2.0) / (Pd * static_cast<double>(N));
}

inline std::vector<const UserRanking*> eligible(std::span<const UserRanking> users) {
  std::vector<const UserRanking*> out;
  for (const auto& u : users) {
    std::size_t p = 0;
    for (Id c : u.candidates) p += u.is_positive(c) ? 1 : 0;
    if (p > 0) out.push_back(&u);
  }
  if (out.empty()) throw EvaluationError("evaluation: no user has a held-out positive");
  return out;
}

/// Mean precision@K over users with at least one held-out positive.
inline double precision_at_k(std::span<const UserRanking> users, std::size_t k) {
  const auto el = eligible(users);
  double total = 0.0;
  for (const auto* u : el) total += user_precision_at_k(*u, k);
  return total / static_cast<double>(el.size());
}

/// Mean per-user AUC.
inline double auc(std::span<const UserRanking> users) {
  const auto el = eligible(users);
  double total = 0.0;
  for (const auto* u : el) total += user_auc(*u);
  return total / static_cast<double>(el.size());
}

// ---------------------------------------------------------------------------
// Candidate pools

struct CandidatePool {
  Id user = 0;
  IdList positives;  // held-out retweets, sorted
  IdList negatives;  // sampled non-retweeted tweets, sorted

  IdList candidates() const {
    IdList c = positives;
    c.insert(c.end(), negatives.begin(), negatives.end());
    std::sort(c.begin(), c.end());
    return c;
  }

  bool operator==(const CandidatePool&) const = default;
};

/// For each user with a held-out positive: the held-out positives plus up to
/// `negatives` tweets the user never retweeted (in `full`), sampled without
/// replacement from a generator seeded by (seed, user).
inline std::vector<CandidatePool> build_pools(const IRMNetwork& full, const IRMNetwork& test, std::size_t negatives,
                                              std::uint64_t seed) {
  std::vector<CandidatePool> out;
  for (Id j = 0; j < test.user_count(); ++j) {
    if (test.positives(j).empty()) continue;
    IdList negs;
    const IdList& own = full.positives(j);
    for (Id t = 0; t < full.tweet_count(); ++t)
      if (!std::binary_search(own.begin(), own.end(), t)) negs.push_back(t);
    if (negs.empty()) continue;
    if (negs.size() > negatives) {
      std::mt19937_64 rng(seed ^ (0x9e3779b97f4a7c15ULL * (std::uint64_t{j} + 1)));
      std::shuffle(negs.begin(), negs.end(), rng);
      negs.resize(negatives);
      std::sort(negs.begin(), negs.end());
    }
    out.push_back({j, test.positives(j), std::move(negs)});
  }
  return out;
}

struct UserEvalRow {
  Id user = 0;
  std::size_t positives = 0;
  std::size_t candidates = 0;
  double precision_at_1 = 0.0;
  double precision_at_3 = 0.0;
  double auc = 0.0;
};

struct EvalReport {
  double precision_at_1 = 0.0;
  double precision_at_3 = 0.0;
  double auc = 0.0;
  std::map<std::size_t, double> precision;  // every requested K
  std::vector<UserEvalRow> users;
  std::uint64_t split_hash = 0;

  bool operator==(const EvalReport& o) const {
    return precision_at_1 == o.precision_at_1 && precision_at_3 == o.precision_at_3 && auc == o.auc &&
           precision == o.precision && split_hash == o.split_hash;
  }
};

inline std::vector<UserRanking> score_pools(Scorer& scorer, std::span<const CandidatePool> pools) {
  std::vector<UserRanking> out;
  out.reserve(pools.size());
  for (const auto& p : pools) {
    UserRanking u{p.user, p.candidates(), {}, p.positives};
    u.scores.resize(u.candidates.size());
    for (std::size_t i = 0; i < u.candidates.size(); ++i) u.scores[i] = scorer.score(p.user, u.candidates[i]);
    out.push_back(std::move(u));
  }
  return out;
}

inline EvalReport evaluate_rankings(std::span<const UserRanking> rankings, std::vector<std::size_t> ks) {
  for (std::size_t k : {std::size_t{1}, std::size_t{3}})
    if (std::find(ks.begin(), ks.end(), k) == ks.end()) ks.push_back(k);
  std::sort(ks.begin(), ks.end());
  EvalReport r;
  for (std::size_t k : ks) r.precision[k] = precision_at_k(rankings, k);
  r.precision_at_1 = r.precision.at(1);
  r.precision_at_3 = r.precision.at(3);
  r.auc = auc(rankings);
  for (const auto* u : eligible(rankings))
    r.users.push_back({u->user, u->positives.size(), u->candidates.size(), user_precision_at_k(*u, 1),
                       user_precision_at_k(*u, 3), user_auc(*u)});
  return r;
}

}  // namespace irm
