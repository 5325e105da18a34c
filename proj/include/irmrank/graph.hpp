#pragma once

#include <algorithm>
#include <cmath>
#include <compare>
#include <cstdint>
#include <istream>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "irmrank/errors.hpp"

namespace irm {

using Id = std::uint32_t;
using IdList = std::vector<Id>;

struct RetweetEdge {
  Id tweet;
  Id user;
  bool operator==(const RetweetEdge&) const = default;
};

struct FollowEdge {
  Id follower;
  Id followee;
  bool operator==(const FollowEdge&) const = default;
};

struct GraphEdges {
  std::vector<RetweetEdge> retweets;
  std::vector<FollowEdge> follows;
};

/// Heterogeneous retweet network: binary tweet x user retweet matrix H,
/// binary user x user follow matrix S, and per-user neighbor sets N_j.
/// N_j holds the accounts user j follows. Immutable after construction.
class IRMNetwork {
 public:
  IRMNetwork() = default;

  std::size_t tweet_count() const { return tweet_users_.size(); }
  std::size_t user_count() const { return user_tweets_.size(); }

  /// h_ij: 1 if tweet i was retweeted by user j.
  bool retweeted(Id tweet, Id user) const {
    const auto& row = user_tweets_.at(user);
    return std::binary_search(row.begin(), row.end(), tweet);
  }

  /// s_jq: 1 if user j follows user q.
  bool follows(Id follower, Id followee) const {
    const auto& row = followees_.at(follower);
    return std::binary_search(row.begin(), row.end(), followee);
  }

  const IdList& positives(Id user) const { return user_tweets_.at(user); }
  const IdList& retweeters(Id tweet) const { return tweet_users_.at(tweet); }
  const IdList& neighbors(Id user) const { return followees_.at(user); }
  const IdList& followers(Id user) const { return followers_.at(user); }

  std::size_t retweet_count() const {
    std::size_t n = 0;
    for (const auto& r : user_tweets_) n += r.size();
    return n;
  }
  std::size_t follow_count() const {
    std::size_t n = 0;
    for (const auto& r : followees_) n += r.size();
    return n;
  }

  std::size_t self_loops_dropped() const { return self_loops_dropped_; }

  /// Edge lists in ascending (tweet, user) / (follower, followee) order.
  GraphEdges edges() const {
    GraphEdges out;
    for (Id i = 0; i < tweet_count(); ++i)
      for (Id j : tweet_users_[i]) out.retweets.push_back({i, j});
    for (Id j = 0; j < user_count(); ++j)
      for (Id q : followees_[j]) out.follows.push_back({j, q});
    return out;
  }

  bool operator==(const IRMNetwork& o) const {
    return user_tweets_ == o.user_tweets_ && tweet_users_ == o.tweet_users_ && followees_ == o.followees_;
  }

  friend IRMNetwork build_graph(std::size_t, std::size_t, const std::vector<RetweetEdge>&,
                                const std::vector<FollowEdge>&);

 private:
  std::vector<IdList> user_tweets_;
  std::vector<IdList> tweet_users_;
  std::vector<IdList> followees_;
  std::vector<IdList> followers_;
  std::size_t self_loops_dropped_ = 0;
};

namespace detail {
inline void sort_unique(IdList& v) {
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
}
}  // namespace detail

/// Builds the network from edge lists. Duplicate edges collapse; self-follow
/// edges are dropped and counted.
inline IRMNetwork build_graph(std::size_t tweets, std::size_t users, const std::vector<RetweetEdge>& retweets,
                              const std::vector<FollowEdge>& follows) {
  IRMNetwork net;
  net.user_tweets_.assign(users, {});
  net.tweet_users_.assign(tweets, {});
  net.followees_.assign(users, {});
  net.followers_.assign(users, {});
  for (const auto& e : retweets) {
    if (e.tweet >= tweets || e.user >= users)
      throw InputError("retweet edge (" + std::to_string(e.tweet) + ", " + std::to_string(e.user) +
                       ") out of range for " + std::to_string(tweets) + " tweets / " + std::to_string(users) +
                       " users");
    net.user_tweets_[e.user].push_back(e.tweet);
    net.tweet_users_[e.tweet].push_back(e.user);
  }
  for (const auto& e : follows) {
    if (e.follower >= users || e.followee >= users)
      throw InputError("follow edge (" + std::to_string(e.follower) + ", " + std::to_string(e.followee) +
                       ") out of range for " + std::to_string(users) + " users");
    if (e.follower == e.followee) {
      ++net.self_loops_dropped_;
      continue;
    }
    net.followees_[e.follower].push_back(e.followee);
    net.followers_[e.followee].push_back(e.follower);
  }
  for (auto* lists : {&net.user_tweets_, &net.tweet_users_, &net.followees_, &net.followers_})
    for (auto& v : *lists) detail::sort_unique(v);
  return net;
}

/// Same follow graph, different retweet matrix.
inline IRMNetwork with_retweets(const IRMNetwork& net, const std::vector<RetweetEdge>& retweets) {
  return build_graph(net.tweet_count(), net.user_count(), retweets, net.edges().follows);
}

/// Optional ingest filter: users with fewer than `min_followers` followers
/// lose their retweet and follow edges (their ids stay valid).
inline IRMNetwork filter_min_followers(const IRMNetwork& net, std::size_t min_followers) {
  std::vector<bool> keep(net.user_count());
  for (Id j = 0; j < net.user_count(); ++j) keep[j] = net.followers(j).size() >= min_followers;
  GraphEdges e = net.edges();
  std::erase_if(e.retweets, [&](const RetweetEdge& r) { return !keep[r.user]; });
  std::erase_if(e.follows, [&](const FollowEdge& f) { return !keep[f.follower] || !keep[f.followee]; });
  return build_graph(net.tweet_count(), net.user_count(), e.retweets, e.follows);
}

// ---------------------------------------------------------------------------
// Relative-preference tuples

/// User j prefers retweeted tweet i over non-retweeted tweet k, given N_j.
struct RankTuple {
  Id user;
  Id pos;
  Id neg;
  IdList neighbors;
  bool operator==(const RankTuple&) const = default;
  auto operator<=>(const RankTuple& o) const {
    return std::tie(user, pos, neg) <=> std::tie(o.user, o.pos, o.neg);
  }
};

/// Negative pool for user j: tweets retweeted by some followee of j but not
/// by j. If that is empty, every tweet j has not retweeted.
inline IdList negative_pool(const IRMNetwork& net, Id user) {
  const IdList& own = net.positives(user);
  IdList exposed;
  for (Id q : net.neighbors(user))
    for (Id t : net.positives(q))
      if (!std::binary_search(own.begin(), own.end(), t)) exposed.push_back(t);
  detail::sort_unique(exposed);
  if (!exposed.empty()) return exposed;
  IdList all;
  for (Id t = 0; t < net.tweet_count(); ++t)
    if (!std::binary_search(own.begin(), own.end(), t)) all.push_back(t);
  return all;
}

/// Draws tuples: user uniform over eligible users (at least one positive and
/// a nonempty negative pool), positive uniform over that user's retweets,
/// negative uniform over the user's negative pool.
class TupleSampler {
 public:
  explicit TupleSampler(const IRMNetwork& net) : net_(&net), pools_(net.user_count()) {
    for (Id j = 0; j < net.user_count(); ++j) {
      if (net.positives(j).empty()) continue;
      pools_[j] = negative_pool(net, j);
      if (!pools_[j].empty()) eligible_.push_back(j);
    }
  }

  bool exhausted() const { return eligible_.empty(); }
  const IdList& eligible_users() const { return eligible_; }
  const IdList& pool(Id user) const { return pools_.at(user); }

  template <typename Rng>
  RankTuple sample(Rng& rng) const {
    if (eligible_.empty()) throw SamplingExhausted("sample_tuple: no user has both a positive and a negative");
    const Id j = eligible_[uniform(rng, eligible_.size())];
    const IdList& pos = net_->positives(j);
    const Id i = pos[uniform(rng, pos.size())];
    const IdList& pool = pools_[j];
    const Id k = pool[uniform(rng, pool.size())];
    return {j, i, k, net_->neighbors(j)};
  }

 private:
  template <typename Rng>
  static std::size_t uniform(Rng& rng, std::size_t n) {
    return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
  }

  const IRMNetwork* net_;
  std::vector<IdList> pools_;
  IdList eligible_;
};

template <typename Rng>
RankTuple sample_tuple(const IRMNetwork& net, Rng& rng) {
  return TupleSampler(net).sample(rng);
}

/// All tuples the sampler can emit, ascending by (user, pos, neg).
inline std::vector<RankTuple> enumerate_tuples(const IRMNetwork& net, std::size_t cap) {
  if (cap == 0) throw ParameterError("enumerate_tuples: cap must be positive");
  std::vector<RankTuple> out;
  for (Id j = 0; j < net.user_count(); ++j) {
    const IdList& pos = net.positives(j);
    if (pos.empty()) continue;
    const IdList pool = negative_pool(net, j);
    if (out.size() + pos.size() * pool.size() > cap)
      throw CapacityError("enumerate_tuples: more than " + std::to_string(cap) + " tuples");
    for (Id i : pos)
      for (Id k : pool) out.push_back({j, i, k, net.neighbors(j)});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Train/test split

struct SplitSpec {
  double train_fraction = 0.8;
  std::uint64_t seed = 1;
};

struct Split {
  IRMNetwork train;
  IRMNetwork test;
  std::uint64_t hash = 0;
};

namespace detail {
inline std::uint64_t fnv1a(std::uint64_t h, std::uint64_t x) {
  for (int b = 0; b < 8; ++b) {
    h ^= (x >> (8 * b)) & 0xffU;
    h *= 1099511628211ULL;
  }
  return h;
}
}  // namespace detail

/// Per-user stratified split of positives. A user with p >= 2 positives keeps
/// round(fraction * p) clamped to [1, p-1] in train; users with fewer than two
/// positives keep everything in train.
inline Split split(const IRMNetwork& net, const SplitSpec& spec) {
  if (!(spec.train_fraction > 0.0 && spec.train_fraction < 1.0))
    throw ParameterError("split: train fraction must lie in (0, 1)");
  std::mt19937_64 rng(spec.seed);
  std::vector<RetweetEdge> train, test;
  std::uint64_t h = 14695981039346656037ULL;
  for (Id j = 0; j < net.user_count(); ++j) {
    IdList pos = net.positives(j);
    std::size_t n_train = pos.size();
    if (pos.size() >= 2) {
      std::shuffle(pos.begin(), pos.end(), rng);
      const auto want = static_cast<std::size_t>(std::llround(spec.train_fraction * static_cast<double>(pos.size())));
      n_train = std::clamp<std::size_t>(want, 1, pos.size() - 1);
    }
    std::sort(pos.begin(), pos.begin() + static_cast<std::ptrdiff_t>(n_train));
    std::sort(pos.begin() + static_cast<std::ptrdiff_t>(n_train), pos.end());
    for (std::size_t t = 0; t < pos.size(); ++t) {
      (t < n_train ? train : test).push_back({pos[t], j});
      h = detail::fnv1a(h, (std::uint64_t{j} << 33) | (std::uint64_t{pos[t]} << 1) | (t < n_train ? 1U : 0U));
    }
  }
  return {with_retweets(net, train), with_retweets(net, test), h};
}

// ---------------------------------------------------------------------------
// Text format: "R <tweet> <user>" and "F <follower> <followee>", '#' comments.

inline GraphEdges read_graph_text(std::istream& in) {
  GraphEdges out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    std::string tag;
    if (!(ls >> tag)) continue;
    long long a = -1, b = -1;
    std::string extra;
    if (!(ls >> a >> b) || (ls >> extra) || a < 0 || b < 0 || a > 0xffffffffLL || b > 0xffffffffLL)
      throw InputError("graph line " + std::to_string(lineno) + ": expected '<R|F> <id> <id>'");
    if (tag == "R")
      out.retweets.push_back({static_cast<Id>(a), static_cast<Id>(b)});
    else if (tag == "F")
      out.follows.push_back({static_cast<Id>(a), static_cast<Id>(b)});
    else
      throw InputError("graph line " + std::to_string(lineno) + ": unknown record tag '" + tag + "'");
  }
  return out;
}

inline void write_graph_text(std::ostream& out, const GraphEdges& edges) {
  out << "# R <tweet_id> <user_id>\n# F <follower_id> <followee_id>\n";
  for (const auto& e : edges.retweets) out << "R " << e.tweet << ' ' << e.user << '\n';
  for (const auto& e : edges.follows) out << "F " << e.follower << ' ' << e.followee << '\n';
}

}  // namespace irm
