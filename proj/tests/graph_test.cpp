#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <set>
#include <sstream>
#include <tuple>
#include <vector>

#include "irmrank/graph.hpp"
#include "test_util.hpp"

namespace irm {
namespace {

using test::Gen;

struct Dense {
  std::vector<std::vector<bool>> h;  // [tweet][user]
  std::vector<std::vector<bool>> s;  // [follower][followee]
};

Dense dense_of(std::size_t tweets, std::size_t users, const std::vector<RetweetEdge>& rt,
               const std::vector<FollowEdge>& fl) {
  Dense d{std::vector(tweets, std::vector<bool>(users)), std::vector(users, std::vector<bool>(users))};
  for (const auto& e : rt) d.h[e.tweet][e.user] = true;
  for (const auto& e : fl)
    if (e.follower != e.followee) d.s[e.follower][e.followee] = true;
  return d;
}

TEST(Graph, MatchesDenseMatricesOnRandomEdgeLists) {
  Gen g(1);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t T = g.range(1, 30), U = g.range(1, 12);
    std::vector<RetweetEdge> rt;
    std::vector<FollowEdge> fl;
    for (std::size_t e = g.range(0, 80); e > 0; --e) rt.push_back({Id(g.index(T)), Id(g.index(U))});
    std::size_t loops = 0;
    for (std::size_t e = g.range(0, 40); e > 0; --e) {
      fl.push_back({Id(g.index(U)), Id(g.index(U))});
      loops += fl.back().follower == fl.back().followee;
    }
    const IRMNetwork net = build_graph(T, U, rt, fl);
    const Dense d = dense_of(T, U, rt, fl);
    EXPECT_EQ(net.self_loops_dropped(), loops);
    std::size_t nh = 0, ns = 0;
    for (Id i = 0; i < T; ++i)
      for (Id j = 0; j < U; ++j) {
        EXPECT_EQ(net.retweeted(i, j), d.h[i][j]);
        nh += d.h[i][j];
      }
    for (Id j = 0; j < U; ++j)
      for (Id q = 0; q < U; ++q) {
        EXPECT_EQ(net.follows(j, q), d.s[j][q]);
        ns += d.s[j][q];
        const auto& nb = net.neighbors(j);
        EXPECT_EQ(std::binary_search(nb.begin(), nb.end(), q), d.s[j][q]);
        const auto& fo = net.followers(q);
        EXPECT_EQ(std::binary_search(fo.begin(), fo.end(), j), d.s[j][q]);
      }
    EXPECT_EQ(net.retweet_count(), nh);
    EXPECT_EQ(net.follow_count(), ns);
    // Rebuilding from the normalized edges is idempotent.
    const GraphEdges e = net.edges();
    EXPECT_EQ(build_graph(T, U, e.retweets, e.follows), net);
  }
}

TEST(Graph, OutOfRangeEdgesThrow) {
  EXPECT_THROW(build_graph(2, 2, {{2, 0}}, {}), InputError);
  EXPECT_THROW(build_graph(2, 2, {}, {{0, 5}}), InputError);
}

TEST(Graph, MinFollowerFilterDropsEdgesButKeepsIds) {
  // 0 and 1 follow 2; nobody follows 0 or 1.
  const IRMNetwork net = build_graph(3, 3, {{0, 0}, {1, 2}}, {{0, 2}, {1, 2}});
  const IRMNetwork f = filter_min_followers(net, 1);
  EXPECT_EQ(f.user_count(), 3u);
  EXPECT_TRUE(f.positives(0).empty());
  EXPECT_EQ(f.positives(2), IdList{1});
  EXPECT_EQ(f.follow_count(), 0u);
}

// ---------------------------------------------------------------------------
// Tuples

// Triple-loop oracle over the dense matrices.
std::set<std::tuple<Id, Id, Id>> brute_tuples(const IRMNetwork& net) {
  std::set<std::tuple<Id, Id, Id>> out;
  const std::size_t T = net.tweet_count(), U = net.user_count();
  for (Id j = 0; j < U; ++j) {
    std::vector<bool> exposed(T, false);
    bool any = false;
    for (Id q = 0; q < U; ++q)
      if (net.follows(j, q))
        for (Id k = 0; k < T; ++k)
          if (net.retweeted(k, q) && !net.retweeted(k, j)) exposed[k] = any = true;
    for (Id i = 0; i < T; ++i) {
      if (!net.retweeted(i, j)) continue;
      for (Id k = 0; k < T; ++k)
        if (!net.retweeted(k, j) && (!any || exposed[k])) out.insert({j, i, k});
    }
  }
  return out;
}

TEST(Tuples, EnumerationEqualsTripleLoop) {
  Gen g(2);
  for (int trial = 0; trial < 25; ++trial) {
    const IRMNetwork net = test::random_network(g, g.range(1, 10), g.range(1, 25), g.uniform(0.0, 0.4),
                                                g.uniform(0.0, 0.4));
    const auto tuples = enumerate_tuples(net, 1'000'000);
    std::set<std::tuple<Id, Id, Id>> got;
    for (std::size_t n = 0; n < tuples.size(); ++n) {
      const auto& t = tuples[n];
      got.insert({t.user, t.pos, t.neg});
      EXPECT_EQ(t.neighbors, net.neighbors(t.user));
      if (n) {
        EXPECT_LT(tuples[n - 1], t);
      }
    }
    EXPECT_EQ(got.size(), tuples.size());
    EXPECT_EQ(got, brute_tuples(net));
  }
}

TEST(Tuples, EnumerationCapThrows) {
  Gen g(3);
  const IRMNetwork net = test::random_network(g, 10, 40, 0.3, 0.2);
  const std::size_t n = enumerate_tuples(net, 1'000'000).size();
  ASSERT_GT(n, 2u);
  EXPECT_NO_THROW(enumerate_tuples(net, n));
  EXPECT_THROW(enumerate_tuples(net, n - 1), CapacityError);
  EXPECT_THROW(enumerate_tuples(net, 0), ParameterError);
}

TEST(Tuples, SampledTuplesAreAlwaysValid) {
  Gen g(4);
  const IRMNetwork net = test::random_network(g, 50, 200, 0.05, 0.05);
  const TupleSampler sampler(net);
  std::mt19937_64 rng(9);
  for (int n = 0; n < 100'000; ++n) {
    const RankTuple t = sampler.sample(rng);
    ASSERT_TRUE(net.retweeted(t.pos, t.user));
    ASSERT_FALSE(net.retweeted(t.neg, t.user));
  }
}

TEST(Tuples, NegativesPreferFolloweeExposure) {
  // User 0 follows 1; 1 retweeted tweet 2, so 0's pool is {2} only.
  const IRMNetwork net = build_graph(5, 2, {{0, 0}, {2, 1}, {0, 1}}, {{0, 1}});
  EXPECT_EQ(negative_pool(net, 0), IdList{2});
  // User 1 follows nobody: every tweet it did not retweet.
  EXPECT_EQ(negative_pool(net, 1), (IdList{1, 3, 4}));
}

TEST(Tuples, EmptyGraphIsExhausted) {
  const IRMNetwork net = build_graph(3, 2, {}, {});
  const TupleSampler s(net);
  EXPECT_TRUE(s.exhausted());
  std::mt19937_64 rng(1);
  EXPECT_THROW(s.sample(rng), SamplingExhausted);
  // A user who retweeted everything has no negatives.
  const IRMNetwork full = build_graph(2, 1, {{0, 0}, {1, 0}}, {});
  EXPECT_THROW(sample_tuple(full, rng), SamplingExhausted);
}

// Wilson-Hilferty upper quantile of chi-square with k dof at z standard
// deviations.
double chi2_upper(double k, double z) {
  const double a = 2.0 / (9.0 * k);
  return k * std::pow(1.0 - a + z * std::sqrt(a), 3.0);
}

TEST(Tuples, SamplingFrequenciesMatchTheHierarchicalUniformLaw) {
  // 5 users, 12 tweets; one user without positives, one without followees.
  const std::vector<RetweetEdge> rt = {{0, 0}, {1, 0}, {2, 1}, {3, 1}, {4, 1}, {0, 2},
                                       {5, 2}, {6, 3}, {7, 3}, {8, 3}, {9, 3}};
  const std::vector<FollowEdge> fl = {{0, 1}, {1, 3}, {2, 0}, {2, 1}, {4, 3}};
  const IRMNetwork net = build_graph(12, 5, rt, fl);
  const TupleSampler sampler(net);

  std::map<std::tuple<Id, Id, Id>, double> expected;
  const double pu = 1.0 / static_cast<double>(sampler.eligible_users().size());
  for (Id j : sampler.eligible_users()) {
    const auto& pos = net.positives(j);
    const auto& pool = sampler.pool(j);
    for (Id i : pos)
      for (Id k : pool) expected[{j, i, k}] = pu / static_cast<double>(pos.size() * pool.size());
  }
  const int N = 200'000;
  std::map<std::tuple<Id, Id, Id>, int> counts;
  std::mt19937_64 rng(17);
  for (int n = 0; n < N; ++n) {
    const auto t = sampler.sample(rng);
    ++counts[{t.user, t.pos, t.neg}];
  }
  for (const auto& [key, c] : counts) ASSERT_TRUE(expected.count(key));
  double chi2 = 0.0;
  for (const auto& [key, p] : expected) {
    const double e = p * N;
    const double o = counts.count(key) ? counts[key] : 0;
    chi2 += (o - e) * (o - e) / e;
    EXPECT_LE(std::abs(o - e), 5.0 * std::sqrt(e * (1 - p))) << std::get<0>(key) << "," << std::get<1>(key);
  }
  const double dof = static_cast<double>(expected.size() - 1);
  EXPECT_LT(chi2, chi2_upper(dof, 3.09));  // p = 0.001
}

// ---------------------------------------------------------------------------
// Split

TEST(Split, PartitionsEachUsersPositives) {
  Gen g(5);
  for (int trial = 0; trial < 20; ++trial) {
    const IRMNetwork net = test::random_network(g, g.range(1, 20), g.range(2, 40), g.uniform(0.0, 0.5), 0.2);
    const double frac = g.uniform(0.1, 0.9);
    const Split s = split(net, {frac, 7});
    for (Id j = 0; j < net.user_count(); ++j) {
      const auto& all = net.positives(j);
      const auto& tr = s.train.positives(j);
      const auto& te = s.test.positives(j);
      IdList merged;
      std::set_union(tr.begin(), tr.end(), te.begin(), te.end(), std::back_inserter(merged));
      EXPECT_EQ(merged, all);
      IdList both;
      std::set_intersection(tr.begin(), tr.end(), te.begin(), te.end(), std::back_inserter(both));
      EXPECT_TRUE(both.empty());
      if (all.size() >= 2) {
        EXPECT_GE(tr.size(), 1u);
        EXPECT_GE(te.size(), 1u);
        const double want = std::llround(frac * static_cast<double>(all.size()));
        EXPECT_EQ(tr.size(), std::clamp<std::size_t>(static_cast<std::size_t>(want), 1, all.size() - 1));
      } else {
        EXPECT_TRUE(te.empty());
      }
      EXPECT_EQ(s.train.neighbors(j), net.neighbors(j));
    }
    const Split again = split(net, {frac, 7});
    EXPECT_EQ(again.train, s.train);
    EXPECT_EQ(again.hash, s.hash);
  }
  EXPECT_THROW(split(build_graph(1, 1, {}, {}), {1.0, 1}), ParameterError);
}

TEST(Split, DifferentSeedsGiveDifferentHashes) {
  Gen g(6);
  const IRMNetwork net = test::random_network(g, 30, 60, 0.2, 0.1);
  EXPECT_NE(split(net, {0.8, 1}).hash, split(net, {0.8, 2}).hash);
}

// ---------------------------------------------------------------------------
// Text format

TEST(GraphText, RoundTripsAndReportsBadLines) {
  Gen g(8);
  const IRMNetwork net = test::random_network(g, 8, 15, 0.3, 0.3);
  std::stringstream s;
  write_graph_text(s, net.edges());
  const GraphEdges e = read_graph_text(s);
  EXPECT_EQ(build_graph(15, 8, e.retweets, e.follows), net);

  std::istringstream bad1("R 1 2\nX 1 2\n");
  try {
    read_graph_text(bad1);
    FAIL();
  } catch (const InputError& err) {
    EXPECT_NE(std::string(err.what()).find("line 2"), std::string::npos);
  }
  std::istringstream bad2("R 1\n");
  EXPECT_THROW(read_graph_text(bad2), InputError);
  std::istringstream bad3("F 1 -2\n");
  EXPECT_THROW(read_graph_text(bad3), InputError);
  std::istringstream ok("# header\n\nR 0 1 # trailing\n");
  EXPECT_EQ(read_graph_text(ok).retweets.size(), 1u);
}

}  // namespace
}  // namespace irm
