#pragma once

// Shared helpers for the unit tests: a seeded value generator, temporary
// directories, and small random graphs / feature stores.

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include <unistd.h>

#include "irmrank/dataset.hpp"
#include "irmrank/features.hpp"
#include "irmrank/graph.hpp"
#include "irmrank/synth.hpp"

namespace irm::test {

class Gen {
 public:
  explicit Gen(std::uint64_t seed) : rng_(seed) {}

  double uniform(double lo = 0.0, double hi = 1.0) { return std::uniform_real_distribution<double>(lo, hi)(rng_); }
  double normal(double sd = 1.0) { return std::normal_distribution<double>(0.0, sd)(rng_); }
  std::size_t index(std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng_); }
  std::size_t range(std::size_t lo, std::size_t hi) { return std::uniform_int_distribution<std::size_t>(lo, hi)(rng_); }
  bool coin(double p = 0.5) { return uniform() < p; }

  Vec vec(std::size_t n, double sd = 1.0) {
    Vec v(n);
    for (double& x : v) x = normal(sd);
    return v;
  }

  std::mt19937_64& rng() { return rng_; }

 private:
  std::mt19937_64 rng_;
};

class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("irmrank-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& f) const { return path_ / f; }

 private:
  std::filesystem::path path_;
};

/// Random bipartite retweets (each pair with probability p_rt) and follows.
inline IRMNetwork random_network(Gen& g, std::size_t users, std::size_t tweets, double p_rt, double p_follow) {
  std::vector<RetweetEdge> rt;
  std::vector<FollowEdge> fl;
  for (Id j = 0; j < users; ++j) {
    for (Id i = 0; i < tweets; ++i)
      if (g.coin(p_rt)) rt.push_back({i, j});
    for (Id q = 0; q < users; ++q)
      if (q != j && g.coin(p_follow)) fl.push_back({j, q});
  }
  return build_graph(tweets, users, rt, fl);
}

inline FeatureBlock random_block(Gen& g, FeatureKind kind, Shape dims, std::size_t tweets) {
  IdList ids(tweets);
  for (Id i = 0; i < tweets; ++i) ids[i] = i;
  FeatureBlock b{kind, dims, ids, std::vector<float>(tweets * shape_size(dims))};
  for (float& x : b.values) x = static_cast<float>(g.normal());
  return b;
}

inline FeatureStore random_features(Gen& g, const FeatureDims& d, std::size_t tweets) {
  return make_feature_store(tweets, random_block(g, FeatureKind::Global, {d.global}, tweets),
                            random_block(g, FeatureKind::Conv, {d.conv_h, d.conv_w, d.channels}, tweets),
                            random_block(g, FeatureKind::Text, {d.contexts, d.tokens, d.word_dim}, tweets));
}

/// In-memory dataset from generator output (no files).
inline Dataset dataset_from(const SynthData& s) {
  Dataset ds;
  ds.manifest.tweets = s.config.tweets;
  ds.manifest.users = s.config.users;
  ds.manifest.dims = s.config.dims;
  ds.net = s.net;
  ds.report = validate_dataset(s.net, s.global, s.conv, s.text);
  ds.features = make_feature_store(s.config.tweets, s.global, s.conv, s.text);
  return ds;
}

/// A small planted dataset that trains in well under a second per epoch.
inline SynthConfig tiny_synth(std::uint64_t seed = 3) {
  SynthConfig c;
  c.users = 24;
  c.tweets = 60;
  c.latent_dim = 6;
  c.positives = 5;
  c.follow_degree = 3;
  c.seed = seed;
  c.dims = {8, 3, 3, 4, 2, 3, 5};
  return c;
}

}  // namespace irm::test
