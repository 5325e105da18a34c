#pragma once

// Planted-preference synthetic datasets. User and tweet latents are drawn
// i.i.d. N(0, 1); every user retweets its top-q tweets by r*^T t*, and every
// feature channel is a fixed random linear image of t* plus noise, so the
// ranking signal is recoverable from image and text alike.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "irmrank/dataset.hpp"
#include "irmrank/errors.hpp"
#include "irmrank/features.hpp"
#include "irmrank/graph.hpp"

namespace irm {

enum class ConvMode { Broadcast, Localized };
enum class Planting { Shared, Split };

struct SynthConfig {
  std::size_t users = 100;
  std::size_t tweets = 500;
  std::size_t latent_dim = 16;
  double noise = 0.1;
  std::size_t positives = 10;
  std::size_t follow_degree = 10;
  double exponent = 2.5;
  std::uint64_t seed = 1;
  FeatureDims dims;
  ConvMode conv_mode = ConvMode::Broadcast;
  // Std-dev of the pure-noise cells outside the planted corner (localized).
  double distractor = 1.0;
  // Split: the latent coordinates are partitioned into three blocks seen
  // only by the global image, text, and conv channels respectively.
  Planting planting = Planting::Shared;
  // Identity image map (requires latent_dim == dims.global).
  bool identity_image_map = false;

  void validate() const {
    if (users == 0 || tweets == 0 || latent_dim == 0 || positives == 0)
      throw ConfigError("synth: counts must be positive");
    if (positives >= tweets) throw ConfigError("synth: positives per user must be below the tweet count");
    if (!(exponent > 1.0)) throw ConfigError("synth: follow-degree exponent must exceed 1");
    if (!(noise >= 0.0) || !(distractor >= 0.0)) throw ConfigError("synth: noise levels must be non-negative");
    if (follow_degree >= users) throw ConfigError("synth: follow degree must be below the user count");
    if (dims.conv_h < 3 || dims.conv_w < 3) throw ConfigError("synth: conv grid must be at least 3x3");
    if (identity_image_map && latent_dim != dims.global)
      throw ConfigError("synth: identity image map needs latent_dim == global dim");
    if (planting == Planting::Split && latent_dim < 3) throw ConfigError("synth: split planting needs latent_dim >= 3");
  }
};

inline nlohmann::json synth_json(const SynthConfig& c) {
  return {{"users", c.users},
          {"tweets", c.tweets},
          {"latent_dim", c.latent_dim},
          {"noise", c.noise},
          {"positives", c.positives},
          {"follow_degree", c.follow_degree},
          {"exponent", c.exponent},
          {"seed", c.seed},
          {"dims", dims_json(c.dims)},
          {"conv_mode", c.conv_mode == ConvMode::Localized ? "localized" : "broadcast"},
          {"distractor", c.distractor},
          {"planting", c.planting == Planting::Split ? "split" : "shared"},
          {"identity_image_map", c.identity_image_map}};
}

/// Reads a generator config; unknown keys are rejected.
inline SynthConfig synth_from_json(const nlohmann::json& j) {
  SynthConfig c;
  for (const auto& [key, v] : j.items()) {
    if (key == "users") c.users = v.get<std::size_t>();
    else if (key == "tweets") c.tweets = v.get<std::size_t>();
    else if (key == "latent_dim") c.latent_dim = v.get<std::size_t>();
    else if (key == "noise") c.noise = v.get<double>();
    else if (key == "positives") c.positives = v.get<std::size_t>();
    else if (key == "follow_degree") c.follow_degree = v.get<std::size_t>();
    else if (key == "exponent") c.exponent = v.get<double>();
    else if (key == "seed") c.seed = v.get<std::uint64_t>();
    else if (key == "dims") c.dims = dims_from_json(v);
    else if (key == "conv_mode") {
      const auto s = v.get<std::string>();
      if (s != "broadcast" && s != "localized") throw ConfigError("synth: conv_mode must be broadcast or localized");
      c.conv_mode = s == "localized" ? ConvMode::Localized : ConvMode::Broadcast;
    } else if (key == "distractor") c.distractor = v.get<double>();
    else if (key == "planting") {
      const auto s = v.get<std::string>();
      if (s != "shared" && s != "split") throw ConfigError("synth: planting must be shared or split");
      c.planting = s == "split" ? Planting::Split : Planting::Shared;
    } else if (key == "identity_image_map") c.identity_image_map = v.get<bool>();
    else throw ConfigError("synth: unknown key '" + key + "'");
  }
  return c;
}

struct SynthData {
  SynthConfig config;
  GraphEdges edges;
  IRMNetwork net;
  FeatureBlock global, conv, text;
  Tensor user_latents;   // users x latent_dim
  Tensor tweet_latents;  // tweets x latent_dim
};

/// Inclusive-exclusive latent coordinate range a channel observes.
struct LatentBlock {
  std::size_t begin, end;
};

inline LatentBlock channel_block(const SynthConfig& c, int channel) {
  if (c.planting == Planting::Shared) return {0, c.latent_dim};
  const std::size_t third = c.latent_dim / 3;
  const std::size_t b1 = third + (c.latent_dim % 3 > 0 ? 1 : 0);
  const std::size_t b2 = b1 + third + (c.latent_dim % 3 > 1 ? 1 : 0);
  if (channel == 0) return {0, b1};
  if (channel == 1) return {b1, b2};
  return {b2, c.latent_dim};
}

namespace detail {

// rows x latent matrix with N(0, 1/|block|) entries inside the block and
// zeros elsewhere.
inline Tensor random_map(std::mt19937_64& rng, std::size_t rows, std::size_t latent, LatentBlock block) {
  std::normal_distribution<double> normal(0.0, 1.0 / std::sqrt(static_cast<double>(block.end - block.begin)));
  Tensor m({rows, latent});
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < latent; ++c) {
      const double x = normal(rng);
      if (c >= block.begin && c < block.end) m.at(r, c) = x;
    }
  return m;
}

inline void apply_map(const Tensor& map, std::span<const double> t, std::span<double> out) {
  for (std::size_t r = 0; r < map.rows(); ++r) {
    double acc = 0.0;
    for (std::size_t c = 0; c < map.cols(); ++c) acc += map.at(r, c) * t[c];
    out[r] = acc;
  }
}

}  // namespace detail

/// Follow edges: each user follows `follow_degree` distinct accounts drawn
/// with probability proportional to a Zipf attractiveness w = rank^(-1/(gamma-1)),
/// ranks assigned by a random permutation. Follower counts are then
/// heavy-tailed with density exponent gamma.
inline std::vector<FollowEdge> preferential_follows(std::mt19937_64& rng, std::size_t users, std::size_t degree,
                                                    double exponent) {
  std::vector<std::size_t> rank(users);
  std::iota(rank.begin(), rank.end(), std::size_t{1});
  std::shuffle(rank.begin(), rank.end(), rng);
  std::vector<double> w(users);
  for (std::size_t u = 0; u < users; ++u) w[u] = std::pow(static_cast<double>(rank[u]), -1.0 / (exponent - 1.0));
  std::discrete_distribution<std::size_t> pick(w.begin(), w.end());
  std::uniform_int_distribution<std::size_t> uniform(0, users - 1);
  std::vector<FollowEdge> out;
  for (std::size_t j = 0; j < users; ++j) {
    std::vector<std::size_t> chosen;
    std::size_t tries = 0;
    while (chosen.size() < degree) {
      const std::size_t q = tries < 64 * degree ? pick(rng) : uniform(rng);
      ++tries;
      if (q == j || std::find(chosen.begin(), chosen.end(), q) != chosen.end()) continue;
      chosen.push_back(q);
    }
    std::sort(chosen.begin(), chosen.end());
    for (std::size_t q : chosen) out.push_back({static_cast<Id>(j), static_cast<Id>(q)});
  }
  return out;
}

/// Rank-size estimate of the density exponent of a heavy-tailed count
/// sample: least squares of log(count) on log(rank) over the top
/// `top_fraction` ranks gives slope -1/(gamma-1).
inline double estimate_tail_exponent(std::vector<std::size_t> counts, double top_fraction = 0.1) {
  std::sort(counts.begin(), counts.end(), std::greater<>());
  const auto n = std::max<std::size_t>(3, static_cast<std::size_t>(top_fraction * static_cast<double>(counts.size())));
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  std::size_t used = 0;
  for (std::size_t r = 0; r < n && r < counts.size(); ++r) {
    if (counts[r] == 0) break;
    const double x = std::log(static_cast<double>(r + 1));
    const double y = std::log(static_cast<double>(counts[r]));
    sx += x, sy += y, sxx += x * x, sxy += x * y;
    ++used;
  }
  if (used < 3) throw EvaluationError("estimate_tail_exponent: too few nonzero counts");
  const double k = static_cast<double>(used);
  const double slope = (k * sxy - sx * sy) / (k * sxx - sx * sx);
  if (!(slope < 0.0)) throw EvaluationError("estimate_tail_exponent: non-decreasing rank-size profile");
  return 1.0 - 1.0 / slope;
}

inline SynthData synth_generate(const SynthConfig& cfg) {
  cfg.validate();
  SynthData out;
  out.config = cfg;
  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const std::size_t L = cfg.latent_dim;
  const FeatureDims& d = cfg.dims;

  out.user_latents = Tensor({cfg.users, L});
  out.tweet_latents = Tensor({cfg.tweets, L});
  for (double& x : out.user_latents.vec()) x = normal(rng);
  for (double& x : out.tweet_latents.vec()) x = normal(rng);

  Tensor image_map;
  if (cfg.identity_image_map) {
    image_map = Tensor({d.global, L});
    for (std::size_t i = 0; i < L; ++i) image_map.at(i, i) = 1.0;
  } else {
    image_map = detail::random_map(rng, d.global, L, channel_block(cfg, 0));
  }
  const Tensor text_map = detail::random_map(rng, d.text_size(), L, channel_block(cfg, 1));
  const Tensor conv_map = detail::random_map(rng, d.channels, L, channel_block(cfg, 2));

  // Retweets: each user's top-q tweets by planted score.
  for (Id j = 0; j < cfg.users; ++j) {
    std::vector<std::pair<double, Id>> scored(cfg.tweets);
    for (Id i = 0; i < cfg.tweets; ++i) {
      double s = 0.0;
      for (std::size_t c = 0; c < L; ++c) s += out.user_latents.at(j, c) * out.tweet_latents.at(i, c);
      scored[i] = {s, i};
    }
    std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(cfg.positives), scored.end(),
                      [](const auto& a, const auto& b) { return a.first > b.first || (a.first == b.first && a.second < b.second); });
    for (std::size_t q = 0; q < cfg.positives; ++q) out.edges.retweets.push_back({scored[q].second, j});
  }
  std::sort(out.edges.retweets.begin(), out.edges.retweets.end(),
            [](const auto& a, const auto& b) { return std::tie(a.tweet, a.user) < std::tie(b.tweet, b.user); });
  out.edges.follows = preferential_follows(rng, cfg.users, cfg.follow_degree, cfg.exponent);
  out.net = build_graph(cfg.tweets, cfg.users, out.edges.retweets, out.edges.follows);

  IdList ids(cfg.tweets);
  std::iota(ids.begin(), ids.end(), Id{0});
  out.global = {FeatureKind::Global, {d.global}, ids, std::vector<float>(cfg.tweets * d.global)};
  out.conv = {FeatureKind::Conv, {d.conv_h, d.conv_w, d.channels}, ids, std::vector<float>(cfg.tweets * d.conv_size())};
  out.text = {FeatureKind::Text, {d.contexts, d.tokens, d.word_dim}, ids, std::vector<float>(cfg.tweets * d.text_size())};

  Vec buf(std::max({d.global, d.channels, d.text_size()}));
  for (Id i = 0; i < cfg.tweets; ++i) {
    const auto t = out.tweet_latents.row(i);
    detail::apply_map(image_map, t, std::span<double>(buf).first(d.global));
    for (std::size_t k = 0; k < d.global; ++k)
      out.global.values[i * d.global + k] = static_cast<float>(buf[k] + cfg.noise * normal(rng));

    detail::apply_map(conv_map, t, std::span<double>(buf).first(d.channels));
    for (std::size_t r = 0; r < d.conv_h; ++r)
      for (std::size_t c = 0; c < d.conv_w; ++c) {
        // Localized mode plants the signal in the bottom-right 2x2 corner.
        const bool planted = cfg.conv_mode == ConvMode::Broadcast || (r + 2 >= d.conv_h && c + 2 >= d.conv_w);
        for (std::size_t s = 0; s < d.channels; ++s) {
          const double v = planted ? buf[s] + cfg.noise * normal(rng) : cfg.distractor * normal(rng);
          out.conv.values[i * d.conv_size() + (r * d.conv_w + c) * d.channels + s] = static_cast<float>(v);
        }
      }

    detail::apply_map(text_map, t, std::span<double>(buf).first(d.text_size()));
    for (std::size_t k = 0; k < d.text_size(); ++k)
      out.text.values[i * d.text_size() + k] = static_cast<float>(buf[k] + cfg.noise * normal(rng));
  }
  return out;
}

/// Writes graph, features, latents and manifest into `dir`; returns the
/// manifest path.
inline std::filesystem::path write_synth(const SynthData& data, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  Manifest m;
  m.dir = dir;
  m.tweets = data.config.tweets;
  m.users = data.config.users;
  m.dims = data.config.dims;
  m.latents = "latents.json";
  m.generator = synth_json(data.config);
  {
    std::ofstream g(dir / m.graph);
    if (!g) throw InputError("cannot write " + (dir / m.graph).string());
    write_graph_text(g, data.net.edges());
  }
  write_features(dir / m.global, data.global);
  write_features(dir / m.conv, data.conv);
  write_features(dir / m.text, data.text);
  {
    auto rows = [](const Tensor& t) {
      std::vector<Vec> out;
      for (std::size_t r = 0; r < t.rows(); ++r) out.emplace_back(t.row(r).begin(), t.row(r).end());
      return out;
    };
    std::ofstream l(dir / *m.latents);
    l << nlohmann::json{{"user_latents", rows(data.user_latents)}, {"tweet_latents", rows(data.tweet_latents)}}.dump()
      << '\n';
  }
  const auto path = dir / "manifest.json";
  write_manifest(path, m);
  return path;
}

}  // namespace irm
