#pragma once

// Whole-model gradient check on a small random problem.

#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "irmrank/errors.hpp"
#include "irmrank/features.hpp"
#include "irmrank/graph.hpp"
#include "irmrank/model.hpp"
#include "irmrank/numerics/gradcheck.hpp"
#include "irmrank/params.hpp"
#include "irmrank/variant.hpp"

namespace irm {

struct GradcheckSpec {
  Variant variant = Variant::Amnl;
  ModelDims dims{8, 6, 5, 5, 4, GlimpseCell::Lstm, 1.0};
  // 5x5 grid: the glimpse starts at an integer center, away from rounding ties.
  FeatureDims features{6, 5, 5, 4, 2, 3, 5};
  std::size_t users = 6;
  std::size_t tweets = 14;
  std::size_t tuples = 6;
  double init_std = 0.5;
  double margin = kDefaultMargin;
  std::uint64_t seed = 11;
  GradCheckOptions options;
  double tolerance = 1e-4;
  // Test hook: perturb the analytic gradient of this parameter.
  std::optional<std::string> corrupt;

  void validate() const {
    if (dims.joint > 16) throw ConfigError("gradcheck: joint dim must be at most 16");
    if (users < 3 || tweets < 4 || tuples == 0) throw ConfigError("gradcheck: problem too small");
  }
};

struct GradcheckProblem {
  ModelConfig model;
  ParamStore params;
  FeatureStore features;
  IRMNetwork net;
  std::vector<RankTuple> tuples;
};

/// Random features and graph. User 0 follows nobody so the empty-neighbor
/// path is exercised whenever it is sampled; every other user follows two.
inline GradcheckProblem make_gradcheck_problem(const GradcheckSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const FeatureDims& d = spec.features;
  IdList ids(spec.tweets);
  for (Id i = 0; i < spec.tweets; ++i) ids[i] = i;
  auto block = [&](FeatureKind kind, Shape dims) {
    FeatureBlock b{kind, dims, ids, std::vector<float>(spec.tweets * shape_size(dims))};
    for (float& x : b.values) x = static_cast<float>(normal(rng));
    return b;
  };
  const FeatureBlock g = block(FeatureKind::Global, {d.global});
  const FeatureBlock c = block(FeatureKind::Conv, {d.conv_h, d.conv_w, d.channels});
  const FeatureBlock t = block(FeatureKind::Text, {d.contexts, d.tokens, d.word_dim});

  std::vector<RetweetEdge> rt;
  std::vector<FollowEdge> fl;
  std::uniform_int_distribution<Id> tweet(0, static_cast<Id>(spec.tweets - 1));
  std::uniform_int_distribution<Id> user(0, static_cast<Id>(spec.users - 1));
  for (Id j = 0; j < spec.users; ++j) {
    for (int k = 0; k < 3; ++k) rt.push_back({tweet(rng), j});
    if (j == 0) continue;
    for (int k = 0; k < 2;) {
      const Id q = user(rng);
      if (q == j) continue;
      fl.push_back({j, q});
      ++k;
    }
  }
  GradcheckProblem p;
  p.model = {spec.variant, spec.dims, spec.margin};
  p.net = build_graph(spec.tweets, spec.users, rt, fl);
  p.features = make_feature_store(spec.tweets, g, c, t);
  p.params = make_params(spec.dims, d, spec.users, spec.init_std, spec.seed);
  TupleSampler sampler(p.net);
  for (std::size_t i = 0; i < spec.tuples; ++i) p.tuples.push_back(sampler.sample(rng));
  // Always include the isolated user when it has a positive.
  if (!p.net.positives(0).empty()) p.tuples.front() = {0, p.net.positives(0)[0], sampler.pool(0)[0], {}};
  return p;
}

/// Central-difference check of the summed tuple loss against the tape.
inline GradCheckReport model_gradcheck(const GradcheckSpec& spec) {
  GradcheckProblem p = make_gradcheck_problem(spec);
  std::map<std::string, Tensor> analytic;
  total_loss_grad(p.params, p.model, p.features, p.tuples, analytic);
  if (spec.corrupt) {
    auto it = analytic.find(*spec.corrupt);
    if (it == analytic.end()) throw ConfigError("gradcheck: unknown parameter '" + *spec.corrupt + "'");
    for (double& x : it->second.data()) x = x * 1.5 + 1e-3;
  }
  auto loss = [&](const ParamStore& ps) { return total_loss(ps, p.model, p.features, p.tuples); };
  return finite_diff_check(loss, p.params, analytic, spec.options);
}

}  // namespace irm
