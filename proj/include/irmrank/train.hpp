#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "irmrank/checkpoint.hpp"
#include "irmrank/config.hpp"
#include "irmrank/dataset.hpp"
#include "irmrank/errors.hpp"
#include "irmrank/evaluate.hpp"
#include "irmrank/graph.hpp"
#include "irmrank/model.hpp"
#include "irmrank/numerics/optimizer.hpp"
#include "irmrank/params.hpp"

namespace irm {

struct EpochLog {
  std::size_t epoch = 0;        // 1-based
  double objective = 0.0;       // mean loss over the objective tuples
  double wall_seconds = 0.0;
  std::size_t tuples = 0;       // tuples trained on this epoch
  double sampled_loss = 0.0;    // mean loss of the trained tuples, pre-update

  /// Equality ignores wall time.
  bool same_values(const EpochLog& o) const {
    return epoch == o.epoch && objective == o.objective && tuples == o.tuples && sampled_loss == o.sampled_loss;
  }
};

/// Raised when the objective or a parameter becomes non-finite. Carries the
/// last finite state for diagnosis.
class TrainingDiverged : public DivergenceError {
 public:
  TrainingDiverged(const std::string& what, Checkpoint last_good, std::vector<EpochLog> logs)
      : DivergenceError(what), checkpoint(std::move(last_good)), logs(std::move(logs)) {}
  Checkpoint checkpoint;
  std::vector<EpochLog> logs;
};

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<EpochLog> logs;
};

namespace detail {

inline std::string rng_text(const std::mt19937_64& rng) {
  std::ostringstream s;
  s << rng;
  return s.str();
}

inline std::mt19937_64 rng_from_text(const std::string& text) {
  std::mt19937_64 rng;
  std::istringstream s(text);
  s >> rng;
  if (!s) throw FormatError("checkpoint: unreadable rng state");
  return rng;
}

inline constexpr std::uint64_t kMonitorSalt = 0x6d6f6e69746f7231ULL;
inline constexpr std::uint64_t kPoolSalt = 0x706f6f6c73616c74ULL;

inline bool params_finite(const ParamStore& ps) {
  for (const auto& [_, t] : ps.values())
    if (!all_finite(t.data())) return false;
  return true;
}

/// Sums the gradients of tuples[begin, end) into `grads`, tuple by tuple.
inline double accumulate_range(const ParamStore& ps, const ModelConfig& mc, const FeatureStore& fs,
                               std::span<const RankTuple> tuples, std::map<std::string, Tensor>& grads) {
  Tape t;
  double total = 0.0;
  for (const auto& tup : tuples) {
    t.clear();
    const auto fwd = record_tuple(t, ps, mc, fs, tup);
    total += t.scalar(fwd.loss);
    t.backward(fwd.loss);
    t.accumulate_into(grads);
  }
  return total;
}

}  // namespace detail

inline constexpr std::size_t kObjectiveCap = 1'000'000;
inline constexpr std::size_t kObjectiveSample = 65'536;

/// A tuple without its neighbor list, for objective bookkeeping.
struct TupleIds {
  Id user, pos, neg;
};

/// Training data derived from a dataset and config: the split, the sampler
/// over training retweets, and the fixed tuples that define the objective.
class TrainingSetup {
 public:
  TrainingSetup(const TrainConfig& cfg, const IRMNetwork& net)
      : split(irm::split(net, {cfg.split_frac, cfg.seed})), sampler(split.train) {
    if (sampler.exhausted()) throw SamplingExhausted("training split has no user with a positive and a negative");
    std::size_t sample = cfg.monitor_tuples;
    if (sample == 0) {
      try {
        for (const auto& t : enumerate_tuples(split.train, kObjectiveCap)) objective.push_back({t.user, t.pos, t.neg});
      } catch (const CapacityError&) {
        objective.clear();
        sample = kObjectiveSample;
      }
    }
    if (sample) {
      std::mt19937_64 mrng(cfg.seed ^ detail::kMonitorSalt);
      objective.reserve(sample);
      for (std::size_t i = 0; i < sample; ++i) {
        const RankTuple t = sampler.sample(mrng);
        objective.push_back({t.user, t.pos, t.neg});
      }
    }
    tuples_per_epoch = cfg.tuples_per_epoch ? cfg.tuples_per_epoch : 10 * split.train.retweet_count();
  }
  // The sampler points into `split`.
  TrainingSetup(const TrainingSetup&) = delete;
  TrainingSetup& operator=(const TrainingSetup&) = delete;

  const Split split;
  const TupleSampler sampler;
  std::vector<TupleIds> objective;
  std::size_t tuples_per_epoch = 0;
};

/// Mean hinge loss over `tuples`, scoring each tweet and user aggregate once.
inline double mean_objective(const ParamStore& ps, const ModelConfig& mc, const FeatureStore& fs,
                             const IRMNetwork& social_graph, std::span<const TupleIds> tuples) {
  if (tuples.empty()) throw EvaluationError("objective: no tuples");
  Scorer scorer(ps, mc, fs, social_graph);
  double total = 0.0;
  for (const auto& t : tuples) total += hinge_loss(scorer.score(t.user, t.pos), scorer.score(t.user, t.neg), mc.margin);
  return total / static_cast<double>(tuples.size());
}

inline Checkpoint initial_checkpoint(const TrainConfig& cfg, const Dataset& ds) {
  cfg.validate(ds.features.dims());
  Checkpoint ck;
  ck.config = cfg;
  ck.params = make_params(cfg.dims, ds.features.dims(), ds.net.user_count(), cfg.init_std, cfg.seed);
  ck.optimizer = cfg.optimizer_state();
  ck.optimizer.init(ck.params);
  ck.rng_state = detail::rng_text(std::mt19937_64(cfg.seed));
  ck.split_hash = split(ds.net, {cfg.split_frac, cfg.seed}).hash;
  return ck;
}

using EpochCallback = std::function<void(const EpochLog&, const Checkpoint&)>;

/// Runs epochs ck.epoch+1 .. cfg.epochs. Each epoch draws its tuples from
/// the checkpointed generator, takes one optimizer step per batch on the
/// batch-mean gradient, then scores the objective tuples. With one worker the
/// run is bit-reproducible; with more, per-worker sums over contiguous
/// chunks are reduced in worker order.
inline TrainResult train(const TrainConfig& cfg, const Dataset& ds, std::optional<Checkpoint> resume = std::nullopt,
                         const EpochCallback& on_epoch = {}) {
  cfg.validate(ds.features.dims());
  Checkpoint ck = resume ? std::move(*resume) : initial_checkpoint(cfg, ds);
  if (resume) {
    if (ck.params.value(pname::kUserPref).rows() != ds.net.user_count())
      throw ConfigError("resume: checkpoint user count does not match the dataset");
    ck.config.epochs = cfg.epochs;
  }
  const ModelConfig mc = ck.config.model();
  const TrainingSetup setup(ck.config, ds.net);
  if (setup.split.hash != ck.split_hash) throw ConfigError("resume: split differs from the checkpointed run");
  std::mt19937_64 rng = detail::rng_from_text(ck.rng_state);
  const std::size_t B = ck.config.batch_size;
  const std::size_t W = std::max<std::size_t>(1, ck.config.workers);

  std::vector<EpochLog> logs;
  std::vector<RankTuple> batch;
  std::vector<std::map<std::string, Tensor>> worker_grads(W);
  for (std::size_t epoch = ck.epoch + 1; epoch <= cfg.epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    const Checkpoint last_good = ck;
    ck.optimizer.learning_rate = ck.config.learning_rate * std::pow(ck.config.lr_decay, static_cast<double>(epoch - 1));
    double sampled = 0.0;
    for (std::size_t done = 0; done < setup.tuples_per_epoch; done += batch.size()) {
      batch.clear();
      const std::size_t n = std::min(B, setup.tuples_per_epoch - done);
      for (std::size_t i = 0; i < n; ++i) batch.push_back(setup.sampler.sample(rng));
      ck.params.zero_grad();
      if (W == 1) {
        sampled += detail::accumulate_range(ck.params, mc, ds.features, batch, ck.params.grads());
      } else {
        std::vector<double> partial(W, 0.0);
        std::vector<std::thread> pool;
        const std::size_t chunk = (n + W - 1) / W;
        for (std::size_t w = 0; w < W; ++w) {
          const std::size_t lo = std::min(n, w * chunk), hi = std::min(n, lo + chunk);
          worker_grads[w] = ck.params.grads();
          if (lo == hi) continue;
          pool.emplace_back([&, w, lo, hi] {
            partial[w] = detail::accumulate_range(ck.params, mc, ds.features,
                                                  std::span<const RankTuple>(batch).subspan(lo, hi - lo),
                                                  worker_grads[w]);
          });
        }
        for (auto& th : pool) th.join();
        for (std::size_t w = 0; w < W; ++w) {
          sampled += partial[w];
          for (auto& [name, g] : ck.params.grads()) {
            auto dst = g.data();
            const auto src = worker_grads[w].at(name).data();
            for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
          }
        }
      }
      const double inv = 1.0 / static_cast<double>(n);
      for (auto& [_, g] : ck.params.grads())
        for (double& x : g.data()) x *= inv;
      optimizer_step(ck.params, ck.optimizer);
      if (!std::isfinite(sampled) || !detail::params_finite(ck.params))
        throw TrainingDiverged("training diverged in epoch " + std::to_string(epoch), last_good, logs);
    }
    const double objective = mean_objective(ck.params, mc, ds.features, setup.split.train, setup.objective);
    if (!std::isfinite(objective))
      throw TrainingDiverged("objective is not finite after epoch " + std::to_string(epoch), last_good, logs);
    ck.epoch = epoch;
    ck.rng_state = detail::rng_text(rng);
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    logs.push_back({epoch, objective, wall, setup.tuples_per_epoch,
                    sampled / static_cast<double>(setup.tuples_per_epoch)});
    if (on_epoch) on_epoch(logs.back(), ck);
  }
  ck.params.zero_grad();
  return {std::move(ck), std::move(logs)};
}

/// The logged objective of a parameter state.
inline double training_objective(const Checkpoint& ck, const Dataset& ds) {
  const TrainingSetup setup(ck.config, ds.net);
  return mean_objective(ck.params, ck.config.model(), ds.features, setup.split.train, setup.objective);
}

// ---------------------------------------------------------------------------
// Evaluation of a trained state

/// Candidate pools for the checkpoint's held-out split.
inline std::vector<CandidatePool> eval_pools(const TrainConfig& cfg, const IRMNetwork& net) {
  const Split s = split(net, {cfg.split_frac, cfg.seed});
  return build_pools(net, s.test, cfg.eval_negatives, cfg.seed ^ detail::kPoolSalt);
}

inline EvalReport evaluate(const Checkpoint& ck, const Dataset& ds, const std::vector<std::size_t>& ks = {1, 3}) {
  const auto pools = eval_pools(ck.config, ds.net);
  Scorer scorer(ck.params, ck.config.model(), ds.features, ds.net);
  const auto rankings = score_pools(scorer, pools);
  EvalReport r = evaluate_rankings(rankings, ks);
  r.split_hash = split(ds.net, {ck.config.split_frac, ck.config.seed}).hash;
  return r;
}

inline double evaluate_auc(const Checkpoint& ck, const Dataset& ds) { return evaluate(ck, ds).auc; }

inline double evaluate_precision_at_k(const Checkpoint& ck, const Dataset& ds, std::size_t k) {
  return evaluate(ck, ds, {k}).precision.at(k);
}

// ---------------------------------------------------------------------------
// Ablations

struct AblationRun {
  std::uint64_t seed = 0;
  std::optional<EvalReport> report;
  std::string error;
};

struct AblationRow {
  Variant variant = Variant::Amnl;
  std::vector<AblationRun> runs;
  double precision_at_1 = 0.0;  // medians over successful runs
  double precision_at_3 = 0.0;
  double auc = 0.0;
  std::size_t succeeded = 0;
};

struct AblationTable {
  std::vector<AblationRow> rows;
  std::vector<std::uint64_t> seeds;
  std::vector<std::uint64_t> split_hashes;  // one per seed, shared by every variant

  const AblationRow& row(Variant v) const {
    for (const auto& r : rows)
      if (r.variant == v) return r;
    throw InputError("ablation table has no row for " + std::string(variant_name(v)));
  }
};

inline double median(std::vector<double> xs) {
  if (xs.empty()) throw EvaluationError("median of an empty sample");
  std::sort(xs.begin(), xs.end());
  const std::size_t n = xs.size();
  return n % 2 ? xs[n / 2] : 0.5 * (xs[n / 2 - 1] + xs[n / 2]);
}

/// Trains and evaluates each variant once per seed. A variant that fails is
/// recorded and the others continue.
inline AblationTable run_ablations(const TrainConfig& base, const Dataset& ds, const std::vector<std::uint64_t>& seeds,
                                   const std::vector<Variant>& variants = {kAllVariants.begin(), kAllVariants.end()},
                                   const std::function<void(Variant, std::uint64_t, const AblationRun&)>& on_run = {}) {
  if (seeds.empty()) throw ConfigError("run_ablations: at least one seed required");
  AblationTable table;
  table.seeds = seeds;
  for (auto s : seeds) table.split_hashes.push_back(split(ds.net, {base.split_frac, s}).hash);
  for (Variant v : variants) {
    AblationRow row;
    row.variant = v;
    std::vector<double> p1, p3, auc;
    for (auto s : seeds) {
      TrainConfig cfg = base;
      cfg.variant = v;
      cfg.seed = s;
      AblationRun run;
      run.seed = s;
      try {
        const auto result = train(cfg, ds);
        run.report = evaluate(result.checkpoint, ds);
        p1.push_back(run.report->precision_at_1);
        p3.push_back(run.report->precision_at_3);
        auc.push_back(run.report->auc);
      } catch (const Error& e) {
        run.error = e.what();
      }
      if (on_run) on_run(v, s, run);
      row.runs.push_back(std::move(run));
    }
    row.succeeded = auc.size();
    if (!auc.empty()) {
      row.precision_at_1 = median(p1);
      row.precision_at_3 = median(p3);
      row.auc = median(auc);
    }
    table.rows.push_back(std::move(row));
  }
  return table;
}

}  // namespace irm
