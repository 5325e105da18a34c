// irm_rank: dataset generation, training, evaluation, ablations, gradient
// checks, prediction and reports for the attentive multi-faceted ranker.
//
// Exit codes: 0 success, 2 config/input error, 3 divergence, 4 gradcheck failure.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "irmrank/checkpoint.hpp"
#include "irmrank/config.hpp"
#include "irmrank/dataset.hpp"
#include "irmrank/diagnostics.hpp"
#include "irmrank/report.hpp"
#include "irmrank/synth.hpp"
#include "irmrank/train.hpp"

namespace fs = std::filesystem;
using namespace irm;

namespace {

constexpr int kOk = 0;
constexpr int kInputError = 2;
constexpr int kDiverged = 3;
constexpr int kGradcheckFailed = 4;

struct Overrides {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> workers;
  std::optional<std::string> variant;
  std::optional<double> split_frac;
  std::optional<std::string> out;
  std::optional<std::string> manifest;
  std::optional<std::size_t> epochs;
  std::optional<double> learning_rate;

  void add_to(CLI::App* app, bool with_variant = true) {
    app->add_option("--config", config, "JSON run config (TrainConfig keys)")->check(CLI::ExistingFile);
    app->add_option("--seed", seed, "Random seed (overrides config)");
    app->add_option("--workers", workers, "Gradient workers; 1 is deterministic")->check(CLI::PositiveNumber);
    if (with_variant) app->add_option("--variant", variant, "AMNL_i|AMNL_d|AMNL|AMNL_hfunc|AMNL+|AMNL+i|AMNL+hfunc");
    app->add_option("--split-frac", split_frac, "Training fraction of each user's retweets");
    app->add_option("--out", out, "Output directory");
    app->add_option("--manifest", manifest, "Dataset manifest.json");
    app->add_option("--epochs", epochs, "Training epochs");
    app->add_option("--lr", learning_rate, "Learning rate");
  }

  TrainConfig resolve() const {
    TrainConfig c = config.empty() ? TrainConfig{} : read_config(config);
    if (seed) c.seed = *seed;
    if (workers) c.workers = *workers;
    if (variant) c.variant = parse_variant(*variant);
    if (split_frac) c.split_frac = *split_frac;
    if (out) c.out_dir = *out;
    if (manifest) c.manifest = *manifest;
    if (epochs) c.epochs = *epochs;
    if (learning_rate) c.learning_rate = *learning_rate;
    c.validate();
    return c;
  }
};

std::vector<std::size_t> parse_ks(const std::string& s) {
  std::vector<std::size_t> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    try {
      std::size_t pos = 0;
      const long long k = std::stoll(tok, &pos);
      if (pos != tok.size() || k < 1) throw std::invalid_argument(tok);
      out.push_back(static_cast<std::size_t>(k));
    } catch (const std::logic_error&) {
      throw ConfigError("--k expects positive integers separated by commas, got '" + s + "'");
    }
  }
  if (out.empty()) throw ConfigError("--k is empty");
  return out;
}

std::vector<std::uint64_t> parse_seeds(const std::string& s) {
  std::vector<std::uint64_t> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    try {
      out.push_back(std::stoull(tok));
    } catch (const std::logic_error&) {
      throw ConfigError("--seeds expects integers separated by commas, got '" + s + "'");
    }
  }
  if (out.empty()) throw ConfigError("--seeds is empty");
  return out;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path.string());
  out << text;
}

Dataset load_for(const TrainConfig& c) {
  if (c.manifest.empty()) throw ConfigError("no dataset: pass --manifest or set \"manifest\" in the config");
  return load_dataset(c.manifest);
}

// ---------------------------------------------------------------------------

int cmd_generate(const std::string& config, std::optional<std::uint64_t> seed, const std::string& out) {
  SynthConfig sc;
  if (!config.empty()) {
    std::ifstream in(config);
    if (!in) throw ConfigError("cannot open " + config);
    try {
      sc = synth_from_json(nlohmann::json::parse(in));
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(std::string("generator config: ") + e.what());
    }
  }
  if (seed) sc.seed = *seed;
  const SynthData data = synth_generate(sc);
  const fs::path manifest = write_synth(data, out);
  std::cout << "users " << data.net.user_count() << "\ntweets " << data.net.tweet_count() << "\nretweets "
            << data.net.retweet_count() << "\nfollows " << data.net.follow_count() << "\nmanifest "
            << manifest.string() << '\n';
  std::vector<std::size_t> followers(data.net.user_count());
  for (Id j = 0; j < data.net.user_count(); ++j) followers[j] = data.net.followers(j).size();
  try {
    const double gamma = estimate_tail_exponent(followers);
    std::cout << "follower_tail_exponent " << fmt_double(gamma) << " (configured " << fmt_double(sc.exponent) << ")\n";
  } catch (const EvaluationError& e) {
    spdlog::info("no tail fit: {}", e.what());
  }
  return kOk;
}

int cmd_validate(const std::string& manifest) {
  const Dataset ds = load_dataset(manifest);
  std::cout << ds.report.summary() << '\n';
  return kOk;
}

int cmd_train(const Overrides& o, const std::string& resume) {
  const TrainConfig cfg = o.resolve();
  const Dataset ds = load_for(cfg);
  const fs::path dir = cfg.out_dir;
  fs::create_directories(dir);
  write_text(dir / "config.json", config_json(cfg).dump(2) + "\n");
  std::optional<Checkpoint> start;
  if (!resume.empty()) start = load_checkpoint(fs::path(resume));
  std::vector<EpochLog> so_far;
  try {
    const auto result = train(cfg, ds, start, [&](const EpochLog& l, const Checkpoint&) {
      spdlog::info("epoch {} objective {:.6g} ({:.2f}s)", l.epoch, l.objective, l.wall_seconds);
      so_far.push_back(l);
    });
    save_checkpoint(dir / "checkpoint.ckpt", result.checkpoint);
    write_epochs_csv(dir / "epochs.csv", result.logs);
    const double last = result.logs.empty() ? training_objective(result.checkpoint, ds) : result.logs.back().objective;
    std::cout << "trained " << variant_name(cfg.variant) << " epochs " << result.checkpoint.epoch << " objective "
              << fmt_double(last) << " checkpoint " << (dir / "checkpoint.ckpt").string() << '\n';
  } catch (const TrainingDiverged& e) {
    save_checkpoint(dir / "diverged.ckpt", e.checkpoint);
    write_epochs_csv(dir / "epochs.csv", so_far);
    spdlog::error("{}; last finite state in {}", e.what(), (dir / "diverged.ckpt").string());
    return kDiverged;
  }
  return kOk;
}

int cmd_eval(const std::string& checkpoint, const std::string& manifest, const std::string& ks, const std::string& out) {
  const Checkpoint ck = load_checkpoint(fs::path(checkpoint));
  const Dataset ds = load_dataset(manifest.empty() ? ck.config.manifest : manifest);
  const EvalReport r = evaluate(ck, ds, parse_ks(ks));
  if (!out.empty()) {
    fs::create_directories(out);
    write_text(fs::path(out) / "eval.csv", eval_csv(r));
    write_text(fs::path(out) / "eval_users.csv", eval_users_csv(r));
  }
  std::cout << eval_table(r);
  return kOk;
}

int cmd_ablate(const Overrides& o, const std::string& seeds, const std::string& variants) {
  const TrainConfig cfg = o.resolve();
  const Dataset ds = load_for(cfg);
  std::vector<Variant> vs;
  if (variants.empty()) {
    vs.assign(kAllVariants.begin(), kAllVariants.end());
  } else {
    std::stringstream ss(variants);
    std::string tok;
    while (std::getline(ss, tok, ',')) vs.push_back(parse_variant(tok));
  }
  const auto table = run_ablations(cfg, ds, parse_seeds(seeds), vs, [](Variant v, std::uint64_t s, const AblationRun& r) {
    if (r.report)
      spdlog::info("{} seed {}: AUC {:.5f}", variant_name(v), s, r.report->auc);
    else
      spdlog::warn("{} seed {} failed: {}", variant_name(v), s, r.error);
  });
  const fs::path dir = cfg.out_dir;
  fs::create_directories(dir);
  write_text(dir / "ablation.csv", ablation_csv(table));
  write_text(dir / "ablation_runs.csv", ablation_runs_csv(table));
  std::cout << ablation_table(table);
  return kOk;
}

int cmd_gradcheck(const std::string& variant, std::size_t d, std::size_t dt, double tol, const std::string& fault,
                  std::uint64_t seed) {
  std::vector<Variant> vs;
  if (variant.empty() || variant == "all")
    vs.assign(kAllVariants.begin(), kAllVariants.end());
  else
    vs.push_back(parse_variant(variant));
  bool ok = true;
  std::cout << "variant,parameter,checked,max_rel_error\n";
  for (Variant v : vs) {
    GradcheckSpec spec;
    spec.variant = v;
    spec.dims.joint = d;
    spec.dims.text_hidden = dt;
    spec.tolerance = tol;
    spec.seed = seed;
    spec.options.max_coords = 0;
    if (!fault.empty()) spec.corrupt = fault;
    const auto report = model_gradcheck(spec);
    for (const auto& e : report.entries)
      std::cout << variant_name(v) << ',' << e.name << ',' << e.checked << ',' << fmt_double(e.max_rel_error) << '\n';
    if (!report.passed(tol)) {
      ok = false;
      const auto* w = report.worst();
      std::cerr << "FAIL " << variant_name(v) << ": " << w->name << " relative error " << w->max_rel_error
                << " (analytic " << w->analytic << ", numeric " << w->numeric << ")\n";
    }
  }
  return ok ? kOk : kGradcheckFailed;
}

int cmd_predict(const std::string& checkpoint, const std::string& manifest, long long user, std::size_t k,
                const std::string& candidates) {
  const Checkpoint ck = load_checkpoint(fs::path(checkpoint));
  const Dataset ds = load_dataset(manifest.empty() ? ck.config.manifest : manifest);
  if (user < 0 || static_cast<std::size_t>(user) >= ds.net.user_count())
    throw InputError("unknown user " + std::to_string(user));
  const Id j = static_cast<Id>(user);
  IdList pool;
  if (!candidates.empty()) {
    std::stringstream ss(candidates);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
      try {
        pool.push_back(static_cast<Id>(std::stoul(tok)));
      } catch (const std::logic_error&) {
        throw InputError("--candidates expects tweet ids separated by commas");
      }
    }
  } else {
    for (const auto& p : eval_pools(ck.config, ds.net))
      if (p.user == j) pool = p.candidates();
    if (pool.empty()) throw InputError("user " + std::to_string(j) + " has no evaluation pool; pass --candidates");
  }
  if (k == 0 || k > pool.size())
    throw InputError("--k must lie in [1, " + std::to_string(pool.size()) + "] for this candidate pool");
  Scorer scorer(ck.params, ck.config.model(), ds.features, ds.net);
  const auto ranked = rank_tweets_for_user(scorer, j, pool);
  std::cout << "rank,tweet,score\n";
  for (std::size_t i = 0; i < k; ++i) std::cout << i + 1 << ',' << ranked[i].first << ',' << fmt_double(ranked[i].second) << '\n';
  return kOk;
}

int cmd_report(const std::string& run_dir) {
  const fs::path dir = run_dir;
  bool any = false;
  if (fs::exists(dir / "epochs.csv")) {
    const auto logs = read_epochs_csv(dir / "epochs.csv");
    if (logs.empty()) throw InputError((dir / "epochs.csv").string() + " has no epochs");
    std::vector<double> obj;
    for (const auto& l : logs) obj.push_back(l.objective);
    const auto sm = smooth(obj, 3);
    std::ostringstream csv;
    csv << "epoch,objective,smoothed_objective,wall_seconds,cumulative_seconds\n";
    double cum = 0.0;
    for (std::size_t i = 0; i < logs.size(); ++i) {
      cum += logs[i].wall_seconds;
      csv << logs[i].epoch << ',' << fmt_double(logs[i].objective) << ',' << fmt_double(sm[i]) << ','
          << fmt_double(logs[i].wall_seconds) << ',' << fmt_double(cum) << '\n';
    }
    write_text(dir / "objective.csv", csv.str());
    write_text(dir / "objective.svg", objective_chart_svg(logs));
    std::cout << "objective.svg " << logs.size() << " epochs, total " << fmt_double(cum) << " s\n";
    any = true;
  }
  if (fs::exists(dir / "ablation.csv")) {
    const auto rows = read_ablation_csv(dir / "ablation.csv");
    write_text(dir / "ablation.svg", ablation_chart_svg(rows));
    std::cout << "ablation.svg " << rows.size() << " variants\n";
    any = true;
  }
  if (!any) throw InputError("no epochs.csv or ablation.csv in " + dir.string());
  return kOk;
}

void setup_logging() {
  auto logger = spdlog::stderr_color_mt("irm_rank");
  spdlog::set_default_logger(logger);
  spdlog::set_level(spdlog::level::info);
  if (const char* lvl = std::getenv("IRM_RANK_LOG")) spdlog::set_level(spdlog::level::from_str(lvl));
}

}  // namespace

int main(int argc, char** argv) {
  setup_logging();
  CLI::App app{"Attentive multi-faceted ranking of image tweets"};
  app.require_subcommand(1);

  auto* gen = app.add_subcommand("generate", "Write a planted synthetic dataset");
  std::string gen_config, gen_out = "data";
  std::optional<std::uint64_t> gen_seed;
  gen->add_option("--config", gen_config, "Generator config JSON")->check(CLI::ExistingFile);
  gen->add_option("--seed", gen_seed, "Generator seed");
  gen->add_option("--out", gen_out, "Output directory");

  auto* val = app.add_subcommand("validate", "Check a dataset manifest and its files");
  std::string val_manifest;
  val->add_option("--manifest", val_manifest, "manifest.json")->required();

  Overrides train_o;
  std::string resume;
  auto* tr = app.add_subcommand("train", "Train one variant");
  train_o.add_to(tr);
  tr->add_option("--resume", resume, "Continue from a checkpoint")->check(CLI::ExistingFile);

  auto* ev = app.add_subcommand("eval", "Precision@K and AUC on the held-out split");
  std::string ev_ckpt, ev_manifest, ev_k = "1,3", ev_out;
  ev->add_option("--checkpoint", ev_ckpt, "Checkpoint file")->required()->check(CLI::ExistingFile);
  ev->add_option("--manifest", ev_manifest, "Dataset manifest (default: the checkpoint's)");
  ev->add_option("--k", ev_k, "Cutoffs K[,K...]");
  ev->add_option("--out", ev_out, "Directory for eval.csv and eval_users.csv");

  Overrides abl_o;
  std::string abl_seeds = "1,2,3,4,5", abl_variants;
  auto* ab = app.add_subcommand("ablate", "Train and evaluate every variant over several seeds");
  abl_o.add_to(ab, false);
  ab->add_option("--seeds", abl_seeds, "Seeds S[,S...]");
  ab->add_option("--variants", abl_variants, "Variants V[,V...] (default: all)");

  auto* gc = app.add_subcommand("gradcheck", "Compare tape gradients with central differences");
  std::string gc_variant = "all", gc_fault;
  std::size_t gc_d = 8, gc_dt = 6;
  double gc_tol = 1e-4;
  std::uint64_t gc_seed = 11;
  gc->add_option("--variant", gc_variant, "Variant or 'all'");
  gc->add_option("--d", gc_d, "Joint dim (at most 16)")->check(CLI::Range(1, 16));
  gc->add_option("--dt", gc_dt, "Sentence encoder dim")->check(CLI::PositiveNumber);
  gc->add_option("--tolerance", gc_tol, "Maximum relative error");
  gc->add_option("--seed", gc_seed, "Problem seed");
  gc->add_option("--fault", gc_fault, "Test hook: corrupt this parameter's gradient");

  auto* pr = app.add_subcommand("predict", "Top-K tweets for one user");
  std::string pr_ckpt, pr_manifest, pr_candidates;
  long long pr_user = -1;
  std::size_t pr_k = 10;
  pr->add_option("--checkpoint", pr_ckpt, "Checkpoint file")->required()->check(CLI::ExistingFile);
  pr->add_option("--manifest", pr_manifest, "Dataset manifest (default: the checkpoint's)");
  pr->add_option("--user", pr_user, "User id")->required();
  pr->add_option("--k", pr_k, "Number of tweets to list");
  pr->add_option("--candidates", pr_candidates, "Tweet ids (default: the user's evaluation pool)");

  auto* rep = app.add_subcommand("report", "Charts and CSV from a run directory");
  std::string rep_dir;
  rep->add_option("--run-dir", rep_dir, "Directory with epochs.csv and/or ablation.csv")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kInputError;
  }

  try {
    if (*gen) return cmd_generate(gen_config, gen_seed, gen_out);
    if (*val) return cmd_validate(val_manifest);
    if (*tr) return cmd_train(train_o, resume);
    if (*ev) return cmd_eval(ev_ckpt, ev_manifest, ev_k, ev_out);
    if (*ab) return cmd_ablate(abl_o, abl_seeds, abl_variants);
    if (*gc) return cmd_gradcheck(gc_variant, gc_d, gc_dt, gc_tol, gc_fault, gc_seed);
    if (*pr) return cmd_predict(pr_ckpt, pr_manifest, pr_user, pr_k, pr_candidates);
    if (*rep) return cmd_report(rep_dir);
  } catch (const DivergenceError& e) {
    spdlog::error("{}", e.what());
    return kDiverged;
  } catch (const Error& e) {
    spdlog::error("{}", e.what());
    return kInputError;
  } catch (const std::exception& e) {
    spdlog::error("unexpected failure: {}", e.what());
    return kInputError;
  }
  return kInputError;
}
