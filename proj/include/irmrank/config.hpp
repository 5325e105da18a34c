#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>

#include <nlohmann/json.hpp>

#include "irmrank/errors.hpp"
#include "irmrank/features.hpp"
#include "irmrank/model.hpp"
#include "irmrank/numerics/optimizer.hpp"
#include "irmrank/params.hpp"
#include "irmrank/variant.hpp"

namespace irm {

struct TrainConfig {
  Variant variant = Variant::Amnl;
  ModelDims dims;
  double margin = kDefaultMargin;
  OptimizerKind optimizer = OptimizerKind::Adam;
  double learning_rate = 0.003;
  // Per-epoch multiplicative learning-rate decay: lr_e = lr * decay^(e-1).
  double lr_decay = 0.85;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::size_t batch_size = 32;
  std::size_t epochs = 50;
  std::size_t tuples_per_epoch = 0;  // 0: ten per training positive
  // Tuples scoring the per-epoch objective; 0: every training tuple, or a
  // sample of kObjectiveSample when there are more than kObjectiveCap.
  std::size_t monitor_tuples = 0;
  double init_std = 0.1;
  std::uint64_t seed = 1;
  double split_frac = 0.8;
  std::size_t eval_negatives = 100;
  std::size_t workers = 1;
  std::string manifest;
  std::string out_dir = "run";

  ModelConfig model() const { return {variant, dims, margin}; }

  OptimizerState optimizer_state() const {
    OptimizerState s;
    s.kind = optimizer;
    s.learning_rate = learning_rate;
    s.beta1 = beta1;
    s.beta2 = beta2;
    s.epsilon = epsilon;
    return s;
  }

  void validate() const {
    if (!(margin > 0.0 && margin < 1.0)) throw ConfigError("margin must lie in (0, 1)");
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) throw ConfigError("learning_rate must be >= 0");
    if (!(lr_decay > 0.0 && lr_decay <= 1.0)) throw ConfigError("lr_decay must lie in (0, 1]");
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("betas must lie in [0, 1)");
    if (!(epsilon > 0.0)) throw ConfigError("epsilon must be positive");
    if (batch_size == 0) throw ConfigError("batch_size must be positive");
    if (!(init_std >= 0.0)) throw ConfigError("init_std must be non-negative");
    if (!(split_frac > 0.0 && split_frac < 1.0)) throw ConfigError("split_frac must lie in (0, 1)");
    if (eval_negatives == 0) throw ConfigError("eval_negatives must be positive");
    if (workers == 0) throw ConfigError("workers must be at least 1");
    if (dims.joint == 0 || dims.text_hidden == 0 || dims.attention == 0 || dims.social_attention == 0 ||
        dims.glimpse_hidden == 0)
      throw ConfigError("model dims must be positive");
    if (!(dims.location_scale > 0.0)) throw ConfigError("location_scale must be positive");
  }

  /// Checks the variant against the dataset's feature shapes.
  void validate(const FeatureDims& f) const {
    validate();
    if (uses_text(variant) && (f.contexts == 0 || f.tokens == 0 || f.word_dim == 0))
      throw ConfigError(std::string(variant_name(variant)) + " needs text features");
    if (is_attentive(variant) && (f.conv_h < 3 || f.conv_w < 3))
      throw ConfigError(std::string(variant_name(variant)) + " needs a conv grid of at least 3x3");
  }

  bool operator==(const TrainConfig&) const = default;
};

inline const char* glimpse_cell_name(GlimpseCell c) { return c == GlimpseCell::Lstm ? "lstm" : "tanh"; }

inline GlimpseCell parse_glimpse_cell(const std::string& s) {
  if (s == "lstm") return GlimpseCell::Lstm;
  if (s == "tanh") return GlimpseCell::Tanh;
  throw ConfigError("unknown glimpse_cell '" + s + "' (expected lstm or tanh)");
}

inline nlohmann::json config_json(const TrainConfig& c) {
  return {{"variant", std::string(variant_name(c.variant))},
          {"joint_dim", c.dims.joint},
          {"text_hidden", c.dims.text_hidden},
          {"attention_dim", c.dims.attention},
          {"social_attention_dim", c.dims.social_attention},
          {"glimpse_hidden", c.dims.glimpse_hidden},
          {"glimpse_cell", glimpse_cell_name(c.dims.glimpse_cell)},
          {"location_scale", c.dims.location_scale},
          {"margin", c.margin},
          {"optimizer", optimizer_name(c.optimizer)},
          {"learning_rate", c.learning_rate},
          {"lr_decay", c.lr_decay},
          {"beta1", c.beta1},
          {"beta2", c.beta2},
          {"epsilon", c.epsilon},
          {"batch_size", c.batch_size},
          {"epochs", c.epochs},
          {"tuples_per_epoch", c.tuples_per_epoch},
          {"monitor_tuples", c.monitor_tuples},
          {"init_std", c.init_std},
          {"seed", c.seed},
          {"split_frac", c.split_frac},
          {"eval_negatives", c.eval_negatives},
          {"workers", c.workers},
          {"manifest", c.manifest},
          {"out_dir", c.out_dir}};
}

/// Overlays the keys of `j` onto `base`. Unknown keys are rejected.
inline TrainConfig config_from_json(const nlohmann::json& j, TrainConfig c = {}) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  try {
    for (const auto& [key, v] : j.items()) {
      if (key == "variant") c.variant = parse_variant(v.get<std::string>());
      else if (key == "joint_dim") c.dims.joint = v.get<std::size_t>();
      else if (key == "text_hidden") c.dims.text_hidden = v.get<std::size_t>();
      else if (key == "attention_dim") c.dims.attention = v.get<std::size_t>();
      else if (key == "social_attention_dim") c.dims.social_attention = v.get<std::size_t>();
      else if (key == "glimpse_hidden") c.dims.glimpse_hidden = v.get<std::size_t>();
      else if (key == "glimpse_cell") c.dims.glimpse_cell = parse_glimpse_cell(v.get<std::string>());
      else if (key == "location_scale") c.dims.location_scale = v.get<double>();
      else if (key == "margin") c.margin = v.get<double>();
      else if (key == "optimizer") c.optimizer = parse_optimizer(v.get<std::string>());
      else if (key == "learning_rate") c.learning_rate = v.get<double>();
      else if (key == "lr_decay") c.lr_decay = v.get<double>();
      else if (key == "beta1") c.beta1 = v.get<double>();
      else if (key == "beta2") c.beta2 = v.get<double>();
      else if (key == "epsilon") c.epsilon = v.get<double>();
      else if (key == "batch_size") c.batch_size = v.get<std::size_t>();
      else if (key == "epochs") c.epochs = v.get<std::size_t>();
      else if (key == "tuples_per_epoch") c.tuples_per_epoch = v.get<std::size_t>();
      else if (key == "monitor_tuples") c.monitor_tuples = v.get<std::size_t>();
      else if (key == "init_std") c.init_std = v.get<double>();
      else if (key == "seed") c.seed = v.get<std::uint64_t>();
      else if (key == "split_frac") c.split_frac = v.get<double>();
      else if (key == "eval_negatives") c.eval_negatives = v.get<std::size_t>();
      else if (key == "workers") c.workers = v.get<std::size_t>();
      else if (key == "manifest") c.manifest = v.get<std::string>();
      else if (key == "out_dir") c.out_dir = v.get<std::string>();
      else throw ConfigError("unknown config key '" + key + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  } catch (const ParameterError& e) {
    throw ConfigError(e.what());
  }
  return c;
}

inline TrainConfig read_config(const std::filesystem::path& path, TrainConfig base = {}) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config " + path.string() + ": " + e.what());
  }
  return config_from_json(j, std::move(base));
}

}  // namespace irm
