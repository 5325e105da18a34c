#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <string>

#include "irmrank/errors.hpp"
#include "irmrank/numerics/tensor.hpp"

namespace irm {

enum class OptimizerKind { Adam, Sgd };

inline const char* optimizer_name(OptimizerKind k) { return k == OptimizerKind::Adam ? "adam" : "sgd"; }

inline OptimizerKind parse_optimizer(const std::string& s) {
  if (s == "adam") return OptimizerKind::Adam;
  if (s == "sgd") return OptimizerKind::Sgd;
  throw ConfigError("unknown optimizer '" + s + "' (expected adam or sgd)");
}

struct OptimizerState {
  OptimizerKind kind = OptimizerKind::Adam;
  double learning_rate = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t step = 0;
  std::map<std::string, Tensor> first_moment;
  std::map<std::string, Tensor> second_moment;

  /// Allocates zero moments shaped like every parameter in `params`.
  void init(const ParamStore& params) {
    first_moment.clear();
    second_moment.clear();
    step = 0;
    for (const auto& [name, value] : params.values()) {
      first_moment.emplace(name, Tensor(value.shape()));
      second_moment.emplace(name, Tensor(value.shape()));
    }
  }

  bool operator==(const OptimizerState&) const = default;
};

/// Bias-corrected moment update:
///   m <- b1 m + (1-b1) g,  v <- b2 v + (1-b2) g^2,
///   theta <- theta - lr * (m / (1-b1^t)) / (sqrt(v / (1-b2^t)) + eps).
inline void adam_step(ParamStore& params, OptimizerState& state) {
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  for (auto& [name, value] : params.values()) {
    const Tensor& grad = params.grad(name);
    auto mit = state.first_moment.find(name);
    auto vit = state.second_moment.find(name);
    if (mit == state.first_moment.end() || vit == state.second_moment.end())
      throw ParameterError("adam_step: no moments for parameter " + name);
    auto m = mit->second.data();
    auto v = vit->second.data();
    auto th = value.data();
    auto g = grad.data();
    if (m.size() != th.size() || v.size() != th.size()) throw DimensionError("adam_step: moment shape mismatch");
    for (std::size_t i = 0; i < th.size(); ++i) {
      m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g[i];
      v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g[i] * g[i];
      const double mhat = m[i] / c1;
      const double vhat = v[i] / c2;
      th[i] -= state.learning_rate * mhat / (std::sqrt(vhat) + state.epsilon);
    }
  }
}

inline void sgd_step(ParamStore& params, OptimizerState& state) {
  ++state.step;
  for (auto& [name, value] : params.values()) {
    auto th = value.data();
    auto g = params.grad(name).data();
    for (std::size_t i = 0; i < th.size(); ++i) th[i] -= state.learning_rate * g[i];
  }
}

inline void optimizer_step(ParamStore& params, OptimizerState& state) {
  if (state.kind == OptimizerKind::Adam)
    adam_step(params, state);
  else
    sgd_step(params, state);
}

}  // namespace irm
