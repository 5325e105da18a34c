#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "irmrank/errors.hpp"
#include "irmrank/numerics/tensor.hpp"

namespace irm {

struct GradCheckEntry {
  std::string name;
  std::size_t checked = 0;
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;

  double max_rel_error() const {
    double m = 0.0;
    for (const auto& e : entries) m = std::max(m, e.max_rel_error);
    return m;
  }
  bool passed(double tol) const { return max_rel_error() <= tol; }
  const GradCheckEntry* worst() const {
    const GradCheckEntry* w = nullptr;
    for (const auto& e : entries)
      if (!w || e.max_rel_error > w->max_rel_error) w = &e;
    return w;
  }
};

struct GradCheckOptions {
  double eps = 1e-5;
  // Coordinates sampled per parameter; 0 checks every coordinate.
  std::size_t max_coords = 24;
  // Denominator floor: |a - n| / max(|a|, |n|, floor). Gradients below the
  // floor are compared in absolute terms.
  double floor = 1e-6;
  std::uint64_t seed = 7;
};

inline double relative_error(double analytic, double numeric, double floor) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

/// Compares `analytic` gradients against central differences of `loss`
/// evaluated at `params`. `loss` must be a pure function of the store.
/// `params` is perturbed in place and restored before return.
inline GradCheckReport finite_diff_check(const std::function<double(const ParamStore&)>& loss, ParamStore& params,
                                         const std::map<std::string, Tensor>& analytic,
                                         const GradCheckOptions& opt = {}) {
  if (!(opt.eps > 0.0 && opt.eps <= 1e-2)) throw ParameterError("finite_diff_check: eps must lie in (0, 1e-2]");
  const double base = loss(params);
  if (!std::isfinite(base)) throw EvaluationError("finite_diff_check: non-finite loss");
  std::mt19937_64 rng(opt.seed);
  GradCheckReport report;
  for (auto& [name, value] : params.values()) {
    auto it = analytic.find(name);
    if (it == analytic.end()) throw ParameterError("finite_diff_check: no analytic gradient for " + name);
    std::vector<std::size_t> idx(value.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    if (opt.max_coords && idx.size() > opt.max_coords) {
      std::shuffle(idx.begin(), idx.end(), rng);
      idx.resize(opt.max_coords);
      std::sort(idx.begin(), idx.end());
    }
    GradCheckEntry entry{name};
    for (std::size_t i : idx) {
      const double saved = value[i];
      value[i] = saved + opt.eps;
      const double up = loss(params);
      value[i] = saved - opt.eps;
      const double down = loss(params);
      value[i] = saved;
      if (!std::isfinite(up) || !std::isfinite(down))
        throw EvaluationError("finite_diff_check: non-finite loss perturbing " + name);
      const double numeric = (up - down) / (2.0 * opt.eps);
      const double a = it->second[i];
      const double err = relative_error(a, numeric, opt.floor);
      ++entry.checked;
      if (err >= entry.max_rel_error) {
        entry.max_rel_error = err;
        entry.worst_index = i;
        entry.analytic = a;
        entry.numeric = numeric;
      }
    }
    report.entries.push_back(entry);
  }
  return report;
}

}  // namespace irm
