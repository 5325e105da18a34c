#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <map>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "irmrank/errors.hpp"

namespace irm {

using Vec = std::vector<double>;
using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>{});
}

inline std::string shape_str(const Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

inline bool all_finite(std::span<const double> xs) {
  for (double x : xs)
    if (!std::isfinite(x)) return false;
  return true;
}

inline void require_finite(std::span<const double> xs, const char* what) {
  if (!all_finite(xs)) throw ParameterError(std::string(what) + ": non-finite value");
}

/// Dense row-major float64 tensor.
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(Shape shape) : shape_(std::move(shape)), data_(shape_size(shape_), 0.0) {
    check_shape();
  }

  Tensor(Shape shape, Vec data) : shape_(std::move(shape)), data_(std::move(data)) {
    check_shape();
    if (data_.size() != shape_size(shape_))
      throw DimensionError("tensor data length " + std::to_string(data_.size()) +
                           " does not match shape " + shape_str(shape_));
    require_finite(data_, "tensor");
  }

  static Tensor vector(Vec data) {
    const std::size_t n = data.size();
    return Tensor({n}, std::move(data));
  }

  static Tensor matrix(std::size_t rows, std::size_t cols, Vec data) {
    return Tensor({rows, cols}, std::move(data));
  }

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  std::size_t rows() const { return shape_.empty() ? 0 : shape_[0]; }
  std::size_t cols() const { return shape_.size() < 2 ? 1 : data_.size() / shape_[0]; }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  const Vec& vec() const { return data_; }
  Vec& vec() { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  double& at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

  std::span<const double> row(std::size_t r) const {
    return std::span<const double>(data_).subspan(r * cols(), cols());
  }
  std::span<double> row(std::size_t r) { return std::span<double>(data_).subspan(r * cols(), cols()); }

  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

  bool operator==(const Tensor&) const = default;

 private:
  void check_shape() const {
    for (std::size_t s : shape_)
      if (s == 0) throw DimensionError("tensor shape entries must be positive: " + shape_str(shape_));
  }

  Shape shape_;
  Vec data_;
};

/// Named parameters with a parallel gradient map of identical shapes.
/// Iteration order is lexicographic by name, which fixes every reduction
/// and serialization order.
class ParamStore {
  template <typename Map>
  static auto& lookup(Map& map, const std::string& name) {
    auto it = map.find(name);
    if (it == map.end()) throw ParameterError("unknown parameter: " + name);
    return it->second;
  }

 public:
  void add(const std::string& name, Tensor value) {
    if (values_.count(name)) throw ParameterError("duplicate parameter name: " + name);
    Tensor grad(value.shape());
    values_.emplace(name, std::move(value));
    grads_.emplace(name, std::move(grad));
  }

  bool contains(const std::string& name) const { return values_.count(name) != 0; }

  const Tensor& value(const std::string& name) const { return lookup(values_, name); }
  Tensor& value(const std::string& name) { return lookup(values_, name); }
  const Tensor& grad(const std::string& name) const { return lookup(grads_, name); }
  Tensor& grad(const std::string& name) { return lookup(grads_, name); }

  void zero_grad() {
    for (auto& [_, g] : grads_) g.fill(0.0);
  }

  std::vector<std::string> names() const {
    std::vector<std::string> out;
    out.reserve(values_.size());
    for (const auto& [name, _] : values_) out.push_back(name);
    return out;
  }

  std::size_t size() const { return values_.size(); }

  std::size_t total_elements() const {
    std::size_t n = 0;
    for (const auto& [_, v] : values_) n += v.size();
    return n;
  }

  const std::map<std::string, Tensor>& values() const { return values_; }
  std::map<std::string, Tensor>& values() { return values_; }
  const std::map<std::string, Tensor>& grads() const { return grads_; }
  std::map<std::string, Tensor>& grads() { return grads_; }

  bool operator==(const ParamStore& other) const { return values_ == other.values_; }

 private:
  std::map<std::string, Tensor> values_;
  std::map<std::string, Tensor> grads_;
};

}  // namespace irm
