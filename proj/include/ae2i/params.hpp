#pragma once

#include <cmath>
#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "ae2i/errors.hpp"
#include "ae2i/matrix.hpp"
#include "ae2i/rng.hpp"

namespace ae2i {

/// Slots of one MLP inside a ParamSet. Layer l maps widths[l] -> widths[l + 1].
struct MlpRef {
  std::string name;
  std::vector<std::size_t> widths;
  std::vector<std::size_t> weight_slots;
  std::vector<std::size_t> bias_slots;

  bool valid() const { return !widths.empty(); }
  std::size_t in_width() const { return widths.front(); }
  std::size_t out_width() const { return widths.back(); }
  std::size_t layers() const { return weight_slots.size(); }
};

/// Named parameter tensors with same-shaped gradient buffers, in declaration order.
template <typename T>
class ParamSet {
 public:
  /// Declares an MLP with weights uniform in +-sqrt(6 / (fan_in + fan_out))
  /// and zero biases. Names must be unique.
  MlpRef add_mlp(const std::string& name, const std::vector<std::size_t>& widths, Rng& rng) {
    if (widths.size() < 2) throw ConfigError("mlp '" + name + "' needs at least one layer");
    if (mlps_.count(name)) throw ConfigError("mlp '" + name + "' declared twice");
    MlpRef ref;
    ref.name = name;
    ref.widths = widths;
    for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
      const auto fan_in = static_cast<Eigen::Index>(widths[l]);
      const auto fan_out = static_cast<Eigen::Index>(widths[l + 1]);
      const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
      Matrix<T> w(fan_in, fan_out);
      for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = static_cast<T>(rng.uniform(-bound, bound));
      ref.weight_slots.push_back(add_tensor(name + ".w" + std::to_string(l), std::move(w)));
      ref.bias_slots.push_back(add_tensor(name + ".b" + std::to_string(l), Matrix<T>::Zero(1, fan_out)));
    }
    mlps_.emplace(name, ref);
    return ref;
  }

  std::size_t add_tensor(const std::string& name, Matrix<T> value) {
    for (const auto& n : names_) {
      if (n == name) throw ConfigError("parameter '" + name + "' declared twice");
    }
    names_.push_back(name);
    grads_.push_back(Matrix<T>::Zero(value.rows(), value.cols()));
    values_.push_back(std::move(value));
    return values_.size() - 1;
  }

  bool has_mlp(const std::string& name) const { return mlps_.count(name) != 0; }

  const MlpRef& mlp(const std::string& name) const {
    auto it = mlps_.find(name);
    if (it == mlps_.end()) throw ArgumentError("unknown mlp '" + name + "'");
    return it->second;
  }

  const std::map<std::string, MlpRef>& mlps() const { return mlps_; }

  std::size_t size() const { return values_.size(); }
  const std::string& name(std::size_t slot) const { return names_.at(slot); }
  const Matrix<T>& value(std::size_t slot) const { return values_.at(slot); }
  Matrix<T>& value(std::size_t slot) { return values_.at(slot); }
  const Matrix<T>& grad(std::size_t slot) const { return grads_.at(slot); }
  Matrix<T>& grad(std::size_t slot) { return grads_.at(slot); }

  std::span<Matrix<T>> grads() { return grads_; }
  std::span<const Matrix<T>> values() const { return values_; }
  std::span<Matrix<T>> values() { return values_; }

  void zero_grad() {
    for (auto& g : grads_) g.setZero();
  }

  /// Zero buffers shaped like the parameters, for per-sample gradient sinks.
  std::vector<Matrix<T>> zeros_like() const {
    std::vector<Matrix<T>> out;
    out.reserve(values_.size());
    for (const auto& v : values_) out.push_back(Matrix<T>::Zero(v.rows(), v.cols()));
    return out;
  }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& v : values_) n += static_cast<std::size_t>(v.size());
    return n;
  }

  /// Same names and shapes with values converted to U; gradients zeroed.
  template <typename U>
  ParamSet<U> cast() const {
    ParamSet<U> out;
    for (std::size_t i = 0; i < values_.size(); ++i) out.add_tensor(names_[i], values_[i].template cast<U>());
    for (const auto& [name, ref] : mlps_) out.adopt_mlp(ref);
    return out;
  }

  /// Registers an MlpRef whose slots already exist (used by cast()).
  void adopt_mlp(const MlpRef& ref) { mlps_.emplace(ref.name, ref); }

 private:
  std::vector<std::string> names_;
  std::vector<Matrix<T>> values_;
  std::vector<Matrix<T>> grads_;
  std::map<std::string, MlpRef> mlps_;
};

}  // namespace ae2i
