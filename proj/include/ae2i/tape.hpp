#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <span>
#include <utility>
#include <vector>

#include "ae2i/errors.hpp"
#include "ae2i/matrix.hpp"

namespace ae2i {

template <typename T>
class Tape;

/// Handle to a value recorded on a Tape. Cheap to copy; valid while the tape lives.
template <typename T>
class Var {
 public:
  Var() = default;
  Var(Tape<T>* tape, std::size_t id) : tape_(tape), id_(id) {}

  const Matrix<T>& value() const { return tape_->value(id_); }
  /// Gradient accumulated by the last backward pass (empty if unreachable).
  const Matrix<T>& grad() const { return tape_->grad(id_); }
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }

  Tape<T>& tape() const { return *tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  Tape<T>* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Ordered record of executed operations. Backward replays the record in
/// exact reverse order and accumulates gradients additively.
///
/// One tape belongs to one thread. Parameters are referenced by slot so that
/// independent tapes can share a read-only ParamSet and reduce gradients later.
template <typename T>
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, const Matrix<T>&)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Value that never receives a gradient.
  Var<T> constant(Matrix<T> value) { return push(std::move(value), false, nullptr, kNoSlot); }

  /// Leaf that collects a gradient but is not a parameter.
  Var<T> input(Matrix<T> value) { return push(std::move(value), true, nullptr, kNoSlot); }

  /// Leaf bound to ParamSet slot `slot`.
  Var<T> parameter(std::size_t slot, Matrix<T> value) {
    return push(std::move(value), true, nullptr, slot);
  }

  /// Records the result of an operation. `fn` receives the output gradient
  /// and must accumulate into the inputs it captured.
  Var<T> record(Matrix<T> value, bool requires_grad, BackwardFn fn) {
    return push(std::move(value), requires_grad, requires_grad ? std::move(fn) : nullptr, kNoSlot);
  }

  const Matrix<T>& value(std::size_t id) const { return nodes_[id].value; }
  const Matrix<T>& grad(std::size_t id) const { return nodes_[id].grad; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  bool requires_grad(const Var<T>& v) const { return nodes_[v.id()].requires_grad; }

  template <typename Expr>
  void accumulate(std::size_t id, const Expr& g) {
    Node& n = nodes_[id];
    if (!n.requires_grad) return;
    if (!n.has_grad) {
      n.grad = g;
      n.has_grad = true;
    } else {
      n.grad += g;
    }
  }

  void accumulate(std::size_t id, Matrix<T>&& g) {
    Node& n = nodes_[id];
    if (!n.requires_grad) return;
    if (!n.has_grad) {
      n.grad = std::move(g);
      n.has_grad = true;
    } else {
      n.grad += g;
    }
  }

  /// Seeds `out` with `seed` and propagates to every reachable node.
  void backward(const Var<T>& out, const Matrix<T>& seed) {
    if (consumed_) throw StateError("tape already consumed by a backward pass");
    if (out.valid() && &out.tape() != this) throw StateError("variable belongs to another tape");
    const Node& o = nodes_.at(out.id());
    if (seed.rows() != o.value.rows() || seed.cols() != o.value.cols()) {
      throw DimensionError("backward seed shape does not match output");
    }
    consumed_ = true;
    accumulate(out.id(), seed);
    for (std::size_t id = out.id() + 1; id-- > 0;) {
      Node& n = nodes_[id];
      if (!n.has_grad || !n.backward) continue;
      n.backward(*this, n.grad);
    }
  }

  /// Adds every parameter leaf's gradient into `sink[slot]`.
  void collect_param_grads(std::span<Matrix<T>> sink) const {
    for (const Node& n : nodes_) {
      if (n.slot == kNoSlot || !n.has_grad) continue;
      if (n.slot >= sink.size()) throw StateError("parameter slot outside gradient sink");
      sink[n.slot] += n.grad;
    }
  }

  bool consumed() const { return consumed_; }
  std::size_t size() const { return nodes_.size(); }

 private:
  static constexpr std::size_t kNoSlot = static_cast<std::size_t>(-1);

  struct Node {
    Matrix<T> value;
    Matrix<T> grad;
    BackwardFn backward;
    std::size_t slot = kNoSlot;
    bool requires_grad = false;
    bool has_grad = false;
  };

  Var<T> push(Matrix<T> value, bool requires_grad, BackwardFn fn, std::size_t slot) {
    if (consumed_) throw StateError("cannot record on a consumed tape");
    Node n;
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    n.backward = std::move(fn);
    n.slot = slot;
    nodes_.push_back(std::move(n));
    return Var<T>(this, nodes_.size() - 1);
  }

  // deque keeps references returned by value() stable while recording.
  std::deque<Node> nodes_;
  bool consumed_ = false;
};

}  // namespace ae2i
