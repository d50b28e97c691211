// SPDX-License-Identifier: Apache-2.0
#pragma once

// Reverse-mode differentiation by operation recording. Each op computes its
// value eagerly and, when any input needs a gradient, appends a closure that
// propagates the output gradient to its inputs. backward() replays the
// closures in reverse order.

#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "camc/numcore/tensor.hpp"

namespace camc::nc {

/// Misuse of the differentiation API (e.g. backward without a forward pass).
class UsageError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

template <typename T>
struct Node {
  Tensor<T> value;
  Tensor<T> grad;  // allocated on first accumulation
  bool requires_grad = false;

  Tensor<T>& ensure_grad() {
    if (grad.shape() != value.shape()) grad = Tensor<T>(value.shape());
    return grad;
  }
  bool has_grad() const { return !grad.empty() || value.empty(); }
};

template <typename T>
class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node<T>> n) : n_(std::move(n)) {}

  const Tensor<T>& value() const { return n_->value; }
  Tensor<T>& value() { return n_->value; }
  const Shape& shape() const { return n_->value.shape(); }
  bool requires_grad() const { return n_->requires_grad; }
  const Tensor<T>& grad() const { return n_->grad; }
  Tensor<T>& grad() { return n_->grad; }
  Node<T>* node() const { return n_.get(); }
  explicit operator bool() const { return static_cast<bool>(n_); }

 private:
  std::shared_ptr<Node<T>> n_;
};

template <typename T>
class Tape {
 public:
  explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}

  bool grad_enabled() const { return grad_enabled_; }

  Var<T> make(Tensor<T> value, bool requires_grad) {
    auto n = std::make_shared<Node<T>>();
    n->value = std::move(value);
    n->requires_grad = requires_grad && grad_enabled_;
    if (finite_checks() && !n->value.all_finite()) throw std::runtime_error("non-finite value produced");
    return Var<T>(std::move(n));
  }
  Var<T> constant(Tensor<T> value) { return make(std::move(value), false); }
  /// Leaf variable whose gradient is wanted.
  Var<T> input(Tensor<T> value) { return make(std::move(value), true); }

  /// True when an op over these inputs must record a backward closure.
  template <typename... Vs>
  bool needs(const Vs&... vs) const {
    return grad_enabled_ && (vs.requires_grad() || ...);
  }

  void record(std::function<void()> fn) { ops_.push_back(std::move(fn)); }
  std::size_t recorded() const { return ops_.size(); }

  /// Seeds d(loss)/d(loss) = 1 and propagates to every leaf and parameter.
  void backward(Var<T>& loss) {
    if (!grad_enabled_) throw UsageError("backward on a tape with gradients disabled");
    if (!loss || ops_.empty() || !loss.requires_grad())
      throw UsageError("backward called without a recorded forward pass");
    if (loss.value().size() != 1) throw UsageError("backward requires a scalar loss, got shape " +
                                                   shape_str(loss.shape()));
    loss.node()->ensure_grad()[0] += T(1);
    for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) (*it)();
    ops_.clear();
  }

  void clear() { ops_.clear(); }

 private:
  bool grad_enabled_;
  std::vector<std::function<void()>> ops_;
};

/// A named, persistent network weight. Non-trainable parameters (running
/// statistics) never receive gradients.
template <typename T>
class Param {
 public:
  Param() = default;
  Param(std::string name, Tensor<T> value, bool trainable = true)
      : name_(std::move(name)), trainable_(trainable) {
    auto n = std::make_shared<Node<T>>();
    n->value = std::move(value);
    n->requires_grad = trainable;
    var_ = Var<T>(std::move(n));
  }

  /// Deep copy (independent value and gradient storage).
  Param clone() const {
    Param p(name_, var_.value(), trainable_);
    p.var_.grad() = var_.grad();
    return p;
  }

  const std::string& name() const { return name_; }
  bool trainable() const { return trainable_; }
  const Var<T>& var() const { return var_; }
  Var<T>& var() { return var_; }
  Tensor<T>& value() { return var_.value(); }
  const Tensor<T>& value() const { return var_.value(); }
  Tensor<T>& grad() { return var_.node()->ensure_grad(); }
  void zero_grad() {
    if (!var_.grad().empty()) var_.grad().fill(T(0));
  }

 private:
  std::string name_;
  Var<T> var_;
  bool trainable_ = true;
};

}  // namespace camc::nc
