#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "exnorm/tensor.hpp"

namespace exnorm {

/// A named learnable tensor together with its most recent gradient.
template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;

  Parameter() = default;
  Parameter(std::string n, Tensor<T> v) : name(std::move(n)), value(std::move(v)), grad(value.shape()) {}
};

template <typename T>
class Tape;

/// Handle to a node on a Tape. Cheap to copy; valid while its tape lives.
template <typename T>
class Var {
 public:
  Var() = default;
  Var(Tape<T>* tape, std::size_t id) : tape_(tape), id_(id) {}

  const Tensor<T>& value() const;
  const Shape& shape() const { return value().shape(); }
  Tape<T>& tape() const { return *tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }
  bool requires_grad() const;

 private:
  Tape<T>* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Records one forward pass. Nodes are appended in evaluation order, so reverse
/// index order is a valid topological order for backward. A tape is built fresh
/// for every forward pass and supports a single backward call.
template <typename T>
class Tape {
 public:
  /// Parent adjoints handed to a backward closure; entries are null for
  /// parents that do not require a gradient. Closures must accumulate (+=).
  using GradRefs = std::span<Tensor<T>* const>;
  using BackwardFn = std::function<void(const Tensor<T>& out_grad, GradRefs parent_grads)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var<T> constant(Tensor<T> value, std::string name = "const");
  Var<T> leaf(Tensor<T> value, std::string name);
  /// Binds a parameter; binding the same parameter twice returns the same node.
  Var<T> parameter(Parameter<T>& p);
  Var<T> record(Tensor<T> value, std::vector<Var<T>> parents, BackwardFn fn, std::string name);

  /// Populates adjoints for everything reachable from a scalar loss and writes
  /// them into bound parameters. Bound parameters that the loss does not
  /// depend on get a zero gradient and are listed by detached_parameters().
  void backward(Var<T> loss);

  /// Adjoint of a node after backward. Throws std::logic_error naming the node
  /// when the node is not connected to the loss.
  const Tensor<T>& grad(Var<T> v) const;
  const std::vector<std::string>& detached_parameters() const { return detached_; }

  const Tensor<T>& value(std::size_t id) const { return nodes_.at(id).value; }
  bool requires_grad(std::size_t id) const { return nodes_.at(id).requires_grad; }
  const std::string& name(std::size_t id) const { return nodes_.at(id).name; }
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    std::vector<std::size_t> parents;
    BackwardFn backward;
    std::string name;
    Parameter<T>* param = nullptr;
    bool requires_grad = false;
    bool reached = false;
  };

  Var<T> push(Node node);

  // deque keeps node references stable so closures may capture parent values.
  std::deque<Node> nodes_;
  std::unordered_map<const Parameter<T>*, std::size_t> param_ids_;
  std::vector<std::string> detached_;
  bool backward_done_ = false;
};

template <typename T>
const Tensor<T>& Var<T>::value() const {
  return tape_->value(id_);
}

template <typename T>
bool Var<T>::requires_grad() const {
  return tape_->requires_grad(id_);
}

extern template class Tape<float>;
extern template class Tape<double>;

}  // namespace exnorm
