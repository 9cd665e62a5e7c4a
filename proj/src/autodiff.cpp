#include "exnorm/autodiff.hpp"

#include <stdexcept>

namespace exnorm {

template <typename T>
Var<T> Tape<T>::push(Node node) {
  nodes_.push_back(std::move(node));
  return Var<T>(this, nodes_.size() - 1);
}

template <typename T>
Var<T> Tape<T>::constant(Tensor<T> value, std::string name) {
  Node n;
  n.value = std::move(value);
  n.name = std::move(name);
  return push(std::move(n));
}

template <typename T>
Var<T> Tape<T>::leaf(Tensor<T> value, std::string name) {
  Node n;
  n.value = std::move(value);
  n.name = std::move(name);
  n.requires_grad = true;
  return push(std::move(n));
}

template <typename T>
Var<T> Tape<T>::parameter(Parameter<T>& p) {
  if (auto it = param_ids_.find(&p); it != param_ids_.end()) {
    return Var<T>(this, it->second);
  }
  Node n;
  n.value = p.value;
  n.name = p.name;
  n.param = &p;
  n.requires_grad = true;
  Var<T> v = push(std::move(n));
  param_ids_.emplace(&p, v.id());
  return v;
}

template <typename T>
Var<T> Tape<T>::record(Tensor<T> value, std::vector<Var<T>> parents, BackwardFn fn,
                       std::string name) {
  Node n;
  n.value = std::move(value);
  n.name = std::move(name);
  for (const auto& p : parents) {
    if (&p.tape() != this) {
      throw std::logic_error("operand of '" + n.name + "' belongs to a different tape");
    }
    n.parents.push_back(p.id());
    n.requires_grad = n.requires_grad || nodes_[p.id()].requires_grad;
  }
  if (n.requires_grad) {
    n.backward = std::move(fn);
  }
  return push(std::move(n));
}

template <typename T>
void Tape<T>::backward(Var<T> loss) {
  if (backward_done_) {
    throw std::logic_error("backward already ran on this tape; build a new tape per step");
  }
  if (&loss.tape() != this) {
    throw std::logic_error("loss belongs to a different tape");
  }
  Node& root = nodes_[loss.id()];
  if (root.value.numel() != 1) {
    throw ShapeError("backward needs a scalar loss, got shape " + root.value.shape().str());
  }
  backward_done_ = true;
  root.grad = Tensor<T>(root.value.shape(), T{1});
  root.reached = true;

  std::vector<Tensor<T>*> refs;
  for (std::size_t id = loss.id() + 1; id-- > 0;) {
    Node& node = nodes_[id];
    if (!node.reached || !node.requires_grad || !node.backward) continue;
    refs.assign(node.parents.size(), nullptr);
    for (std::size_t i = 0; i < node.parents.size(); ++i) {
      Node& parent = nodes_[node.parents[i]];
      if (!parent.requires_grad) continue;
      if (parent.grad.empty()) parent.grad = Tensor<T>(parent.value.shape());
      parent.reached = true;
      refs[i] = &parent.grad;
    }
    node.backward(node.grad, refs);
  }

  detached_.clear();
  for (auto& node : nodes_) {
    if (!node.param) continue;
    if (node.reached) {
      node.param->grad = node.grad;
    } else {
      node.param->grad = Tensor<T>(node.value.shape());
      detached_.push_back(node.name);
    }
  }
}

template <typename T>
const Tensor<T>& Tape<T>::grad(Var<T> v) const {
  const Node& node = nodes_.at(v.id());
  if (!backward_done_) {
    throw std::logic_error("gradient of '" + node.name + "' requested before backward");
  }
  if (!node.reached) {
    throw std::logic_error("node '" + node.name + "' is detached from the loss");
  }
  return node.grad;
}

template class Tape<float>;
template class Tape<double>;

}  // namespace exnorm
