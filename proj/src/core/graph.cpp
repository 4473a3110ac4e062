#include "covidseg/core/graph.hpp"

#include <stdexcept>

namespace covidseg {

const Tensor& Var::value() const { return graph_->value(id_); }
bool Var::requires_grad() const { return graph_->requires_grad(id_); }
const std::vector<double>* Var::grad() const { return graph_->grad(id_); }

Var Graph::constant(Tensor value) {
  Node node;
  node.owned = std::move(value);
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Var Graph::bind(Tensor& external) {
  Node node;
  node.external = &external;
  node.grad_target = &external;
  node.requires_grad = external.requires_grad();
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Var Graph::view(const Tensor& external) {
  Node node;
  node.external = &external;
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Var Graph::record(Tensor value, std::vector<Var> inputs, BackwardFn backward) {
  Node node;
  node.owned = std::move(value);
  node.inputs.reserve(inputs.size());
  for (const Var& v : inputs) {
    if (v.graph_ != this) throw std::invalid_argument("Graph::record: input belongs to a different graph");
    node.inputs.push_back(v.id_);
    node.requires_grad = node.requires_grad || nodes_[v.id_].requires_grad;
  }
  if (node.requires_grad) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

const Tensor& Graph::value(std::size_t id) const {
  const Node& node = nodes_.at(id);
  return node.external ? *node.external : node.owned;
}

const std::vector<double>* Graph::grad(std::size_t id) const {
  const Node& node = nodes_.at(id);
  return node.has_grad ? &node.grad : nullptr;
}

void Graph::backward(Var loss) {
  if (loss.graph_ != this) throw std::invalid_argument("backward: loss belongs to a different graph");
  const Tensor& lv = value(loss.id_);
  if (lv.size() != 1) {
    throw std::invalid_argument("backward: loss must be a scalar, got shape " + shape_string(lv.shape()));
  }
  for (Node& n : nodes_) {
    n.has_grad = false;
    n.grad.clear();
  }
  Node& root = nodes_[loss.id_];
  if (!root.requires_grad) return;
  root.grad.assign(1, 1.0);
  root.has_grad = true;

  std::vector<std::vector<double>*> slots;
  for (std::size_t id = loss.id_ + 1; id-- > 0;) {
    Node& node = nodes_[id];
    if (!node.has_grad) continue;
    if (node.backward) {
      slots.assign(node.inputs.size(), nullptr);
      for (std::size_t i = 0; i < node.inputs.size(); ++i) {
        Node& in = nodes_[node.inputs[i]];
        if (!in.requires_grad) continue;
        if (!in.has_grad) {
          in.grad.assign(value(node.inputs[i]).size(), 0.0);
          in.has_grad = true;
        }
        slots[i] = &in.grad;
      }
      node.backward(node.grad, GradSlots(slots.data(), slots.size()));
    }
    if (node.grad_target && node.requires_grad) {
      auto& dst = node.grad_target->grad_buffer();
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += node.grad[i];
    }
  }
}

void backward(Var loss) { loss.graph().backward(loss); }

}  // namespace covidseg
