#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <span>
#include <vector>

#include "covidseg/core/tensor.hpp"

namespace covidseg {

class Graph;

// Handle to a node recorded in a Graph. Cheap to copy; valid while the graph lives.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  bool requires_grad() const;
  // Gradient accumulated by the last backward pass, or nullptr if the node was not reached.
  const std::vector<double>* grad() const;

  Graph& graph() const { return *graph_; }
  std::size_t id() const noexcept { return id_; }
  bool valid() const noexcept { return graph_ != nullptr; }

 private:
  friend class Graph;
  Var(Graph* graph, std::size_t id) : graph_(graph), id_(id) {}

  Graph* graph_ = nullptr;
  std::size_t id_ = 0;
};

// One entry per input of a recorded op; null when that input needs no gradient.
using GradSlots = std::span<std::vector<double>* const>;
using BackwardFn = std::function<void(std::span<const double> grad_out, GradSlots input_grads)>;

// Tape of recorded operations. Nodes are appended in execution order, so the tape
// is topologically sorted by construction and backward walks it once in reverse.
class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  // Leaf that never receives a gradient.
  Var constant(Tensor value);
  // Leaf backed by an external tensor (typically a parameter). When the tensor has
  // requires_grad set, backward accumulates into its grad buffer. The tensor must
  // outlive the graph and stay unmodified while the graph is in use.
  Var bind(Tensor& external);
  // Read-only view of an external tensor; never receives a gradient.
  Var view(const Tensor& external);

  // Appends the result of an op. The node requires grad iff any input does; when
  // none does the backward rule is dropped.
  Var record(Tensor value, std::vector<Var> inputs, BackwardFn backward);

  // Seeds d(loss)/d(loss) = 1 and propagates to every reachable node.
  void backward(Var loss);

  const Tensor& value(std::size_t id) const;
  bool requires_grad(std::size_t id) const { return nodes_.at(id).requires_grad; }
  const std::vector<double>* grad(std::size_t id) const;
  std::size_t size() const noexcept { return nodes_.size(); }

 private:
  struct Node {
    Tensor owned;
    const Tensor* external = nullptr;
    Tensor* grad_target = nullptr;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    bool requires_grad = false;
    bool has_grad = false;
    std::vector<double> grad;
  };

  std::deque<Node> nodes_;
};

void backward(Var loss);

}  // namespace covidseg
