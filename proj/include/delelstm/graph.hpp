#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "delelstm/error.hpp"
#include "delelstm/tensor.hpp"

namespace delelstm {

class Graph;

/// Handle to a node of a Graph. Cheap to copy; valid while the graph lives.
struct Var {
  Graph* graph = nullptr;
  std::size_t id = 0;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
};

/// Append-only tape for reverse-mode differentiation. One graph is built per
/// forward pass and dropped after backward; nodes are stored in creation
/// order, which is a topological order.
class Graph {
 public:
  using BackwardFn = std::function<void(Graph&, std::size_t)>;

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var leaf(Tensor value) { return push(std::move(value), {}, {}, true); }
  Var constant(Tensor value) { return push(std::move(value), {}, {}, false); }

  /// Records an op result. The node needs a gradient iff any parent does.
  Var record(Tensor value, std::vector<std::size_t> parents, BackwardFn backward) {
    bool needs = false;
    for (auto p : parents) needs = needs || nodes_[p].requires_grad;
    if (!needs) return push(std::move(value), {}, {}, false);
    return push(std::move(value), std::move(parents), std::move(backward), true);
  }

  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  const Tensor& value(Var v) const { return nodes_[v.id].value; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  std::size_t size() const noexcept { return nodes_.size(); }

  /// Gradient accumulator for a node, allocated as zeros on first touch.
  Tensor& grad_buffer(std::size_t id) {
    Node& n = nodes_[id];
    if (n.grad.shape() != n.value.shape() || n.grad.size() != n.value.size()) {
      n.grad = Tensor::zeros(n.value.shape());
    }
    return n.grad;
  }

  bool has_grad(std::size_t id) const { return nodes_[id].grad.size() == nodes_[id].value.size() &&
                                                nodes_[id].grad.shape() == nodes_[id].value.shape(); }

  /// Gradient of the last backward() loss w.r.t. the node; zeros when the
  /// node does not influence the loss.
  Tensor grad(Var v) {
    if (!has_grad(v.id)) return Tensor::zeros(nodes_[v.id].value.shape());
    return nodes_[v.id].grad;
  }

  void backward(Var loss) {
    if (loss.graph != this) fail(ErrorCode::ShapeMismatch, "loss belongs to another graph");
    if (nodes_[loss.id].value.size() != 1) {
      fail(ErrorCode::NonScalarLoss, "loss has shape " + shape_string(nodes_[loss.id].value.shape()));
    }
    for (auto& n : nodes_) n.grad = Tensor();
    if (!nodes_[loss.id].requires_grad) return;
    grad_buffer(loss.id)[0] = 1.0;
    for (std::size_t i = loss.id + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (!n.requires_grad || !n.backward || !has_grad(i)) continue;
      n.backward(*this, i);
    }
  }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    std::vector<std::size_t> parents;
    BackwardFn backward;
    bool requires_grad = false;
  };

  Var push(Tensor value, std::vector<std::size_t> parents, BackwardFn backward, bool needs_grad) {
    nodes_.push_back(Node{std::move(value), Tensor(), std::move(parents), std::move(backward), needs_grad});
    return Var{this, nodes_.size() - 1};
  }

  std::vector<Node> nodes_;
};

inline const Tensor& Var::value() const { return graph->value(id); }

namespace detail {

inline Graph& graph_of(Var a, Var b) {
  if (a.graph == nullptr || a.graph != b.graph) {
    fail(ErrorCode::ShapeMismatch, "operands belong to different graphs");
  }
  return *a.graph;
}

}  // namespace detail

}  // namespace delelstm
