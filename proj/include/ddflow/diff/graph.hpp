#ifndef DDFLOW_DIFF_GRAPH_HPP_
#define DDFLOW_DIFF_GRAPH_HPP_

#include "ddflow/diff/tensor.hpp"

#include <cstddef>
#include <deque>
#include <functional>
#include <optional>
#include <string_view>
#include <vector>

namespace ddflow {

enum class OpKind {
  kInput,
  kAdd,
  kSub,
  kMul,
  kDiv,
  kAbs,
  kPowConst,
  kClip,
  kStopGradient,
  kConv2d,
  kAddBias,
  kLeakyRelu,
  kBilinearSample,
  kWarp,
  kLocalCorrelation,
  kUpsampleBilinear,
  kReduceSum,
  kReduceMean,
  kReshape,
  kConcat,
  kSlice,
  kL2Normalize,
  kCensus,
};

std::string_view op_name(OpKind kind);

template <typename Scalar>
class Graph;

/// Handle to a node of a Graph. Cheap to copy; valid while the graph lives.
template <typename Scalar>
class Var {
 public:
  Var() = default;
  Var(Graph<Scalar>* graph, std::size_t id) : graph_(graph), id_(id) {}

  Graph<Scalar>& graph() const { return *graph_; }
  std::size_t id() const { return id_; }
  bool valid() const { return graph_ != nullptr; }

  const Tensor<Scalar>& value() const;
  const Shape& shape() const { return value().shape(); }
  Index size() const { return value().size(); }
  bool requires_grad() const;

 private:
  Graph<Scalar>* graph_ = nullptr;
  std::size_t id_ = 0;
};

/// Append-only tape for reverse-mode differentiation. Nodes may only reference
/// earlier nodes, so insertion order is a topological order.
template <typename Scalar>
class Graph {
 public:
  using Array = typename Tensor<Scalar>::Array;
  /// Receives the gradient of the node's output and accumulates into inputs.
  using BackwardFn = std::function<void(const Array& grad_out, Graph& graph)>;

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var<Scalar> input(Tensor<Scalar> value, bool requires_grad = false);
  Var<Scalar> constant(Tensor<Scalar> value) { return input(std::move(value), false); }

  /// Records an operation. requires_grad is inherited from the inputs; the
  /// backward function is dropped when no input requires a gradient.
  Var<Scalar> record(OpKind kind, std::vector<std::size_t> inputs, Tensor<Scalar> value,
                     BackwardFn backward);

  const Tensor<Scalar>& value(std::size_t id) const { return nodes_.at(id).value; }
  bool requires_grad(std::size_t id) const { return nodes_.at(id).requires_grad; }
  OpKind kind(std::size_t id) const { return nodes_.at(id).kind; }
  const std::vector<std::size_t>& inputs(std::size_t id) const { return nodes_.at(id).inputs; }
  std::size_t size() const { return nodes_.size(); }

  /// Zero-initialized on first access.
  Array& grad_buffer(std::size_t id);
  bool has_grad(std::size_t id) const { return nodes_.at(id).grad.has_value(); }

  /// Gradient of the last backward pass; zeros when the node received none.
  Tensor<Scalar> grad(Var<Scalar> v) const;

  /// Reverse sweep from a single-element output. Clears previous gradients.
  void backward(Var<Scalar> output);

 private:
  struct Node {
    OpKind kind;
    std::vector<std::size_t> inputs;
    Tensor<Scalar> value;
    bool requires_grad;
    BackwardFn backward;
    std::optional<Array> grad;
  };

  std::deque<Node> nodes_;
};

template <typename Scalar>
const Tensor<Scalar>& Var<Scalar>::value() const {
  return graph_->value(id_);
}

template <typename Scalar>
bool Var<Scalar>::requires_grad() const {
  return graph_->requires_grad(id_);
}

extern template class Graph<float>;
extern template class Graph<double>;

}  // namespace ddflow

#endif  // DDFLOW_DIFF_GRAPH_HPP_
