#include "ddflow/diff/graph.hpp"

#include <sstream>

namespace ddflow {

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

std::string_view op_name(OpKind kind) {
  switch (kind) {
    case OpKind::kInput: return "input";
    case OpKind::kAdd: return "add";
    case OpKind::kSub: return "sub";
    case OpKind::kMul: return "mul";
    case OpKind::kDiv: return "div";
    case OpKind::kAbs: return "abs";
    case OpKind::kPowConst: return "pow_const";
    case OpKind::kClip: return "clip";
    case OpKind::kStopGradient: return "stop_gradient";
    case OpKind::kConv2d: return "conv2d";
    case OpKind::kAddBias: return "add_bias";
    case OpKind::kLeakyRelu: return "leaky_relu";
    case OpKind::kBilinearSample: return "bilinear_sample";
    case OpKind::kWarp: return "warp";
    case OpKind::kLocalCorrelation: return "local_correlation";
    case OpKind::kUpsampleBilinear: return "upsample_bilinear";
    case OpKind::kReduceSum: return "sum";
    case OpKind::kReduceMean: return "mean";
    case OpKind::kReshape: return "reshape";
    case OpKind::kConcat: return "concat";
    case OpKind::kSlice: return "slice";
    case OpKind::kL2Normalize: return "l2_normalize";
    case OpKind::kCensus: return "census";
  }
  return "unknown";
}

template <typename Scalar>
Var<Scalar> Graph<Scalar>::input(Tensor<Scalar> value, bool requires_grad) {
  nodes_.push_back(Node{OpKind::kInput, {}, std::move(value), requires_grad, nullptr, std::nullopt});
  return Var<Scalar>(this, nodes_.size() - 1);
}

template <typename Scalar>
Var<Scalar> Graph<Scalar>::record(OpKind kind, std::vector<std::size_t> inputs,
                                  Tensor<Scalar> value, BackwardFn backward) {
  bool requires_grad = false;
  for (std::size_t id : inputs) {
    if (id >= nodes_.size()) throw std::logic_error("Graph: input refers to a later node");
    requires_grad = requires_grad || nodes_[id].requires_grad;
  }
  if (!requires_grad) backward = nullptr;
  nodes_.push_back(
      Node{kind, std::move(inputs), std::move(value), requires_grad, std::move(backward), std::nullopt});
  return Var<Scalar>(this, nodes_.size() - 1);
}

template <typename Scalar>
typename Graph<Scalar>::Array& Graph<Scalar>::grad_buffer(std::size_t id) {
  Node& node = nodes_.at(id);
  if (!node.grad) node.grad = Array::Zero(node.value.size());
  return *node.grad;
}

template <typename Scalar>
Tensor<Scalar> Graph<Scalar>::grad(Var<Scalar> v) const {
  const Node& node = nodes_.at(v.id());
  if (!node.grad) return Tensor<Scalar>(node.value.shape());
  return Tensor<Scalar>(node.value.shape(), *node.grad);
}

template <typename Scalar>
void Graph<Scalar>::backward(Var<Scalar> output) {
  if (&output.graph() != this) throw std::invalid_argument("backward: output belongs to another graph");
  if (output.size() != 1) {
    throw std::invalid_argument("backward: output must be a single element, got shape " +
                                shape_string(output.shape()));
  }
  for (Node& node : nodes_) node.grad.reset();
  grad_buffer(output.id()).setOnes();
  for (std::size_t i = output.id() + 1; i-- > 0;) {
    Node& node = nodes_[i];
    if (!node.grad || !node.requires_grad || !node.backward) continue;
    node.backward(*node.grad, *this);
  }
}

template class Graph<float>;
template class Graph<double>;

}  // namespace ddflow
