#ifndef DDFLOW_NET_FLOW_NET_HPP_
#define DDFLOW_NET_FLOW_NET_HPP_

#include "ddflow/diff/graph.hpp"
#include "ddflow/flow/types.hpp"
#include "ddflow/image/image.hpp"

#include <random>
#include <string>
#include <utility>
#include <vector>

namespace ddflow {

/// Pyramidal flow network shape. Level 0 is full resolution; flow is decoded
/// from level levels-1 down to level 2 and upsampled x4.
struct NetConfig {
  Index levels = 4;
  std::vector<Index> feature_channels{16, 32, 32, 32};
  Index correlation_radius = 4;
  std::vector<Index> decoder_hidden{64, 32};

  void validate() const;
  /// Input extents must be multiples of this.
  Index input_multiple() const { return Index{1} << (levels - 1); }
  Index correlation_channels() const { return (2 * correlation_radius + 1) * (2 * correlation_radius + 1); }
  bool operator==(const NetConfig&) const = default;
};

/// Ordered named learnable arrays of one network.
template <typename S>
class ModelParams {
 public:
  struct Entry {
    std::string name;
    Tensor<S> value;
    bool operator==(const Entry&) const = default;
  };

  void add(std::string name, Tensor<S> value);
  const Tensor<S>& at(const std::string& name) const;
  Tensor<S>& at(const std::string& name);
  std::size_t index_of(const std::string& name) const;

  std::vector<Entry>& entries() { return entries_; }
  const std::vector<Entry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  Index scalar_count() const;
  bool all_finite() const;

  template <typename T>
  ModelParams<T> cast() const {
    ModelParams<T> out;
    for (const auto& e : entries_) out.add(e.name, e.value.template cast<T>());
    return out;
  }
  bool operator==(const ModelParams&) const = default;

 private:
  std::vector<Entry> entries_;
};

/// Kernels U(-sqrt(6/fan_in), sqrt(6/fan_in)), biases zero.
template <typename S>
ModelParams<S> init_params(const NetConfig& config, std::mt19937_64& rng);

/// Closed-form number of learnable scalars.
Index parameter_count(const NetConfig& config);

/// Parameters placed on a graph, in ModelParams order.
template <typename S>
struct BoundParams {
  const NetConfig* config = nullptr;
  const ModelParams<S>* params = nullptr;
  std::vector<Var<S>> vars;

  Var<S> operator()(const std::string& name) const { return vars[params->index_of(name)]; }
};

template <typename S>
BoundParams<S> bind_params(Graph<S>& g, const ModelParams<S>& params, const NetConfig& config, bool requires_grad);

/// Optional view of intermediate values, for inspection and tests.
template <typename S>
struct NetTrace {
  /// Normalized reference and target features fed to each cost volume, coarse to fine.
  std::vector<std::pair<Var<S>, Var<S>>> normalized_features;
  /// Per decoded level flow in level pixels, coarse to fine.
  std::vector<Var<S>> level_flows;
};

/// images: [N,3,H,W] or [3,H,W] with values in [0, 1]. Returns one feature map per level.
template <typename S>
std::vector<Var<S>> feature_pyramid(Var<S> images, const BoundParams<S>& p);

/// Full-resolution flow [N,2,H,W] from i1 to i2.
template <typename S>
Var<S> forward_flow(Var<S> i1, Var<S> i2, const BoundParams<S>& p, NetTrace<S>* trace = nullptr);

/// (forward_flow(i1, i2), forward_flow(i2, i1)) with both directions decoded as one batch.
template <typename S>
std::pair<Var<S>, Var<S>> forward_backward(Var<S> i1, Var<S> i2, const BoundParams<S>& p,
                                           NetTrace<S>* trace = nullptr);

/// Inference on single frames (gray frames are replicated to RGB).
/// Bottom/right padding that brings an extent up to a multiple of the network stride.
struct Padding {
  Index bottom = 0, right = 0;
  bool none() const { return bottom == 0 && right == 0; }
  bool operator==(const Padding&) const = default;
};

Padding padding_for(Index height, Index width, Index multiple);

/// Edge-replicating pad of an [N,C,H,W] tensor.
template <typename S>
Tensor<S> pad_replicate(const Tensor<S>& nchw, const Padding& pad);

/// forward_backward on constant [N,3,H,W] frames of any extent: pads to the
/// network stride, runs, and slices both flows back to H x W.
template <typename S>
std::pair<Var<S>, Var<S>> forward_backward_padded(Graph<S>& g, const Tensor<S>& i1, const Tensor<S>& i2,
                                                  const BoundParams<S>& p, Padding* used = nullptr);

/// Image-level entry points accept any extent (see forward_backward_padded).
FlowField forward_flow(const Image& i1, const Image& i2, const ModelParams<float>& params, const NetConfig& config);
std::pair<FlowField, FlowField> forward_backward(const Image& i1, const Image& i2, const ModelParams<float>& params,
                                                 const NetConfig& config);

extern template class ModelParams<float>;
extern template class ModelParams<double>;

}  // namespace ddflow

#endif  // DDFLOW_NET_FLOW_NET_HPP_
