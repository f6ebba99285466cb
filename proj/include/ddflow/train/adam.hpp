#ifndef DDFLOW_TRAIN_ADAM_HPP_
#define DDFLOW_TRAIN_ADAM_HPP_

#include "ddflow/net/flow_net.hpp"

#include <cstdint>
#include <vector>

namespace ddflow {

struct OptimizerConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_epsilon = 1e-8;
  double lr0 = 1e-4;
  std::uint64_t halving_interval = 2000;
  Index batch_size = 4;

  void validate() const;
  /// lr0 * 0.5^floor(step / halving_interval).
  double learning_rate(std::uint64_t step) const;
  bool operator==(const OptimizerConfig&) const = default;
};

/// First and second moments aligned with a ModelParams, plus the number of updates applied.
template <typename S>
struct AdamState {
  std::vector<Tensor<S>> m, v;
  std::uint64_t t = 0;

  static AdamState zeros_like(const ModelParams<S>& params);
  bool operator==(const AdamState&) const = default;
};

/// One Adam update with bias correction. The bias-correction count is the
/// state's own update count; the learning rate follows the global `step`.
/// Rejects non-finite gradients before touching any state.
template <typename S>
void adam_step(ModelParams<S>& params, const std::vector<Tensor<S>>& grads, AdamState<S>& state,
               const OptimizerConfig& config, std::uint64_t step);

extern template struct AdamState<float>;
extern template struct AdamState<double>;

}  // namespace ddflow

#endif  // DDFLOW_TRAIN_ADAM_HPP_
