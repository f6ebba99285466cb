#include "ddflow/train/adam.hpp"

#include "ddflow/error.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace ddflow {

void OptimizerConfig::validate() const {
  if (!(beta1 > 0.0 && beta1 < 1.0) || !(beta2 > 0.0 && beta2 < 1.0)) {
    throw std::invalid_argument("optimizer: betas must lie in (0, 1)");
  }
  if (!(lr0 > 0.0)) throw std::invalid_argument("optimizer: lr0 must be positive");
  if (!(adam_epsilon > 0.0)) throw std::invalid_argument("optimizer: epsilon must be positive");
  if (halving_interval == 0) throw std::invalid_argument("optimizer: halving interval must be positive");
  if (batch_size <= 0) throw std::invalid_argument("optimizer: batch size must be positive");
}

double OptimizerConfig::learning_rate(std::uint64_t step) const {
  return std::ldexp(lr0, -int(std::min<std::uint64_t>(step / halving_interval, 1000)));
}

template <typename S>
AdamState<S> AdamState<S>::zeros_like(const ModelParams<S>& params) {
  AdamState s;
  for (const auto& e : params.entries()) {
    s.m.emplace_back(e.value.shape());
    s.v.emplace_back(e.value.shape());
  }
  return s;
}

template <typename S>
void adam_step(ModelParams<S>& params, const std::vector<Tensor<S>>& grads, AdamState<S>& state,
               const OptimizerConfig& config, std::uint64_t step) {
  if (step == 0) throw std::invalid_argument("adam_step: steps are numbered from 1");
  auto& entries = params.entries();
  if (grads.size() != entries.size() || state.m.size() != entries.size() || state.v.size() != entries.size()) {
    throw std::invalid_argument("adam_step: gradients or moments not aligned with parameters");
  }
  for (std::size_t i = 0; i < grads.size(); ++i) {
    if (grads[i].shape() != entries[i].value.shape()) {
      throw std::invalid_argument("adam_step: gradient shape mismatch for " + entries[i].name);
    }
    if (!grads[i].values().isFinite().all()) {
      throw NumericalError("non-finite gradient for " + entries[i].name + " at step " + std::to_string(step));
    }
  }
  state.t += 1;
  const double lr = config.learning_rate(step);
  const double c1 = 1.0 - std::pow(config.beta1, double(state.t));
  const double c2 = 1.0 - std::pow(config.beta2, double(state.t));
  const S b1 = S(config.beta1), b2 = S(config.beta2);
  const S step_size = S(lr / c1), inv_c2 = S(1.0 / c2), eps = S(config.adam_epsilon);
  for (std::size_t i = 0; i < grads.size(); ++i) {
    auto& m = state.m[i].values();
    auto& v = state.v[i].values();
    const auto& g = grads[i].values();
    m = b1 * m + (S(1) - b1) * g;
    v = b2 * v + (S(1) - b2) * g.square();
    entries[i].value.values() -= step_size * m / ((v * inv_c2).sqrt() + eps);
  }
}

template struct AdamState<float>;
template struct AdamState<double>;
template void adam_step(ModelParams<float>&, const std::vector<Tensor<float>>&, AdamState<float>&,
                        const OptimizerConfig&, std::uint64_t);
template void adam_step(ModelParams<double>&, const std::vector<Tensor<double>>&, AdamState<double>&,
                        const OptimizerConfig&, std::uint64_t);

}  // namespace ddflow
